"""Trajectories, data generation, noise, chunking, normalization and CSV I/O."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

BLOW_UP_NORM = 1e12
_LABEL = re.compile(r"^.+\[[^\[\]]*\]$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = "" if path is None else f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line


class GenerationError(FloatingPointError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class Trajectory:
    """Samples (z_i, r_i), i = 0..L, at a constant step.

    ``inputs[i]`` is the input applied from sample i to i + 1; the last row
    is kept so every sample carries a full record.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    state_labels: list[str]
    input_labels: list[str]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(len(self.states), -1)
        if self.states.ndim != 2:
            raise ValueError("states must be a 2-d array")
        if not (len(self.times) == len(self.states) == len(self.inputs)):
            raise ValueError("times, states and inputs need the same number of rows")
        if len(self.state_labels) != self.states.shape[1] or len(self.input_labels) != self.inputs.shape[1]:
            raise ValueError("label count does not match the data columns")
        if len(self.times) > 1:
            dt = np.diff(self.times)
            if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
                raise ValueError("times must increase with a constant step")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    @property
    def h(self) -> float:
        if len(self.times) < 2:
            return float(self.metadata.get("h", 0.0))
        return float(self.times[1] - self.times[0])

    def slice(self, start: int, stop: int) -> "Trajectory":
        meta = dict(self.metadata, start=int(start))
        return Trajectory(self.times[start:stop], self.states[start:stop], self.inputs[start:stop],
                          list(self.state_labels), list(self.input_labels), meta)


# --------------------------------------------------------------------------
# generation

def rk4_step(rhs: Callable, x, t: float, h: float, input_fn: Callable):
    k1 = rhs(x, input_fn(t))
    k2 = rhs(x + 0.5 * h * k1, input_fn(t + 0.5 * h))
    k3 = rhs(x + 0.5 * h * k2, input_fn(t + 0.5 * h))
    k4 = rhs(x + h * k3, input_fn(t + h))
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_generate(model, x0, input_fn: Callable | None, h: float, steps: int, substeps: int = 1,
                 state_labels=None, input_labels=None, metadata: dict | None = None) -> Trajectory:
    """Classic RK4 from x0 for ``steps`` steps of size h (``substeps`` internal steps each).

    ``input_fn(t)`` returns the input vector at time t; None means no input.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if input_fn is None:
        m = int(getattr(model, "m", 0))
        input_fn = lambda t, _z=np.zeros(m): _z
    x = np.asarray(x0, dtype=float)
    states = np.empty((steps + 1, x.size))
    inputs = np.empty((steps + 1, np.size(input_fn(0.0))))
    states[0] = x
    dt = h / substeps
    for k in range(steps + 1):
        inputs[k] = input_fn(k * h)
        if k == steps:
            break
        for s in range(substeps):
            x = rk4_step(model.rhs, x, k * h + s * dt, dt, input_fn)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > BLOW_UP_NORM:
            raise GenerationError("state blew up", k + 1)
        states[k + 1] = x
    n, m = states.shape[1], inputs.shape[1]
    meta = {"source": "rk4", "h": h, "substeps": substeps}
    meta.update(metadata or {})
    return Trajectory(np.arange(steps + 1) * h, states, inputs,
                      state_labels or [f"x{i + 1}[-]" for i in range(n)],
                      input_labels or [f"u{i + 1}[-]" for i in range(m)], meta)


def add_noise(traj: Trajectory, factor: float = 0.2, seed: int = 0) -> Trajectory:
    """Gaussian state noise with per-dimension std = factor * std of that dimension."""
    if factor < 0:
        raise ValueError("noise factor must be non-negative")
    if factor == 0:
        return replace(traj, states=traj.states.copy(), metadata=dict(traj.metadata, noise_factor=0.0))
    rng = np.random.default_rng(seed)
    sigma = factor * traj.states.std(axis=0)
    noisy = traj.states + rng.standard_normal(traj.states.shape) * sigma
    meta = dict(traj.metadata, noise_factor=factor, noise_seed=seed, noise_std=sigma.tolist())
    return replace(traj, states=noisy, inputs=traj.inputs.copy(), metadata=meta)


def chunk(traj: Trajectory, length: int) -> list[Trajectory]:
    """Consecutive non-overlapping windows of ``length`` samples; a partial tail is dropped."""
    if length < 2:
        raise ValueError("chunk length must be at least 2")
    out = []
    for k, start in enumerate(range(0, len(traj) - length + 1, length)):
        c = traj.slice(start, start + length)
        c.metadata["chunk_index"] = k
        out.append(c)
    return out


def split_indices(n_items: int, train_fraction: float = 0.8, seed: int = 0) -> tuple[list[int], list[int]]:
    """Seeded shuffle split by chunk index."""
    perm = np.random.default_rng(seed).permutation(n_items)
    n_train = int(round(train_fraction * n_items))
    return sorted(perm[:n_train].tolist()), sorted(perm[n_train:].tolist())


# --------------------------------------------------------------------------
# normalization

@dataclass
class Normalizer:
    """Per-dimension z-scoring of states and inputs; constant columns pass through."""

    state_mean: np.ndarray
    state_std: np.ndarray
    input_mean: np.ndarray
    input_std: np.ndarray
    flagged_states: list[int] = field(default_factory=list)
    flagged_inputs: list[int] = field(default_factory=list)

    @classmethod
    def fit(cls, trajectories: list[Trajectory], min_std: float = 1e-12) -> "Normalizer":
        states = np.concatenate([t.states for t in trajectories])
        inputs = np.concatenate([t.inputs for t in trajectories])

        def stats(a):
            mean, std = a.mean(axis=0), a.std(axis=0)
            flat = np.flatnonzero(~(std > min_std * np.maximum(1.0, np.abs(mean))))
            mean[flat], std[flat] = 0.0, 1.0
            return mean, std, flat.tolist()

        sm, ss, sf = stats(states)
        im, is_, if_ = stats(inputs)
        return cls(sm, ss, im, is_, sf, if_)

    def _check(self, data, mean):
        if np.shape(data)[-1] != len(mean):
            raise ValueError(f"normalizer has {len(mean)} dimensions, data has {np.shape(data)[-1]}")

    def normalize_states(self, z):
        self._check(z, self.state_mean)
        return (np.asarray(z, dtype=float) - self.state_mean) / self.state_std

    def denormalize_states(self, z):
        self._check(z, self.state_mean)
        return np.asarray(z, dtype=float) * self.state_std + self.state_mean

    def normalize_inputs(self, r):
        self._check(r, self.input_mean)
        return (np.asarray(r, dtype=float) - self.input_mean) / self.input_std

    def denormalize_inputs(self, r):
        self._check(r, self.input_mean)
        return np.asarray(r, dtype=float) * self.input_std + self.input_mean

    def to_dict(self) -> dict:
        return {"state_mean": self.state_mean.tolist(), "state_std": self.state_std.tolist(),
                "input_mean": self.input_mean.tolist(), "input_std": self.input_std.tolist(),
                "flagged_states": list(self.flagged_states), "flagged_inputs": list(self.flagged_inputs)}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["state_mean"], float), np.array(d["state_std"], float),
                   np.array(d["input_mean"], float), np.array(d["input_std"], float),
                   list(d.get("flagged_states", [])), list(d.get("flagged_inputs", [])))


# --------------------------------------------------------------------------
# CSV + metadata sidecar

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def csv_write(traj: Trajectory, path, write_sidecar: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t[s]", *traj.state_labels, *traj.input_labels])
        for t, z, r in zip(traj.times, traj.states, traj.inputs):
            w.writerow([_fmt(t), *map(_fmt, z), *map(_fmt, r)])
    if write_sidecar:
        write_metadata(path, traj)
    return path


def write_metadata(path, traj: Trajectory, extra: dict | None = None) -> Path:
    meta = {"n_states": traj.states.shape[1], "state_labels": traj.state_labels,
            "input_labels": traj.input_labels, "metadata": traj.metadata}
    meta.update(extra or {})
    out = sidecar_path(path)
    out.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def read_metadata(path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    return json.loads(side.read_text())


def csv_read(path, n_states: int | None = None) -> Trajectory:
    """Read a trajectory CSV; the state count comes from the sidecar unless given."""
    path = Path(path)
    meta = read_metadata(path)
    if n_states is None:
        if "n_states" not in meta:
            raise ParseError("state column count unknown: no metadata sidecar and no n_states given", path=path)
        n_states = int(meta["n_states"])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", 1, path)
    header = [c.strip() for c in rows[0]]
    for col in header:
        if not _LABEL.match(col):
            raise ParseError(f"column {col!r} lacks a [unit] suffix", 1, path)
    if header[0] != "t[s]":
        raise ParseError("first column must be t[s]", 1, path)
    if len(header) < 1 + n_states:
        raise ParseError(f"expected at least {n_states} state columns", 1, path)
    expected = meta.get("state_labels", []) + meta.get("input_labels", [])
    for name in expected:
        if name not in header:
            raise ParseError(f"missing column {name!r}", 1, path)
    data = np.empty((len(rows) - 1, len(header)))
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", k, path)
        try:
            data[k - 2] = [float(c) for c in row]
        except ValueError:
            raise ParseError("non-numeric cell", k, path) from None
    times = data[:, 0]
    if len(times) > 1:
        dt = np.diff(times)
        bad = np.flatnonzero((dt <= 0) | ~np.isclose(dt, dt[0], rtol=1e-9, atol=0))
        if bad.size:
            raise ParseError("inconsistent time step", int(bad[0]) + 3, path)
    return Trajectory(times, data[:, 1:1 + n_states], data[:, 1 + n_states:],
                      header[1:1 + n_states], header[1 + n_states:], dict(meta.get("metadata", {})))
