"""Comparison models: least-squares ARX and an unconstrained neural ODE."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad


# --------------------------------------------------------------------------
# ARX

@dataclass
class ArxModel:
    """y_t = sum_k A_k y_{t-k} + sum_k B_k u_{t-k} + c,  k = 1..lags."""

    lags: int
    A: np.ndarray  # (lags, ny, ny)
    B: np.ndarray  # (lags, ny, nu)
    c: np.ndarray  # (ny,)
    rank_deficient: bool = False
    kind: str = field(default="arx", init=False)

    @property
    def ny(self) -> int:
        return self.A.shape[1]

    @property
    def nu(self) -> int:
        return self.B.shape[2]

    def theta(self) -> np.ndarray:
        """Stacked coefficients (regressors x outputs), matching :func:`arx_regressors`."""
        rows = [self.A[k].T for k in range(self.lags)] + [self.B[k].T for k in range(self.lags)]
        return np.vstack(rows + [self.c[None, :]])

    @classmethod
    def from_theta(cls, theta: np.ndarray, lags: int, ny: int, nu: int, rank_deficient=False) -> "ArxModel":
        A = np.stack([theta[k * ny:(k + 1) * ny].T for k in range(lags)])
        off = lags * ny
        B = np.stack([theta[off + k * nu: off + (k + 1) * nu].T for k in range(lags)])
        return cls(lags, A, B, theta[-1].copy(), rank_deficient)

    def to_dict(self) -> dict:
        return {"kind": "arx", "lags": self.lags, "A": self.A.tolist(), "B": self.B.tolist(),
                "c": self.c.tolist(), "rank_deficient": self.rank_deficient}

    @classmethod
    def from_dict(cls, d: dict) -> "ArxModel":
        lags, A, B = int(d["lags"]), np.array(d["A"], float), np.array(d["B"], float)
        ny = A.shape[1] if A.size else len(d["c"])
        nu = B.shape[2] if B.ndim == 3 else 0
        return cls(lags, A.reshape(lags, ny, ny), B.reshape(lags, ny, nu), np.array(d["c"], float),
                   bool(d.get("rank_deficient", False)))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ArxModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def arx_regressors(y: np.ndarray, u: np.ndarray, lags: int) -> tuple[np.ndarray, np.ndarray]:
    """One-step regression rows [y_{t-1}..y_{t-p}, u_{t-1}..u_{t-p}, 1] -> y_t for t = p..L."""
    L = len(y)
    cols = [y[lags - k:L - k] for k in range(1, lags + 1)]
    cols += [u[lags - k:L - k] for k in range(1, lags + 1)]
    cols.append(np.ones((L - lags, 1)))
    return np.hstack(cols), y[lags:]


def arx_fit(trajectories: Sequence, lags: int = 12, rcond: float = 1e-10) -> ArxModel:
    """Least-squares fit of the stacked one-step regression (QR; min-norm if rank deficient)."""
    Phi, Y = [], []
    for t in trajectories:
        if len(t) <= lags:
            raise ValueError(f"trajectory with {len(t)} samples is too short for {lags} lags")
        p, y = arx_regressors(t.states, t.inputs, lags)
        Phi.append(p)
        Y.append(y)
    Phi, Y = np.vstack(Phi), np.vstack(Y)
    ny, nu = Y.shape[1], trajectories[0].inputs.shape[1]
    Q, R = np.linalg.qr(Phi)
    d = np.abs(np.diag(R))
    deficient = bool(Phi.shape[0] < Phi.shape[1] or d.size == 0 or d.min() <= rcond * d.max())
    if deficient:
        warnings.warn("ARX regressor is rank deficient; using the minimum-norm solution", RuntimeWarning)
        theta = np.linalg.lstsq(Phi, Y, rcond=None)[0]
    else:
        theta = solve_triangular(R, Q.T @ Y)
    return ArxModel.from_theta(theta, lags, ny, nu, deficient)


def arx_residual(model: ArxModel, trajectories: Sequence, theta: np.ndarray | None = None) -> float:
    theta = model.theta() if theta is None else theta
    total = 0.0
    for t in trajectories:
        p, y = arx_regressors(t.states, t.inputs, model.lags)
        total += float(np.sum((p @ theta - y) ** 2))
    return total


def arx_predict(model: ArxModel, y_hist, u_hist, u_future, steps: int) -> np.ndarray:
    """Recursive multistep prediction.

    ``y_hist``/``u_hist`` hold the last ``lags`` samples (oldest first, the last row
    at the current time t0); ``u_future`` holds inputs at t0+1, t0+2, ...  Returns
    predictions for t0+1 .. t0+steps.
    """
    p = model.lags
    y_hist = np.asarray(y_hist, dtype=float)
    u_hist = np.asarray(u_hist, dtype=float)
    if len(y_hist) < p or len(u_hist) < p:
        raise ValueError(f"need at least {p} history samples")
    u_future = np.asarray(u_future, dtype=float).reshape(-1, model.nu)
    if len(u_future) < steps - 1:
        raise ValueError("not enough future inputs for the requested horizon")
    ys = list(y_hist[-p:])
    us = list(u_hist[-p:]) + list(u_future)
    out = np.empty((steps, model.ny))
    for s in range(steps):
        y_next = model.c.copy()
        for k in range(1, p + 1):
            y_next += model.A[k - 1] @ ys[-k] + model.B[k - 1] @ us[p - 1 + s - (k - 1)]
        ys.append(y_next)
        out[s] = y_next
    return out


def arx_predict_chunk(model: ArxModel, chunk) -> np.ndarray:
    """Predict a chunk from its first sample only; earlier history is held at that sample."""
    p = model.lags
    y_hist = np.repeat(chunk.states[:1], p, axis=0)
    u_hist = np.repeat(chunk.inputs[:1], p, axis=0)
    steps = len(chunk) - 1
    pred = arx_predict(model, y_hist, u_hist, chunk.inputs[1:], steps)
    return np.vstack([chunk.states[:1], pred])


# --------------------------------------------------------------------------
# vanilla NODE

@dataclass(frozen=True)
class VanillaNode:
    """dx/dt = f(x) with f a tanh MLP (two hidden layers), in standardized coordinates."""

    W1: object
    b1: object
    W2: object
    b2: object
    W3: object
    b3: object
    n: int
    m: int = 0
    use_inputs: bool = False
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    kind: str = field(default="vanilla", init=False)

    @classmethod
    def initialize(cls, n: int, m: int = 0, hidden: Sequence[int] = (32, 32), seed: int = 0,
                   use_inputs: bool = False, shift=None, scale=None, input_shift=None, input_scale=None,
                   output_gain: float = 0.1) -> "VanillaNode":
        rng = np.random.default_rng(seed)
        n_in = n + (m if use_inputs else 0)
        h1, h2 = hidden

        def glorot(fan_out, fan_in, gain=1.0):
            lim = gain * np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, (fan_out, fan_in))

        arr = lambda v, d, k: (np.full(k, d) if v is None else np.asarray(v, dtype=float))
        return cls(glorot(h1, n_in), np.zeros(h1), glorot(h2, h1), np.zeros(h2),
                   glorot(n, h2, output_gain), np.zeros(n), n, m, use_inputs,
                   arr(shift, 0.0, n), arr(scale, 1.0, n), arr(input_shift, 0.0, m), arr(input_scale, 1.0, m))

    @classmethod
    def zeros(cls, n: int, m: int = 0, hidden=(32, 32)) -> "VanillaNode":
        model = cls.initialize(n, m, hidden)
        return model.with_parameters(np.zeros(len(model.parameters())))

    def rhs(self, x, u):
        z = x
        if self.use_inputs and self.m:
            un = (np.asarray(u, dtype=float) - self.input_shift) / self.input_scale
            z = ad.concatenate([x, un * np.ones(ad.value_of(x).shape[:-1] + (1,))], axis=-1)
        a = ad.tanh(ad.matmul(z, ad.transpose(self.W1)) + self.b1)
        a = ad.tanh(ad.matmul(a, ad.transpose(self.W2)) + self.b2)
        return ad.matmul(a, ad.transpose(self.W3)) + self.b3

    def encode(self, z):
        return (np.asarray(z, dtype=float) - self.shift) / self.scale

    def observe(self, x):
        return x * self.scale + self.shift

    def parameters(self) -> ad.ParameterVector:
        return ad.ParameterVector.from_arrays(
            {k: ad.value_of(getattr(self, k)) for k in ("W1", "b1", "W2", "b2", "W3", "b3")})

    def with_parameters(self, flat) -> "VanillaNode":
        return replace(self, **self.parameters().unpack(flat))

    def l1_groups(self) -> tuple[str, ...]:
        return ("W1", "W2", "W3")

    def effective_group(self, name: str):
        return getattr(self, name)

    def effective_parameters(self) -> dict:
        return {}

    def constrained_groups(self) -> tuple[str, ...]:
        return ()

    def to_config(self) -> dict:
        return {"kind": "vanilla", "n": self.n, "m": self.m, "use_inputs": self.use_inputs,
                "hidden": [ad.value_of(self.W1).shape[0], ad.value_of(self.W2).shape[0]],
                "shift": np.asarray(self.shift).tolist(), "scale": np.asarray(self.scale).tolist(),
                "input_shift": np.asarray(self.input_shift).tolist(),
                "input_scale": np.asarray(self.input_scale).tolist()}

    @classmethod
    def from_config(cls, cfg: dict, values=None) -> "VanillaNode":
        model = cls.initialize(int(cfg["n"]), int(cfg["m"]), tuple(cfg["hidden"]), use_inputs=cfg["use_inputs"],
                               shift=cfg["shift"], scale=cfg["scale"], input_shift=cfg["input_shift"],
                               input_scale=cfg["input_scale"])
        return model if values is None else model.with_parameters(np.asarray(values, dtype=float))
