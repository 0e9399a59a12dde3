"""Discretized PC-NODE training: Euler rollouts on a tape, squared error, Adam."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .core import ModelError

log = logging.getLogger(__name__)

LOSS_SPACES = ("state", "measurement", "temperature")


class TrainingDivergence(FloatingPointError):
    def __init__(self, message: str, step: int | None = None, trajectory: int | None = None):
        parts = [message]
        if trajectory is not None:
            parts.append(f"trajectory {trajectory}")
        if step is not None:
            parts.append(f"step {step}")
        super().__init__(", ".join(parts))
        self.step, self.trajectory = step, trajectory


@dataclass
class TrainConfig:
    h: float
    epochs: int = 200
    learning_rate: float = 1e-2
    batch_size: int = 8
    l1_weight: float = 0.0
    l1_groups: tuple[str, ...] | None = None
    seed: int = 0
    gradient_clip: float | None = None
    loss_space: str = "state"

    def __post_init__(self):
        if self.h <= 0 or self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("h, learning_rate, batch_size must be positive and epochs non-negative")
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be non-negative")
        if self.loss_space not in LOSS_SPACES:
            raise ValueError(f"loss_space must be one of {LOSS_SPACES}")
        if self.l1_groups is not None:
            self.l1_groups = tuple(self.l1_groups)


# --------------------------------------------------------------------------
# objective

def loss(predicted, measured):
    """Sum over steps and dimensions of squared errors, averaged over the batch axis.

    Arrays are shaped (steps, batch, dim); a 2-d input is a single trajectory.
    """
    diff = predicted - measured
    shape = ad.value_of(diff).shape
    batch = shape[1] if len(shape) == 3 else 1
    return ad.total(diff * diff) / batch


def l1_penalty(model, groups: Sequence[str] | None = None):
    """Sum of absolute effective values of the named parameter groups."""
    groups = tuple(model.l1_groups() if groups is None else groups)
    out = 0.0
    for g in groups:
        out = out + ad.total(ad.absolute(model.effective_group(g)))
    return out


def stack_batch(batch: Sequence) -> tuple[np.ndarray, np.ndarray, float]:
    """(samples, batch, dim) arrays of measured states and inputs."""
    hs = {round(t.h, 12) for t in batch}
    if len(hs) != 1:
        raise ValueError("batch trajectories must share the same step h")
    lengths = {len(t) for t in batch}
    if len(lengths) != 1:
        raise ValueError("batch trajectories must have equal length")
    Z = np.stack([t.states for t in batch], axis=1)
    U = np.stack([t.inputs for t in batch], axis=1)
    return Z, U, batch[0].h


def rollout(model, x0, U, h: float) -> list:
    """Euler states x_0..x_L driven by U[0..L-1] (batched, tape-aware)."""
    states = [x0]
    x = x0
    for i in range(len(U) - 1):
        x = x + h * model.rhs(x, U[i])
        states.append(x)
    return states


def _objective(model, Z, U, h, loss_space):
    x0 = model.encode(Z[0])
    states = rollout(model, x0, U, h)
    if len(states) == 1:
        return 0.0, states
    pred = ad.stack(states[1:], axis=0)
    if loss_space == "state":
        target = model.encode(Z[1:])
        return loss(pred, target), states
    return loss(model.observe(pred), Z[1:]), states


def _locate_nonfinite(states) -> tuple[int | None, int | None]:
    for i, s in enumerate(states):
        v = ad.value_of(s)
        bad = ~np.all(np.isfinite(v), axis=-1)
        if np.any(bad):
            return i, int(np.flatnonzero(np.atleast_1d(bad))[0])
    return None, None


def bptt_gradient(model, batch, config: TrainConfig, values=None) -> tuple[float, np.ndarray]:
    """Loss (+ L1 penalty) of a batch of trajectories and its gradient by tape replay."""
    params = model.parameters()
    values = params.values if values is None else np.asarray(values, dtype=float)
    Z, U, h = stack_batch(batch)
    if len(Z) > 1 and abs(h - config.h) > 1e-9 * max(h, config.h):
        raise ValueError(f"dataset step {h} differs from configured h {config.h}")
    tape = ad.Tape()
    theta = tape.leaf(values)
    m = model.with_parameters(theta)
    total, states = _objective(m, Z, U, h, config.loss_space)
    if config.l1_weight > 0:
        total = total + config.l1_weight * l1_penalty(m, config.l1_groups)
    if not isinstance(total, ad.Var):
        return float(total), np.zeros_like(values)
    if not np.isfinite(total.value):
        step, traj = _locate_nonfinite(states)
        raise TrainingDivergence("non-finite loss", step, traj)
    grads = tape.backward(total)
    return float(total.value), grads[theta.id]


def evaluate_loss(model, batch, config: TrainConfig) -> float:
    """Data loss of a batch without building a tape."""
    Z, U, h = stack_batch(batch)
    value, _ = _objective(model, Z, U, h, config.loss_space)
    return float(ad.value_of(value))


# --------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float) -> tuple[np.ndarray, AdamState]:
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


def clip_gradient(grads: np.ndarray, threshold: float | None) -> np.ndarray:
    if threshold is None:
        return grads
    peak = np.max(np.abs(grads)) if grads.size else 0.0
    return grads if peak <= threshold else grads * (threshold / peak)


# --------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    model: dict
    values: np.ndarray
    segments: dict
    history: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    effective: dict = field(default_factory=dict)
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": {"values": [float(v) for v in self.values],
                           "segments": {k: [s.start, s.stop, list(s.shape)] for k, s in self.segments.items()}},
            "effective": {k: [float(x) for x in np.ravel(v)] for k, v in self.effective.items()},
            "history": self.history,
            "config": self.config,
            "rng_state": self.rng_state,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        segs = {k: ad.Segment(int(a), int(b), tuple(s)) for k, (a, b, s) in d["parameters"]["segments"].items()}
        return cls(d["model"], np.array(d["parameters"]["values"], dtype=float), segs, d.get("history", []),
                   d.get("config", {}), d.get("rng_state", {}), d.get("effective", {}), d.get("status", "ok"))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        # json writes floats with repr(), which round-trips doubles exactly
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def build_model(self):
        from .models import model_from_config

        return model_from_config(self.model, self.values)


def checkpoint_of(model, history=None, config=None, rng=None, status="ok") -> Checkpoint:
    params = model.parameters()
    return Checkpoint(
        model=model.to_config(), values=params.values.copy(), segments=dict(params.segments),
        history=list(history or []), config=dict(config or {}),
        rng_state=_jsonable(rng.bit_generator.state) if rng is not None else {},
        effective={k: np.asarray(v).ravel().tolist() for k, v in model.effective_parameters().items()},
        status=status,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_history_csv(history: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,train_loss,val_loss,best_val_loss"]
    for row in history:
        lines.append(",".join(format(float(row[k]), ".17g") if k != "epoch" else str(row[k])
                              for k in ("epoch", "train_loss", "val_loss", "best_val_loss")))
    path.write_text("\n".join(lines) + "\n")
    return path


# --------------------------------------------------------------------------
# training loop

@dataclass
class TrainResult:
    model: object
    checkpoint: Checkpoint
    history: list[dict]
    aborted: str | None = None


def train(model, train_set: Sequence, val_set: Sequence, config: TrainConfig,
          callback: Callable[[int, object], None] | None = None) -> TrainResult:
    """Epochs of shuffled mini-batches; returns the best-validation parameters."""
    rng = np.random.default_rng(config.seed)
    values = model.parameters().values.copy()
    adam = AdamState.zeros(len(values))
    monitor = list(val_set) if len(val_set) else list(train_set)

    def val_loss(vals):
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                return evaluate_loss(model.with_parameters(vals), monitor, config)
            except ModelError:
                return np.inf

    best_vals = values.copy()
    best = initial = val_loss(values)
    history: list[dict] = []
    aborted = None
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        batch_losses = []
        try:
            for start in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[start:start + config.batch_size]]
                with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected below
                    value, grads = bptt_gradient(model, batch, config, values)
                grads = clip_gradient(grads, config.gradient_clip)
                values, adam = adam_step(adam, values, grads, config.learning_rate)
                step += 1
                batch_losses.append(value)
                if callback is not None:
                    callback(step, model.with_parameters(values))
        except (TrainingDivergence, ModelError) as err:
            aborted = f"epoch {epoch}: {err}"
            log.warning("training aborted: %s", aborted)
            break
        current = val_loss(values)
        if not np.isfinite(current) or current > 1e6 * max(initial, 1e-300):
            aborted = f"epoch {epoch}: validation loss diverged ({current})"
            log.warning("training aborted: %s", aborted)
            break
        if current < best:
            best, best_vals = current, values.copy()
        history.append({"epoch": epoch, "train_loss": float(np.mean(batch_losses)),
                        "val_loss": float(current), "best_val_loss": float(best)})
        log.info("epoch %d train %.6g val %.6g", epoch, history[-1]["train_loss"], current)
    best_model = model.with_parameters(best_vals)
    cfg = asdict(config)
    cfg["l1_groups"] = list(config.l1_groups) if config.l1_groups is not None else None
    ckpt = checkpoint_of(best_model, history, cfg, rng, status="aborted" if aborted else "ok")
    return TrainResult(best_model, ckpt, history, aborted)
