"""Multistep prediction metrics and physics reports for trained models."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .baselines import ArxModel, arx_predict_chunk
from .core import (check_energy_conservation, check_entropy_production,
                   check_monotonicity, energy_power_scale, rollout_array)

ENERGY_TOL = 1e-10
ENTROPY_TOL = -1e-12


# --------------------------------------------------------------------------
# prediction

def predict_chunk(model, chunk) -> np.ndarray:
    """Free-run prediction of a chunk from its first measurement, in measurement units."""
    if isinstance(model, ArxModel):
        return arx_predict_chunk(model, chunk)
    x0 = model.encode(chunk.states[0])
    states = rollout_array(model, x0, chunk.inputs[:-1], chunk.h)
    return np.asarray(ad.value_of(model.observe(states)))


def predict_all(model, chunks: Sequence) -> np.ndarray:
    """(chunks, samples, dim) predictions."""
    return np.stack([predict_chunk(model, c) for c in chunks])


def mae_curve(predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Mean absolute error per prediction step, averaged over chunks and output dimensions."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {targets.shape}")
    return np.abs(predictions - targets).mean(axis=(0, 2))


def summarize(curve: np.ndarray) -> dict:
    """Mean over steps 1..L and the error at the last step."""
    curve = np.asarray(curve, dtype=float)
    body = curve[1:] if len(curve) > 1 else curve
    return {"mae_mean": float(body.mean()), "mae_end": float(curve[-1]), "horizon": len(curve) - 1}


def improvement(value: float, reference: float) -> float:
    """Percent reduction of ``value`` relative to ``reference`` (positive = better)."""
    if reference == 0:
        return 0.0 if value == 0 else -np.inf
    return float(100.0 * (1.0 - value / reference))


def compare_summaries(ours: dict, reference: dict) -> dict:
    return {"mae_mean_improvement_pct": improvement(ours["mae_mean"], reference["mae_mean"]),
            "mae_end_improvement_pct": improvement(ours["mae_end"], reference["mae_end"])}


# --------------------------------------------------------------------------
# files

def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_curves_csv(curves: dict[str, np.ndarray], path) -> Path:
    """Tidy plot data with columns step, series, value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "series", "value"])
        for name, curve in curves.items():
            for k, v in enumerate(curve):
                w.writerow([k, name, _fmt(v)])
    return path


def read_curves_csv(path) -> dict[str, np.ndarray]:
    out: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["series"], []).append(float(row["value"]))
    return {k: np.array(v) for k, v in out.items()}


def write_predictions_csv(predictions: np.ndarray, targets: np.ndarray, labels: Sequence[str],
                          chunk_ids: Sequence[int], path) -> Path:
    """Long table: chunk, step, then predicted and measured columns per output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chunk", "step", *[f"pred_{l}" for l in labels], *[f"meas_{l}" for l in labels]])
        for cid, pred, meas in zip(chunk_ids, predictions, targets):
            for k in range(len(pred)):
                w.writerow([cid, k, *map(_fmt, pred[k]), *map(_fmt, meas[k])])
    return path


def read_predictions_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_predictions_csv`; returns (predictions, targets)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    dim = (len(header) - 2) // 2
    chunks = np.unique(body[:, 0])
    steps = len(body) // len(chunks)
    pred = body[:, 2:2 + dim].reshape(len(chunks), steps, dim)
    meas = body[:, 2 + dim:].reshape(len(chunks), steps, dim)
    return pred, meas


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# physics report

def parameter_findings(model, stored_effective: dict | None = None) -> list[str]:
    """Sign and consistency problems of the physically constrained parameters.

    ``stored_effective`` are values recorded alongside a checkpoint; they must match
    what the raw parameters imply.
    """
    problems = []
    actual = {k: np.ravel(v) for k, v in model.effective_parameters().items()}
    constrained = set(model.constrained_groups())
    sources = [("computed", actual)]
    if stored_effective:
        sources.append(("stored", {k: np.ravel(np.asarray(v, dtype=float)) for k, v in stored_effective.items()}))
    for origin, values in sources:
        for name, vals in values.items():
            if name not in constrained:
                continue
            for i, v in enumerate(vals):
                if not np.isfinite(v) or v <= 0:
                    problems.append(f"{name}[{i}] = {float(v)!r} is not positive ({origin})")
    if stored_effective:
        for name, vals in sources[1][1].items():
            if name not in actual:
                problems.append(f"{name}: unknown parameter in stored values")
            elif vals.shape != actual[name].shape or not np.allclose(vals, actual[name], rtol=1e-12, atol=0):
                problems.append(f"{name}: stored values disagree with the raw parameters")
    return problems


def entropy_decrease_steps(predictions: np.ndarray, index: int = 0) -> int:
    """Number of predicted steps with a strictly decreasing entropy component."""
    s = np.asarray(predictions)[..., index]
    return int(np.sum(np.diff(s, axis=-1) < 0))


def physics_report(model, chunks: Sequence, n_probes: int = 200, seed: int = 0,
                   entropy_index: int | None = None) -> dict:
    """Run the structural checks on states visited by free-run rollouts of ``chunks``.

    Returns a JSON-ready dict with a boolean ``passed`` and per-check entries.
    Checks a model cannot support are reported as "unsupported"; models without
    built-in structure get "not guaranteed" for the entropy check.
    """
    rng = np.random.default_rng(seed)
    states, inputs, preds = [], [], []
    for c in chunks:
        x0 = model.encode(c.states[0])
        xs = rollout_array(model, x0, c.inputs[:-1], c.h)
        states.append(xs)
        inputs.append(c.inputs)
        preds.append(np.asarray(ad.value_of(model.observe(xs))))
    X = np.concatenate(states) if states else np.zeros((0, model.n))
    structured = callable(getattr(model, "hamiltonian_grad", None))
    report: dict = {"model": getattr(model, "kind", type(model).__name__), "n_states": int(len(X))}
    failures: list[str] = []

    problems = parameter_findings(model)
    report["parameters"] = {"status": "fail" if problems else "pass", "problems": problems}
    failures += problems

    if structured and len(X):
        residual = check_energy_conservation(model, X)
        scale = max(energy_power_scale(model, X), np.finfo(float).tiny)
        rel = residual / scale
        ok = rel <= ENERGY_TOL
        report["energy"] = {"status": "pass" if ok else "fail", "max_residual": residual,
                            "max_relative_residual": rel, "tolerance": ENERGY_TOL}
        if not ok:
            failures.append(f"energy residual {rel:.3e} exceeds {ENERGY_TOL:.0e}")
        rate = check_entropy_production(model, X)
        ok = rate >= ENTROPY_TOL
        report["entropy_rate"] = {"status": "pass" if ok else "fail", "min_rate": rate, "tolerance": ENTROPY_TOL}
        if not ok:
            failures.append(f"entropy rate {rate:.3e} below {ENTROPY_TOL:.0e}")
    else:
        report["energy"] = {"status": "unsupported"}
        report["entropy_rate"] = {"status": "not guaranteed"}

    if structured and getattr(model, "kind", "") == "building" and len(X):
        # probe around measured operating points: raise each input by a random amount
        U = np.concatenate(inputs)
        idx = rng.integers(0, len(X), n_probes)
        lo = U[idx]
        hi = lo + rng.exponential(1.0, lo.shape) * np.maximum(U.std(axis=0), 1.0)
        bad = sum(not check_monotonicity(model, X[i], lo[k], hi[k]) for k, i in enumerate(idx))
        report["monotonicity"] = {"status": "fail" if bad else "pass", "probes": n_probes, "violations": bad}
        if bad:
            failures.append(f"{bad} monotonicity probes failed")

    if entropy_index is not None and preds:
        count = sum(entropy_decrease_steps(p, entropy_index) for p in preds)
        entry = {"count": count, "steps": int(sum(len(p) - 1 for p in preds))}
        if structured:
            entry["status"] = "pass" if count == 0 else "fail"
            if count:
                failures.append(f"{count} predicted entropy decreases")
        else:
            entry["status"] = "not guaranteed / violations found" if count else "not guaranteed"
        report["entropy_decrease_steps"] = entry

    report["passed"] = not failures
    report["failures"] = failures
    return report
