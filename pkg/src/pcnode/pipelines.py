"""End-to-end runs behind the command line: generation, training, evaluation, checks."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .baselines import ArxModel, VanillaNode, arx_fit
from .building import (Adjacency, BuildingModel, BuildingParams, default_true_params,
                       synth_building_generate, synthetic_inputs)
from .config import (ArxRunConfig, CheckPhysicsConfig, ConfigError, EvaluateConfig, GenerateBuildingConfig,
                     GenerateGasConfig, TrainRunConfig, dump_config)
from .data import (Normalizer, Trajectory, add_noise, chunk, csv_read, csv_write, read_metadata,
                   rk4_generate, split_indices, write_metadata)
from .gas_piston import INPUT_LABELS, STATE_LABELS, GasPistonTruth, LearnedGasPiston
from .trainer import Checkpoint, TrainConfig, train, write_history_csv

log = logging.getLogger(__name__)

DEFAULT_LR = {"building": 1e-2, "gas": 1e-3, "vanilla": 1e-3}


# --------------------------------------------------------------------------
# datasets

@dataclass
class Dataset:
    trajectory: Trajectory
    chunks: list[Trajectory]
    train_ids: list[int]
    val_ids: list[int]
    normalizer: Normalizer
    metadata: dict

    @property
    def train(self) -> list[Trajectory]:
        return [self.chunks[i] for i in self.train_ids]

    @property
    def val(self) -> list[Trajectory]:
        return [self.chunks[i] for i in self.val_ids]

    def split(self, name: str) -> tuple[list[int], list[Trajectory]]:
        if name not in ("train", "val", "all"):
            raise ConfigError(f"split must be train, val or all, not {name!r}")
        ids = {"train": self.train_ids, "val": self.val_ids, "all": list(range(len(self.chunks)))}[name]
        return ids, [self.chunks[i] for i in ids]


def _split_record(chunks, chunk_length, train_fraction, seed) -> dict:
    train_ids, val_ids = split_indices(len(chunks), train_fraction, seed)
    norm = Normalizer.fit([chunks[i] for i in train_ids])
    return {"chunk_length": chunk_length, "split": {"train": train_ids, "val": val_ids},
            "normalizer": norm.to_dict(), "split_seed": seed}


def write_dataset(traj: Trajectory, path, chunk_length: int, train_fraction: float, seed: int) -> Path:
    """CSV plus sidecar carrying the chunking, the seeded split and the training normalizer."""
    path = csv_write(traj, path, write_sidecar=False)
    chunks = chunk(traj, chunk_length)
    write_metadata(path, traj, _split_record(chunks, chunk_length, train_fraction, seed))
    return path


def load_dataset(path, chunk_length: int | None = None, seed: int = 0, train_fraction: float = 0.8) -> Dataset:
    traj = csv_read(path)
    meta = read_metadata(path)
    stored = meta.get("chunk_length")
    length = chunk_length or stored
    if not length:
        raise ConfigError("chunk_length is neither configured nor stored with the dataset")
    chunks = chunk(traj, int(length))
    if not chunks:
        raise ConfigError(f"dataset has {len(traj)} samples, fewer than one chunk of {length}")
    if stored == length and "split" in meta:
        train_ids, val_ids = meta["split"]["train"], meta["split"]["val"]
        if max(train_ids + val_ids) >= len(chunks):
            raise ConfigError("stored split refers to chunks that do not exist")
        norm = Normalizer.from_dict(meta["normalizer"])
    else:
        train_ids, val_ids = split_indices(len(chunks), train_fraction, seed)
        norm = Normalizer.fit([chunks[i] for i in train_ids])
    return Dataset(traj, chunks, list(train_ids), list(val_ids), norm, meta)


# --------------------------------------------------------------------------
# generation

def generate_gas(cfg: GenerateGasConfig, out) -> dict[str, Path]:
    """Free-response and sinusoidally forced gas-piston datasets, each clean and noisy."""
    out = Path(out)
    truth = GasPistonTruth(T0=cfg.T0)
    steps = cfg.n_samples - 1
    forcing = {
        "free": lambda t: np.zeros(1),
        "forced": lambda t: np.array([cfg.forcing_amplitude * np.sin(2 * np.pi * cfg.forcing_frequency * t)]),
    }
    files = {}
    for k, (variant, fn) in enumerate(forcing.items()):
        meta = {"source": "gas-piston", "variant": variant, "seed": cfg.seed, "constants": truth.constants(),
                "forcing": ({"amplitude": cfg.forcing_amplitude, "frequency": cfg.forcing_frequency}
                            if variant == "forced" else None)}
        clean = rk4_generate(truth, truth.x0, fn, cfg.h, steps, cfg.substeps, STATE_LABELS, INPUT_LABELS, meta)
        noisy = add_noise(clean, cfg.noise, cfg.seed + k)
        stem = "gas" if variant == "free" else "gas_forced"
        for suffix, traj in (("clean", clean), ("noisy", noisy)):
            files[f"{stem}_{suffix}"] = write_dataset(traj, out / f"{stem}_{suffix}.csv", cfg.chunk_length,
                                                      cfg.train_fraction, cfg.seed)
    return files


def generate_building(cfg: GenerateBuildingConfig, out) -> dict[str, Path]:
    out = Path(out)
    true = default_true_params(cfg.n_zones, cfg.edges)
    rng = np.random.default_rng(cfg.seed)
    inputs = synthetic_inputs(cfg.n_zones, cfg.n_samples, cfg.h, rng, solar_peak=cfg.solar_peak,
                              heat_power=cfg.heat_power, cool_power=cfg.cool_power)
    T0 = np.full(cfg.n_zones, cfg.T0)
    clean = synth_building_generate(true, inputs, T0, cfg.h, cfg.substeps, {"seed": cfg.seed})
    noisy = add_noise(clean, cfg.noise, cfg.seed)
    return {name: write_dataset(traj, out / f"building_{name}.csv", cfg.chunk_length, cfg.train_fraction, cfg.seed)
            for name, traj in (("clean", clean), ("noisy", noisy))}


# --------------------------------------------------------------------------
# models

def initial_model(cfg: TrainRunConfig, data: Dataset):
    norm = data.normalizer
    n, m = data.trajectory.states.shape[1], data.trajectory.inputs.shape[1]
    if cfg.model == "building":
        truth_cfg = data.metadata.get("metadata", {}).get("model", {})
        edges = cfg.edges or truth_cfg.get("edges")
        adj = Adjacency.chain(n) if edges is None else Adjacency(n, tuple(tuple(e) for e in edges))
        constants = {k: truth_cfg[k] for k in ("zone_heat_capacity", "t_ref") if k in truth_cfg}
        if m != 1 + 3 * n:
            raise ConfigError(f"building data need {1 + 3 * n} input columns, found {m}")
        return BuildingModel(BuildingParams.initial_guess(adj, **constants))
    if cfg.model == "gas":
        if n != 4 or m != 1:
            raise ConfigError("gas-piston data need 4 state columns and 1 input column")
        return LearnedGasPiston.initialize(cfg.n_hidden, cfg.seed, cfg.gamma_scale,
                                           shift=norm.state_mean, scale=norm.state_std)
    if cfg.model == "vanilla":
        use_inputs = cfg.use_inputs
        if use_inputs is None:
            use_inputs = m > 0 and len(norm.flagged_inputs) < m
        if len(cfg.hidden) != 2:
            raise ConfigError("hidden must list two layer widths")
        return VanillaNode.initialize(n, m, tuple(cfg.hidden), cfg.seed, use_inputs, norm.state_mean,
                                      norm.state_std, norm.input_mean, norm.input_std)
    raise ConfigError(f"unknown model {cfg.model!r}; expected building, gas or vanilla")


def load_model(path):
    """A trained checkpoint or an ARX coefficient file."""
    d = json.loads(Path(path).read_text())
    if d.get("kind") == "arx":
        return ArxModel.from_dict(d), None
    ckpt = Checkpoint.from_dict(d)
    return ckpt.build_model(), ckpt


def series_name(model) -> str:
    kind = getattr(model, "kind", "")
    return {"building": "pc-node", "gas": "pc-node", "vanilla": "node", "arx": "arx"}.get(kind, kind)


# --------------------------------------------------------------------------
# commands

def run_train(cfg: TrainRunConfig, out) -> tuple[Checkpoint, str | None]:
    out = Path(out)
    data = load_dataset(cfg.data, cfg.chunk_length, cfg.seed)
    cfg = replace(cfg, chunk_length=len(data.chunks[0]) if data.chunks else cfg.chunk_length,
                  learning_rate=cfg.learning_rate or DEFAULT_LR[cfg.model],
                  loss_space=cfg.loss_space or ("temperature" if cfg.model == "building" else "state"))
    if cfg.model == "vanilla" and cfg.use_inputs is None:
        m = data.trajectory.inputs.shape[1]
        cfg = replace(cfg, use_inputs=m > 0 and len(data.normalizer.flagged_inputs) < m)
    dump_config(cfg, out / "config.resolved.yaml")
    model = initial_model(cfg, data)
    tc = TrainConfig(h=data.trajectory.h, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                     batch_size=cfg.batch_size, l1_weight=cfg.l1_weight, seed=cfg.seed,
                     gradient_clip=cfg.gradient_clip, loss_space=cfg.loss_space)
    result = train(model, data.train, data.val, tc)
    result.checkpoint.save(out / "checkpoint.json")
    write_history_csv(result.history, out / "history.csv")
    return result.checkpoint, result.aborted


def run_arx(cfg: ArxRunConfig, out) -> ArxModel:
    out = Path(out)
    dump_config(cfg, out / "config.resolved.yaml")
    data = load_dataset(cfg.data, cfg.chunk_length, cfg.seed)
    model = arx_fit(data.train, cfg.lags)
    model.save(out / "arx.json")
    return model


def run_evaluate(cfg: EvaluateConfig, out) -> dict:
    out = Path(out)
    dump_config(cfg, out / "config.resolved.yaml")
    data = load_dataset(cfg.data, cfg.chunk_length, cfg.seed)
    ids, chunks = data.split(cfg.split)
    if not chunks:
        raise ConfigError(f"split {cfg.split!r} is empty")
    targets = np.stack([c.states for c in chunks])
    entries = [("primary", cfg.checkpoint)] + ([("baseline", cfg.baseline)] if cfg.baseline else [])
    curves, summaries, names = {}, {}, {}
    for role, path in entries:
        model, _ = load_model(path)
        name = series_name(model)
        if name in curves:
            name = f"{name}-{role}"
        preds = ev.predict_all(model, chunks)
        curves[name] = ev.mae_curve(preds, targets)
        summaries[name] = ev.summarize(curves[name])
        names[role] = name
        ev.write_predictions_csv(preds, targets, data.trajectory.state_labels, ids, out / f"predictions_{name}.csv")
    metrics = {"split": cfg.split, "n_chunks": len(chunks), "chunk_ids": list(ids),
               "primary": names["primary"], "series": summaries}
    if "baseline" in names:
        metrics["baseline"] = names["baseline"]
        metrics["improvement_vs_baseline"] = ev.compare_summaries(summaries[names["primary"]],
                                                                  summaries[names["baseline"]])
    if cfg.reference_metrics:
        ref = json.loads(Path(cfg.reference_metrics).read_text())
        metrics["improvement_vs_reference"] = ev.compare_summaries(summaries[names["primary"]],
                                                                   ref["series"][ref["primary"]])
    ev.write_curves_csv(curves, out / "mae_curve.csv")
    ev.write_json(metrics, out / "metrics.json")
    return metrics


def run_check_physics(cfg: CheckPhysicsConfig, out) -> dict:
    out = Path(out)
    dump_config(cfg, out / "config.resolved.yaml")
    model, ckpt = load_model(cfg.checkpoint)
    if ckpt is None:
        raise ConfigError("check-physics needs a trained model checkpoint, not ARX coefficients")
    data = load_dataset(cfg.data, cfg.chunk_length, cfg.seed)
    _, chunks = data.split(cfg.split)
    index = cfg.entropy_index
    if index is None and data.trajectory.state_labels[0].startswith("S["):
        index = 0
    problems = ev.parameter_findings(model, ckpt.effective)
    if problems:
        # do not roll out a model whose stored parameters are inconsistent
        report = {"model": model.kind, "parameters": {"status": "fail", "problems": problems},
                  "passed": False, "failures": problems}
    else:
        report = ev.physics_report(model, chunks, cfg.probes, cfg.seed, index)
    ev.write_json(report, out / "physics_report.json")
    return report
