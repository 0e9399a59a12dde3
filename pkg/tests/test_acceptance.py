"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS/FAIL`` line; the lines are repeated in
the pytest terminal summary.  Run on its own with

    python3 -m pytest tests/test_acceptance.py -v
"""
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pcnode import autodiff as ad
from pcnode.building import (Adjacency, BuildingModel, BuildingParams, build_jtilde, default_true_params,
                             synth_building_generate, synthetic_inputs)
from pcnode.cli import main
from pcnode.data import chunk, csv_read
from pcnode.gas_piston import GasPistonTruth, LearnedGasPiston
from pcnode.trainer import TrainConfig, bptt_gradient, evaluate_loss, train

from conftest import record_acceptance
from helpers import building_chunks, gas_chunks, gas_model, vanilla_model
from oracles import gas_truth_energy


@contextmanager
def criterion(number, title):
    notes = {}
    try:
        yield notes
    except BaseException as err:
        record_acceptance(number, title, False, notes.get("detail") or f"{type(err).__name__}: {err}")
        raise
    record_acceptance(number, title, True, notes.get("detail", ""))


def cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"{argv[0]} exited with {code}"


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def building_run(runs):
    """Default synthetic building data (20 % noise), a trained PC-NODE, a 12-lag ARX and their evaluation."""
    root = runs / "building"
    cli("generate-building", "--out", root / "gen", "--seed", 0)
    data = root / "gen" / "building_noisy.csv"
    cli("train", "--out", root / "train", "--seed", 0, "--set", f"data={data}", "--set", "epochs=60",
        "--set", "batch_size=16", "--set", "learning_rate=0.05")
    cli("baseline-arx", "--out", root / "arx", "--seed", 0, "--set", f"data={data}", "--set", "lags=12")
    cli("evaluate", "--out", root / "eval", "--seed", 0, "--set", f"data={data}",
        "--set", f"checkpoint={root / 'train' / 'checkpoint.json'}", "--set", f"baseline={root / 'arx' / 'arx.json'}")
    return root


@pytest.fixture(scope="module")
def gas_run(runs):
    """Gas-piston data, a PC-NODE and a vanilla NODE trained on it, and both physics reports."""
    root = runs / "gas"
    cli("generate-gas", "--out", root / "gen", "--seed", 0)
    data = root / "gen" / "gas_noisy.csv"
    cli("train", "--out", root / "pc", "--seed", 0, "--set", f"data={data}", "--set", "model=gas",
        "--set", "epochs=40", "--set", "learning_rate=0.01")
    cli("baseline-node", "--out", root / "node", "--seed", 0, "--set", f"data={data}", "--set", "epochs=40",
        "--set", "learning_rate=0.003")
    for name in ("pc", "node"):
        cli("check-physics", "--out", root / f"physics_{name}", "--seed", 0, "--set", f"data={data}",
            "--set", f"checkpoint={root / name / 'checkpoint.json'}")
    return root


def test_criterion_1_physics_by_construction():
    with criterion(1, "physics by construction over 1000 draws per model") as notes:
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst_skew, worst_rate, worst_gas = 0.0, np.inf, np.inf
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.6] or [(0, 1)]
            adj = Adjacency(n, tuple(edges))
            params = BuildingParams.from_effective(
                adj, rng.uniform(0.01, 20, adj.n_edges), rng.uniform(0.01, 10, n), rng.uniform(1e-4, 1e-2, n),
                rng.uniform(1e-4, 1e-2, n), rng.uniform(1e-4, 1e-2, n), zone_heat_capacity=rng.uniform(1e5, 1e7, n))
            T = rng.uniform(250.0, 330.0, n)
            M = build_jtilde(params, T).materialize()
            scale = np.abs(T[:, None] * M * T[None, :]).sum()
            worst_skew = max(worst_skew, abs(T @ M @ T) / scale)
            worst_rate = min(worst_rate, BuildingModel(params).entropy_rate(BuildingModel(params).encode(T)))
            gas = LearnedGasPiston.initialize(8, seed=int(rng.integers(2**31)))
            gas = gas.with_parameters(rng.normal(0, 3, len(gas.parameters())))
            x = rng.normal(0, 3, (10, 4))
            worst_gas = min(worst_gas, float(np.min(gas.rhs(x, rng.normal(0, 10, (10, 1)))[:, 0])))
        elapsed = time.perf_counter() - start
        notes["detail"] = (f"max |T'JT|/scale {worst_skew:.1e}, min entropy rate {worst_rate:.2e}, "
                           f"min gas S-rate {worst_gas:.2e}, {elapsed:.1f} s")
        assert worst_skew <= 1e-10
        assert worst_rate >= -1e-12
        assert worst_gas >= 0.0
        assert elapsed < 10.0


def test_criterion_2_gradient_correctness():
    with criterion(2, "BPTT matches central differences on 50-step rollouts") as notes:
        start = time.perf_counter()
        errors = {}
        gas = gas_chunks()
        cases = {
            "building": (BuildingModel(BuildingParams.initial_guess(Adjacency.chain(3))), building_chunks(102, 51),
                         TrainConfig(h=900.0, loss_space="temperature"), 1e-5),
            "gas": (gas_model(gas), gas, TrainConfig(h=0.01), 1e-6),
            "vanilla": (vanilla_model(gas), gas, TrainConfig(h=0.01), 1e-6),
        }
        for name, (model, chunks, cfg, eps) in cases.items():
            assert len(chunks[0]) - 1 == 50
            theta = model.parameters().values
            _, g = bptt_gradient(model, chunks, cfg)
            fd = ad.finite_diff_gradient(lambda v: evaluate_loss(model.with_parameters(v), chunks, cfg), theta, eps)
            errors[name] = float(np.max(np.abs(g - fd)) / np.max(np.abs(fd)))
        elapsed = time.perf_counter() - start
        notes["detail"] = ", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + f", {elapsed:.1f} s"
        assert max(errors.values()) < 1e-5
        assert elapsed < 60.0


def test_criterion_3_identifiability():
    with criterion(3, "noiseless 3-zone data: every effective lambda within 10 %") as notes:
        start = time.perf_counter()
        true = default_true_params(3)
        inputs = synthetic_inputs(3, 5000, 900.0, np.random.default_rng(7))
        traj = synth_building_generate(true, inputs, np.full(3, 293.0), h=900.0, substeps=10)
        chunks = chunk(traj, 289)
        assert len(traj) == 5000 and len(chunks) == 17
        model = BuildingModel(BuildingParams.initial_guess(Adjacency.chain(3)))
        cfg = TrainConfig(h=900.0, epochs=300, learning_rate=0.05, batch_size=len(chunks), loss_space="temperature")
        learned = train(model, chunks, [], cfg).model.params
        errs = []
        for name in ("lambda_edge", "lambda_ext"):
            est, ref = np.asarray(getattr(learned, name)), np.asarray(getattr(true, name))
            errs.extend(np.abs(est - ref) / ref)
        elapsed = time.perf_counter() - start
        notes["detail"] = f"max relative error {max(errs):.2%}, {elapsed:.0f} s"
        assert max(errs) <= 0.10
        assert elapsed < 300.0


def test_criterion_4_gas_protocol(runs):
    with criterion(4, "gas-piston dataset protocol") as notes:
        root = runs / "gas_protocol"
        cli("generate-gas", "--out", root, "--seed", 0)
        clean, noisy = csv_read(root / "gas_clean.csv"), csv_read(root / "gas_noisy.csv")
        truth = GasPistonTruth()
        assert len(clean) == 10_000 and len(noisy) == 10_000
        assert clean.h == pytest.approx(0.01, rel=1e-12)
        np.testing.assert_array_equal(clean.states[0], [0.0, 0.001, 0.3, 0.0])
        assert truth.temperature(clean.states[0, 0], clean.states[0, 1]) == pytest.approx(290.0, rel=1e-12)
        assert len(chunk(clean, 250)) == 40
        ratio = (noisy.states - clean.states).std(axis=0) / (0.2 * clean.states.std(axis=0))
        H = np.array([gas_truth_energy(x) for x in clean.states])
        drift = float(np.max(np.abs(H / H[0] - 1.0)))
        notes["detail"] = f"noise ratio {ratio.min():.3f}..{ratio.max():.3f}, energy drift {drift:.1e}"
        assert np.all(np.abs(ratio - 1.0) <= 0.05)
        assert np.all(clean.inputs == 0.0)
        assert drift <= 1e-6


def test_criterion_5_building_versus_arx(building_run):
    with criterion(5, "PC-NODE end-of-horizon MAE <= 12-lag ARX on noisy synthetic building data") as notes:
        metrics = json.loads((building_run / "eval" / "metrics.json").read_text())
        pc, arx = metrics["series"]["pc-node"], metrics["series"]["arx"]
        notes["detail"] = (f"{metrics['n_chunks']} chunks, step {pc['horizon']}: PC-NODE {pc['mae_end']:.3f} K, "
                           f"ARX {arx['mae_end']:.3f} K, mean {pc['mae_mean']:.3f} vs {arx['mae_mean']:.3f}")
        assert metrics["split"] == "val" and metrics["n_chunks"] >= 20
        assert pc["horizon"] == 288
        assert pc["mae_end"] <= arx["mae_end"]
        curves = (building_run / "eval" / "mae_curve.csv").read_text().splitlines()
        series = {row.split(",")[1] for row in curves[1:]}
        assert series == {"pc-node", "arx"} and len(curves) == 1 + 2 * 289


def test_criterion_6_entropy_consistency(gas_run):
    with criterion(6, "no predicted entropy decrease for the PC-NODE; vanilla count reported") as notes:
        pc = json.loads((gas_run / "physics_pc" / "physics_report.json").read_text())
        node = json.loads((gas_run / "physics_node" / "physics_report.json").read_text())
        pc_entry, node_entry = pc["entropy_decrease_steps"], node["entropy_decrease_steps"]
        notes["detail"] = (f"PC-NODE {pc_entry['count']}/{pc_entry['steps']} decreasing steps, "
                           f"vanilla NODE {node_entry['count']}/{node_entry['steps']} (informational)")
        assert pc["passed"] and pc_entry["count"] == 0 and pc_entry["steps"] > 0
        assert "count" in node_entry and node_entry["status"].startswith("not guaranteed")


def test_criterion_7_determinism(runs, building_run, gas_run):
    with criterion(7, "same seed reproduces outputs bit-exactly") as notes:
        again = runs / "rerun"
        b_data, g_data = building_run / "gen" / "building_noisy.csv", gas_run / "gen" / "gas_noisy.csv"
        cli("generate-gas", "--out", again / "gas_gen", "--seed", 0)
        cli("baseline-arx", "--out", again / "arx", "--seed", 0, "--set", f"data={b_data}", "--set", "lags=12")
        cli("evaluate", "--out", again / "eval", "--seed", 0, "--set", f"data={b_data}",
            "--set", f"checkpoint={building_run / 'train' / 'checkpoint.json'}",
            "--set", f"baseline={again / 'arx' / 'arx.json'}")
        cli("train", "--out", again / "pc", "--seed", 0, "--set", f"data={g_data}", "--set", "model=gas",
            "--set", "epochs=40", "--set", "learning_rate=0.01")
        cli("check-physics", "--out", again / "physics_pc", "--seed", 0, "--set", f"data={g_data}",
            "--set", f"checkpoint={again / 'pc' / 'checkpoint.json'}")
        pairs = [
            (gas_run / "gen" / "gas_noisy.csv", again / "gas_gen" / "gas_noisy.csv"),
            (gas_run / "gen" / "gas_forced_noisy.csv", again / "gas_gen" / "gas_forced_noisy.csv"),
            (building_run / "arx" / "arx.json", again / "arx" / "arx.json"),
            (building_run / "eval" / "metrics.json", again / "eval" / "metrics.json"),
            (building_run / "eval" / "mae_curve.csv", again / "eval" / "mae_curve.csv"),
            (gas_run / "pc" / "checkpoint.json", again / "pc" / "checkpoint.json"),
            (gas_run / "pc" / "history.csv", again / "pc" / "history.csv"),
            (gas_run / "physics_pc" / "physics_report.json", again / "physics_pc" / "physics_report.json"),
        ]
        differing = [str(b.relative_to(again)) for a, b in pairs if a.read_bytes() != b.read_bytes()]
        notes["detail"] = f"{len(pairs) - len(differing)}/{len(pairs)} files identical"
        assert not differing, differing
