"""Recover known building coefficients from noiseless synthetic data.

    python3 scripts/identifiability.py --samples 5000 --epochs 300
"""
import argparse
import time

import numpy as np

from pcnode.building import (Adjacency, BuildingModel, BuildingParams, default_true_params,
                             synth_building_generate, synthetic_inputs)
from pcnode.data import chunk
from pcnode.trainer import TrainConfig, train


def recover(n_zones: int, samples: int, epochs: int, seed: int, lr: float):
    true = default_true_params(n_zones)
    inputs = synthetic_inputs(n_zones, samples, 900.0, np.random.default_rng(seed))
    traj = synth_building_generate(true, inputs, np.full(n_zones, 293.0), h=900.0, substeps=10)
    chunks = chunk(traj, 289)
    model = BuildingModel(BuildingParams.initial_guess(Adjacency.chain(n_zones)))
    cfg = TrainConfig(h=900.0, epochs=epochs, learning_rate=lr, batch_size=len(chunks), loss_space="temperature",
                      seed=seed)
    return true, train(model, chunks, [], cfg).model.params


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--zones", type=int, default=3)
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    t0 = time.perf_counter()
    true, learned = recover(args.zones, args.samples, args.epochs, args.seed, args.lr)
    for name in ("lambda_edge", "lambda_ext", "b_s", "b_h", "b_c"):
        ref, est = np.asarray(getattr(true, name)), np.asarray(getattr(learned, name))
        print(f"{name:12s} true {np.array2string(ref, precision=4)}  learned {np.array2string(est, precision=4)}"
              f"  max rel err {np.max(np.abs(est - ref) / ref):.2%}")
    print(f"{time.perf_counter() - t0:.0f} s")
