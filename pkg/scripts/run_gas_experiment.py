"""Gas-piston study: PC-NODE against an unconstrained neural ODE.

Trains both on the noisy free-response data and compares validation MAE and
the number of predicted entropy decreases.

    python3 scripts/run_gas_experiment.py --out runs/gas
"""
import argparse
import json
import sys
from pathlib import Path

from pcnode.cli import main


def step(*argv):
    code = main([str(a) for a in argv])
    if code:
        sys.exit(code)


def run(out: Path, seed: int, epochs: int, dataset: str) -> dict:
    data = out / "gen" / f"{dataset}.csv"
    step("generate-gas", "--out", out / "gen", "--seed", seed)
    step("train", "--out", out / "pc", "--seed", seed, "--set", f"data={data}", "--set", "model=gas",
         "--set", f"epochs={epochs}", "--set", "learning_rate=0.01")
    step("baseline-node", "--out", out / "node", "--seed", seed, "--set", f"data={data}",
         "--set", f"epochs={epochs}", "--set", "learning_rate=0.003")
    step("evaluate", "--out", out / "eval", "--seed", seed, "--set", f"data={data}",
         "--set", f"checkpoint={out / 'pc' / 'checkpoint.json'}", "--set", f"baseline={out / 'node' / 'checkpoint.json'}")
    reports = {}
    for name in ("pc", "node"):
        step("check-physics", "--out", out / f"physics_{name}", "--seed", seed, "--set", f"data={data}",
             "--set", f"checkpoint={out / name / 'checkpoint.json'}")
        reports[name] = json.loads((out / f"physics_{name}" / "physics_report.json").read_text())
    return {"metrics": json.loads((out / "eval" / "metrics.json").read_text()), "physics": reports}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/gas"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--dataset", choices=["gas_noisy", "gas_forced_noisy"], default="gas_noisy")
    args = ap.parse_args()
    result = run(args.out, args.seed, args.epochs, args.dataset)
    for name, s in result["metrics"]["series"].items():
        print(f"{name:8s} mean MAE {s['mae_mean']:.4g}  end MAE {s['mae_end']:.4g}")
    for name, rep in result["physics"].items():
        e = rep["entropy_decrease_steps"]
        print(f"{name:8s} entropy decreases {e['count']}/{e['steps']} ({e['status']})")
