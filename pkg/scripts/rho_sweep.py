"""PH convergence and held-out cost for a range of penalty values.

    python scripts/rho_sweep.py --rho 1000 5000 25000 --out runs/rho_sweep.csv
"""

import argparse
import csv
from pathlib import Path

from vofc.evaluation import evaluate_tst
from vofc.ph import PHConfig, run_ph
from vofc.synth import SynthParams, benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rho", type=float, nargs="+", default=[1000.0, 5000.0, 25000.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-days", type=int, default=10)
    ap.add_argument("--test-days", type=int, default=10)
    ap.add_argument("--max-iter", type=int, default=500)
    ap.add_argument("--out", default="runs/rho_sweep.csv")
    args = ap.parse_args()

    grid, days = benchmark(SynthParams(seed=args.seed, days=args.train_days + args.test_days))
    train, test = days[:args.train_days], days[args.train_days:]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho", "converged", "iterations", "gap", "lam_1", "lam_2", "seconds", "test_tst"])
        for rho in args.rho:
            res = run_ph(grid, train, PHConfig(rho=rho, max_iter=args.max_iter))
            tst = evaluate_tst(grid, res.weights, test).tst
            row = [rho, res.converged, res.state.tau, res.state.gap, *res.weights.tolist(), res.seconds, tst]
            w.writerow(row)
            print(" ".join(str(v) for v in row))


if __name__ == "__main__":
    main()
