"""Train every method on a synthetic benchmark and score it on held-out days.

    python scripts/run_benchmark.py --out runs/bench --seed 0 [--preset adversarial] [--stm]

Writes lambda files, PH/PFPH traces and report.{csv,md} under ``--out``.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from vofc.evaluation import baseline_runs, evaluate_tst, rmse_combination, write_report
from vofc.ph import PHConfig, run_pfph, run_ph, write_timing, write_trace
from vofc.single_level import solve_stm
from vofc.synth import SynthParams, adversarial, benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--preset", choices=("default", "adversarial"), default="default")
    ap.add_argument("--train-days", type=int, default=10)
    ap.add_argument("--test-days", type=int, default=10)
    ap.add_argument("--horizon", type=int, default=6)
    ap.add_argument("--rho", type=float, default=5000.0)
    ap.add_argument("--parallelism", type=int, default=1)
    ap.add_argument("--stm", action="store_true", help="also train the single-level model (slow)")
    args = ap.parse_args()

    kw = dict(days=args.train_days + args.test_days, horizon=args.horizon)
    params = adversarial(args.seed, **kw) if args.preset == "adversarial" else SynthParams(seed=args.seed, **kw)
    grid, days = benchmark(params)
    train, test = days[:args.train_days], days[args.train_days:]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = PHConfig(rho=args.rho, parallelism=args.parallelism)
    trained = []
    for name, run in (("ph", run_ph), ("pfph", run_pfph)):
        res = run(grid, train, cfg)
        write_trace(res, out / f"{name}_trace.csv")
        write_timing(res, out / f"{name}_timing.csv")
        print(f"{name}: {np.round(res.weights, 4).tolist()} converged={res.converged} "
              f"iterations={res.state.tau} solves={res.state.solves} {res.seconds:.1f}s")
        trained.append((name, res.weights, res.seconds))
    if args.stm:
        res = solve_stm(grid, train)
        print(f"stm: {np.round(res.weights, 4).tolist()} {res.seconds:.1f}s")
        trained.append(("stm", res.weights, res.seconds))
    t0 = time.perf_counter()
    trained.append(("rmse", rmse_combination(train), time.perf_counter() - t0))

    base = baseline_runs(grid, test, 2, parallelism=args.parallelism)
    reports = [evaluate_tst(grid, w, test, method=name, train_seconds=s, baselines=base,
                            parallelism=args.parallelism) for name, w, s in trained]
    for name, w, s in trained:
        (out / f"lambda_{name}.json").write_text(json.dumps(dict(method=name, weights=w.tolist(), seconds=s)) + "\n")
    paths = write_report(reports, out / "report")
    print(paths["md"].read_text(encoding="utf-8"))


if __name__ == "__main__":
    main()
