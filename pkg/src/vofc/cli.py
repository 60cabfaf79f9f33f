"""Command-line front end: ``vofc {train,evaluate,baseline,export,synth}``.

Exit codes: 0 success (or a converged trainer), 2 trainer stopped at the
iteration limit, 1 any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (DataError, RunConfig, config_from_dict, load_config, load_grid,
                      load_timeseries, save_config, save_grid, save_timeseries)
from .evaluation import baseline_runs, evaluate_tst, rmse_combination, write_report
from .grid import as_weights
from .ph import PHConfig, build_ph_subproblem, run_pfph, run_ph, write_timing, write_trace
from .single_level import STMConfig, build_stm, solve_stm
from .solver import ExternalSolver, SolverError, export_lp_file
from .synth import SynthParams, adversarial, benchmark

log = logging.getLogger("vofc")

OVERRIDES = ("rho", "eps", "dprime", "variant", "trainer", "out", "seed", "parallelism")


def _resolve(args) -> RunConfig:
    """Config file values overridden by explicit command-line flags."""
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    changes = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    cfg = replace(cfg, **changes)  # re-runs validation
    print("resolved config: " + json.dumps(cfg.to_dict(), sort_keys=True), file=sys.stderr)
    return cfg


def _load_days(cfg: RunConfig):
    if not (cfg.grid and cfg.series and cfg.actuals):
        raise DataError("config needs 'grid', 'series' and 'actuals' paths", "config")
    grid = load_grid(cfg.path("grid"))
    nodes = [n.id for n in grid.nodes]
    days = load_timeseries(cfg.path("series"), cfg.path("actuals"), cfg.providers, nodes=nodes)
    by_id = {d.day: d for d in days}

    def pick(ids, what):
        if not ids:
            return []
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise DataError(f"{what} day(s) {missing} not found in the series", what)
        return [by_id[i] for i in ids]

    train = pick(cfg.train_days, "train_days") if cfg.train_days else days
    test = pick(cfg.test_days, "test_days")
    return grid, train, test


def _ph_config(cfg: RunConfig) -> PHConfig:
    return PHConfig(rho=cfg.rho, eps=cfg.eps, variant=cfg.variant, segments=cfg.segments,
                    max_iter=cfg.max_iter, dprime=cfg.dprime, parallelism=cfg.parallelism)


def _write_json(path: Path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_train(cfg: RunConfig) -> int:
    grid, train, _ = _load_days(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = dict(method=cfg.trainer, providers=cfg.providers, train_days=[d.day for d in train])
    code = 0
    if cfg.trainer in ("ph", "pfph"):
        run = run_ph if cfg.trainer == "ph" else run_pfph
        res = run(grid, train, _ph_config(cfg))
        write_trace(res, out / "trace.csv")
        write_timing(res, out / "timing.csv")
        doc.update(weights=res.weights.tolist(), converged=res.converged, iterations=res.state.tau,
                   gap=res.state.gap, seconds=res.seconds, solves=res.state.solves)
        code = 0 if res.converged else 2
    elif cfg.trainer == "stm":
        solver = ExternalSolver(cfg.solver_command) if cfg.solver_command else None
        res = solve_stm(grid, train, STMConfig(big_m=cfg.big_m), solver=solver)
        doc.update(weights=res.weights.tolist(), converged=True, objective=res.objective,
                   seconds=res.seconds)
    elif cfg.trainer == "rmse":
        doc.update(weights=rmse_combination(train).tolist(), converged=True, seconds=0.0)
    else:
        doc.update(weights=as_weights(cfg.weights, train[0].K).tolist(), converged=True, seconds=0.0)
    _write_json(out / "lambda.json", doc)
    print(f"{cfg.trainer}: weights {np.round(doc['weights'], 6).tolist()} -> {out / 'lambda.json'}")
    return code


def _lambda_sources(args, K):
    sources = []
    for path in args.weights or []:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        sources.append((doc.get("method", Path(path).stem), as_weights(doc["weights"], K),
                        float(doc.get("seconds", float("nan")))))
    if args.lam:
        sources.append(("fixed", as_weights([float(v) for v in args.lam.split(",")], K), float("nan")))
    return sources


def cmd_evaluate(cfg: RunConfig, args) -> int:
    grid, _, test = _load_days(cfg)
    if not test:
        raise DataError("config has no test_days", "test_days")
    K = test[0].K
    sources = _lambda_sources(args, K)
    if not sources:
        if cfg.weights:
            sources = [("fixed", as_weights(cfg.weights, K), float("nan"))]
        else:
            raise DataError("give --weights FILE or --lambda a,b,...", "weights")
    base = baseline_runs(grid, test, K, parallelism=cfg.parallelism)
    reports = [evaluate_tst(grid, w, test, method=name, train_seconds=s, baselines=base,
                            parallelism=cfg.parallelism) for name, w, s in sources]
    paths = write_report(reports, Path(cfg.out) / "report")
    for r in reports:
        print(f"{r.method}: TST* {r.tst:.2f}  " + "  ".join(f"Δ_{k} {v:.2f}" for k, v in r.deltas.items()))
    print(f"report -> {paths['csv']}, {paths['md']}")
    return 0


def cmd_baseline(cfg: RunConfig) -> int:
    grid, train, test = _load_days(cfg)
    w = rmse_combination(train)
    out = Path(cfg.out)
    _write_json(out / "lambda_rmse.json", dict(method="rmse", weights=w.tolist(), converged=True,
                                               seconds=0.0, train_days=[d.day for d in train]))
    print(f"rmse weights {np.round(w, 6).tolist()}")
    if test:
        K = test[0].K
        base = baseline_runs(grid, test, K, parallelism=cfg.parallelism)
        reports = [evaluate_tst(grid, w, test, method="rmse", baselines=base, parallelism=cfg.parallelism)]
        reports += [evaluate_tst(grid, bw, test, method=f"baseline_{letter}", baselines=base,
                                 parallelism=cfg.parallelism)
                    for letter, (bw, _) in base.items()]
        write_report(reports, out / "baseline_report")
    return 0


def cmd_export(cfg: RunConfig, args) -> int:
    grid, train, _ = _load_days(cfg)
    out = Path(cfg.out)
    K = train[0].K
    lam_bar = as_weights([float(v) for v in args.lam_bar.split(",")], K) if args.lam_bar else np.full(K, 1 / K)
    mu = np.array([float(v) for v in args.mu.split(",")]) if args.mu else np.zeros(K)
    for d in train:
        m = build_ph_subproblem(grid, d, mu, cfg.rho, lam_bar, cfg.variant, cfg.segments)
        export_lp_file(m, out / f"ph_day{d.day}.lp")
    written = len(train)
    if args.stm:
        export_lp_file(build_stm(grid, train, STMConfig(big_m=cfg.big_m)).model, out / "stm.lp")
        written += 1
    print(f"wrote {written} LP file(s) to {out}")
    return 0


def cmd_synth(args) -> int:
    factory = adversarial if args.preset == "adversarial" else (lambda seed, **kw: SynthParams(seed=seed, **kw))
    kw = dict(days=args.days + args.test_days, horizon=args.horizon, providers=args.providers)
    params = factory(args.seed, **kw)
    for name in ("bias", "noise"):
        v = getattr(args, name)
        if v is not None:
            setattr(params, name, tuple(float(x) for x in v.split(",")))
    params.validate()
    grid, days = benchmark(params)
    out = Path(args.out or "synth")
    save_grid(grid, out / "grid.json")
    save_timeseries(days, out / "forecasts.csv", out / "actuals.csv",
                    nodes=[n.id for n in grid.nodes])
    cfg = config_from_dict(dict(
        grid="grid.json", series="forecasts.csv", actuals="actuals.csv",
        train_days=list(range(1, args.days + 1)),
        test_days=list(range(args.days + 1, args.days + args.test_days + 1)),
        out="out", seed=args.seed, rho=5000.0))
    save_config(cfg, out / "config.json")
    print(f"synthetic dataset ({args.preset}, seed {args.seed}) -> {out}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; exit code 2 is reserved for non-converged training
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vofc", description="Value-oriented forecast combination")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--rho", type=float)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--dprime", type=int)
        sp.add_argument("--variant", choices=("relaxed", "binary"))
        sp.add_argument("--trainer", choices=("ph", "pfph", "stm", "rmse", "fixed"))
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--parallelism", type=int)
        return sp

    common(sub.add_parser("train", help="train combination weights"))
    ev = common(sub.add_parser("evaluate", help="score weights on the test days"))
    ev.add_argument("--weights", nargs="*", help="lambda.json files from train")
    ev.add_argument("--lambda", dest="lam", help="inline weights, e.g. 0.5,0.5")
    common(sub.add_parser("baseline", help="inverse-RMSE weights and single-provider baselines"))
    ex = common(sub.add_parser("export", help="write LP files for external solvers"))
    ex.add_argument("--mu", help="multiplier vector for the PH subproblems")
    ex.add_argument("--lam-bar", help="consensus vector for the PH subproblems")
    ex.add_argument("--stm", action="store_true", help="also export the single-level model")
    sy = sub.add_parser("synth", help="write a seeded synthetic dataset")
    sy.add_argument("--out")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--days", type=int, default=10)
    sy.add_argument("--test-days", type=int, default=10)
    sy.add_argument("--horizon", type=int, default=6)
    sy.add_argument("--preset", choices=("default", "adversarial"), default="default")
    sy.add_argument("--providers", type=int, default=2)
    sy.add_argument("--bias", help="per-provider wind bias as a fraction of capacity, e.g. 0,0.12")
    sy.add_argument("--noise", help="per-provider wind noise as a fraction of capacity, e.g. 0.15,0.03")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = _resolve(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args)
        if args.command == "baseline":
            return cmd_baseline(cfg)
        return cmd_export(cfg, args)
    except (DataError, SolverError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
