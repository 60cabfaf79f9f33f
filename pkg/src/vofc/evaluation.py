"""Accuracy-based baselines and the held-out operating-cost harness.

A weight vector is scored by operating every test day with the combined
forecast (binary day-ahead commitment, then real-time redispatch against the
realisation) and averaging the total cost. Differences are reported against
each single-provider forecast and against the plain average of providers.
"""

from __future__ import annotations

import csv
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BINARY, CostBreakdown, two_stage_cost
from .grid import Grid, as_weights
from .solver import SolverError

_SUB = str.maketrans("0123456789", "₀₁₂₃₄₅₆₇₈₉")


def rmse_per_provider(days, provider: int) -> float:
    """Root of the day-average of per-day mean squared net-load errors."""
    days = list(days)
    if not days:
        raise ValueError("need at least one day")
    per_day = [float(np.mean((d.forecast_load[provider] - d.actual_load) ** 2)) for d in days]
    return float(np.sqrt(np.mean(per_day)))


def rmse_weights(rmse) -> np.ndarray:
    """Weights inversely proportional to RMSE.

    Providers with zero error share all the weight equally.
    """
    r = np.asarray(rmse, dtype=float)
    if r.ndim != 1 or len(r) == 0:
        raise ValueError("need one RMSE per provider")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("RMSE values must be finite and >= 0")
    perfect = r == 0
    if perfect.any():
        return perfect / perfect.sum()
    inv = 1.0 / r
    return inv / inv.sum()


def rmse_combination(days) -> np.ndarray:
    days = list(days)
    if not days:
        raise ValueError("need at least one day")
    return rmse_weights([rmse_per_provider(days, k) for k in range(days[0].K)])


def baseline_weights(K: int) -> list[tuple[str, np.ndarray]]:
    """Unit vectors for every provider, then the uniform average, labelled a, b, c, ..."""
    if K + 1 > len(string.ascii_lowercase):
        raise ValueError("too many providers for lettered baselines")
    out = [(string.ascii_lowercase[k], np.eye(K)[k]) for k in range(K)]
    out.append((string.ascii_lowercase[K], np.full(K, 1.0 / K)))
    return out


class EvaluationError(SolverError):
    def __init__(self, status, day, message):
        super().__init__(status, f"day {day}: {message}")
        self.day = day


def day_costs(grid: Grid, weights, days, uc_variant: str = BINARY, parallelism: int = 1,
              backend: str = "highs") -> list[CostBreakdown]:
    """Per-day cost breakdowns in input order."""
    w = as_weights(weights)

    def one(day):
        try:
            return two_stage_cost(grid, w, day, uc_variant, backend)
        except SolverError as exc:
            raise EvaluationError(exc.status, day.day, str(exc)) from exc

    days = list(days)
    if parallelism > 1 and len(days) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, days))
    return [one(d) for d in days]


@dataclass
class EvalReport:
    method: str
    weights: np.ndarray
    days: list
    per_day: list  # CostBreakdown per test day
    baselines: dict  # letter -> (weights, per-day totals)
    train_seconds: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def tst(self) -> float:
        return float(np.mean([c.total for c in self.per_day]))

    def baseline_tst(self, letter: str) -> float:
        return float(np.mean(self.baselines[letter][1]))

    @property
    def deltas(self) -> dict:
        return {k: self.tst - self.baseline_tst(k) for k in self.baselines}


def baseline_runs(grid: Grid, days, K: int, uc_variant: str = BINARY, parallelism: int = 1) -> dict:
    return {letter: (w, [c.total for c in day_costs(grid, w, days, uc_variant, parallelism)])
            for letter, w in baseline_weights(K)}


def evaluate_tst(grid: Grid, weights, days, uc_variant: str = BINARY, method: str = "",
                 train_seconds: float = float("nan"), baselines: dict | None = None,
                 parallelism: int = 1) -> EvalReport:
    """Average operating cost of ``weights`` on ``days`` plus the baseline differences.

    ``baselines`` from :func:`baseline_runs` can be shared between methods.
    """
    days = list(days)
    if not days:
        raise ValueError("need at least one test day")
    w = as_weights(weights, days[0].K)
    per_day = day_costs(grid, w, days, uc_variant, parallelism)
    if baselines is None:
        baselines = baseline_runs(grid, days, len(w), uc_variant, parallelism)
    return EvalReport(method=method, weights=w, days=[d.day for d in days], per_day=per_day,
                      baselines=baselines, train_seconds=train_seconds)


def report_columns(K: int) -> list[str]:
    lam = [f"λ*{str(k + 1).translate(_SUB)}" for k in range(K)]
    deltas = [f"Δ_{letter}" for letter, _ in baseline_weights(K)]
    return ["Method", *lam, "Time(s)", "TST*", *deltas]


def _row(r: EvalReport) -> list:
    return [r.method, *[float(v) for v in r.weights], float(r.train_seconds), r.tst,
            *[r.deltas[k] for k, _ in baseline_weights(len(r.weights))]]


def write_report(reports, path, K: int | None = None) -> dict:
    """Write ``<path>.csv``, ``<path>.md`` and ``<path>_days.csv``; returns the paths."""
    reports = list(reports)
    if K is None:
        K = len(reports[0].weights) if reports else 2
    if any(len(r.weights) != K for r in reports):
        raise ValueError("all reports must have the same number of providers")
    base = Path(path)
    if base.suffix in (".csv", ".md"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    cols = report_columns(K)
    rows = [_row(r) for r in reports]

    csv_path = base.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])

    md_path = base.with_suffix(".md")
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for row in rows:
        lam = [f"{v:.3f}" for v in row[1:1 + K]]
        rest = [f"{row[1 + K]:.2f}", f"{row[2 + K]:.2f}"] + [f"{v:.2f}" for v in row[3 + K:]]
        lines.append("| " + " | ".join([row[0], *lam, *rest]) + " |")
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    days_path = base.parent / f"{base.name}_days.csv"
    with open(days_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "day", "component", "cost"])
        for r in reports:
            for day, c in zip(r.days, r.per_day):
                for comp, v in c.as_dict().items():
                    w.writerow([r.method, day, comp, repr(float(v))])
    return dict(csv=csv_path, md=md_path, days=days_path)


def read_report(path) -> list[dict]:
    """Parse a report CSV back into dictionaries of floats (method stays a string)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "Method" else float(v)) for k, v in row.items()} for row in rows]


__all__ = [
    "rmse_per_provider", "rmse_weights", "rmse_combination", "baseline_weights", "day_costs",
    "EvalReport", "EvaluationError", "baseline_runs", "evaluate_tst", "report_columns",
    "write_report", "read_report",
]
