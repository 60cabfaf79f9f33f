"""Progressive hedging over training days for combination weights.

Every training day owns a copy ``lam_d`` of the weight vector. The per-day
subproblem jointly chooses ``lam_d``, the day-ahead schedule and the real-time
redispatch for that day, and is priced with the multiplier ``mu_d`` and a
piecewise-linear proximal term around the current consensus ``lam_bar``.
Push-forward PH re-solves only the ``dprime`` days furthest from consensus.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BINARY, RELAXED, VARIANTS, add_rt_block, add_uc_block, shed_cap
from .grid import Grid, ScenarioDay, project_simplex
from .model import EQ, ModelInstance
from .solver import INFEASIBLE, SolverError, add_pwl_quadratic, solve_lp, solve_milp

log = logging.getLogger(__name__)


@dataclass
class PHConfig:
    rho: float = 25000.0
    eps: float = 1e-5
    variant: str = RELAXED
    segments: int = 32
    max_iter: int = 500
    dprime: int | None = None  # None -> ceil(D / 3)
    parallelism: int = 1
    backend: str = "highs"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.segments < 1 or self.max_iter < 1 or self.parallelism < 1:
            raise ValueError("segments, max_iter and parallelism must be >= 1")

    def active_size(self, D: int) -> int:
        dp = math.ceil(D / 3) if self.dprime is None else int(self.dprime)
        if not 1 <= dp <= D:
            raise ValueError(f"dprime={dp} outside [1, {D}]")
        return dp


@dataclass
class TraceRow:
    tau: int
    lam_bar: np.ndarray
    gap: float
    active: int
    solves: int
    wall: float


@dataclass
class PHState:
    tau: int
    lam: np.ndarray  # (D, K)
    mu: np.ndarray  # (D, K)
    lam_bar: np.ndarray
    gap: float
    solves: int = 0
    trace: list[TraceRow] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)


@dataclass
class PHResult:
    weights: np.ndarray
    converged: bool
    state: PHState
    method: str = "ph"
    seconds: float = 0.0
    correction: float = 0.0


class SubproblemError(SolverError):
    def __init__(self, status, day, message=""):
        super().__init__(status, message or f"subproblem of day {day} finished with status {status!r}")
        self.day = day


def base_subproblem(grid: Grid, day: ScenarioDay, variant: str = RELAXED) -> ModelInstance:
    """Weights, day-ahead block and real-time block for one day, without PH terms."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown UC variant {variant!r}")
    if day.N != grid.N:
        raise ValueError(f"day {day.day} has {day.N} nodes, grid has {grid.N}")
    m = ModelInstance(f"ph_day{day.day}")
    lam = m.add_vars("lam", day.K, 0.0, 1.0)
    simplex = m.add_rows("simplex", (), EQ, 1.0)
    m.add_terms(simplex, lam, 1.0)
    # shed cap uses the per-provider surrogate sum_k lam_k max(0, L_k - W_k)
    uc = add_uc_block(m, grid, day.T, day.forecast_load, day.forecast_wind,
                      relaxed=(variant == RELAXED), lam=lam,
                      shed_coef=shed_cap(day.forecast_load, day.forecast_wind))
    add_rt_block(m, grid, day.T, day.actual_load, day.actual_wind, uc_vars=uc)
    return m


def with_ph_terms(base: ModelInstance, mu, rho: float, lam_bar, segments: int = 32) -> ModelInstance:
    """Add ``mu' lam`` and the proximal term ``rho/2 ||lam - lam_bar||^2`` to a base model."""
    lam = base.var_blocks["lam"]
    mu = np.asarray(mu, dtype=float)
    if mu.shape != lam.shape:
        raise ValueError(f"mu has {mu.size} entries for {lam.size} providers")
    if rho > 0:
        lam_bar = np.asarray(lam_bar, dtype=float)
        if lam_bar.shape != lam.shape:
            raise ValueError(f"lam_bar has {lam_bar.size} entries for {lam.size} providers")
        m = add_pwl_quadratic(base, lam, lam_bar, rho / 2.0, segments, name="prox")
    else:
        m = base.copy()
    if np.any(mu):
        m.add_cost(lam, mu)
    return m


def build_ph_subproblem(grid: Grid, day: ScenarioDay, mu, rho: float, lam_bar,
                        variant: str = RELAXED, segments: int = 32) -> ModelInstance:
    return with_ph_terms(base_subproblem(grid, day, variant), mu, rho, lam_bar, segments)


def solve_subproblem(model: ModelInstance, day_id=None, backend: str = "highs"):
    """Return ``(lam_d, objective)`` for a built subproblem."""
    sol = solve_milp(model, backend=backend) if model.is_mip else solve_lp(model)
    if not sol.ok:
        if sol.status == INFEASIBLE:
            raise SubproblemError(sol.status, day_id, f"subproblem of day {day_id} is infeasible")
        raise SubproblemError(sol.status, day_id)
    return sol.x[model.var_blocks["lam"]].copy(), sol.objective


def update_multipliers(mu_prev, rho: float, lam, lam_bar) -> np.ndarray:
    """``mu_d <- mu_d + rho (lam_d - lam_bar)`` for every day (rows)."""
    return np.asarray(mu_prev, float) + rho * (np.asarray(lam, float) - np.asarray(lam_bar, float))


def consensus_gap(lam, lam_bar) -> float:
    """Sum over days of the Euclidean distance to the consensus."""
    return float(np.sum(np.linalg.norm(np.asarray(lam, float) - np.asarray(lam_bar, float), axis=1)))


def select_active_set(lam, lam_bar, dprime: int):
    """Indices of the ``dprime`` days with the largest deviation, and the rest.

    Ties go to the lower day index.
    """
    lam = np.asarray(lam, float)
    D = len(lam)
    if not 1 <= dprime <= D:
        raise ValueError(f"dprime={dprime} outside [1, {D}]")
    ds = np.linalg.norm(lam - np.asarray(lam_bar, float), axis=1)
    order = sorted(range(D), key=lambda d: (-ds[d], d))
    active = sorted(order[:dprime])
    rest = sorted(order[dprime:])
    return active, rest


class _DaySolver:
    def __init__(self, grid, days, config: PHConfig):
        self.days = days
        self.config = config
        self.bases = [base_subproblem(grid, d, config.variant) for d in days]

    def solve(self, idx, mu, rho, lam_bar):
        cfg = self.config

        def one(d):
            model = with_ph_terms(self.bases[d], mu[d], rho, lam_bar, cfg.segments)
            return solve_subproblem(model, self.days[d].day, cfg.backend)[0]

        if cfg.parallelism > 1 and len(idx) > 1:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                out = list(pool.map(one, idx))
        else:
            out = [one(d) for d in idx]
        # results are gathered in ascending day order whatever the completion order
        return dict(zip(idx, out))


def _run(grid: Grid, days, config: PHConfig, dprime: int | None, method: str,
         record_history: bool = False) -> PHResult:
    if not days:
        raise ValueError("need at least one training day")
    K = days[0].K
    if any(d.K != K for d in days):
        raise ValueError("all days must have the same number of providers")
    D = len(days)
    t0 = time.perf_counter()
    solver = _DaySolver(grid, days, config)
    rho = config.rho

    zero = np.zeros((D, K))
    init = solver.solve(list(range(D)), zero, 0.0, None)
    lam = np.array([init[d] for d in range(D)])
    lam_bar = lam.mean(axis=0)
    mu = rho * (lam - lam_bar)
    state = PHState(tau=0, lam=lam, mu=mu, lam_bar=lam_bar, gap=consensus_gap(lam, lam_bar), solves=D)
    state.trace.append(TraceRow(0, lam_bar.copy(), state.gap, D, D, time.perf_counter() - t0))
    if record_history:
        state.history.append(dict(tau=0, lam=lam.copy(), mu=mu.copy(), lam_bar=lam_bar.copy(), gap=state.gap))

    best = (state.gap, lam_bar.copy())
    converged = False
    for tau in range(1, config.max_iter + 1):
        if dprime is None:
            active = list(range(D))
        else:
            active, _ = select_active_set(state.lam, state.lam_bar, dprime)
        new = solver.solve(active, state.mu, rho, state.lam_bar)
        lam = state.lam.copy()
        for d in active:
            lam[d] = new[d]
        lam_bar = lam.mean(axis=0)
        mu = update_multipliers(state.mu, rho, lam, lam_bar)
        gap = consensus_gap(lam, lam_bar)
        state.tau, state.lam, state.mu, state.lam_bar, state.gap = tau, lam, mu, lam_bar, gap
        state.solves += len(active)
        state.trace.append(TraceRow(tau, lam_bar.copy(), gap, len(active), state.solves,
                                    time.perf_counter() - t0))
        if record_history:
            state.history.append(dict(tau=tau, lam=lam.copy(), mu=mu.copy(), lam_bar=lam_bar.copy(), gap=gap))
        log.debug("%s tau=%d gap=%.3e lam_bar=%s", method, tau, gap, lam_bar)
        if gap < best[0]:
            best = (gap, lam_bar.copy())
        if gap < config.eps:
            converged = True
            break

    final = state.lam_bar if converged else best[1]
    if not converged:
        log.warning("%s stopped after %d iterations with gap %.3e (best %.3e)",
                    method, state.tau, state.gap, best[0])
    weights, corr = project_simplex(final)
    if corr > 1e-7:
        log.warning("consensus weights moved by %.2e when projected onto the simplex", corr)
    return PHResult(weights=weights, converged=converged, state=state, method=method,
                    seconds=time.perf_counter() - t0, correction=corr)


def run_ph(grid: Grid, days, config: PHConfig | None = None, record_history: bool = False) -> PHResult:
    """Progressive hedging: all days re-solve every iteration."""
    return _run(grid, list(days), config or PHConfig(), None, "ph", record_history)


def run_pfph(grid: Grid, days, config: PHConfig | None = None, record_history: bool = False) -> PHResult:
    """Push-forward PH: only the ``dprime`` least-agreeing days re-solve each iteration."""
    config = config or PHConfig()
    days = list(days)
    return _run(grid, days, config, config.active_size(len(days)), "pfph", record_history)


TRACE_COLUMNS = ("tau", "gap", "active", "cum_solves")


def write_trace(result: PHResult, path) -> Path:
    """Convergence trace CSV; every value is deterministic for a fixed input."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    K = len(result.weights)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau"] + [f"lam_bar_{k + 1}" for k in range(K)] + ["gap", "active", "cum_solves"])
        for row in result.state.trace:
            w.writerow([row.tau] + [repr(float(v)) for v in row.lam_bar]
                       + [repr(float(row.gap)), row.active, row.solves])
    return path


def write_timing(result: PHResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "wall_seconds"])
        for row in result.state.trace:
            w.writerow([row.tau, f"{row.wall:.6f}"])
    return path


__all__ = [
    "BINARY", "RELAXED", "PHConfig", "PHState", "PHResult", "TraceRow", "SubproblemError",
    "base_subproblem", "with_ph_terms", "build_ph_subproblem", "solve_subproblem",
    "update_multipliers", "consensus_gap", "select_active_set", "run_ph", "run_pfph",
    "write_trace", "write_timing",
]
