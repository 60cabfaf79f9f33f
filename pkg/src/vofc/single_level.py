"""Single-level reference trainer: the relaxed day-ahead problem replaced by its KKT system.

For every training day the relaxed day-ahead LP (weights treated as
parameters) is written in the form::

    min c'x   s.t.   A_eq x + G_eq lam = b_eq   (nu, free)
                     A_in x + G_in lam <= b_in  (psi >= 0)

where the inequality set holds every ``<=`` row of the LP plus every finite
variable bound turned into a row. Its optimality conditions

    c + A_in' psi + A_eq' nu = 0                       (stationarity)
    psi_i * (b_in - G_in lam - A_in x)_i = 0           (complementarity)

are then embedded in one MILP together with the real-time block of every day,
sharing a single weight vector. Complementarity is linearised with a binary
``z`` per inequality::

    0 <= psi_i <= M_dual z_i,     0 <= slack_i <= M_primal (1 - z_i)

Only unit minimum up/down times are accepted; the dual rows are derived
mechanically from the primal rows, so every stationarity row references exactly
the duals of the constraints that contain that primal variable.

A regularised nonlinear variant (complementarity products bounded by a small
constant instead of Big-M binaries) needs a general NLP solver and is not
implemented.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import RELAXED, add_uc_block, shed_cap
from .grid import Grid, ScenarioDay, project_simplex
from .model import EQ, GE, LE, ModelInstance
from .ph import base_subproblem
from .solver import SolverError, solve_lp, solve_milp

log = logging.getLogger(__name__)

UC_VAR_BLOCKS = ("p", "u", "y", "f", "theta", "shed", "curt")


class UnsupportedModelError(ValueError):
    pass


class ModelTooLargeError(ValueError):
    pass


@dataclass
class KKTSystem:
    """Optimality conditions of one day's relaxed day-ahead LP.

    Columns of the ``*_x`` matrices follow ``x_cols`` (all day-ahead variables);
    columns of the ``*_lam`` matrices follow ``lam_cols``.
    """

    model: ModelInstance
    lam_cols: np.ndarray
    x_cols: np.ndarray
    c: np.ndarray
    A_eq: sp.csr_matrix
    G_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    G_in: sp.csr_matrix
    b_in: np.ndarray
    eq_names: list
    in_names: list
    # provenance of each inequality: ("row", r, sign) or ("lb"/"ub", column)
    in_source: list
    eq_rows: np.ndarray
    in_rows: np.ndarray
    incidence: np.ndarray

    @property
    def n_x(self) -> int:
        return len(self.x_cols)

    @property
    def n_eq(self) -> int:
        return len(self.b_eq)

    @property
    def n_in(self) -> int:
        return len(self.b_in)

    def stationarity(self, psi, nu) -> np.ndarray:
        return self.c + self.A_in.T @ np.asarray(psi, float) + self.A_eq.T @ np.asarray(nu, float)

    def slack(self, x, lam) -> np.ndarray:
        return self.b_in - self.G_in @ np.asarray(lam, float) - self.A_in @ np.asarray(x, float)

    def eq_residual(self, x, lam) -> np.ndarray:
        return self.A_eq @ np.asarray(x, float) + self.G_eq @ np.asarray(lam, float) - self.b_eq

    def complementarity(self, x, lam, psi) -> np.ndarray:
        return np.asarray(psi, float) * self.slack(x, lam)

    def duals_from_lp(self, sol):
        """Map LP marginals (derivative of the optimum w.r.t. the rhs) to ``(psi, nu)``."""
        nu = -sol.duals[self.eq_rows]
        psi = np.empty(self.n_in)
        for i, src in enumerate(self.in_source):
            kind = src[0]
            if kind == "row":
                _, r, sign = src
                # a <= row: psi = -d obj/d b; a >= row flipped to <=: psi = d obj/d b
                psi[i] = -sol.duals[r] if sign > 0 else sol.duals[r]
            elif kind == "ub":
                psi[i] = -sol.duals_upper[src[1]]
            else:
                psi[i] = sol.duals_lower[src[1]]
        return psi, nu

    def fixed_lambda_model(self, weights) -> ModelInstance:
        """The day-ahead LP at fixed weights, sharing this system's row and column layout.

        Anything else in the source model (a real-time block, say) is switched off.
        """
        rows = np.concatenate([self.eq_rows, self.in_rows])
        m = self.model.restricted(rows, np.concatenate([self.lam_cols, self.x_cols]))
        w = np.asarray(weights, float)
        m.set_bounds(self.lam_cols, w, w)
        return m


def _check_scope(grid: Grid):
    for g in grid.generators:
        if g.min_up != 1 or g.min_down != 1:
            raise UnsupportedModelError(
                f"generator {g.id!r} has min_up={g.min_up}, min_down={g.min_down}; the "
                "single-level trainer only supports minimum up/down times of 1")


def assemble_kkt(grid: Grid, day: ScenarioDay, model: ModelInstance | None = None) -> KKTSystem:
    """Derive the KKT system of the weight-parameterised relaxed day-ahead LP.

    ``model`` may be a model whose first columns are the weights followed by a
    day-ahead block built with :func:`add_uc_block` (for instance a PH base
    subproblem); only its day-ahead rows and columns are used.
    """
    _check_scope(grid)
    if model is None:
        model = ModelInstance(f"ucr_day{day.day}")
        lam = model.add_vars("lam", day.K, 0.0, 1.0)
        add_uc_block(model, grid, day.T, day.forecast_load, day.forecast_wind, relaxed=True,
                     lam=lam, shed_coef=shed_cap(day.forecast_load, day.forecast_wind))
    lam_cols = np.asarray(model.var_blocks["lam"]).ravel()
    x_cols = np.concatenate([np.asarray(model.var_blocks[b]).ravel()
                             for b in UC_VAR_BLOCKS if b in model.var_blocks])
    uc_rows = np.concatenate([np.asarray(idx).ravel() for name, idx in model.row_blocks.items()
                              if not name.startswith("rt_") and name != "simplex"])
    uc_rows.sort()

    A = model.A.tocsr()
    A_x = A[:, x_cols]
    A_l = A[:, lam_cols]
    outside = np.setdiff1d(np.arange(model.num_vars), np.concatenate([x_cols, lam_cols]))
    if outside.size and abs(A[uc_rows][:, outside]).sum() > 0:
        raise ValueError("day-ahead rows reference variables outside the day-ahead block")
    sense, b = model.sense, model.rhs
    eq_rows = uc_rows[sense[uc_rows] == EQ]
    in_rows = uc_rows[sense[uc_rows] != EQ]
    sign = np.where(sense[in_rows] == GE, -1.0, 1.0)

    lb, ub = model.lb[x_cols], model.ub[x_cols]
    has_lb, has_ub = np.isfinite(lb), np.isfinite(ub)
    nx = len(x_cols)
    eye = sp.identity(nx, format="csr")
    rows_in = [sp.diags(sign) @ A_x[in_rows], -eye[has_lb], eye[has_ub]]
    A_in = sp.vstack(rows_in).tocsr()
    G_in = sp.vstack([sp.diags(sign) @ A_l[in_rows],
                      sp.csr_matrix((int(has_lb.sum()) + int(has_ub.sum()), len(lam_cols)))]).tocsr()
    b_in = np.concatenate([sign * b[in_rows], -lb[has_lb], ub[has_ub]])
    names = model.row_names
    in_names = ([names[r] for r in in_rows]
                + [f"lb:{model.var_names[j]}" for j in x_cols[has_lb]]
                + [f"ub:{model.var_names[j]}" for j in x_cols[has_ub]])
    in_source = ([("row", int(r), float(s)) for r, s in zip(in_rows, sign)]
                 + [("lb", int(j)) for j in x_cols[has_lb]]
                 + [("ub", int(j)) for j in x_cols[has_ub]])
    return KKTSystem(
        model=model, lam_cols=lam_cols, x_cols=x_cols, c=model.c[x_cols],
        A_eq=A_x[eq_rows].tocsr(), G_eq=A_l[eq_rows].tocsr(), b_eq=b[eq_rows],
        A_in=A_in, G_in=G_in, b_in=b_in,
        eq_names=[names[r] for r in eq_rows], in_names=in_names, in_source=in_source,
        eq_rows=eq_rows, in_rows=in_rows, incidence=grid.incidence,
    )


def default_big_m(grid: Grid, days) -> tuple[float, float]:
    """``(dual_M, primal_M)`` defaults.

    Dual bound: 10 x largest cost coefficient x largest capacity. Primal bound:
    10 x the largest quantity a slack can measure (capacities, ramps, loads).
    """
    costs = [grid.gen_array(a) for a in ("cost", "startup_cost", "shutdown_cost", "up_cost", "down_cost")]
    costs += [grid.node_array("shed_cost"), grid.node_array("curtail_cost")]
    cmax = max(float(np.max(c, initial=0.0)) for c in costs)
    caps = [grid.gen_array("pmax"), grid.line_array("capacity")]
    capmax = max(float(np.max(c, initial=0.0)) for c in caps)
    scale = [capmax, float(np.max(grid.gen_array("startup_ramp"), initial=0.0)), 1.0]
    for d in days:
        scale += [float(np.max(np.abs(d.forecast_load))), float(np.max(d.forecast_wind))]
    return 10.0 * max(cmax, 1.0) * max(capmax, 1.0), 10.0 * 2.0 * max(scale)


@dataclass
class STMConfig:
    big_m: float | None = None  # dual-side bound; None -> default_big_m
    primal_big_m: float | None = None
    lam_lower: float = 0.0
    lam_upper: float = 1.0
    max_vars: int = 50_000
    polish: bool = True
    time_limit: float | None = None

    def __post_init__(self):
        for name in ("big_m", "primal_big_m"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.lam_lower <= self.lam_upper <= 1.0:
            raise ValueError("need 0 <= lam_lower <= lam_upper <= 1")

    def resolved(self, grid: Grid, days) -> tuple[float, float]:
        dm, pm = default_big_m(grid, days)
        return (self.big_m or dm), (self.primal_big_m or pm)


@dataclass
class DayBlock:
    day: int
    kkt: KKTSystem
    cols: np.ndarray  # global index of every column of the day model (-1 for weights)
    psi: np.ndarray
    nu: np.ndarray
    z: np.ndarray

    def x(self, sol_x):
        return sol_x[self.cols[self.kkt.x_cols]]


@dataclass
class StmModel:
    model: ModelInstance
    lam: np.ndarray
    blocks: list[DayBlock]
    dual_m: float
    primal_m: float


def build_stm(grid: Grid, days, config: STMConfig | None = None) -> StmModel:
    """Assemble the single-level MILP over all training days."""
    config = config or STMConfig()
    days = list(days)
    if not days:
        raise ValueError("need at least one training day")
    _check_scope(grid)
    K = days[0].K
    if any(d.K != K for d in days):
        raise ValueError("all days must have the same number of providers")
    dual_m, primal_m = config.resolved(grid, days)
    D = len(days)

    bases = [base_subproblem(grid, d, RELAXED) for d in days]
    systems = [assemble_kkt(grid, d, b) for d, b in zip(days, bases)]
    size = K + sum(b.num_vars - K + s.n_in * 2 + s.n_eq for b, s in zip(bases, systems))
    if size > config.max_vars:
        raise ModelTooLargeError(
            f"instance too large for reference solver: {size} variables > max_vars={config.max_vars}; "
            "export the model and use an external MILP solver")

    m = ModelInstance("stm")
    lam = m.add_vars("lam", K, config.lam_lower, config.lam_upper)
    simplex = m.add_rows("simplex", (), EQ, 1.0)
    m.add_terms(simplex, lam, 1.0)

    blocks = []
    for d, base, kkt in zip(days, bases, systems):
        tag = f"d{d.day}"
        lam_local = np.asarray(base.var_blocks["lam"]).ravel()
        own = np.setdiff1d(np.arange(base.num_vars), lam_local)
        cols = np.full(base.num_vars, -1, dtype=np.int64)
        cols[lam_local] = lam
        cols[own] = m.add_vars(f"{tag}_x", len(own), base.lb[own], base.ub[own], cost=base.c[own] / D)
        # primal rows of the day model (day-ahead and real-time), weights mapped to the shared vector
        keep = np.array([i for i, n in enumerate(base.row_names) if not n.startswith("simplex")])
        Ab = base.A.tocoo()
        rows = m.add_rows(f"{tag}_rows", len(keep), LE, 0.0)
        row_map = np.full(base.num_rows, -1, dtype=np.int64)
        row_map[keep] = rows
        sel = row_map[Ab.row] >= 0
        m.add_terms(row_map[Ab.row[sel]], cols[Ab.col[sel]], Ab.data[sel])
        for r_local, r in zip(keep, rows):
            m.senses[r] = base.senses[r_local]
            m.row_names[r] = f"{tag}:{base.row_names[r_local]}"
        m.set_rhs(rows, base.rhs[keep])

        psi = m.add_vars(f"{tag}_psi", kkt.n_in, 0.0, dual_m)
        nu = m.add_vars(f"{tag}_nu", kkt.n_eq, -np.inf, np.inf)
        z = m.add_vars(f"{tag}_z", kkt.n_in, 0.0, 1.0, integer=True)

        # stationarity, one row per day-ahead variable
        st = m.add_rows(f"{tag}_stationarity", kkt.n_x, EQ, -kkt.c)
        Ai = kkt.A_in.T.tocoo()
        m.add_terms(st[Ai.row], psi[Ai.col], Ai.data)
        Ae = kkt.A_eq.T.tocoo()
        m.add_terms(st[Ae.row], nu[Ae.col], Ae.data)

        # psi <= M_dual z
        cd = m.add_rows(f"{tag}_comp_dual", kkt.n_in, LE, 0.0)
        m.add_terms(cd, psi, 1.0)
        m.add_terms(cd, z, -dual_m)
        # slack = b - G lam - A x <= M_primal (1 - z)
        cp = m.add_rows(f"{tag}_comp_primal", kkt.n_in, LE, primal_m - kkt.b_in)
        m.add_terms(cp, z, primal_m)
        Ax = kkt.A_in.tocoo()
        m.add_terms(cp[Ax.row], cols[kkt.x_cols][Ax.col], -Ax.data)
        Gl = kkt.G_in.tocoo()
        if Gl.nnz:
            m.add_terms(cp[Gl.row], lam[Gl.col], -Gl.data)
        blocks.append(DayBlock(day=d.day, kkt=kkt, cols=cols, psi=psi, nu=nu, z=z))

    return StmModel(model=m, lam=lam, blocks=blocks, dual_m=dual_m, primal_m=primal_m)


@dataclass
class StmResult:
    weights: np.ndarray
    objective: float
    x: np.ndarray
    stm: StmModel
    seconds: float
    polished: bool
    lower_costs: list = field(default_factory=list)
    method: str = "stm"

    def stationarity_residual(self) -> float:
        worst = 0.0
        for b in self.stm.blocks:
            r = b.kkt.stationarity(self.x[b.psi], self.x[b.nu])
            worst = max(worst, float(np.max(np.abs(r), initial=0.0)))
        return worst

    def complementarity_max(self) -> float:
        worst = 0.0
        for b in self.stm.blocks:
            prod = b.kkt.complementarity(b.x(self.x), self.x[self.stm.lam], self.x[b.psi])
            worst = max(worst, float(np.max(np.abs(prod), initial=0.0)))
        return worst

    def min_dual(self) -> float:
        return min(float(np.min(self.x[b.psi], initial=0.0)) for b in self.stm.blocks)


def solve_stm(grid: Grid, days, config: STMConfig | None = None, solver=None) -> StmResult:
    """Build and solve the single-level model.

    With ``polish`` the binaries found by branch-and-cut are fixed and the
    remaining LP is re-solved, which removes the slack that integrality
    tolerances leave in the Big-M rows. ``solver`` (an object with a
    ``solve(model)`` method, e.g. :class:`~vofc.solver.ExternalSolver`)
    replaces the built-in MILP solve.
    """
    config = config or STMConfig()
    t0 = time.perf_counter()
    stm = build_stm(grid, days, config)
    m = stm.model
    sol = solver.solve(m) if solver is not None else solve_milp(m, time_limit=config.time_limit)
    sol.require_optimal("single-level model")
    x = sol.x
    polished = False
    if config.polish:
        fixed = m.copy()
        for b in stm.blocks:
            zr = np.round(x[b.z])
            fixed.set_bounds(b.z, zr, zr)
        lp = solve_lp(fixed, relax=True)
        if lp.ok and lp.objective <= sol.objective + 1e-6 * max(1.0, abs(sol.objective)):
            x, polished = lp.x, True
        else:
            log.warning("polishing the single-level solution failed (%s); keeping the MILP point", lp.status)
    objective = m.objective(x)
    weights, corr = project_simplex(x[stm.lam])
    if corr > 1e-7:
        log.warning("single-level weights moved by %.2e when projected onto the simplex", corr)
    lower = [float(b.kkt.c @ b.x(x)) for b in stm.blocks]
    return StmResult(weights=weights, objective=objective, x=x, stm=stm,
                     seconds=time.perf_counter() - t0, polished=polished, lower_costs=lower)


@dataclass
class BigMReport:
    dual_m: float
    primal_m: float
    flagged: list
    max_dual: float
    max_slack: float
    sensitive: bool | None = None
    shift: float | None = None

    @property
    def clean(self) -> bool:
        return not self.flagged and not self.sensitive

    @property
    def verdict(self) -> str:
        if self.sensitive:
            return "M-sensitive"
        return "clean" if not self.flagged else "flagged"


def validate_bigm(result: StmResult, rerun: StmResult | None = None, tol: float = 0.01,
                  shift_tol: float = 1e-3) -> BigMReport:
    """Flag duals or slacks within ``tol`` (relative) of their Big-M bound.

    ``rerun`` is an optional solve with larger constants; if its weights move by
    more than ``shift_tol`` the report carries an "M-sensitive" verdict.
    """
    stm, x = result.stm, result.x
    flagged = []
    max_dual = max_slack = 0.0
    lam = x[stm.lam]
    for b in stm.blocks:
        psi = x[b.psi]
        slack = b.kkt.slack(b.x(x), lam)
        max_dual = max(max_dual, float(np.max(psi, initial=0.0)))
        max_slack = max(max_slack, float(np.max(slack, initial=0.0)))
        for i in np.flatnonzero(psi >= (1 - tol) * stm.dual_m):
            flagged.append((b.day, "dual", b.kkt.in_names[i], float(psi[i])))
        for i in np.flatnonzero(slack >= (1 - tol) * stm.primal_m):
            flagged.append((b.day, "slack", b.kkt.in_names[i], float(slack[i])))
    report = BigMReport(stm.dual_m, stm.primal_m, flagged, max_dual, max_slack)
    if rerun is not None:
        report.shift = float(np.max(np.abs(rerun.weights - result.weights)))
        report.sensitive = report.shift > shift_tol
    return report


def bigm_sensitivity(grid: Grid, days, result: StmResult, factor: float = 10.0,
                     config: STMConfig | None = None) -> BigMReport:
    """Re-solve with both constants scaled by ``factor`` and audit the first solve."""
    config = config or STMConfig()
    bigger = STMConfig(**{**config.__dict__, "big_m": result.stm.dual_m * factor,
                          "primal_big_m": result.stm.primal_m * factor})
    return validate_bigm(result, solve_stm(grid, days, bigger))


__all__ = [
    "KKTSystem", "STMConfig", "StmModel", "StmResult", "BigMReport", "UnsupportedModelError",
    "ModelTooLargeError", "assemble_kkt", "default_big_m", "build_stm", "solve_stm",
    "validate_bigm", "bigm_sensitivity",
]
