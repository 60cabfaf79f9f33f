"""Day-ahead unit commitment, its convex relaxation, and real-time redispatch.

Variables are allocated in named blocks (``p``, ``u``, ``y``, ``f``, ``theta``,
``shed``, ``curt`` for the day-ahead stage; ``rup``, ``rdn``, ``rt_f``,
``rt_theta``, ``rt_shed``, ``rt_curt`` for real time). Hours are 0-based in
code: the first hour carries no start-up variable and no ramping row.

Net load at a node is demand minus available wind, so curtailing wind raises
the net load to be served::

    sum_g p + inflow - outflow = L - shed + curt
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, ScenarioDay, as_weights
from .model import EQ, LE, ModelInstance
from .solver import INFEASIBLE, Solution, SolverError, solve_lp, solve_milp

log = logging.getLogger(__name__)

BINARY = "binary"
RELAXED = "relaxed"
VARIANTS = (BINARY, RELAXED)


class InfeasibleModelError(SolverError):
    """A stage that should always be feasible was reported infeasible."""


@dataclass
class UcSolution:
    p: np.ndarray
    u: np.ndarray
    y: np.ndarray
    f: np.ndarray
    theta: np.ndarray
    shed: np.ndarray
    curt: np.ndarray
    objective: float


@dataclass
class CostBreakdown:
    production: float = 0.0
    startup: float = 0.0
    shutdown: float = 0.0
    uc_shed: float = 0.0
    uc_curtail: float = 0.0
    rt_up: float = 0.0
    rt_down: float = 0.0
    rt_shed: float = 0.0
    rt_curtail: float = 0.0
    meta: dict = field(default_factory=dict, repr=False)

    COMPONENTS = ("production", "startup", "shutdown", "uc_shed", "uc_curtail",
                  "rt_up", "rt_down", "rt_shed", "rt_curtail")

    @property
    def uc_total(self) -> float:
        return self.production + self.startup + self.shutdown + self.uc_shed + self.uc_curtail

    @property
    def rt_total(self) -> float:
        return self.rt_up + self.rt_down + self.rt_shed + self.rt_curtail

    @property
    def total(self) -> float:
        return self.uc_total + self.rt_total

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.COMPONENTS}
        d["total"] = self.total
        return d


def combine_forecasts(weights, day: ScenarioDay):
    """Weighted sums of the provider forecasts, ``(L_comb, W_comb)`` of shape (N, T)."""
    w = as_weights(weights, day.K)
    return (np.tensordot(w, day.forecast_load, axes=1),
            np.tensordot(w, day.forecast_wind, axes=1))


def shed_cap(load, wind):
    return np.maximum(0.0, np.asarray(load) - np.asarray(wind))


def _check_shapes(grid: Grid, arrays, T):
    if T < 1:
        raise ValueError("horizon must be >= 1")
    for a in arrays:
        if np.shape(a)[-2:] != (grid.N, T):
            raise ValueError(f"series shape {np.shape(a)} does not match (N={grid.N}, T={T})")


def _network_rows(m, grid, T, gen_terms, f, theta, shed, curt, rhs, prefix):
    """Nodal balance, DC flow definition and reference angle rows.

    ``gen_terms`` is a list of ``(vars (G, T), coef)`` injected at the
    generator nodes. Returns the balance row indices (N, T).
    """
    N = grid.N
    bal = m.add_rows(f"{prefix}balance", (N, T), EQ, rhs)
    gn = grid.gen_node
    for vars_, coef in gen_terms:
        m.add_terms(bal[gn], vars_, coef)
    if grid.L:
        fr, to = grid.line_from, grid.line_to
        m.add_terms(bal[to], f, 1.0)
        m.add_terms(bal[fr], f, -1.0)
    m.add_terms(bal, shed, 1.0)
    m.add_terms(bal, curt, -1.0)
    if grid.L:
        B = grid.line_array("susceptance")[:, None]
        fdef = m.add_rows(f"{prefix}flowdef", (grid.L, T), EQ, 0.0)
        m.add_terms(fdef, f, 1.0)
        m.add_terms(fdef, theta[grid.line_from], -B)
        m.add_terms(fdef, theta[grid.line_to], B)
    ref = m.add_rows(f"{prefix}ref", T, EQ, 0.0)
    m.add_terms(ref, theta[grid.ref_index], 1.0)
    return bal


def add_uc_block(m: ModelInstance, grid: Grid, T: int, load, wind, relaxed: bool,
                 lam=None, shed_coef=None) -> dict:
    """Add the day-ahead block to ``m``.

    With ``lam=None`` the forecasts ``load``/``wind`` are (N, T) data. Otherwise
    ``lam`` holds K variable indices and ``load``/``wind`` are (K, N, T)
    provider forecasts: the balance right-hand side becomes
    ``sum_k lam_k load_k`` and the shed/curtail caps become linear in ``lam``.
    ``shed_coef`` overrides the shed cap (data mode: (N, T); weight mode:
    (K, N, T) coefficients); by default it is ``max(0, load - wind)``.
    """
    G, N, L = grid.G, grid.N, grid.L
    pmin, pmax = grid.gen_array("pmin")[:, None], grid.gen_array("pmax")[:, None]
    ramp, sramp = grid.gen_array("ramp")[:, None], grid.gen_array("startup_ramp")[:, None]
    c_su, c_sd = grid.gen_array("startup_cost")[:, None], grid.gen_array("shutdown_cost")[:, None]
    load = np.asarray(load, dtype=float)
    wind = np.asarray(wind, dtype=float)
    if shed_coef is None:
        shed_coef = shed_cap(load, wind)

    p = m.add_vars("p", (G, T), 0.0, np.broadcast_to(pmax, (G, T)),
                   cost=np.broadcast_to(grid.gen_array("cost")[:, None], (G, T)))
    u = m.add_vars("u", (G, T), 0.0, 1.0, integer=not relaxed)
    y = m.add_vars("y", (G, T - 1), 0.0, 1.0) if T > 1 else np.zeros((G, 0), dtype=int)
    f = m.add_vars("f", (L, T), -grid.line_array("capacity")[:, None] * np.ones((1, T)),
                   grid.line_array("capacity")[:, None] * np.ones((1, T))) if L else np.zeros((0, T), int)
    theta = m.add_vars("theta", (N, T), -np.inf, np.inf)
    c_shed = np.broadcast_to(grid.node_array("shed_cost")[:, None], (N, T))
    c_cur = np.broadcast_to(grid.node_array("curtail_cost")[:, None], (N, T))
    if lam is None:
        shed = m.add_vars("shed", (N, T), 0.0, shed_coef, cost=c_shed)
        curt = m.add_vars("curt", (N, T), 0.0, wind, cost=c_cur)
        bal = _network_rows(m, grid, T, [(p, 1.0)], f, theta, shed, curt, load, "")
    else:
        lam = np.asarray(lam)
        shed = m.add_vars("shed", (N, T), 0.0, np.inf, cost=c_shed)
        curt = m.add_vars("curt", (N, T), 0.0, np.inf, cost=c_cur)
        bal = _network_rows(m, grid, T, [(p, 1.0)], f, theta, shed, curt, 0.0, "")
        scap = m.add_rows("shed_cap", (N, T), LE, 0.0)
        ccap = m.add_rows("curt_cap", (N, T), LE, 0.0)
        m.add_terms(scap, shed, 1.0)
        m.add_terms(ccap, curt, 1.0)
        for k, lk in enumerate(lam):
            m.add_terms(bal, lk, -load[k])
            m.add_terms(scap, lk, -shed_coef[k])
            m.add_terms(ccap, lk, -wind[k])

    if T > 1:
        # start-up and shutdown costs from the second hour on
        m.add_cost(y, np.broadcast_to(c_su + c_sd, y.shape))
        m.add_cost(u[:, :-1], np.broadcast_to(c_sd, (G, T - 1)))
        m.add_cost(u[:, 1:], np.broadcast_to(-c_sd, (G, T - 1)))

    for g, gen in enumerate(grid.generators):
        lu, ld = gen.min_up, gen.min_down
        ts = np.arange(lu, T)
        if len(ts):
            rows = m.add_rows(f"minup[{g}]", len(ts), LE, 0.0)
            for j, t in enumerate(ts):
                m.add_terms(rows[j], y[g, t - lu:t], 1.0)  # y index i-1 for hours t-lu+1..t
                m.add_terms(rows[j], u[g, t], -1.0)
        ts = np.arange(ld, T)
        if len(ts):
            rows = m.add_rows(f"mindown[{g}]", len(ts), LE, 1.0)
            for j, t in enumerate(ts):
                m.add_terms(rows[j], y[g, t - ld:t], 1.0)
                m.add_terms(rows[j], u[g, t - ld], 1.0)

    if T > 1:
        yt = y  # y[:, t-1] is the start-up at hour t
        up, uc = u[:, :-1], u[:, 1:]
        pp, pc = p[:, :-1], p[:, 1:]
        st = m.add_rows("startup", (G, T - 1), LE, 0.0)
        m.add_terms(st, uc, 1.0)
        m.add_terms(st, up, -1.0)
        m.add_terms(st, yt, -1.0)
        rup = m.add_rows("ramp_up", (G, T - 1), LE, np.broadcast_to(sramp, (G, T - 1)))
        m.add_terms(rup, pc, 1.0)
        m.add_terms(rup, pp, -1.0)
        m.add_terms(rup, up, sramp - ramp)
        rdn = m.add_rows("ramp_down", (G, T - 1), LE, np.broadcast_to(sramp, (G, T - 1)))
        m.add_terms(rdn, pp, 1.0)
        m.add_terms(rdn, pc, -1.0)
        m.add_terms(rdn, uc, sramp - ramp)

    lo = m.add_rows("pmin", (G, T), LE, 0.0)
    m.add_terms(lo, u, pmin)
    m.add_terms(lo, p, -1.0)
    hi = m.add_rows("pmax", (G, T), LE, 0.0)
    m.add_terms(hi, p, 1.0)
    m.add_terms(hi, u, -pmax)

    if relaxed and T > 1:
        up, uc = u[:, :-1], u[:, 1:]
        pp, pc = p[:, :-1], p[:, 1:]
        a1 = m.add_rows("hull_shutdown", (G, T - 1), LE, 0.0)
        m.add_terms(a1, pp, 1.0)
        m.add_terms(a1, up, -sramp)
        m.add_terms(a1, uc, -(pmax - sramp))
        m.add_terms(a1, y, pmax - sramp)
        a2 = m.add_rows("hull_startup", (G, T - 1), LE, 0.0)
        m.add_terms(a2, pc, 1.0)
        m.add_terms(a2, uc, -pmax)
        m.add_terms(a2, y, pmax - sramp)
        a3 = m.add_rows("hull_ramp_up", (G, T - 1), LE, 0.0)
        m.add_terms(a3, pc, 1.0)
        m.add_terms(a3, pp, -1.0)
        m.add_terms(a3, uc, -(pmin + ramp))
        m.add_terms(a3, up, pmin)
        m.add_terms(a3, y, pmin + ramp - sramp)
        a4 = m.add_rows("hull_ramp_down", (G, T - 1), LE, 0.0)
        m.add_terms(a4, pp, 1.0)
        m.add_terms(a4, pc, -1.0)
        m.add_terms(a4, up, -sramp)
        m.add_terms(a4, uc, sramp - ramp)
        m.add_terms(a4, y, pmin + ramp - sramp)

    return dict(p=p, u=u, y=y, f=f, theta=theta, shed=shed, curt=curt, balance=bal)


def add_rt_block(m: ModelInstance, grid: Grid, T: int, actual_load, actual_wind,
                 p_star=None, u_star=None, uc_vars=None) -> dict:
    """Add real-time redispatch rows.

    The schedule enters either as constants (``p_star``/``u_star``) or as the
    variables of a day-ahead block in the same model (``uc_vars``).
    """
    G, N, L = grid.G, grid.N, grid.L
    pmin, pmax = grid.gen_array("pmin")[:, None], grid.gen_array("pmax")[:, None]
    ramp, sramp = grid.gen_array("ramp")[:, None], grid.gen_array("startup_ramp")[:, None]
    rcap = np.broadcast_to(ramp, (G, T))
    rp = m.add_vars("rup", (G, T), 0.0, rcap,
                    cost=np.broadcast_to(grid.gen_array("up_cost")[:, None], (G, T)))
    rm = m.add_vars("rdn", (G, T), 0.0, rcap,
                    cost=np.broadcast_to(grid.gen_array("down_cost")[:, None], (G, T)))
    f = m.add_vars("rt_f", (L, T), -grid.line_array("capacity")[:, None] * np.ones((1, T)),
                   grid.line_array("capacity")[:, None] * np.ones((1, T))) if L else np.zeros((0, T), int)
    theta = m.add_vars("rt_theta", (N, T), -np.inf, np.inf)
    shed = m.add_vars("rt_shed", (N, T), 0.0, shed_cap(actual_load, actual_wind),
                      cost=np.broadcast_to(grid.node_array("shed_cost")[:, None], (N, T)))
    curt = m.add_vars("rt_curt", (N, T), 0.0, actual_wind,
                      cost=np.broadcast_to(grid.node_array("curtail_cost")[:, None], (N, T)))

    joint = uc_vars is not None
    if joint:
        p, u = uc_vars["p"], uc_vars["u"]
        bal = _network_rows(m, grid, T, [(p, 1.0), (rp, 1.0), (rm, -1.0)], f, theta, shed, curt,
                            actual_load, "rt_")
        lo = m.add_rows("rt_pmin", (G, T), LE, 0.0)
        m.add_terms(lo, u, pmin)
        m.add_terms(lo, [p, rp, rm], [[[-1.0]], [[-1.0]], [[1.0]]])
        hi = m.add_rows("rt_pmax", (G, T), LE, 0.0)
        m.add_terms(hi, [p, rp, rm], [[[1.0]], [[1.0]], [[-1.0]]])
        m.add_terms(hi, u, -pmax)
    else:
        p_star = np.asarray(p_star, dtype=float)
        u_star = np.asarray(u_star, dtype=float)
        inj = np.zeros((N, T))
        np.add.at(inj, grid.gen_node, p_star)
        bal = _network_rows(m, grid, T, [(rp, 1.0), (rm, -1.0)], f, theta, shed, curt,
                            np.asarray(actual_load, float) - inj, "rt_")
        lo = m.add_rows("rt_pmin", (G, T), LE, p_star - pmin * u_star)
        m.add_terms(lo, [rp, rm], [[[-1.0]], [[1.0]]])
        hi = m.add_rows("rt_pmax", (G, T), LE, pmax * u_star - p_star)
        m.add_terms(hi, [rp, rm], [[[1.0]], [[-1.0]]])

    if T > 1:
        if joint:
            rup = m.add_rows("rt_ramp_up", (G, T - 1), LE, np.broadcast_to(sramp, (G, T - 1)))
            rdn = m.add_rows("rt_ramp_down", (G, T - 1), LE, np.broadcast_to(sramp, (G, T - 1)))
            for vars_, s in ((p, 1.0), (rp, 1.0), (rm, -1.0)):
                m.add_terms(rup, vars_[:, 1:], s)
                m.add_terms(rup, vars_[:, :-1], -s)
                m.add_terms(rdn, vars_[:, :-1], s)
                m.add_terms(rdn, vars_[:, 1:], -s)
            m.add_terms(rup, u[:, :-1], sramp - ramp)
            m.add_terms(rdn, u[:, 1:], sramp - ramp)
        else:
            lim_up = ramp * u_star[:, :-1] + sramp * (1 - u_star[:, :-1])
            lim_dn = ramp * u_star[:, 1:] + sramp * (1 - u_star[:, 1:])
            dp = p_star[:, 1:] - p_star[:, :-1]
            rup = m.add_rows("rt_ramp_up", (G, T - 1), LE, lim_up - dp)
            rdn = m.add_rows("rt_ramp_down", (G, T - 1), LE, lim_dn + dp)
            for vars_, s in ((rp, 1.0), (rm, -1.0)):
                m.add_terms(rup, vars_[:, 1:], s)
                m.add_terms(rup, vars_[:, :-1], -s)
                m.add_terms(rdn, vars_[:, :-1], s)
                m.add_terms(rdn, vars_[:, 1:], -s)

    return dict(rup=rp, rdn=rm, rt_f=f, rt_theta=theta, rt_shed=shed, rt_curt=curt, rt_balance=bal)


def build_uc(grid: Grid, load, wind, T: int, shed_limit=None) -> ModelInstance:
    """Day-ahead unit commitment MILP for fixed forecasts of shape (N, T)."""
    _check_shapes(grid, [load, wind], T)
    m = ModelInstance("uc")
    add_uc_block(m, grid, T, load, wind, relaxed=False, shed_coef=shed_limit)
    return m


def build_ucr(grid: Grid, load, wind, T: int, shed_limit=None) -> ModelInstance:
    """Convex-hull relaxation of :func:`build_uc` (pure LP)."""
    _check_shapes(grid, [load, wind], T)
    m = ModelInstance("ucr")
    add_uc_block(m, grid, T, load, wind, relaxed=True, shed_coef=shed_limit)
    return m


def uc_solution(model: ModelInstance, sol: Solution) -> UcSolution:
    G, T = model.var_blocks["p"].shape
    empty = {"y": (G, 0), "f": (0, T)}

    def v(block):
        if block in model.var_blocks:
            return sol.x[model.var_blocks[block]]
        return np.zeros(empty[block])

    return UcSolution(p=v("p"), u=v("u"), y=v("y"), f=v("f"), theta=v("theta"),
                      shed=v("shed"), curt=v("curt"), objective=sol.objective)


def build_rt(grid: Grid, uc_sol: UcSolution, actual_load, actual_wind, T: int) -> ModelInstance:
    """Real-time redispatch LP with the day-ahead schedule fixed."""
    _check_shapes(grid, [actual_load, actual_wind], T)
    if np.shape(uc_sol.p) != (grid.G, T) or np.shape(uc_sol.u) != (grid.G, T):
        raise ValueError("schedule dimensions do not match grid and horizon")
    m = ModelInstance("rt")
    add_rt_block(m, grid, T, actual_load, actual_wind, p_star=uc_sol.p, u_star=uc_sol.u)
    return m


def uc_costs(grid: Grid, sol: UcSolution) -> dict:
    c = grid.gen_array("cost")[:, None]
    c_su = grid.gen_array("startup_cost")[:, None]
    c_sd = grid.gen_array("shutdown_cost")[:, None]
    u = sol.u
    return dict(
        production=float(np.sum(c * sol.p)),
        startup=float(np.sum(c_su * sol.y)),
        shutdown=float(np.sum(c_sd * (u[:, :-1] - u[:, 1:] + sol.y))),
        uc_shed=float(np.sum(grid.node_array("shed_cost")[:, None] * sol.shed)),
        uc_curtail=float(np.sum(grid.node_array("curtail_cost")[:, None] * sol.curt)),
    )


def rt_costs(grid: Grid, model: ModelInstance, x) -> dict:
    v = lambda b: np.asarray(x)[model.var_blocks[b]]  # noqa: E731
    return dict(
        rt_up=float(np.sum(grid.gen_array("up_cost")[:, None] * v("rup"))),
        rt_down=float(np.sum(grid.gen_array("down_cost")[:, None] * v("rdn"))),
        rt_shed=float(np.sum(grid.node_array("shed_cost")[:, None] * v("rt_shed"))),
        rt_curtail=float(np.sum(grid.node_array("curtail_cost")[:, None] * v("rt_curt"))),
    )


def solve_uc(grid: Grid, load, wind, T: int, variant: str = BINARY, backend: str = "highs",
             shed_limit=None) -> UcSolution:
    if variant not in VARIANTS:
        raise ValueError(f"unknown UC variant {variant!r}")
    if variant == BINARY:
        model = build_uc(grid, load, wind, T, shed_limit)
        sol = solve_milp(model, backend=backend)
    else:
        model = build_ucr(grid, load, wind, T, shed_limit)
        sol = solve_lp(model)
    _require(sol, f"day-ahead {variant} UC")
    return uc_solution(model, sol)


def _require(sol: Solution, what: str):
    if sol.status == INFEASIBLE:
        raise InfeasibleModelError(INFEASIBLE, f"{what} reported infeasible; shedding and "
                                   "curtailment should make it feasible, so the data or model is inconsistent")
    sol.require_optimal(what)


def solve_rt(grid: Grid, uc_sol: UcSolution, actual_load, actual_wind, T: int):
    model = build_rt(grid, uc_sol, actual_load, actual_wind, T)
    sol = solve_lp(model)
    _require(sol, "real-time redispatch")
    return model, sol


def two_stage_cost(grid: Grid, weights, day: ScenarioDay, uc_variant: str = BINARY,
                   backend: str = "highs") -> CostBreakdown:
    """Operate one day with combined forecasts: day-ahead UC, then RT on realisations."""
    load, wind = combine_forecasts(weights, day)
    uc = solve_uc(grid, load, wind, day.T, uc_variant, backend)
    model, sol = solve_rt(grid, uc, day.actual_load, day.actual_wind, day.T)
    out = CostBreakdown(**uc_costs(grid, uc), **rt_costs(grid, model, sol.x))
    out.meta.update(day=day.day, uc_objective=uc.objective, rt_objective=sol.objective, uc=uc)
    return out
