"""Exact solution of :class:`~vofc.model.ModelInstance` objects.

LPs are solved with the HiGHS dual simplex shipped with scipy, which returns
basic (vertex) solutions and constraint marginals. MILPs go through HiGHS
branch-and-cut by default; ``backend="bnb"`` runs the in-house best-bound
branch-and-bound on top of the LP routine.

Dual convention: ``Solution.duals[r]`` is the derivative of the optimal
objective with respect to the right-hand side of row ``r``; ``duals_lower`` and
``duals_upper`` are the same quantity for the variable bounds.
"""

from __future__ import annotations

import heapq
import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import EQ, GE, LE, ModelInstance, PwlBlock

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NODE_LIMIT = "node_limit"
NUMERICAL = "numerical"

FEAS_TOL = 1e-6
INT_TOL = 1e-6


class SolverError(RuntimeError):
    """Raised when a solve does not end in a usable optimum."""

    def __init__(self, status, message=""):
        super().__init__(message or f"solver finished with status {status!r}")
        self.status = status


@dataclass
class Solution:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    duals: np.ndarray | None = None
    duals_lower: np.ndarray | None = None
    duals_upper: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, model: ModelInstance, block: str) -> np.ndarray:
        return self.x[model.var_blocks[block]]

    def require_optimal(self, what="model"):
        if not self.ok:
            raise SolverError(self.status, f"{what}: solver finished with status {self.status!r}")
        return self


_LINPROG_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED, 4: NUMERICAL}


def _lp_core(c, A, sense, b, lb, ub, c0=0.0, max_iter=10**6):
    le = sense == LE
    ge = sense == GE
    eq = sense == EQ
    ub_rows = le | ge
    flip = np.where(ge, -1.0, 1.0)
    A_ub = A[ub_rows].multiply(flip[ub_rows][:, None]).tocsr() if ub_rows.any() else None
    b_ub = (b * flip)[ub_rows] if ub_rows.any() else None
    A_eq = A[eq] if eq.any() else None
    b_eq = b[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isfinite(lb), lb, -np.inf), np.where(np.isfinite(ub), ub, np.inf)])
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
        method="highs-ds", options={"maxiter": int(max_iter), "presolve": True},
    )
    status = _LINPROG_STATUS.get(res.status, NUMERICAL)
    sol = Solution(status=status, iterations=int(getattr(res, "nit", 0) or 0))
    if status != OPTIMAL:
        return sol
    sol.x = np.asarray(res.x, dtype=float)
    sol.objective = float(res.fun) + c0
    duals = np.zeros(len(b))
    if ub_rows.any():
        duals[ub_rows] = np.asarray(res.ineqlin.marginals) * flip[ub_rows]
    if eq.any():
        duals[eq] = np.asarray(res.eqlin.marginals)
    sol.duals = duals
    sol.duals_lower = np.asarray(res.lower.marginals, dtype=float)
    sol.duals_upper = np.asarray(res.upper.marginals, dtype=float)
    return sol


def solve_lp(model: ModelInstance, max_iter: int = 10**6, relax: bool = False) -> Solution:
    """Solve an LP; ``relax=True`` drops integrality instead of rejecting it."""
    if model.is_mip and not relax:
        raise ValueError("solve_lp called on a model with integer variables")
    return _lp_core(model.c, model.A, model.sense, model.rhs, model.lb, model.ub,
                    model.obj_constant, max_iter)


def solve_milp(model: ModelInstance, backend: str = "highs", node_limit: int = 10**6,
               gap: float = 1e-6, time_limit: float | None = None) -> Solution:
    """Solve a MILP to a proven optimum within absolute ``gap``."""
    if not model.is_mip:
        sol = solve_lp(model)
        sol.nodes = 1
        return sol
    if backend == "bnb":
        return branch_and_bound(model, node_limit=node_limit, gap=gap)
    if backend != "highs":
        raise ValueError(f"unknown MILP backend {backend!r}")
    lo = np.where(model.sense == GE, model.rhs, -np.inf)
    lo = np.where(model.sense == EQ, model.rhs, lo)
    hi = np.where(model.sense == LE, model.rhs, np.inf)
    hi = np.where(model.sense == EQ, model.rhs, hi)
    options = {"mip_rel_gap": 0.0, "node_limit": int(node_limit), "presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    constraints = [LinearConstraint(model.A, lo, hi)] if model.num_rows else []
    res = milp(model.c, constraints=constraints, integrality=model.integrality.astype(int),
               bounds=Bounds(model.lb, model.ub), options=options)
    if res.status == 0:
        status = OPTIMAL
    elif res.status == 1:
        status = NODE_LIMIT if res.x is None else OPTIMAL
    elif res.status == 2:
        status = INFEASIBLE
    elif res.status == 3:
        status = UNBOUNDED
    else:
        status = NUMERICAL
    sol = Solution(status=status, nodes=int(getattr(res, "mip_node_count", 0) or 0))
    if res.x is not None and status == OPTIMAL:
        x = np.asarray(res.x, dtype=float)
        ints = model.integrality
        x[ints] = np.round(x[ints])
        sol.x = x
        sol.objective = model.objective(x)
        sol.stats["mip_gap"] = float(getattr(res, "mip_gap", 0.0) or 0.0)
        if res.status == 1:
            sol.status = NODE_LIMIT
    return sol


def branch_and_bound(model: ModelInstance, node_limit: int = 10**6, gap: float = 1e-6) -> Solution:
    """Best-bound branch-and-bound; most-fractional branching, lowest index on ties."""
    c, A, sense, b = model.c, model.A, model.sense, model.rhs
    ints = np.flatnonzero(model.integrality)
    heap = [(-np.inf, 0, model.lb.copy(), model.ub.copy())]
    seq = 1
    best_x, best_obj = None, np.inf
    nodes = 0
    lp_iters = 0
    while heap:
        bound, _, lb, ub = heapq.heappop(heap)
        if bound >= best_obj - gap:
            continue
        if nodes >= node_limit:
            sol = Solution(status=NODE_LIMIT, nodes=nodes, iterations=lp_iters)
            if best_x is not None:
                sol.x, sol.objective = best_x, best_obj
            return sol
        nodes += 1
        rel = _lp_core(c, A, sense, b, lb, ub, model.obj_constant)
        lp_iters += rel.iterations
        if rel.status == UNBOUNDED:
            return Solution(status=UNBOUNDED, nodes=nodes, iterations=lp_iters)
        if rel.status != OPTIMAL or rel.objective >= best_obj - gap:
            continue
        xi = rel.x[ints]
        frac = np.abs(xi - np.round(xi))
        if frac.max(initial=0.0) <= INT_TOL:
            x = rel.x.copy()
            x[ints] = np.round(xi)
            best_x, best_obj = x, model.objective(x)
            continue
        dist = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
        k = int(np.argmax(dist))  # first maximiser = lowest variable id
        j = ints[k]
        down_ub = ub.copy()
        down_ub[j] = np.floor(rel.x[j])
        up_lb = lb.copy()
        up_lb[j] = np.ceil(rel.x[j])
        heapq.heappush(heap, (rel.objective, seq, lb, down_ub))
        heapq.heappush(heap, (rel.objective, seq + 1, up_lb, ub))
        seq += 2
    if best_x is None:
        return Solution(status=INFEASIBLE, nodes=nodes, iterations=lp_iters)
    return Solution(status=OPTIMAL, x=best_x, objective=best_obj, nodes=nodes, iterations=lp_iters)


def solve(model: ModelInstance, **kwargs) -> Solution:
    return solve_milp(model, **kwargs) if model.is_mip else solve_lp(model)


# -- piecewise-linear quadratic penalty ------------------------------------


def pwl_knots(center: float, segments: int) -> np.ndarray:
    """Uniform grid on [0, 1] with ``center`` inserted as an extra knot."""
    grid = np.linspace(0.0, 1.0, segments + 1)
    if 0.0 <= center <= 1.0 and np.min(np.abs(grid - center)) > 1e-12:
        grid = np.sort(np.append(grid, center))
    return grid


def pwl_value(x, center: float, coef: float, segments: int):
    """Value of the secant interpolant of ``coef*(x-center)**2`` used by the epigraph."""
    knots = pwl_knots(center, segments)
    return np.interp(x, knots, coef * (knots - center) ** 2)


def add_pwl_quadratic(model: ModelInstance, vars, center, coef: float, segments: int = 32,
                      name: str = "pwl") -> ModelInstance:
    """Return a copy of ``model`` whose objective gains ``coef * sum_k (x_k - center_k)**2``.

    Each quadratic is replaced by the secant interpolant on a uniform grid of
    ``segments`` pieces over [0, 1] (plus a knot at the center), encoded as an
    epigraph variable bounded below by every secant line. The interpolant
    overestimates the quadratic by at most ``coef / (4 * segments**2)``.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    vars = np.atleast_1d(np.asarray(vars))
    center = np.broadcast_to(np.asarray(center, dtype=float), vars.shape)
    lb, ub = model.lb, model.ub
    for j in vars.ravel():
        if not (np.isfinite(lb[j]) and np.isfinite(ub[j])) or lb[j] < -1e-12 or ub[j] > 1 + 1e-12:
            raise ValueError(f"variable {model.var_names[j]} must be bounded within [0, 1]")
    out = model.copy()
    epi = out.add_vars(f"{name}_epi", vars.shape, lb=0.0, ub=np.inf, cost=1.0)
    for k, (j, c0) in enumerate(zip(vars.ravel(), center.ravel())):
        knots = pwl_knots(float(c0), segments)
        vals = coef * (knots - c0) ** 2
        slopes = np.diff(vals) / np.diff(knots)
        intercepts = vals[:-1] - slopes * knots[:-1]
        rows = out.add_rows(f"{name}_seg[{k}]", len(slopes), GE, intercepts)
        # t - slope * x >= intercept
        out.add_terms(rows, epi.ravel()[k], 1.0)
        out.add_terms(rows, int(j), -slopes)
        out.pwl_blocks.append(PwlBlock(int(j), int(epi.ravel()[k]), float(c0), float(coef),
                                       tuple(knots.tolist()), tuple(rows.tolist())))
    return out


# -- LP file export and external solvers -----------------------------------


def _lp_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")").replace(" ", "_")


def _fmt(v: float) -> str:
    return repr(float(v))


def _lin_expr(cols, vals, names) -> str:
    parts = []
    for j, v in zip(cols, vals):
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(v))} {names[j]}")
    if not parts:
        return "0"
    expr = " ".join(parts)
    return expr[2:] if expr.startswith("+ ") else expr


def lp_file_text(model: ModelInstance) -> str:
    names = [_lp_name(n) for n in model.var_names]
    lines = [f"\\ model {model.name}", "Minimize"]
    c = model.c
    nz = np.flatnonzero(c)
    obj = _lin_expr(nz, c[nz], names)
    if model.obj_constant:
        obj += f" {'-' if model.obj_constant < 0 else '+'} {_fmt(abs(model.obj_constant))}"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    A = model.A.tocsr()
    A.sort_indices()
    for r in range(model.num_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        expr = _lin_expr(A.indices[lo:hi], A.data[lo:hi], names)
        op = {LE: "<=", GE: ">=", EQ: "="}[model.senses[r]]
        lines.append(f" {_lp_name(model.row_names[r])}: {expr} {op} {_fmt(model.rhs[r])}")
    lines.append("Bounds")
    for j, n in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {n} free")
        elif np.isinf(hi):
            lines.append(f" {n} >= {_fmt(lo)}")
        elif np.isinf(lo):
            lines.append(f" -inf <= {n} <= {_fmt(hi)}")
        else:
            lines.append(f" {_fmt(lo)} <= {n} <= {_fmt(hi)}")
    ints = np.flatnonzero(model.integrality)
    if len(ints):
        lines.append("Generals")
        lines.extend(f" {names[j]}" for j in ints)
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp_file(model: ModelInstance, path) -> Path:
    """Write ``model`` in CPLEX LP format (deterministic, LF line endings)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(lp_file_text(model))
    return path


def read_solution_file(path, model: ModelInstance) -> np.ndarray:
    """Parse ``name value`` lines into a primal vector ordered like ``model``."""
    index = {_lp_name(n): j for j, n in enumerate(model.var_names)}
    x = np.zeros(model.num_vars)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'name value'")
            if parts[0] in index:
                x[index[parts[0]]] = float(parts[1])
    return x


class ExternalSolver:
    """Solve by exporting an LP file and running ``command``.

    ``command`` is a format string with ``{model}`` and ``{solution}``
    placeholders; the program must write ``name value`` lines to the
    solution path.
    """

    def __init__(self, command: str, workdir=None):
        self.command = command
        self.workdir = workdir

    def solve(self, model: ModelInstance) -> Solution:
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            mpath = export_lp_file(model, os.path.join(tmp, "model.lp"))
            spath = os.path.join(tmp, "solution.txt")
            cmd = self.command.format(model=shlex.quote(str(mpath)), solution=shlex.quote(spath))
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
            if proc.returncode != 0 or not os.path.exists(spath):
                log.error("external solver failed: %s", proc.stderr.strip())
                return Solution(status=NUMERICAL)
            x = read_solution_file(spath, model)
        if model.violation(x) > 1e-5:
            return Solution(status=NUMERICAL, x=x)
        return Solution(status=OPTIMAL, x=x, objective=model.objective(x))
