"""Solver-agnostic container for linear and mixed-integer linear models.

A :class:`ModelInstance` stores variables (bounds, integrality), linear
constraints in triplet form, and a linear objective. Builders allocate
variables and constraints in named blocks so that solutions can be sliced
back into arrays with the shape they were declared with.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)


@dataclass(frozen=True)
class PwlBlock:
    """Epigraph encoding of ``coef * (x - center)**2`` on ``[0, 1]``."""

    var: int
    epi_var: int
    center: float
    coef: float
    knots: tuple[float, ...]
    rows: tuple[int, ...]


class ModelInstance:
    """Linear model ``min c'x + c0`` subject to rows ``a'x (<=|==|>=) b`` and bounds."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._int: list[bool] = []
        self._c: list[float] = []
        self.obj_constant = 0.0
        self._ri: list[np.ndarray] = []
        self._ci: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self.senses: list[str] = []
        self._rhs: list[float] = []
        self.row_names: list[str] = []
        self.var_blocks: dict[str, np.ndarray] = {}
        self.row_blocks: dict[str, np.ndarray] = {}
        self.pwl_blocks: list[PwlBlock] = []
        self._cache = None

    # -- construction -------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self._lb)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def add_vars(self, name, shape=(), lb=0.0, ub=np.inf, integer=False, cost=0.0):
        """Declare a block of variables and return their indices with ``shape``."""
        if name in self.var_blocks:
            raise ValueError(f"duplicate variable block {name!r}")
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.num_vars, self.num_vars + n).reshape(shape)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel()
        if np.any(lb > ub):
            raise ValueError(f"block {name!r} has lb > ub")
        integer = np.broadcast_to(np.asarray(integer, dtype=bool), shape).ravel()
        if np.any(integer & ~(np.isfinite(lb) & np.isfinite(ub))):
            raise ValueError(f"integer block {name!r} needs finite bounds")
        cost = np.broadcast_to(np.asarray(cost, dtype=float), shape).ravel()
        for pos in np.ndindex(*shape) if shape else [()]:
            self.var_names.append(f"{name}[{','.join(map(str, pos))}]" if shape else name)
        self._lb.extend(lb.tolist())
        self._ub.extend(ub.tolist())
        self._int.extend(integer.tolist())
        self._c.extend(cost.tolist())
        self.var_blocks[name] = idx
        self._cache = None
        return idx

    def add_rows(self, name, shape, sense, rhs=0.0):
        """Declare a block of empty constraint rows; fill them with :meth:`add_terms`."""
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        if name in self.row_blocks:
            raise ValueError(f"duplicate row block {name!r}")
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.num_rows, self.num_rows + n).reshape(shape)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), shape).ravel()
        for pos in np.ndindex(*shape) if shape else [()]:
            self.row_names.append(f"{name}[{','.join(map(str, pos))}]" if shape else name)
        self.senses.extend([sense] * n)
        self._rhs.extend(rhs.tolist())
        self.row_blocks[name] = idx
        self._cache = None
        return idx

    def add_terms(self, rows, cols, coefs=1.0):
        """Add ``coef * x[col]`` to ``row`` elementwise (arguments broadcast)."""
        rows, cols, coefs = np.broadcast_arrays(
            np.asarray(rows), np.asarray(cols), np.asarray(coefs, dtype=float)
        )
        if rows.size == 0:
            return
        if cols.min() < 0 or cols.max() >= self.num_vars:
            raise IndexError("term references an undeclared variable")
        if rows.min() < 0 or rows.max() >= self.num_rows:
            raise IndexError("term references an undeclared row")
        self._ri.append(rows.ravel().astype(np.int64))
        self._ci.append(cols.ravel().astype(np.int64))
        self._v.append(coefs.ravel().copy())
        self._cache = None

    def add_cost(self, cols, coefs):
        cols, coefs = np.broadcast_arrays(np.asarray(cols), np.asarray(coefs, dtype=float))
        for j, v in zip(cols.ravel().tolist(), coefs.ravel().tolist()):
            self._c[j] += v
        self._cache = None

    def set_bounds(self, cols, lb=None, ub=None):
        cols = np.atleast_1d(np.asarray(cols)).ravel()
        if lb is not None:
            for j, v in zip(cols, np.broadcast_to(np.asarray(lb, float), cols.shape)):
                self._lb[j] = float(v)
        if ub is not None:
            for j, v in zip(cols, np.broadcast_to(np.asarray(ub, float), cols.shape)):
                self._ub[j] = float(v)
        self._cache = None

    def set_rhs(self, rows, rhs):
        rows = np.atleast_1d(np.asarray(rows)).ravel()
        for r, v in zip(rows, np.broadcast_to(np.asarray(rhs, float), rows.shape)):
            self._rhs[r] = float(v)
        self._cache = None

    def copy(self) -> "ModelInstance":
        return copy.deepcopy(self)

    def restricted(self, rows, cols) -> "ModelInstance":
        """Copy keeping only ``rows`` and ``cols``, with indices unchanged.

        Other rows become ``0 = 0``; other columns are fixed at 0 with no cost.
        """
        keep_r = np.zeros(self.num_rows, dtype=bool)
        keep_r[np.asarray(rows, dtype=np.int64).ravel()] = True
        keep_c = np.zeros(self.num_vars, dtype=bool)
        keep_c[np.asarray(cols, dtype=np.int64).ravel()] = True
        m = self.copy()
        A = self.A.tocoo()
        sel = keep_r[A.row] & keep_c[A.col]
        m._ri, m._ci, m._v = [A.row[sel].astype(np.int64)], [A.col[sel].astype(np.int64)], [A.data[sel]]
        for r in np.flatnonzero(~keep_r):
            m.senses[r] = EQ
            m._rhs[r] = 0.0
        for j in np.flatnonzero(~keep_c):
            m._lb[j] = m._ub[j] = m._c[j] = 0.0
            m._int[j] = False
        m.obj_constant = self.obj_constant
        m._cache = None
        return m

    # -- array views --------------------------------------------------

    def _arrays(self):
        if self._cache is None:
            if self._ri:
                r = np.concatenate(self._ri)
                c = np.concatenate(self._ci)
                v = np.concatenate(self._v)
            else:
                r = c = np.zeros(0, dtype=np.int64)
                v = np.zeros(0)
            A = sp.csr_matrix((v, (r, c)), shape=(self.num_rows, self.num_vars))
            A.sum_duplicates()
            A.eliminate_zeros()
            self._cache = dict(
                A=A,
                lb=np.array(self._lb, dtype=float),
                ub=np.array(self._ub, dtype=float),
                c=np.array(self._c, dtype=float),
                b=np.array(self._rhs, dtype=float),
                integer=np.array(self._int, dtype=bool),
                sense=np.array(self.senses, dtype=object),
            )
        return self._cache

    @property
    def A(self) -> sp.csr_matrix:
        return self._arrays()["A"]

    @property
    def lb(self) -> np.ndarray:
        return self._arrays()["lb"]

    @property
    def ub(self) -> np.ndarray:
        return self._arrays()["ub"]

    @property
    def c(self) -> np.ndarray:
        return self._arrays()["c"]

    @property
    def rhs(self) -> np.ndarray:
        return self._arrays()["b"]

    @property
    def integrality(self) -> np.ndarray:
        return self._arrays()["integer"]

    @property
    def sense(self) -> np.ndarray:
        return self._arrays()["sense"]

    @property
    def is_mip(self) -> bool:
        return bool(self.integrality.any())

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, float) + self.obj_constant)

    def violation(self, x) -> float:
        """Largest bound or row violation of the point ``x``."""
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        act = self.A @ x
        b = self.rhs
        s = self.sense
        if len(b):
            le = s == LE
            ge = s == GE
            eq = s == EQ
            worst = max(
                worst,
                float(np.max(act[le] - b[le], initial=0.0)),
                float(np.max(b[ge] - act[ge], initial=0.0)),
                float(np.max(np.abs(act[eq] - b[eq]), initial=0.0)),
            )
        return worst

    def values(self, x, block: str) -> np.ndarray:
        return np.asarray(x)[self.var_blocks[block]]

    def __repr__(self):
        nint = int(self.integrality.sum()) if self.num_vars else 0
        return f"ModelInstance({self.name!r}, vars={self.num_vars}, int={nint}, rows={self.num_rows})"
