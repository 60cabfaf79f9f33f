"""Network, generator and scenario data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid or scenario data; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Node:
    id: str
    shed_cost: float = 25000.0
    curtail_cost: float = 50.0
    wind_capacity: float = 0.0  # installed wind (MW); > 0 marks a wind node


@dataclass(frozen=True)
class Line:
    origin: str
    receiving: str
    susceptance: float
    capacity: float
    id: str = ""


@dataclass(frozen=True)
class GeneratorParams:
    """Thermal unit data; powers in MW, ramps in MW/h, costs in $ or $/MWh."""

    id: str
    node: str
    cost: float
    pmin: float
    pmax: float
    ramp: float
    startup_ramp: float
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    up_cost: float = 0.0
    down_cost: float = 0.0
    min_up: int = 1
    min_down: int = 1
    # carried for completeness; no constraint in the model references t=0
    initial_status: int = 0

    def validate(self, where="generator"):
        if not 0 <= self.pmin <= self.pmax:
            raise GridError("need 0 <= pmin <= pmax", f"{where}.pmin")
        if self.ramp < 0 or self.startup_ramp < 0:
            raise GridError("ramp limits must be >= 0", f"{where}.ramp")
        if self.min_up < 1 or self.min_down < 1:
            raise GridError("min up/down times must be >= 1", f"{where}.min_up")
        for name in ("cost", "startup_cost", "shutdown_cost", "up_cost", "down_cost"):
            if getattr(self, name) < 0:
                raise GridError("costs must be >= 0", f"{where}.{name}")
        if self.initial_status not in (0, 1):
            raise GridError("initial status must be 0 or 1", f"{where}.initial_status")


@dataclass(frozen=True)
class Grid:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    generators: tuple[GeneratorParams, ...]
    reference: str
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        ids = [n.id for n in self.nodes]
        seen = set()
        for k, i in enumerate(ids):
            if i in seen:
                raise GridError(f"duplicate node id {i!r}", f"nodes[{k}].id")
            seen.add(i)
        if not ids:
            raise GridError("grid has no nodes", "nodes")
        if self.reference not in seen:
            raise GridError(f"reference node {self.reference!r} does not exist", "reference")
        for k, n in enumerate(self.nodes):
            if n.shed_cost < 0 or n.curtail_cost < 0:
                raise GridError("costs must be >= 0", f"nodes[{k}]")
            if n.wind_capacity < 0:
                raise GridError("wind capacity must be >= 0", f"nodes[{k}].wind_capacity")
        for k, ln in enumerate(self.lines):
            if ln.origin not in seen or ln.receiving not in seen:
                raise GridError("line endpoint does not exist", f"lines[{k}]")
            if ln.origin == ln.receiving:
                raise GridError("line origin equals receiving node", f"lines[{k}]")
            if not ln.susceptance > 0:
                raise GridError("susceptance must be > 0", f"lines[{k}].susceptance")
            if not ln.capacity > 0:
                raise GridError("capacity must be > 0", f"lines[{k}].capacity")
        gids = set()
        for k, g in enumerate(self.generators):
            if g.node not in seen:
                raise GridError(f"generator node {g.node!r} does not exist", f"generators[{k}].node")
            if g.id in gids:
                raise GridError(f"duplicate generator id {g.id!r}", f"generators[{k}].id")
            gids.add(g.id)
            g.validate(f"generators[{k}]")

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def L(self) -> int:
        return len(self.lines)

    @property
    def G(self) -> int:
        return len(self.generators)

    @property
    def wind_nodes(self) -> list[str]:
        return [n.id for n in self.nodes if n.wind_capacity > 0]

    @property
    def node_index(self) -> dict:
        return {n.id: k for k, n in enumerate(self.nodes)}

    @property
    def ref_index(self) -> int:
        return self.node_index[self.reference]

    @property
    def gen_node(self) -> np.ndarray:
        idx = self.node_index
        return np.array([idx[g.node] for g in self.generators], dtype=int)

    @property
    def line_from(self) -> np.ndarray:
        idx = self.node_index
        return np.array([idx[ln.origin] for ln in self.lines], dtype=int)

    @property
    def line_to(self) -> np.ndarray:
        idx = self.node_index
        return np.array([idx[ln.receiving] for ln in self.lines], dtype=int)

    @property
    def incidence(self) -> np.ndarray:
        """Line-node incidence: +1 at the origin, -1 at the receiving node."""
        A = np.zeros((self.L, self.N))
        A[np.arange(self.L), self.line_from] = 1.0
        A[np.arange(self.L), self.line_to] = -1.0
        return A

    def gen_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(g, attr) for g in self.generators], dtype=float)

    def node_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(n, attr) for n in self.nodes], dtype=float)

    def line_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(ln, attr) for ln in self.lines], dtype=float)


@dataclass
class ScenarioDay:
    """One day of data: per-provider forecasts (K, N, T) and realisations (N, T)."""

    day: int
    forecast_load: np.ndarray
    forecast_wind: np.ndarray
    actual_load: np.ndarray
    actual_wind: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.forecast_load = np.asarray(self.forecast_load, dtype=float)
        self.forecast_wind = np.asarray(self.forecast_wind, dtype=float)
        self.actual_load = np.asarray(self.actual_load, dtype=float)
        self.actual_wind = np.asarray(self.actual_wind, dtype=float)
        if self.forecast_load.ndim != 3:
            raise GridError("forecast_load must have shape (K, N, T)", f"day {self.day}")
        if self.forecast_wind.shape != self.forecast_load.shape:
            raise GridError("forecast_wind shape differs from forecast_load", f"day {self.day}")
        nt = self.forecast_load.shape[1:]
        if self.actual_load.shape != nt or self.actual_wind.shape != nt:
            raise GridError("actual series must have shape (N, T)", f"day {self.day}")
        if self.K < 1:
            raise GridError("need at least one provider", f"day {self.day}")
        if (self.forecast_wind < 0).any() or (self.actual_wind < 0).any():
            raise GridError("wind must be nonnegative", f"day {self.day}")

    @property
    def K(self) -> int:
        return self.forecast_load.shape[0]

    @property
    def N(self) -> int:
        return self.forecast_load.shape[1]

    @property
    def T(self) -> int:
        return self.forecast_load.shape[2]


def as_weights(weights, K: int | None = None, tol: float = 1e-9) -> np.ndarray:
    """Validate a combination vector: ``0 <= w_k <= 1`` and ``sum(w) == 1``."""
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if w.ndim != 1:
        raise ValueError("weights must be a vector")
    if K is not None and len(w) != K:
        raise ValueError(f"got {len(w)} weights for {K} providers")
    if np.any(w < -tol) or np.any(w > 1 + tol) or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights {w.tolist()} are not on the simplex")
    return w


def project_simplex(w, warn_tol: float = 1e-7):
    """Clamp to [0, 1] and renormalise; returns the vector and the size of the correction."""
    w = np.asarray(w, dtype=float)
    v = np.clip(w, 0.0, 1.0)
    s = v.sum()
    if s <= 0:
        v = np.full_like(w, 1.0 / len(w))
    else:
        v = v / s
    return v, float(np.max(np.abs(v - w)))
