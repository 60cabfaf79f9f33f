"""Reading and writing grids, forecast/realisation series and run configurations.

Grid document (JSON)::

    {"reference": "1", "base_mva": 100,
     "nodes": [{"id": "1", "shed_cost": 25000, "curtail_cost": 50,
                "wind_capacity": 0}, ...],
     "lines": [{"id": "l12", "origin": "1", "receiving": "2",
                "susceptance": 10, "capacity": 200}, ...],
     "generators": [{"id": "g1", "node": "1", "cost": 20, "pmin": 40, "pmax": 200,
                     "ramp": 60, "startup_ramp": 100, "startup_cost": 500,
                     "shutdown_cost": 100, "up_cost": 45, "down_cost": 5,
                     "min_up": 1, "min_down": 1, "initial_status": 0}, ...]}

Susceptances are per unit on ``base_mva``; powers are MW, costs $ or $/MWh.

Forecast CSV columns: ``day,hour,node,provider,forecast_net_load,forecast_wind``.
Realisation CSV columns: ``day,hour,node,net_load,wind`` (``wind`` optional).
Hours run from 1 to T.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .grid import GeneratorParams, Grid, GridError, Line, Node, ScenarioDay

log = logging.getLogger(__name__)

TRAINERS = ("ph", "pfph", "stm", "rmse", "fixed")
FORECAST_COLUMNS = ("day", "hour", "node", "provider", "forecast_net_load", "forecast_wind")
ACTUAL_COLUMNS = ("day", "hour", "node", "net_load", "wind")


class DataError(ValueError):
    """Malformed input file; ``where`` locates the problem (field path or line)."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read file: {exc}", str(path)) from exc
    except UnicodeDecodeError as exc:
        raise DataError("file is not UTF-8 text", str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from exc


def _number(v, where, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DataError(f"expected a number, got {v!r}", where)
    if not math.isfinite(v):
        raise DataError("value must be finite", where)
    if integer:
        if float(v) != int(v):
            raise DataError(f"expected an integer, got {v!r}", where)
        return int(v)
    return float(v)


def _record(cls, raw, where, numeric, integer=()):
    if not isinstance(raw, dict):
        raise DataError("expected an object", where)
    allowed = {f.name for f in fields(cls)}
    extra = set(raw) - allowed
    if extra:
        raise DataError(f"unknown field(s) {sorted(extra)}", where)
    kw = {}
    for f in fields(cls):
        if f.name not in raw:
            if f.default is MISSING and f.default_factory is MISSING:
                raise DataError(f"missing required field {f.name!r}", where)
            continue
        v = raw[f.name]
        if f.name in numeric:
            kw[f.name] = _number(v, f"{where}.{f.name}", f.name in integer)
        else:
            if not isinstance(v, (str, int)) or isinstance(v, bool):
                raise DataError(f"expected an id string, got {v!r}", f"{where}.{f.name}")
            kw[f.name] = str(v)
    return cls(**kw)


def grid_from_dict(doc) -> Grid:
    if not isinstance(doc, dict):
        raise DataError("grid document must be an object", "$")
    extra = set(doc) - {"reference", "base_mva", "nodes", "lines", "generators"}
    if extra:
        raise DataError(f"unknown field(s) {sorted(extra)}", "$")
    for key in ("reference", "nodes"):
        if key not in doc:
            raise DataError(f"missing required field {key!r}", "$")
    lists = {}
    for key in ("nodes", "lines", "generators"):
        v = doc.get(key, [])
        if not isinstance(v, list):
            raise DataError("expected a list", key)
        lists[key] = v
    ids = [n.get("id") if isinstance(n, dict) else None for n in lists["nodes"]]
    seen = set()
    for k, i in enumerate(ids):
        if i is not None and str(i) in seen:
            raise DataError(f"duplicate node id {str(i)!r}", f"nodes[{k}].id")
        if i is not None:
            seen.add(str(i))
    nodes = [_record(Node, n, f"nodes[{k}]", {"shed_cost", "curtail_cost", "wind_capacity"})
             for k, n in enumerate(lists["nodes"])]
    lines = [_record(Line, ln, f"lines[{k}]", {"susceptance", "capacity"})
             for k, ln in enumerate(lists["lines"])]
    gnum = {f.name for f in fields(GeneratorParams)} - {"id", "node"}
    gens = [_record(GeneratorParams, g, f"generators[{k}]", gnum,
                    {"min_up", "min_down", "initial_status"})
            for k, g in enumerate(lists["generators"])]
    ref = doc["reference"]
    if not isinstance(ref, (str, int)) or isinstance(ref, bool):
        raise DataError("reference must be a node id", "reference")
    base = _number(doc.get("base_mva", 100.0), "base_mva")
    try:
        return Grid(nodes, lines, gens, reference=str(ref), base_mva=base)
    except GridError as exc:
        raise DataError(str(exc), exc.field) from exc


def grid_to_dict(grid: Grid) -> dict:
    return dict(reference=grid.reference, base_mva=grid.base_mva,
                nodes=[asdict(n) for n in grid.nodes],
                lines=[asdict(ln) for ln in grid.lines],
                generators=[asdict(g) for g in grid.generators])


def load_grid(path) -> Grid:
    return grid_from_dict(_read_json(path))


def save_grid(grid: Grid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(grid_to_dict(grid), indent=2) + "\n", encoding="utf-8")
    return path


def _read_csv(path, required, optional=()):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise DataError(f"missing column(s) {missing}", f"{path}:1")
            rows = []
            for row in reader:
                if None in row or any(row.get(c) is None for c in required):
                    raise DataError("wrong number of cells", f"{path}:{reader.line_num}")
                rows.append((reader.line_num, row))
            return rows, [c for c in optional if c in header]
    except OSError as exc:
        raise DataError(f"cannot read file: {exc}", str(path)) from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"unreadable CSV: {exc}", str(path)) from exc


def _cell_float(row, col, where):
    try:
        v = float(row[col])
    except (TypeError, ValueError):
        raise DataError(f"column {col!r} is not a number: {row[col]!r}", where) from None
    if not math.isfinite(v):
        raise DataError(f"column {col!r} must be finite", where)
    return v


def _cell_int(row, col, where):
    try:
        return int(row[col])
    except (TypeError, ValueError):
        raise DataError(f"column {col!r} is not an integer: {row[col]!r}", where) from None


def load_timeseries(path, actuals_path, providers=None, horizon: int | None = None,
                    nodes=None) -> list[ScenarioDay]:
    """Read forecasts and realisations into one :class:`ScenarioDay` per day.

    ``providers`` and ``nodes`` fix the ordering (defaults: order of first
    appearance). ``horizon`` is checked if given.
    """
    frows, _ = _read_csv(path, FORECAST_COLUMNS)
    arows, opt = _read_csv(actuals_path, ACTUAL_COLUMNS[:4], ("wind",))
    has_wind = "wind" in opt
    if not has_wind:
        log.warning("%s has no wind column; realised wind defaults to 0", actuals_path)

    def order(values, given):
        if given is not None:
            return [str(v) for v in given]
        out = []
        for v in values:
            if v not in out:
                out.append(v)
        return out

    prov = order([r["provider"] for _, r in frows], providers)
    node = order([r["node"] for _, r in frows] + [r["node"] for _, r in arows], nodes)
    if not prov:
        raise DataError("no forecast rows", str(path))
    pidx = {p: k for k, p in enumerate(prov)}
    nidx = {n: i for i, n in enumerate(node)}

    fc = {}
    for line, r in frows:
        where = f"{path}:{line}"
        key = (_cell_int(r, "day", where), _cell_int(r, "hour", where), r["node"], r["provider"])
        if r["provider"] not in pidx:
            continue
        if r["node"] not in nidx:
            raise DataError(f"unknown node {r['node']!r}", where)
        if key in fc:
            raise DataError(f"duplicate cell day={key[0]} hour={key[1]} node={key[2]} provider={key[3]}", where)
        fl = _cell_float(r, "forecast_net_load", where)
        fw = _cell_float(r, "forecast_wind", where)
        if fw < 0:
            raise DataError("forecast_wind must be >= 0", where)
        fc[key] = (fl, fw)
    ac = {}
    for line, r in arows:
        where = f"{actuals_path}:{line}"
        key = (_cell_int(r, "day", where), _cell_int(r, "hour", where), r["node"])
        if r["node"] not in nidx:
            raise DataError(f"unknown node {r['node']!r}", where)
        if key in ac:
            raise DataError(f"duplicate cell day={key[0]} hour={key[1]} node={key[2]}", where)
        w = _cell_float(r, "wind", where) if has_wind and r.get("wind") not in (None, "") else 0.0
        if w < 0:
            raise DataError("wind must be >= 0", where)
        ac[key] = (_cell_float(r, "net_load", where), w)

    day_ids = sorted({k[0] for k in fc} | {k[0] for k in ac})
    K, N = len(prov), len(node)
    out = []
    T_seen = None
    for d in day_ids:
        hours = {k[1] for k in fc if k[0] == d} | {k[1] for k in ac if k[0] == d}
        T = max(hours)
        if min(hours) < 1:
            raise DataError(f"day {d} has hour {min(hours)}; hours start at 1", str(path))
        if horizon is not None and T != horizon:
            raise DataError(f"day {d} has {T} hours, expected {horizon}", str(path))
        if T_seen is not None and T != T_seen:
            raise DataError(f"day {d} has {T} hours but earlier days have {T_seen}", str(path))
        T_seen = T
        FL = np.zeros((K, N, T))
        FW = np.zeros((K, N, T))
        AL = np.zeros((N, T))
        AW = np.zeros((N, T))
        for t in range(1, T + 1):
            for i, n in enumerate(node):
                for k, p in enumerate(prov):
                    cell = fc.get((d, t, n, p))
                    if cell is None:
                        raise DataError(f"missing forecast cell day={d} hour={t} node={n} provider={p}", str(path))
                    FL[k, i, t - 1], FW[k, i, t - 1] = cell
                cell = ac.get((d, t, n))
                if cell is None:
                    raise DataError(f"missing realisation cell day={d} hour={t} node={n}", str(actuals_path))
                AL[i, t - 1], AW[i, t - 1] = cell
        out.append(ScenarioDay(day=d, forecast_load=FL, forecast_wind=FW, actual_load=AL,
                               actual_wind=AW, meta=dict(providers=prov, nodes=node)))
    return out


def save_timeseries(days, path, actuals_path, providers=None, nodes=None):
    """Write forecasts and realisations in the layout :func:`load_timeseries` reads."""
    days = list(days)
    K, N = days[0].K, days[0].N
    providers = [str(p) for p in (providers or [str(k + 1) for k in range(K)])]
    nodes = [str(n) for n in (nodes or [str(i + 1) for i in range(N)])]
    for p in (Path(path), Path(actuals_path)):
        p.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_COLUMNS)
        for d in days:
            for t in range(d.T):
                for i in range(N):
                    for k in range(K):
                        w.writerow([d.day, t + 1, nodes[i], providers[k],
                                    repr(float(d.forecast_load[k, i, t])), repr(float(d.forecast_wind[k, i, t]))])
    with open(actuals_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACTUAL_COLUMNS)
        for d in days:
            for t in range(d.T):
                for i in range(N):
                    w.writerow([d.day, t + 1, nodes[i], repr(float(d.actual_load[i, t])),
                                repr(float(d.actual_wind[i, t]))])
    return Path(path), Path(actuals_path)


@dataclass(frozen=True)
class PowerCurve:
    """Piecewise-linear turbine curve: (wind speed m/s, fraction of capacity) knots.

    Output is zero below the first knot (cut-in) and above the last (cut-out).
    """

    knots: tuple

    def __post_init__(self):
        k = tuple((float(s), float(f)) for s, f in self.knots)
        if len(k) < 2:
            raise DataError("a power curve needs at least two knots", "knots")
        s = np.array([a for a, _ in k])
        f = np.array([b for _, b in k])
        if np.any(np.diff(s) <= 0):
            raise DataError("knot speeds must be strictly increasing", "knots")
        if s[0] < 0 or np.any((f < 0) | (f > 1)):
            raise DataError("speeds must be >= 0 and fractions in [0, 1]", "knots")
        object.__setattr__(self, "knots", k)

    @property
    def cut_in(self) -> float:
        return self.knots[0][0]

    @property
    def cut_out(self) -> float:
        return self.knots[-1][0]

    @property
    def rated(self) -> float:
        f = [b for _, b in self.knots]
        return self.knots[int(np.argmax(f))][0]


def wind_speed_to_power(speeds, curve: PowerCurve, capacity: float) -> np.ndarray:
    v = np.asarray(speeds, dtype=float)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise DataError("wind speeds must be finite and >= 0", "speeds")
    if capacity < 0:
        raise DataError("capacity must be >= 0", "capacity")
    s = np.array([a for a, _ in curve.knots])
    f = np.array([b for _, b in curve.knots])
    return np.clip(capacity * np.interp(v, s, f, left=0.0, right=0.0), 0.0, capacity)


@dataclass
class RunConfig:
    grid: str = ""
    series: str = ""
    actuals: str = ""
    providers: list | None = None
    trainer: str = "ph"
    weights: list | None = None
    train_days: list = field(default_factory=list)
    test_days: list = field(default_factory=list)
    out: str = "out"
    rho: float = 25000.0
    eps: float = 1e-5
    dprime: int | None = None
    variant: str = "relaxed"
    segments: int = 32
    max_iter: int = 500
    parallelism: int = 1
    seed: int = 0
    big_m: float | None = None
    solver_command: str | None = None
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.trainer not in TRAINERS:
            raise DataError(f"trainer must be one of {', '.join(TRAINERS)} (got {self.trainer!r})", "trainer")
        if self.trainer == "fixed" and not self.weights:
            raise DataError("trainer 'fixed' needs a 'weights' list", "weights")
        if self.variant not in ("relaxed", "binary"):
            raise DataError("variant must be 'relaxed' or 'binary'", "variant")
        if not self.rho > 0 or not self.eps > 0:
            raise DataError("rho and eps must be > 0", "rho")
        if self.dprime is not None and self.dprime < 1:
            raise DataError("dprime must be >= 1", "dprime")
        if self.segments < 1 or self.max_iter < 1 or self.parallelism < 1:
            raise DataError("segments, max_iter and parallelism must be >= 1", "segments")
        overlap = set(self.train_days) & set(self.test_days)
        if overlap:
            raise DataError(f"train and test days overlap: {sorted(overlap)}", "test_days")

    def path(self, name: str) -> Path:
        p = Path(getattr(self, name))
        return p if p.is_absolute() else Path(self.base_dir) / p

    def resolved_dprime(self, D: int) -> int:
        return math.ceil(D / 3) if self.dprime is None else int(self.dprime)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


_INT_FIELDS = {"dprime", "segments", "max_iter", "parallelism", "seed"}
_FLOAT_FIELDS = {"rho", "eps", "big_m"}
_NULLABLE = {"providers", "weights", "dprime", "big_m", "solver_command"}


def config_from_dict(doc, base_dir=".") -> RunConfig:
    if not isinstance(doc, dict):
        raise DataError("config must be an object", "$")
    allowed = {f.name for f in fields(RunConfig)} - {"base_dir"}
    extra = set(doc) - allowed
    if extra:
        raise DataError(f"unknown field(s) {sorted(extra)}", "$")
    kw = {}
    for k, v in doc.items():
        if v is None:
            if k not in _NULLABLE:
                raise DataError("value must not be null", k)
            kw[k] = None
        elif k in _INT_FIELDS:
            kw[k] = _number(v, k, integer=True)
        elif k in _FLOAT_FIELDS:
            kw[k] = _number(v, k)
        elif k in ("train_days", "test_days"):
            if not isinstance(v, list):
                raise DataError("expected a list of day ids", k)
            kw[k] = [_number(x, f"{k}[{i}]", integer=True) for i, x in enumerate(v)]
        elif k == "weights":
            if not isinstance(v, list):
                raise DataError("expected a list of numbers", k)
            kw[k] = [_number(x, f"{k}[{i}]") for i, x in enumerate(v)]
        elif k == "providers":
            if not isinstance(v, list):
                raise DataError("expected a list of provider ids", k)
            kw[k] = [str(x) for x in v]
        else:
            if not isinstance(v, str):
                raise DataError(f"expected a string, got {v!r}", k)
            kw[k] = v
    if kw.get("trainer", "ph") in ("", None):
        raise DataError(f"trainer must be one of {', '.join(TRAINERS)}", "trainer")
    return RunConfig(**kw, base_dir=str(base_dir))


def load_config(path) -> RunConfig:
    path = Path(path)
    return config_from_dict(_read_json(path), base_dir=path.parent)


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


__all__ = [
    "DataError", "TRAINERS", "load_grid", "save_grid", "grid_from_dict", "grid_to_dict",
    "load_timeseries", "save_timeseries", "PowerCurve", "wind_speed_to_power",
    "RunConfig", "config_from_dict", "load_config", "save_config",
]
