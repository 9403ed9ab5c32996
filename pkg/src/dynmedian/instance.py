"""Problem data for the dynamic p-median model.

An :class:`Instance` bundles candidate sites (which double as demand nodes),
a day-indexed demand matrix, a square travel-cost matrix, the fleet size and
the group cardinality rules. Instances are immutable; use
:func:`dataclasses.replace` to derive variants.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")


class InvalidInstanceError(ValueError):
    """Raised by solvers that receive an instance failing :func:`validate`."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("invalid instance: " + "; ".join(report.violations))


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Group:
    id: str
    members: tuple[int, ...]
    min_open: int
    max_open: int

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted(int(m) for m in self.members)))
        object.__setattr__(self, "min_open", int(self.min_open))
        object.__setattr__(self, "max_open", int(self.max_open))


@dataclass(frozen=True, eq=False)
class Instance:
    """A dynamic p-median instance.

    ``cost[i, j]`` is the unit cost of serving location ``i`` from a store at
    ``j``; ``demand[i, t]`` is the demand of ``i`` on day ``t`` (0-based).
    Constructing an instance never raises on modelling errors; call
    :func:`validate` for diagnostics.
    """

    locations: tuple[str, ...]
    horizon: int
    fleet_size: int
    cost: np.ndarray
    demand: np.ndarray
    open_cost: float
    close_cost: float
    groups: tuple[Group, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(str(n) for n in self.locations))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "fleet_size", int(self.fleet_size))
        object.__setattr__(self, "cost", _frozen_array(self.cost))
        object.__setattr__(self, "demand", _frozen_array(self.demand))
        object.__setattr__(self, "open_cost", float(self.open_cost))
        object.__setattr__(self, "close_cost", float(self.close_cost))
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    def group_matrix(self) -> np.ndarray:
        """Boolean membership matrix of shape (locations, groups)."""
        mat = np.zeros((self.n_locations, len(self.groups)), dtype=bool)
        for k, g in enumerate(self.groups):
            mat[list(g.members), k] = True
        return mat

    def group_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([g.min_open for g in self.groups], dtype=int)
        hi = np.array([g.max_open for g in self.groups], dtype=int)
        return lo, hi

    def weights(self) -> np.ndarray:
        """Demand-weighted service costs ``w[i, j, t] = d[i, t] * c[i, j]``."""
        return self.demand[:, None, :] * self.cost[:, :, None]

    def with_horizon(self, horizon: int) -> "Instance":
        """Truncate or cyclically extend the demand to ``horizon`` days."""
        cols = np.arange(horizon) % self.demand.shape[1]
        return replace(self, horizon=horizon, demand=self.demand[:, cols])

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.locations == other.locations
            and self.horizon == other.horizon
            and self.fleet_size == other.fleet_size
            and self.open_cost == other.open_cost
            and self.close_cost == other.close_cost
            and self.groups == other.groups
            and self.cost.shape == other.cost.shape
            and self.demand.shape == other.demand.shape
            and bool(np.array_equal(self.cost, other.cost))
            and bool(np.array_equal(self.demand, other.demand))
        )

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(instance: Instance) -> ValidationReport:
    """Check every structural assumption of the model; never raises."""
    out: list[str] = []
    n = instance.n_locations
    horizon, p = instance.horizon, instance.fleet_size

    if n < 1:
        out.append("no locations")
    if horizon < 1:
        out.append(f"horizon {horizon} < 1")
    if p < 1:
        out.append(f"fleet_size {p} < 1")
    elif p > n:
        out.append(f"fleet_size {p} exceeds location count {n}")

    c = instance.cost
    if c.shape != (n, n):
        out.append(f"cost shape {c.shape} is not {n}x{n}")
    else:
        if not np.all(np.isfinite(c)):
            out.append("cost has non-finite entries")
        elif np.any(c < 0):
            out.append("cost has negative entries")
        if np.any(np.diag(c) != 0):
            out.append("cost diagonal is not zero")

    d = instance.demand
    if d.shape != (n, horizon):
        out.append(f"demand shape {d.shape} is not {n}x{horizon}")
    elif not np.all(np.isfinite(d)) or np.any(d < 0):
        out.append("demand has negative or non-finite entries")

    if instance.open_cost < 0 or not math.isfinite(instance.open_cost):
        out.append(f"open_cost {instance.open_cost} is negative or non-finite")
    if instance.close_cost < 0 or not math.isfinite(instance.close_cost):
        out.append(f"close_cost {instance.close_cost} is negative or non-finite")

    covered = set()
    for g in instance.groups:
        if not g.members:
            out.append(f"group {g.id}: no members")
        bad = [m for m in g.members if not 0 <= m < n]
        if bad:
            out.append(f"group {g.id}: members out of range {bad}")
        if len(set(g.members)) != len(g.members):
            out.append(f"group {g.id}: duplicate members")
        if g.min_open < 0:
            out.append(f"group {g.id}: min_open {g.min_open} < 0")
        if g.min_open > g.max_open:
            out.append(f"group {g.id}: min_open {g.min_open} > max_open {g.max_open}")
        if g.max_open > len(set(g.members)):
            out.append(f"group {g.id}: max_open {g.max_open} exceeds member count {len(set(g.members))}")
        covered.update(g.members)
    if len({g.id for g in instance.groups}) != len(instance.groups):
        out.append("duplicate group ids")
    missing = sorted(set(range(n)) - covered)
    if missing:
        out.append(f"locations in no group: {missing}")

    lo = sum(g.min_open for g in instance.groups)
    hi = sum(g.max_open for g in instance.groups)
    if lo > p:
        out.append(f"fleet below group minima (sum n_k = {lo} > p = {p})")
    if hi < p:
        out.append(f"fleet above group maxima (sum m_k = {hi} < p = {p})")
    return ValidationReport(tuple(out))


def require_valid(instance: Instance) -> None:
    report = validate(instance)
    if not report.ok:
        raise InvalidInstanceError(report)


# ---------------------------------------------------------------------------
# campus-style data pipeline


@dataclass(frozen=True)
class SegmentProfile:
    """A functional segment of the campus: how many buildings, how many people,
    and the weekday utilization rates (percent, Monday first)."""

    name: str
    facility_count: int
    total_population: float
    utilization: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "utilization", tuple(float(u) for u in self.utilization))
        if self.facility_count < 1:
            raise ValueError(f"segment {self.name}: facility_count must be >= 1")
        if len(self.utilization) != 7:
            raise ValueError(f"segment {self.name}: need 7 utilization rates")
        if any(not 0 <= u <= 100 for u in self.utilization):
            raise ValueError(f"segment {self.name}: utilization outside [0, 100]")

    @property
    def per_facility(self) -> Fraction:
        return Fraction(self.total_population) / self.facility_count


def group_bounds(p: int, facility_count: int, total_facilities: int) -> tuple[int, int]:
    """Proportional store limits for a segment: floor of 70% and ceiling of
    130% of the segment's share of ``p``. Exact rational arithmetic."""
    if total_facilities <= 0:
        raise ValueError("total_facilities must be positive")
    if not 1 <= facility_count <= total_facilities:
        raise ValueError("need 1 <= facility_count <= total_facilities")
    if p < 1:
        raise ValueError("p must be >= 1")
    share = Fraction(p * facility_count, total_facilities)
    return math.floor(share * Fraction(7, 10)), math.ceil(share * Fraction(13, 10))


def build_demand(profile: SegmentProfile, day: int) -> float:
    """Per-building demand of ``profile`` on 1-based ``day`` (day 1 = Monday)."""
    if day < 1:
        raise ValueError("day is 1-based")
    rate = Fraction(profile.utilization[(day - 1) % 7]) / 100
    return float(rate * profile.per_facility)


def euclidean_costs(coordinates: Sequence[tuple[float, float]]) -> np.ndarray:
    pts = np.asarray(coordinates, dtype=float).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def build_campus_instance(
    profiles: Sequence[SegmentProfile],
    coordinates: Sequence[tuple[float, float]],
    p: int,
    horizon: int,
    open_cost: float,
    close_cost: float,
    names: Sequence[str] | None = None,
) -> Instance:
    """Assemble an instance from segment profiles.

    Facilities are assigned to segments in order: the first
    ``profiles[0].facility_count`` coordinates form segment 0, and so on.
    """
    total = sum(pr.facility_count for pr in profiles)
    if len(coordinates) != total:
        raise ValueError(f"got {len(coordinates)} coordinates for {total} facilities")
    demand = np.empty((total, horizon))
    groups = []
    start = 0
    for k, pr in enumerate(profiles):
        members = tuple(range(start, start + pr.facility_count))
        row = [build_demand(pr, t + 1) for t in range(horizon)]
        demand[start : start + pr.facility_count] = row
        lo, hi = group_bounds(p, pr.facility_count, total)
        groups.append(Group(pr.name, members, lo, hi))
        start += pr.facility_count
    if names is None:
        names = [f"{pr.name}-{i}" for pr in profiles for i in range(pr.facility_count)]
    return Instance(
        locations=tuple(names),
        horizon=horizon,
        fleet_size=p,
        cost=euclidean_costs(coordinates),
        demand=demand,
        open_cost=open_cost,
        close_cost=close_cost,
        groups=tuple(groups),
    )


# ---------------------------------------------------------------------------
# random instances


def _random_groups(rng: np.random.Generator, n: int, k: int, p: int) -> list[Group]:
    """Partition ``n`` locations into ``k`` nonempty groups with feasible bounds."""
    while True:
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        labels = rng.permutation(labels)
        sizes = np.bincount(labels, minlength=k)
        lo = np.array([rng.integers(0, min(s, p) + 1) for s in sizes])
        hi = np.array([rng.integers(l, s + 1) for l, s in zip(lo, sizes)])
        if lo.sum() <= p <= hi.sum():
            return [
                Group(f"g{g}", tuple(np.flatnonzero(labels == g).tolist()), int(lo[g]), int(hi[g]))
                for g in range(k)
            ]


def generate_random(
    seed: int,
    n_locations: int,
    n_groups: int,
    horizon: int,
    p: int,
    demand_period: int = 7,
    open_cost: float = 5.0,
    close_cost: float = 5.0,
    extent: float = 10.0,
    max_demand: float = 10.0,
) -> Instance:
    """Random Euclidean instance with periodic demand and a feasible partition.

    Sites are uniform in an ``extent`` x ``extent`` square; the demand pattern
    for one period is uniform on ``[0, max_demand]`` and is tiled over the
    horizon.
    """
    if min(n_locations, n_groups, horizon, p, demand_period) < 1:
        raise ValueError("all size parameters must be positive")
    if n_groups > n_locations:
        raise ValueError("more groups than locations")
    if p > n_locations:
        raise ValueError("p exceeds location count")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, extent, size=(n_locations, 2))
    pattern = rng.uniform(0.0, max_demand, size=(n_locations, demand_period))
    demand = pattern[:, np.arange(horizon) % demand_period]
    groups = _random_groups(rng, n_locations, n_groups, p)
    return Instance(
        locations=tuple(f"L{i}" for i in range(n_locations)),
        horizon=horizon,
        fleet_size=p,
        cost=euclidean_costs(coords),
        demand=demand,
        open_cost=open_cost,
        close_cost=close_cost,
        groups=tuple(groups),
    )


# ---------------------------------------------------------------------------
# serialization


def instance_to_dict(instance: Instance) -> dict:
    return {
        "horizon": instance.horizon,
        "fleet_size": instance.fleet_size,
        "open_cost": instance.open_cost,
        "close_cost": instance.close_cost,
        "locations": list(instance.locations),
        "cost": instance.cost.tolist(),
        "demand": instance.demand.tolist(),
        "groups": [
            {"id": g.id, "members": list(g.members), "min_open": g.min_open, "max_open": g.max_open}
            for g in instance.groups
        ],
    }


def instance_from_dict(data: dict) -> Instance:
    try:
        return Instance(
            locations=tuple(data["locations"]),
            horizon=data["horizon"],
            fleet_size=data["fleet_size"],
            cost=data["cost"],
            demand=data["demand"],
            open_cost=data["open_cost"],
            close_cost=data["close_cost"],
            groups=tuple(
                Group(g["id"], tuple(g["members"]), g["min_open"], g["max_open"]) for g in data["groups"]
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed instance document: {exc!r}") from exc


def dumps_instance(instance: Instance) -> str:
    """Canonical JSON text: fixed key order, one matrix row per line."""
    doc = instance_to_dict(instance)
    lines = ["{"]
    for key in ("horizon", "fleet_size", "open_cost", "close_cost", "locations"):
        lines.append(f'  "{key}": {json.dumps(doc[key])},')
    for key in ("cost", "demand"):
        rows = doc[key]
        lines.append(f'  "{key}": [')
        lines.extend(
            "    " + json.dumps(row) + ("," if r < len(rows) - 1 else "") for r, row in enumerate(rows)
        )
        lines.append("  ],")
    lines.append('  "groups": [')
    groups = doc["groups"]
    lines.extend("    " + json.dumps(g) + ("," if k < len(groups) - 1 else "") for k, g in enumerate(groups))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def write_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(instance), encoding="utf-8")


def read_instance(
    path: str | Path,
    demand_csv: str | Path | None = None,
    cost_csv: str | Path | None = None,
) -> Instance:
    """Read an instance JSON file; optional CSV files override the matrices."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if demand_csv is not None:
        data["demand"] = read_matrix_csv(demand_csv)
    if cost_csv is not None:
        data["cost"] = read_matrix_csv(cost_csv)
    return instance_from_dict(data)


def read_matrix_csv(path: str | Path) -> list[list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [[float(v) for v in row] for row in csv.reader(fh) if row]


def matrix_to_csv(matrix: Iterable[Iterable[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in matrix:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
