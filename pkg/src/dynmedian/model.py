"""MILP intermediate representation, the deterministic model builder, and
schedule evaluation.

Variable names are 0-based: ``x_i_j_t`` (share of demand of ``i`` served
from ``j`` on day ``t``), ``y_j_t`` (store at ``j`` on day ``t``), and the
transition helpers ``a_j_t`` (closing between ``t`` and ``t+1``) and
``b_j_t`` (opening). Transitions are only charged between consecutive days,
so the day-0 configuration is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .instance import Instance, require_valid

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float


@dataclass(frozen=True)
class LinearModel:
    """Sparse minimization MILP."""

    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[int, float], ...]
    objective_constant: float = 0.0
    name: str = "model"

    def index(self) -> dict[str, int]:
        return {v.name: k for k, v in enumerate(self.variables)}

    def check(self) -> list[str]:
        """Return every violated well-formedness rule."""
        problems = []
        n = len(self.variables)
        names = [v.name for v in self.variables]
        if len(set(names)) != n:
            problems.append("duplicate variable names")
        if len({c.name for c in self.constraints}) != len(self.constraints):
            problems.append("duplicate constraint names")
        for v in self.variables:
            if v.kind not in (CONTINUOUS, BINARY):
                problems.append(f"{v.name}: unknown kind {v.kind}")
            if not v.lower <= v.upper:
                problems.append(f"{v.name}: lower > upper")
            if v.kind == BINARY and (v.lower, v.upper) != (0.0, 1.0):
                problems.append(f"{v.name}: binary with bounds ({v.lower}, {v.upper})")
        for c in self.constraints:
            if c.sense not in SENSES:
                problems.append(f"{c.name}: bad sense {c.sense}")
            if any(not 0 <= j < n for j, _ in c.terms):
                problems.append(f"{c.name}: term references undeclared variable")
        if any(not 0 <= j < n for j, _ in self.objective):
            problems.append("objective references undeclared variable")
        return problems

    def objective_value(self, point: Sequence[float]) -> float:
        return math.fsum([coef * point[j] for j, coef in self.objective] + [self.objective_constant])

    def max_violation(self, point: Sequence[float]) -> float:
        """Largest constraint or bound violation at ``point``."""
        worst = 0.0
        for c in self.constraints:
            lhs = math.fsum(coef * point[j] for j, coef in c.terms)
            if c.sense == "<=":
                worst = max(worst, lhs - c.rhs)
            elif c.sense == ">=":
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        for v, val in zip(self.variables, point):
            worst = max(worst, v.lower - val, val - v.upper)
        return worst


class ModelBuilder:
    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: list[tuple[int, float]] = []
        self.objective_constant = 0.0

    def add_var(self, name, kind=CONTINUOUS, lower=0.0, upper=math.inf, obj=0.0) -> int:
        if kind == BINARY:
            lower, upper = 0.0, 1.0
        self.variables.append(Variable(name, kind, float(lower), float(upper)))
        idx = len(self.variables) - 1
        if obj:
            self.objective.append((idx, float(obj)))
        return idx

    def add_constraint(self, name, terms: Iterable[tuple[int, float]], sense, rhs) -> None:
        kept = tuple((int(j), float(a)) for j, a in terms if a != 0)
        self.constraints.append(Constraint(name, kept, sense, float(rhs)))

    def build(self) -> LinearModel:
        return LinearModel(
            tuple(self.variables), tuple(self.constraints), tuple(self.objective), self.objective_constant, self.name
        )


@dataclass
class Layout:
    """Variable indices of the deterministic model, for mapping solutions
    to model points."""

    x: np.ndarray  # (B, B, T)
    y: np.ndarray  # (B, T)
    a: np.ndarray  # (B, T - 1) or (B, T) when padded
    b: np.ndarray


def _build(instance: Instance, pad_transitions: bool, service: bool, name: str):
    require_valid(instance)
    n, T = instance.n_locations, instance.horizon
    c, d = instance.cost, instance.demand
    mb = ModelBuilder(name)
    x = np.empty((n, n, T), dtype=int)
    for i in range(n):
        for j in range(n):
            for t in range(T):
                w = d[i, t] * c[i, j] if service else 0.0
                x[i, j, t] = mb.add_var(f"x_{i}_{j}_{t}", obj=w)
    y = np.array([[mb.add_var(f"y_{j}_{t}", BINARY) for t in range(T)] for j in range(n)], dtype=int).reshape(n, T)
    n_trans = T if pad_transitions else T - 1
    a = np.empty((n, n_trans), dtype=int)
    b = np.empty((n, n_trans), dtype=int)
    for j in range(n):
        for t in range(n_trans):
            live = t < T - 1
            a[j, t] = mb.add_var(f"a_{j}_{t}", obj=instance.close_cost if live else 0.0)
            b[j, t] = mb.add_var(f"b_{j}_{t}", obj=instance.open_cost if live else 0.0)

    for i in range(n):
        for t in range(T):
            mb.add_constraint(f"as_{i}_{t}", ((x[i, j, t], 1.0) for j in range(n)), "=", 1.0)
    for t in range(T):
        mb.add_constraint(f"fl_{t}", ((y[j, t], 1.0) for j in range(n)), "=", instance.fleet_size)
    for i in range(n):
        for j in range(n):
            for t in range(T):
                mb.add_constraint(f"lk_{i}_{j}_{t}", ((x[i, j, t], 1.0), (y[j, t], -1.0)), "<=", 0.0)
    for j in range(n):
        for t in range(T - 1):
            mb.add_constraint(f"cl_{j}_{t}", ((y[j, t], 1.0), (y[j, t + 1], -1.0), (a[j, t], -1.0)), "<=", 0.0)
            mb.add_constraint(f"op_{j}_{t}", ((y[j, t + 1], 1.0), (y[j, t], -1.0), (b[j, t], -1.0)), "<=", 0.0)
    for k, g in enumerate(instance.groups):
        for t in range(T):
            terms = [(y[j, t], 1.0) for j in g.members]
            mb.add_constraint(f"gx_{k}_{t}", terms, "<=", g.max_open)
            mb.add_constraint(f"gn_{k}_{t}", terms, ">=", g.min_open)
    return mb, Layout(x, y, a, b)


def build_deterministic(instance: Instance, pad_transitions: bool = False) -> LinearModel:
    """Build the deterministic MILP.

    Counts without padding: ``B^2 T`` x, ``B T`` y and ``2 B (T-1)`` a/b
    variables. ``pad_transitions=True`` also declares (unused, cost-free)
    a/b variables for the last day, which is the convention under which the
    91-building, 28-day campus has 239,512 variables.
    """
    mb, _ = _build(instance, pad_transitions, True, "dms_pmp")
    return mb.build()


def deterministic_layout(instance: Instance, pad_transitions: bool = False) -> Layout:
    n, T = instance.n_locations, instance.horizon
    n_trans = T if pad_transitions else T - 1
    x = np.arange(n * n * T).reshape(n, n, T)
    y = n * n * T + np.arange(n * T).reshape(n, T)
    ab = n * n * T + n * T + np.arange(2 * n * n_trans).reshape(n, n_trans, 2)
    return Layout(x, y, ab[..., 0], ab[..., 1])


def model_counts(n_locations: int, horizon: int, n_groups: int, pad_transitions: bool = False) -> dict[str, int]:
    """Closed-form variable and constraint counts of the deterministic model."""
    n, T = n_locations, horizon
    n_trans = T if pad_transitions else T - 1
    variables = n * n * T + n * T + 2 * n * n_trans
    constraints = n * T + T + n * n * T + 2 * n * (T - 1) + 2 * n_groups * T
    return {"variables": variables, "constraints": constraints}


# ---------------------------------------------------------------------------
# solutions


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Solution:
    open: np.ndarray  # bool (B, T)
    assign: np.ndarray  # float (B, B, T)
    opened: np.ndarray  # b, (B, T-1)
    closed: np.ndarray  # a, (B, T-1)
    service_cost: float
    open_cost_total: float
    close_cost_total: float
    meta: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return math.fsum((self.service_cost, self.open_cost_total, self.close_cost_total))

    @property
    def breakdown(self) -> dict[str, float]:
        return {
            "service_cost": self.service_cost,
            "open_cost": self.open_cost_total,
            "close_cost": self.close_cost_total,
        }

    def open_sets(self) -> list[tuple[int, ...]]:
        return [tuple(np.flatnonzero(self.open[:, t]).tolist()) for t in range(self.open.shape[1])]

    def assigned_to(self) -> np.ndarray:
        """Facility serving each (i, t), shape (B, T)."""
        return self.assign.argmax(axis=1)


def schedule_from_sets(n_locations: int, sets: Sequence[Iterable[int]]) -> np.ndarray:
    y = np.zeros((n_locations, len(sets)), dtype=bool)
    for t, s in enumerate(sets):
        y[list(s), t] = True
    return y


def check_schedule(instance: Instance, open_: np.ndarray) -> list[str]:
    """Violations of the fleet and group constraints, one message per day."""
    y = np.asarray(open_, dtype=bool)
    n, T = instance.n_locations, instance.horizon
    if y.shape != (n, T):
        return [f"schedule shape {y.shape} is not {n}x{T}"]
    out = []
    counts = y.sum(axis=0)
    for t in np.flatnonzero(counts != instance.fleet_size):
        out.append(f"day {t}: {counts[t]} stores open, expected {instance.fleet_size}")
    for g in instance.groups:
        per_day = y[list(g.members)].sum(axis=0)
        for t in np.flatnonzero((per_day < g.min_open) | (per_day > g.max_open)):
            out.append(f"day {t}: group {g.id} has {per_day[t]} open, bounds [{g.min_open}, {g.max_open}]")
    return out


def nearest_open(cost: np.ndarray, open_: np.ndarray) -> np.ndarray:
    """Index of the cheapest open facility per (i, t); ties go to the lowest index."""
    masked = np.where(open_[None, :, :], cost[:, :, None], np.inf)
    return masked.argmin(axis=1)


def transitions(open_: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tight (closed, opened) indicators between consecutive days."""
    y = open_.astype(np.int8)
    closed = np.maximum(0, y[:, :-1] - y[:, 1:]).astype(float)
    opened = np.maximum(0, y[:, 1:] - y[:, :-1]).astype(float)
    return closed, opened


def evaluate(instance: Instance, open_) -> Solution:
    """Complete a store schedule with its optimal assignment and cost.

    Every location is served entirely by its cheapest open facility, so the
    assignment is 0/1. Service cost is accumulated with ``math.fsum``.
    """
    y = np.asarray(open_, dtype=bool)
    problems = check_schedule(instance, y)
    if problems:
        raise ScheduleError("; ".join(problems))
    n, T = y.shape
    choice = nearest_open(instance.cost, y)
    assign = np.zeros((n, n, T))
    ii, tt = np.meshgrid(np.arange(n), np.arange(T), indexing="ij")
    assign[ii, choice, tt] = 1.0
    unit = instance.cost[ii, choice]
    service = math.fsum((instance.demand * unit).ravel().tolist())
    closed, opened = transitions(y)
    return Solution(
        open=y,
        assign=assign,
        opened=opened,
        closed=closed,
        service_cost=service,
        open_cost_total=instance.open_cost * float(opened.sum()),
        close_cost_total=instance.close_cost * float(closed.sum()),
    )


def solution_point(instance: Instance, solution: Solution, pad_transitions: bool = False) -> np.ndarray:
    """Variable vector of :func:`build_deterministic` matching ``solution``."""
    lay = deterministic_layout(instance, pad_transitions)
    n, T = instance.n_locations, instance.horizon
    n_trans = T if pad_transitions else T - 1
    point = np.zeros(n * n * T + n * T + 2 * n * n_trans)
    point[lay.x.ravel()] = solution.assign.ravel()
    point[lay.y.ravel()] = solution.open.astype(float).ravel()
    T1 = instance.horizon - 1
    point[lay.a[:, :T1].ravel()] = solution.closed.ravel()
    point[lay.b[:, :T1].ravel()] = solution.opened.ravel()
    return point


def solution_from_point(instance: Instance, point: Sequence[float], pad_transitions: bool = False) -> Solution:
    """Read the store schedule from a model point and re-evaluate it."""
    lay = deterministic_layout(instance, pad_transitions)
    y = np.asarray(point)[lay.y] > 0.5
    return evaluate(instance, y)


def check_solution(instance: Instance, solution: Solution, tol: float = 1e-9) -> list[str]:
    """All violated solution invariants (assignment, linking, transitions, bounds)."""
    out = check_schedule(instance, solution.open)
    if out:
        return out
    x, y = solution.assign, solution.open
    if np.any(np.abs(x.sum(axis=1) - 1.0) > tol):
        out.append("some demand is not fully assigned")
    if np.any((x > tol) & ~y[None, :, :]):
        out.append("demand assigned to a closed facility")
    if np.any(x < -tol):
        out.append("negative assignment")
    closed, opened = transitions(y)
    if not (np.array_equal(closed, solution.closed) and np.array_equal(opened, solution.opened)):
        out.append("transition indicators are not tight")
    return out
