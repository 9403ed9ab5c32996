"""Budget-of-uncertainty robust optimization.

Generic part: the protection function of a row with uncertain coefficients,
its LP-dual reformulation (one multiplier for the budget, one per uncertain
coefficient), and the normal-approximation bound on the probability that a
protected row is violated.

Model part: demand ``d = nominal + deviation * xi`` with ``|xi| <= 1`` and
``sum |xi| <= budget`` taken over all (location, day) entries at once. The
robust model minimizes the worst-case service cost plus transition costs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from . import exact
from .instance import Instance, require_valid
from .milp import solve_model
from .model import (
    Constraint,
    Layout,
    LinearModel,
    Solution,
    Variable,
    _build,
    evaluate,
    schedule_from_sets,
)


class DomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# generic theory


def protection(values: Sequence[float], budget: float) -> float:
    """Worst total deviation when at most ``budget`` (possibly fractional)
    of the magnitudes ``values`` move to their extreme.

    Sum of the ``floor(budget)`` largest values plus the fractional part of
    the budget times the next largest.
    """
    vals = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
    if np.any(vals < 0):
        raise DomainError("magnitudes must be nonnegative")
    if budget < 0 or budget > len(vals):
        raise DomainError(f"budget {budget} outside [0, {len(vals)}]")
    k = int(math.floor(budget))
    frac = budget - k
    parts = vals[:k].tolist()
    if frac > 0:
        parts.append(frac * vals[k])
    return math.fsum(parts)


def violation_bound(budget: float, n_uncertain: int) -> float:
    """``1 - Phi((budget - 1) / sqrt(n))`` for a standard normal ``Phi``.

    Evaluated as ``erfc(z / sqrt(2)) / 2`` (``math.erfc``, accurate to a few
    ulp), which avoids cancellation in the upper tail.
    """
    if n_uncertain < 1:
        raise DomainError("need at least one uncertain coefficient")
    z = (budget - 1.0) / math.sqrt(n_uncertain)
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class RobustRow:
    """Dual-reformulated row: ``variables`` are appended after the base model's
    (budget multiplier first, then one per uncertain coefficient);
    ``constraints[0]`` is the protected row, the rest link the multipliers to
    the uncertain terms."""

    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    budget: float
    deviations: tuple[tuple[int, float], ...]
    first_index: int


def robustify_row(
    model: LinearModel, row: int | str, deviations: Mapping[int, float], budget: float, prefix: str | None = None
) -> RobustRow:
    """Robust counterpart of one ``<=`` or ``>=`` row of ``model``.

    Adds ``beta >= 0`` and ``mu_j >= 0`` with
    ``sum a_j x_j + budget * beta + sum mu_j <= b`` and
    ``beta + mu_j >= dev_j * x_j``. All uncertain variables must be
    nonnegative.
    """
    if isinstance(row, str):
        row = [c.name for c in model.constraints].index(row)
    con = model.constraints[row]
    devs = {int(j): float(v) for j, v in deviations.items() if v != 0}
    present = {j for j, _ in con.terms}
    absent = sorted(set(devs) - present)
    if absent:
        raise DomainError(f"row {con.name}: deviations on absent coefficients {absent}")
    if any(v < 0 for v in devs.values()):
        raise DomainError("deviations must be nonnegative")
    if not 0 <= budget <= len(devs) and devs:
        raise DomainError(f"budget {budget} outside [0, {len(devs)}]")
    base = len(model.variables)
    if not devs:
        return RobustRow((), (con,), budget, (), base)
    if con.sense == "=":
        raise DomainError(f"row {con.name}: equality rows cannot carry uncertainty")
    for j in devs:
        if model.variables[j].lower < 0:
            raise DomainError(f"variable {model.variables[j].name} may be negative")
    sign = 1.0 if con.sense == "<=" else -1.0
    prefix = prefix or con.name
    order = sorted(devs)
    beta = base
    variables = [Variable(f"beta_{prefix}")]
    mu = {}
    for k, j in enumerate(order):
        mu[j] = base + 1 + k
        variables.append(Variable(f"mu_{prefix}_{k}"))
    main_terms = [(j, sign * a) for j, a in con.terms] + [(beta, float(budget))] + [(mu[j], 1.0) for j in order]
    rows = [Constraint(con.name, tuple(main_terms), "<=", sign * con.rhs)]
    for k, j in enumerate(order):
        rows.append(Constraint(f"pl_{prefix}_{k}", ((beta, 1.0), (mu[j], 1.0), (j, -devs[j])), ">=", 0.0))
    return RobustRow(tuple(variables), tuple(rows), float(budget), tuple((j, devs[j]) for j in order), base)


def dual_protection(rr: RobustRow, x: Mapping[int, float]) -> float:
    """Minimize ``budget * beta + sum mu`` over the row's multipliers for a
    fixed point ``x``, using the generated linking rows."""
    if not rr.variables:
        return 0.0
    nv = len(rr.variables)
    c = np.zeros(nv)
    for j, a in rr.constraints[0].terms:
        if j >= rr.first_index:
            c[j - rr.first_index] = a
    A, b = [], []
    for con in rr.constraints[1:]:
        row = np.zeros(nv)
        rhs = con.rhs
        for j, a in con.terms:
            if j >= rr.first_index:
                row[j - rr.first_index] += a
            else:
                rhs -= a * x[j]
        A.append(-row)
        b.append(-rhs)
    res = linprog(
        c, A_ub=np.array(A), b_ub=np.array(b), bounds=[(0, None)] * nv, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)


# ---------------------------------------------------------------------------
# demand uncertainty for the location model


@dataclass(frozen=True, eq=False)
class UncertaintySpec:
    nominal: np.ndarray  # (B, T)
    deviation: np.ndarray  # (B, T), >= 0
    budget: float

    def __post_init__(self):
        nominal = np.array(self.nominal, dtype=float)
        deviation = np.array(self.deviation, dtype=float)
        for arr in (nominal, deviation):
            arr.setflags(write=False)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "deviation", deviation)
        object.__setattr__(self, "budget", float(self.budget))
        if nominal.shape != deviation.shape:
            raise DomainError("deviation shape differs from nominal shape")
        if np.any(deviation < 0):
            raise DomainError("deviations must be nonnegative")
        if not 0 <= self.budget <= self.n_entries:
            raise DomainError(f"budget {self.budget} outside [0, {self.n_entries}]")

    @property
    def n_entries(self) -> int:
        return int(self.nominal.size)

    @classmethod
    def from_fraction(cls, instance: Instance, fraction: float = 0.1, budget: float = 0.0) -> "UncertaintySpec":
        return cls(instance.demand, fraction * instance.demand, budget)

    def with_budget(self, budget: float) -> "UncertaintySpec":
        return UncertaintySpec(self.nominal, self.deviation, budget)

    def extreme_demand(self) -> np.ndarray:
        return self.nominal + self.deviation


def spec_from_dict(instance: Instance, data: Mapping) -> UncertaintySpec:
    """``{"gamma": G, "deviation_fraction": f}`` or ``{"gamma": G, "deviation": [[...]]}``;
    ``gamma`` may be the string ``"full"``."""
    n = instance.demand.size
    gamma = data.get("gamma", 0.0)
    gamma = float(n) if gamma == "full" else float(gamma)
    if "deviation" in data:
        return UncertaintySpec(instance.demand, data["deviation"], gamma)
    return UncertaintySpec.from_fraction(instance, float(data.get("deviation_fraction", 0.1)), gamma)


def spec_to_dict(spec: UncertaintySpec) -> dict:
    return {"gamma": spec.budget, "deviation": spec.deviation.tolist()}


def _check_shape(instance: Instance, spec: UncertaintySpec) -> None:
    if spec.nominal.shape != instance.demand.shape:
        raise DomainError(f"uncertainty shape {spec.nominal.shape} differs from demand shape {instance.demand.shape}")


def service_loads(instance: Instance, assign: np.ndarray) -> np.ndarray:
    """Assigned unit cost ``s[i, t] = sum_j c[i, j] x[i, j, t]``."""
    return np.einsum("ij,ijt->it", instance.cost, assign)


def _assign_of(x) -> np.ndarray:
    return x.assign if isinstance(x, Solution) else np.asarray(x, dtype=float)


def worst_case_cost(instance: Instance, spec: UncertaintySpec, x) -> float:
    """Maximum service cost over the budget uncertainty set for assignment ``x``."""
    _check_shape(instance, spec)
    s = service_loads(instance, _assign_of(x))
    nominal = math.fsum((spec.nominal * s).ravel().tolist())
    return nominal + protection((spec.deviation * s).ravel(), spec.budget)


def robust_objective(instance: Instance, spec: UncertaintySpec, solution: Solution) -> float:
    return math.fsum(
        (worst_case_cost(instance, spec, solution), solution.open_cost_total, solution.close_cost_total)
    )


# ---------------------------------------------------------------------------
# robust counterpart as a MILP


@dataclass(frozen=True, eq=False)
class RobustCounterpart:
    model: LinearModel
    layout: Layout
    theta: int
    pi1: int
    pi2: np.ndarray
    pi3: np.ndarray
    pi4: np.ndarray
    pi5: np.ndarray

    def point_for(self, instance: Instance, spec: UncertaintySpec, solution: Solution) -> np.ndarray:
        """Feasible model point for ``solution`` with optimal dual multipliers
        (``theta`` equals the worst-case service cost)."""
        point = np.zeros(len(self.model.variables))
        lay = self.layout
        point[lay.x.ravel()] = solution.assign.ravel()
        point[lay.y.ravel()] = solution.open.astype(float).ravel()
        T1 = instance.horizon - 1
        point[lay.a[:, :T1].ravel()] = solution.closed.ravel()
        point[lay.b[:, :T1].ravel()] = solution.opened.ravel()
        mags = spec.deviation * service_loads(instance, solution.assign)
        order = np.sort(mags.ravel())[::-1]
        k = int(math.floor(spec.budget))
        pi1 = order[k] if k < order.size else 0.0
        point[self.pi1] = pi1
        # xi = +1 on entries above pi1: pi2 carries the excess, pi4 the rest
        point[self.pi2.ravel()] = np.maximum(0.0, mags - pi1).ravel()
        point[self.pi4.ravel()] = np.minimum(mags, pi1).ravel()
        point[self.theta] = worst_case_cost(instance, spec, solution)
        return point


def build_robust(instance: Instance, spec: UncertaintySpec, pad_transitions: bool = False) -> RobustCounterpart:
    """Linear robust counterpart: minimize ``theta + transitions`` with the
    dual of the inner worst-case problem tying ``theta`` to the service cost."""
    require_valid(instance)
    _check_shape(instance, spec)
    mb, lay = _build(instance, pad_transitions, False, "dms_pmp_robust")
    n, T = instance.n_locations, instance.horizon
    c = instance.cost
    theta = mb.add_var("theta", lower=-math.inf, obj=1.0)
    pi1 = mb.add_var("pi1")
    pis = []
    for k in (2, 3, 4, 5):
        pis.append(np.array([[mb.add_var(f"pi{k}_{i}_{t}") for t in range(T)] for i in range(n)], dtype=int))
    pi2, pi3, pi4, pi5 = pis

    epi = [(pi1, spec.budget)]
    epi += [(pi2[i, t], 1.0) for i in range(n) for t in range(T)]
    epi += [(pi3[i, t], 1.0) for i in range(n) for t in range(T)]
    epi += [(lay.x[i, j, t], spec.nominal[i, t] * c[i, j]) for i in range(n) for j in range(n) for t in range(T)]
    epi.append((theta, -1.0))
    mb.add_constraint("epi", epi, "<=", 0.0)
    for i in range(n):
        for t in range(T):
            mb.add_constraint(f"pd_{i}_{t}", ((pi1, 1.0), (pi4[i, t], -1.0), (pi5[i, t], -1.0)), ">=", 0.0)
    for i in range(n):
        for t in range(T):
            terms = [(pi2[i, t], 1.0), (pi3[i, t], -1.0), (pi4[i, t], 1.0), (pi5[i, t], -1.0)]
            terms += [(lay.x[i, j, t], -spec.deviation[i, t] * c[i, j]) for j in range(n)]
            mb.add_constraint(f"pe_{i}_{t}", terms, "=", 0.0)
    return RobustCounterpart(mb.build(), lay, theta, pi1, pi2, pi3, pi4, pi5)


def solve_robust_milp(instance: Instance, spec: UncertaintySpec, time_limit: float | None = None):
    """Solve the robust counterpart with HiGHS; returns (value, solution)."""
    rc = build_robust(instance, spec)
    res = solve_model(rc.model, time_limit=time_limit)
    if not res.optimal:
        raise RuntimeError(f"robust counterpart not solved to optimality: {res.message}")
    y = res.values[rc.layout.y] > 0.5
    return res.objective, evaluate(instance, y)


# ---------------------------------------------------------------------------
# exact robust solver


def robust_weights(instance: Instance, spec: UncertaintySpec, pi: float) -> np.ndarray:
    """Per-assignment cost once the budget multiplier is fixed at ``pi``:
    ``nominal * c + max(0, deviation * c - pi)``."""
    c = instance.cost[:, :, None]
    return spec.nominal[:, None, :] * c + np.maximum(0.0, spec.deviation[:, None, :] * c - pi)


def breakpoints(instance: Instance, spec: UncertaintySpec) -> np.ndarray:
    """Candidate budget multipliers: 0 and every deviation magnitude a 0/1
    assignment can produce."""
    mags = spec.deviation[:, None, :] * instance.cost[:, :, None]
    return np.unique(np.concatenate([[0.0], mags.ravel()]))


@dataclass(frozen=True, eq=False)
class RobustResult:
    solution: Solution
    value: float
    multiplier: float
    worst_case_service: float
    evaluated: int = 0
    meta: dict = field(default_factory=dict)


def solve_robust_exact(instance: Instance, spec: UncertaintySpec, cap: int = exact.DEFAULT_CAP) -> RobustResult:
    """Exact robust optimum.

    For a 0/1 assignment the protection term equals
    ``min_pi budget * pi + sum max(0, m_it - pi)``, and the minimizing ``pi``
    is one of the magnitudes. For a fixed ``pi`` the remaining problem is a
    deterministic one with modified weights, solved by the catalog DP. The
    scan stops once ``budget * pi`` plus the nominal optimum exceeds the
    incumbent, since the DP value never falls below the nominal optimum.
    """
    require_valid(instance)
    _check_shape(instance, spec)
    cat = exact.enumerate_sets(instance, [instance.fleet_size], cap)
    if spec.budget == 0 or not np.any(spec.deviation):
        sets, _ = exact.solve_weighted(instance, spec.nominal[:, None, :] * instance.cost[:, :, None], cat)
        sol = evaluate(instance, schedule_from_sets(instance.n_locations, sets))
        return RobustResult(sol, robust_objective(instance, spec, sol), 0.0, worst_case_cost(instance, spec, sol), 1)
    _, floor_value = exact.solve_weighted(instance, spec.nominal[:, None, :] * instance.cost[:, :, None], cat)
    best = (math.inf, None, 0.0)
    count = 0
    for pi in breakpoints(instance, spec):
        if spec.budget * pi + floor_value > best[0] * (1 + 1e-12):
            break
        sets, val = exact.solve_weighted(instance, robust_weights(instance, spec, pi), cat)
        count += 1
        total = spec.budget * pi + val
        if total < best[0] * (1 - 1e-12):
            best = (total, sets, float(pi))
    sol = evaluate(instance, schedule_from_sets(instance.n_locations, best[1]))
    return RobustResult(
        sol, robust_objective(instance, spec, sol), best[2], worst_case_cost(instance, spec, sol), count
    )


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MonteCarloResult:
    frequency: float
    violations: int
    samples: int
    threshold: float
    bound: float


def _sample_excess(seed: int, start: int, stop: int, dev_load: np.ndarray) -> np.ndarray:
    out = np.empty(stop - start)
    for k in range(start, stop):
        rng = np.random.default_rng([seed, k])
        u = rng.uniform(-1.0, 1.0, size=dev_load.shape)
        out[k - start] = float(np.sum(dev_load * u))
    return out


def monte_carlo_violation(
    instance: Instance,
    spec: UncertaintySpec,
    solution,
    samples: int,
    seed: int = 0,
    threads: int = 1,
) -> MonteCarloResult:
    """Share of sampled demand realizations whose service cost exceeds the
    robust worst-case value of ``solution``.

    Entries are drawn independently and uniformly on
    ``[nominal - deviation, nominal + deviation]``. Sample ``k`` uses its own
    generator seeded with ``(seed, k)``, so results do not depend on
    ``threads``.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    _check_shape(instance, spec)
    s = service_loads(instance, _assign_of(solution))
    nominal = math.fsum((spec.nominal * s).ravel().tolist())
    threshold = worst_case_cost(instance, spec, _assign_of(solution))
    dev_load = spec.deviation * s
    chunks = [(lo, min(samples, lo + 1024)) for lo in range(0, samples, 1024)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda ab: _sample_excess(seed, ab[0], ab[1], dev_load), chunks))
    else:
        parts = [_sample_excess(seed, a, b, dev_load) for a, b in chunks]
    excess = np.concatenate(parts)
    tol = 1e-9 * max(1.0, abs(threshold))
    violations = int(np.count_nonzero(nominal + excess > threshold + tol))
    n_unc = max(1, int(np.count_nonzero(dev_load)))
    return MonteCarloResult(
        violations / samples, violations, samples, threshold, violation_bound(spec.budget, n_unc)
    )
