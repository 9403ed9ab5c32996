"""Lagrangian relaxation with subgradient multiplier updates.

The assignment rows ``sum_j x_ijt = 1`` and the fleet rows
``sum_j y_jt = p`` move into the objective as
``lambda1_it * (1 - sum_j x_ijt)`` and ``lambda2_t * (p - sum_j y_jt)``.
With ``y`` fixed the relaxed ``x`` is closed-form (``x_ijt = y_jt`` exactly
when ``w_ijt - lambda1_it < 0``), leaving a per-day node reward for each
open facility. The ``y`` part keeps the group bounds and transition costs
and is solved exactly by the set-catalog DP (sets of any size); with
``dualize_groups`` the group rows are relaxed as well and ``y`` separates
into one two-state DP per facility.

Multipliers start at zero and move by
``lambda <- max(0, lambda + tau * g)`` with ``g`` the relaxed-row residual
and ``tau = alpha * (UB - LB_n) / ||g||^2``. ``alpha`` starts at 2 and is
halved whenever the lower bound fails to improve for ``stall_limit``
consecutive iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import exact
from .instance import Instance, require_valid
from .model import Solution, evaluate, schedule_from_sets, transitions

DENOMINATOR_FLOOR = 1e-12


class RepairError(RuntimeError):
    pass


@dataclass(frozen=True)
class LrConfig:
    max_iter: int = 1000
    gap_tol: float = 0.1
    alpha: float = 2.0
    alpha_min: float = 1e-6
    stall_limit: int = 1
    dualize_groups: bool = False
    paper_faithful_step: bool = False
    free_eq_multipliers: bool = False
    joint_step: bool = False
    cap: int = exact.DEFAULT_CAP

    @classmethod
    def conventional(cls, **overrides) -> "LrConfig":
        """Sign-free equality multipliers, one Polyak step over the stacked
        subgradient, and halving after ten non-improving iterations."""
        base = dict(free_eq_multipliers=True, joint_step=True, stall_limit=10)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True, eq=False)
class Multipliers:
    assign: np.ndarray  # (B, T), relaxed assignment rows
    fleet: np.ndarray  # (T,), relaxed fleet rows
    group_max: np.ndarray | None = None  # (K, T), only with dualize_groups
    group_min: np.ndarray | None = None

    @classmethod
    def zeros(cls, instance: Instance, dualize_groups: bool = False) -> "Multipliers":
        n, T, K = instance.n_locations, instance.horizon, len(instance.groups)
        g = np.zeros((K, T)) if dualize_groups else None
        return cls(np.zeros((n, T)), np.zeros(T), g, None if g is None else np.zeros((K, T)))

    def families(self) -> dict[str, np.ndarray]:
        fam = {"assign": self.assign, "fleet": self.fleet}
        if self.group_max is not None:
            fam["group_max"] = self.group_max
            fam["group_min"] = self.group_min
        return fam

    def min_value(self) -> float:
        return min(float(v.min()) for v in self.families().values() if v.size)

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for v in self.families().values() if v.size), default=0.0)


@dataclass(frozen=True, eq=False)
class SubproblemResult:
    value: float
    x: np.ndarray  # (B, B, T) 0/1
    y: np.ndarray  # (B, T) bool
    a: np.ndarray  # closings (B, T-1)
    b: np.ndarray  # openings (B, T-1)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    best_lb: float
    gap: float
    alpha: float
    scale: float = 0.0  # largest |multiplier| used for ``lb``


@dataclass
class LrState:
    multipliers: Multipliers
    alpha: float
    best_ub: float = math.inf
    best_lb: float = -math.inf
    iteration: int = 0
    stall: int = 0
    halvings: int = 0
    history: list[IterationRecord] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.best_ub - self.best_lb


@dataclass(frozen=True, eq=False)
class LrResult:
    solution: Solution
    best_lb: float
    best_ub: float
    history: tuple[IterationRecord, ...]
    multipliers: Multipliers
    reason: str

    @property
    def gap(self) -> float:
        return self.best_ub - self.best_lb

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, abs(self.best_ub))


def _two_state_dp(reward: np.ndarray, open_cost: float, close_cost: float) -> np.ndarray:
    """Per-facility open/closed schedule minimizing ``sum reward * y`` plus
    transition costs. ``reward`` has shape (B, T); ties prefer closed."""
    n, T = reward.shape
    g = np.zeros((T, n, 2))
    g[T - 1, :, 1] = reward[:, T - 1]
    for t in range(T - 2, -1, -1):
        stay0 = g[t + 1, :, 0]
        go1 = g[t + 1, :, 1] + open_cost
        go0 = g[t + 1, :, 0] + close_cost
        stay1 = g[t + 1, :, 1]
        g[t, :, 0] = np.minimum(stay0, go1)
        g[t, :, 1] = reward[:, t] + np.minimum(go0, stay1)
    y = np.zeros((n, T), dtype=bool)
    y[:, 0] = g[0, :, 1] < g[0, :, 0]
    for t in range(1, T):
        prev = y[:, t - 1]
        cost0 = g[t, :, 0] + np.where(prev, close_cost, 0.0)
        cost1 = g[t, :, 1] + np.where(prev, 0.0, open_cost)
        y[:, t] = cost1 < cost0
    return y


class LagrangianSolver:
    """Holds the data shared by all iterations for one instance.

    ``weights[i, j, t]`` is the cost of serving ``i`` from ``j`` on day
    ``t``; it defaults to demand times unit cost.
    """

    def __init__(self, instance: Instance, config: LrConfig = LrConfig(), weights: np.ndarray | None = None):
        require_valid(instance)
        self.instance = instance
        self.config = config
        self.deterministic = weights is None
        self.weights = instance.weights() if weights is None else np.asarray(weights, dtype=float)
        self.gm = instance.group_matrix()
        self.lo, self.hi = instance.group_limits()
        self.catalog = None
        if not config.dualize_groups:
            n = instance.n_locations
            sizes = range(max(0, int(self.lo.sum())), min(n, int(self.hi.sum())) + 1)
            try:
                self.catalog = exact.enumerate_sets(instance, list(sizes), config.cap)
            except exact.CatalogTooLarge as exc:
                raise exact.CatalogTooLarge(f"{exc}; or relax the group rows too (dualize_groups)") from None
        self._full_catalog = None
        self._projections: dict = {}

    # -- relaxed problem ---------------------------------------------------

    def solve_subproblem(self, mult: Multipliers) -> SubproblemResult:
        inst = self.instance
        reduced = self.weights - mult.assign[:, None, :]
        use = reduced < 0
        reward = np.where(use, reduced, 0.0).sum(axis=0) - mult.fleet[None, :]  # (B, T)
        if mult.group_max is not None:
            reward = reward + self.gm.astype(float) @ (mult.group_max - mult.group_min)
            y = _two_state_dp(reward, inst.open_cost, inst.close_cost)
        else:
            node = self.catalog.membership.astype(float) @ reward
            table = exact.solve_dp(node, self.catalog.membership, inst.open_cost, inst.close_cost, tie_rtol=0.0)
            y = schedule_from_sets(inst.n_locations, [self.catalog.sets[s] for s in table.path])
        closed, opened = transitions(y)
        x = use & y[None, :, :]
        value = self._relaxed_value(mult, x, y, closed, opened)
        return SubproblemResult(value, x.astype(float), y, closed, opened)

    def _relaxed_value(self, mult, x, y, closed, opened) -> float:
        # Lagrangian at the chosen point. Residuals are small integers, so huge
        # multipliers on satisfied rows cancel exactly instead of through rounding.
        inst = self.instance
        terms = self.weights[x].tolist()
        terms += (mult.assign * (1.0 - x.sum(axis=1))).ravel().tolist()
        terms += (mult.fleet * (inst.fleet_size - y.sum(axis=0))).tolist()
        if mult.group_max is not None:
            per_group = self.gm.T.astype(float) @ y.astype(float)
            terms += (mult.group_max * (per_group - self.hi[:, None])).ravel().tolist()
            terms += (mult.group_min * (self.lo[:, None] - per_group)).ravel().tolist()
        terms += [inst.close_cost * float(closed.sum()), inst.open_cost * float(opened.sum())]
        return math.fsum(terms)

    # -- feasible solutions ------------------------------------------------

    def _schedule_cost(self, y: np.ndarray) -> float:
        if self.deterministic:
            return evaluate(self.instance, y).objective
        masked = np.where(y[None, :, :], self.weights, np.inf).min(axis=1)
        closed, opened = transitions(y)
        return math.fsum(
            masked.ravel().tolist()
            + [self.instance.close_cost * float(closed.sum()), self.instance.open_cost * float(opened.sum())]
        )

    def _feasible(self, S: set[int]) -> bool:
        if len(S) != self.instance.fleet_size:
            return False
        counts = self.gm[list(S)].sum(axis=0) if S else np.zeros(len(self.lo), dtype=int)
        return bool(np.all((counts >= self.lo) & (counts <= self.hi)))

    def _project_day(self, t: int, included: np.ndarray) -> list[int]:
        key = (t, included.tobytes())
        hit = self._projections.get(key)
        if hit is None:
            hit = self._projections[key] = self._greedy_day(t, included)
        return list(hit)

    def _greedy_day(self, t: int, included: np.ndarray) -> list[int]:
        S = set(np.flatnonzero(included).tolist())
        if self._feasible(S):
            return sorted(S)
        inst = self.instance
        n, p = inst.n_locations, inst.fleet_size
        w = self.weights[:, :, t]
        gm = self.gm
        counts = np.zeros(len(self.lo), dtype=int)
        taken = np.zeros(n, dtype=bool)
        current = np.full(n, np.inf)

        def pick(cands: np.ndarray):
            # rank: relaxed-included first, then total service cost after adding, then index
            full = gm[:, counts >= self.hi].any(axis=1)
            allowed = cands & ~taken & ~full
            if not allowed.any():
                return None
            if (allowed & included).any():
                allowed = allowed & included
            cost = np.minimum(current[:, None], w).sum(axis=0)
            cost = np.where(allowed, cost, np.inf)
            return int(np.argmin(cost))

        def add(j):
            nonlocal current
            taken[j] = True
            counts[gm[j]] += 1
            current = np.minimum(current, w[:, j])

        ok = True
        for k, g in enumerate(inst.groups):
            while ok and counts[k] < g.min_open:
                j = pick(gm[:, k])
                if j is None:
                    ok = False
                else:
                    add(j)
        everyone = np.ones(n, dtype=bool)
        while ok and taken.sum() < p:
            j = pick(everyone)
            if j is None:
                ok = False
            else:
                add(j)
        chosen = set(np.flatnonzero(taken).tolist())
        if ok and self._feasible(chosen):
            return sorted(chosen)
        return self._fallback_day(t)

    def _fallback_day(self, t: int) -> list[int]:
        if self._full_catalog is None:
            try:
                self._full_catalog = exact.enumerate_sets(self.instance, [self.instance.fleet_size], self.config.cap)
            except exact.CatalogTooLarge as exc:
                raise RepairError(f"greedy projection failed on day {t} and {exc}") from None
        cat = self._full_catalog
        if len(cat) == 0:
            raise RepairError("no facility set satisfies the group bounds")
        costs = exact.set_costs(self.weights[:, :, t : t + 1], cat)[:, 0]
        return list(cat.sets[int(np.argmin(costs))])

    def repair(self, y: np.ndarray) -> np.ndarray:
        """Project each day of a relaxed schedule onto a feasible ``p``-set."""
        y = np.asarray(y, dtype=bool)
        n, T = y.shape
        return schedule_from_sets(n, [self._project_day(t, y[:, t]) for t in range(T)])

    # -- multipliers -------------------------------------------------------

    def subgradients(self, sub: SubproblemResult, mult: Multipliers) -> dict[str, np.ndarray]:
        inst = self.instance
        g = {
            "assign": 1.0 - sub.x.sum(axis=1),
            "fleet": inst.fleet_size - sub.y.sum(axis=0).astype(float),
        }
        if mult.group_max is not None:
            per_group = self.gm.T.astype(float) @ sub.y.astype(float)  # (K, T)
            g["group_max"] = per_group - self.hi[:, None]
            g["group_min"] = self.lo[:, None] - per_group
        return g

    def update(self, state: LrState, sub: SubproblemResult, lb: float) -> Multipliers:
        cfg = self.config
        mult = state.multipliers
        grads = self.subgradients(sub, mult)
        numer = state.alpha * max(0.0, state.best_ub - lb)
        fams = mult.families()
        joint = sum(float((g * g).sum()) for g in grads.values())
        new = {}
        moved = False
        for name, lam in fams.items():
            g = grads[name]
            if cfg.paper_faithful_step:
                denom = max(DENOMINATOR_FLOOR, float((lam * g * g).sum()))
            elif cfg.joint_step:
                denom = joint if float((g * g).sum()) > 0 else 0.0
            else:
                denom = float((g * g).sum())
            if denom == 0 or numer == 0:
                new[name] = lam
                continue
            step = lam + (numer / denom) * g
            free = cfg.free_eq_multipliers and name in ("assign", "fleet")
            new[name] = step if free else np.maximum(0.0, step)
            moved = True
        if not moved and state.best_ub > lb:
            state.stall += 1
        return Multipliers(new["assign"], new["fleet"], new.get("group_max"), new.get("group_min"))

    # -- driver ------------------------------------------------------------

    def run(self) -> LrResult:
        cfg = self.config
        state = LrState(Multipliers.zeros(self.instance, cfg.dualize_groups), cfg.alpha)
        best_y = None
        reason = "max_iter"
        limit = max(1, cfg.max_iter)
        while True:
            sub = self.solve_subproblem(state.multipliers)
            state.iteration += 1
            lb = sub.value
            y = self.repair(sub.y)
            ub = self._schedule_cost(y)
            if ub < state.best_ub:
                state.best_ub, best_y = ub, y
            if lb > state.best_lb:
                state.best_lb = lb
                state.stall = 0
            else:
                state.stall += 1
            state.history.append(
                IterationRecord(
                    state.iteration, lb, state.best_ub, state.best_lb, state.gap, state.alpha,
                    state.multipliers.max_abs(),
                )
            )
            if state.gap < cfg.gap_tol:
                reason = "gap"
                break
            if state.iteration >= limit:
                reason = "max_iter"
                break
            if state.stall >= cfg.stall_limit:
                state.alpha /= 2.0
                state.halvings += 1
                state.stall = 0
            if state.alpha < cfg.alpha_min:
                reason = "alpha"
                break
            state.multipliers = self.update(state, sub, lb)
        sol = evaluate(self.instance, best_y)
        sol.meta.update(solver="lagrangian", lower_bound=state.best_lb, upper_bound=state.best_ub, reason=reason)
        return LrResult(sol, state.best_lb, state.best_ub, tuple(state.history), state.multipliers, reason)


# ---------------------------------------------------------------------------
# functional interface


def solve_subproblem(instance: Instance, multipliers: Multipliers, config: LrConfig = LrConfig()) -> SubproblemResult:
    cfg = replace(config, dualize_groups=multipliers.group_max is not None)
    return LagrangianSolver(instance, cfg).solve_subproblem(multipliers)


def lower_bound(sub: SubproblemResult) -> float:
    """The relaxed optimum; never above the true optimum."""
    return sub.value


def repair(instance: Instance, y: np.ndarray, config: LrConfig = LrConfig(dualize_groups=True)) -> Solution:
    """Feasible solution from a relaxed schedule (upper bound)."""
    solver = LagrangianSolver(instance, config)
    return evaluate(instance, solver.repair(y))


def update_multipliers(
    instance: Instance, state: LrState, sub: SubproblemResult, lb: float, config: LrConfig = LrConfig()
) -> Multipliers:
    cfg = replace(config, dualize_groups=state.multipliers.group_max is not None)
    return LagrangianSolver(instance, cfg).update(state, sub, lb)


def run(instance: Instance, config: LrConfig = LrConfig()) -> LrResult:
    return LagrangianSolver(instance, config).run()


# ---------------------------------------------------------------------------
# robust composition


@dataclass(frozen=True, eq=False)
class RobustLrResult:
    solution: Solution
    best_lb: float
    best_ub: float
    runs: int
    multiplier: float

    @property
    def gap(self) -> float:
        return self.best_ub - self.best_lb


def run_robust(instance: Instance, spec, config: LrConfig = LrConfig()) -> RobustLrResult:
    """Lagrangian bounds for the budget-robust model.

    For a fixed budget multiplier ``pi`` the robust problem is deterministic
    with weights ``robust_weights(pi)``; the robust lower bound is the
    minimum over candidate ``pi`` of ``budget * pi`` plus that run's lower
    bound. Candidates are scanned in increasing order and the scan stops once
    ``budget * pi`` plus the nominal lower bound reaches the incumbent.
    """
    from .robust import breakpoints, robust_objective, robust_weights

    nominal_w = spec.nominal[:, None, :] * instance.cost[:, :, None]
    base = LagrangianSolver(instance, config, nominal_w).run()
    best_sol = base.solution
    best_ub = robust_objective(instance, spec, base.solution)
    if spec.budget == 0 or not np.any(spec.deviation):
        return RobustLrResult(best_sol, base.best_lb, best_ub, 1, 0.0)
    lb = math.inf
    best_pi = 0.0
    runs = 1
    for pi in breakpoints(instance, spec):
        floor = spec.budget * pi + base.best_lb
        if floor >= best_ub:
            lb = min(lb, floor)
            break
        res = LagrangianSolver(instance, config, robust_weights(instance, spec, pi)).run()
        runs += 1
        lb = min(lb, spec.budget * pi + res.best_lb)
        ub = robust_objective(instance, spec, res.solution)
        if ub < best_ub:
            best_ub, best_sol, best_pi = ub, res.solution, float(pi)
    return RobustLrResult(best_sol, min(lb, best_ub), best_ub, runs, best_pi)
