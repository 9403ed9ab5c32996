"""Exact solver by dynamic programming over feasible open-facility sets.

Each day's configuration is one entry of a catalog of facility sets that
satisfy the fleet size and the group bounds. The day-to-day transition cost
between sets ``s`` and ``s'`` is ``close_cost * |s - s'| + open_cost * |s' - s|``,
so the whole problem is a shortest path through ``T`` layers of the catalog.
Cost is ``O(T * |catalog|^2)``; this is a desk-scale oracle, not a solver
for the 91-building campus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .instance import Instance, require_valid
from .model import Solution, evaluate, schedule_from_sets

DEFAULT_CAP = 200_000
_FULL_TRANSITION_LIMIT = 2048
_TIE_RTOL = 1e-12


class CatalogTooLarge(RuntimeError):
    """The facility-set state space exceeds the configured cap."""


@dataclass(frozen=True, eq=False)
class FeasibleSetCatalog:
    sets: tuple[tuple[int, ...], ...]
    membership: np.ndarray  # bool (n_sets, B)
    service: np.ndarray | None = None  # (n_sets, T)

    def __len__(self) -> int:
        return len(self.sets)

    @property
    def sizes(self) -> np.ndarray:
        return self.membership.sum(axis=1)


def _state_count(n: int, sizes: Iterable[int]) -> int:
    return sum(math.comb(n, s) for s in sizes)


def enumerate_sets(instance: Instance, sizes: Sequence[int], cap: int = DEFAULT_CAP) -> FeasibleSetCatalog:
    """All subsets with a size in ``sizes`` that satisfy every group bound,
    ordered by size, then lexicographically."""
    n = instance.n_locations
    total = _state_count(n, sizes)
    if total > cap:
        raise CatalogTooLarge(
            f"{total} candidate facility sets exceed the cap of {cap}; use the Lagrangian solver instead"
        )
    gm = instance.group_matrix().astype(np.int64)
    lo, hi = instance.group_limits()
    kept: list[tuple[int, ...]] = []
    blocks = []
    for s in sizes:
        if s == 0:
            combos = np.zeros((1, 0), dtype=np.int64)
        else:
            combos = np.array(list(combinations(range(n), s)), dtype=np.int64).reshape(-1, s)
        member = np.zeros((len(combos), n), dtype=bool)
        np.put_along_axis(member, combos, True, axis=1)
        counts = member.astype(np.int64) @ gm
        ok = np.all((counts >= lo) & (counts <= hi), axis=1)
        blocks.append(member[ok])
        kept.extend(tuple(row) for row in combos[ok].tolist())
    membership = np.concatenate(blocks) if blocks else np.zeros((0, n), dtype=bool)
    return FeasibleSetCatalog(tuple(kept), membership)


def set_costs(weights: np.ndarray, catalog: FeasibleSetCatalog) -> np.ndarray:
    """``cost[s, t] = sum_i min_{j in s} weights[i, j, t]``; empty sets cost inf."""
    n, _, T = weights.shape
    n_sets = len(catalog)
    out = np.full((n_sets, T), np.inf)
    width = max((len(s) for s in catalog.sets), default=0)
    if n_sets == 0 or width == 0:
        return out
    idx = np.array([list(s) + [s[0]] * (width - len(s)) if s else [0] * width for s in catalog.sets])
    nonempty = np.array([bool(s) for s in catalog.sets])
    chunk = max(1, 4_000_000 // max(1, n * width * T))
    for lo in range(0, n_sets, chunk):
        sl = slice(lo, lo + chunk)
        block = weights[:, idx[sl], :]  # (B, ch, width, T)
        out[sl] = block.min(axis=2).sum(axis=0)
    out[~nonempty] = np.inf
    return out


def enumerate_feasible(instance: Instance, cap: int = DEFAULT_CAP) -> FeasibleSetCatalog:
    """Complete catalog of size-``p`` sets meeting every group bound, with
    the per-set, per-day service cost table."""
    cat = enumerate_sets(instance, [instance.fleet_size], cap)
    return FeasibleSetCatalog(cat.sets, cat.membership, set_costs(instance.weights(), cat))


def service_cost(instance: Instance, S: Iterable[int], t: int) -> float:
    """Demand-weighted distance to the nearest member of ``S`` on day ``t``."""
    S = list(S)
    if not S:
        raise ValueError("facility set must be nonempty")
    dist = instance.cost[:, S].min(axis=1)
    return math.fsum((instance.demand[:, t] * dist).tolist())


# ---------------------------------------------------------------------------
# dynamic program


@dataclass(frozen=True, eq=False)
class DpTable:
    value: np.ndarray  # (T, n_sets): best cost of days 0..t ending in s
    parent: np.ndarray  # (T, n_sets): argmin predecessor, -1 on day 0
    cost_to_go: np.ndarray  # (T, n_sets): best cost of days t..T-1 starting in s
    path: tuple[int, ...]  # lexicographically smallest optimal sequence

    @property
    def optimum(self) -> float:
        return float(self.value[-1].min())

    def prefix_optima(self) -> np.ndarray:
        """Optimal cost when the horizon is cut after each day."""
        return self.value.min(axis=1)


class _Transitions:
    def __init__(self, membership: np.ndarray, open_cost: float, close_cost: float):
        self.m = membership.astype(np.float64)
        self.size = self.m.sum(axis=1)
        self.open_cost = open_cost
        self.close_cost = close_cost
        self.n = len(membership)
        self.full = self.block(slice(0, self.n)) if self.n <= _FULL_TRANSITION_LIMIT else None

    def block(self, rows: slice) -> np.ndarray:
        """``trans[rows, :]``: cost of moving from each row set to every set."""
        if getattr(self, "full", None) is not None:
            return self.full[rows]
        inter = self.m[rows] @ self.m.T
        return self.close_cost * (self.size[rows, None] - inter) + self.open_cost * (self.size[None, :] - inter)

    def row_slices(self):
        step = self.n if self.full is not None else max(1, 4_000_000 // max(1, self.n))
        for lo in range(0, self.n, step):
            yield slice(lo, min(self.n, lo + step))


def _first_min(values: np.ndarray, rtol: float = _TIE_RTOL) -> int:
    best = values.min()
    tol = rtol * max(1.0, abs(best))
    return int(np.flatnonzero(values <= best + tol)[0])


def solve_dp(
    node_cost: np.ndarray, membership: np.ndarray, open_cost: float, close_cost: float, tie_rtol: float = _TIE_RTOL
) -> DpTable:
    """Shortest path over ``T`` layers of sets.

    ``node_cost[s, t]`` is the cost of using set ``s`` on day ``t``. Values
    within ``tie_rtol`` of the minimum count as ties, broken towards the
    lexicographically smallest sequence of set indices. Pass 0 when node
    costs carry large offsets that make a relative window meaningless.
    """
    n_sets, T = node_cost.shape
    if n_sets == 0:
        raise ValueError("empty catalog")
    tr = _Transitions(membership, open_cost, close_cost)
    value = np.empty((T, n_sets))
    parent = np.full((T, n_sets), -1, dtype=np.int64)
    value[0] = node_cost[:, 0]
    for t in range(1, T):
        best = np.full(n_sets, np.inf)
        arg = np.zeros(n_sets, dtype=np.int64)
        for rows in tr.row_slices():
            cand = value[t - 1, rows, None] + tr.block(rows)
            local = cand.argmin(axis=0)
            local_val = cand[local, np.arange(n_sets)]
            better = local_val < best
            best[better] = local_val[better]
            arg[better] = local[better] + rows.start
        value[t] = best + node_cost[:, t]
        parent[t] = arg

    g = np.empty((T, n_sets))
    g[T - 1] = node_cost[:, T - 1]
    for t in range(T - 2, -1, -1):
        nxt = np.empty(n_sets)
        for rows in tr.row_slices():
            nxt[rows] = (tr.block(rows) + g[t + 1][None, :]).min(axis=1)
        g[t] = node_cost[:, t] + nxt

    path = [_first_min(g[0], tie_rtol)]
    for t in range(1, T):
        row = tr.block(slice(path[-1], path[-1] + 1))[0]
        path.append(_first_min(row + g[t], tie_rtol))
    return DpTable(value, parent, g, tuple(path))


@dataclass(frozen=True, eq=False)
class ExactResult:
    solution: Solution
    value: float
    table: DpTable
    catalog: FeasibleSetCatalog

    @property
    def schedule(self) -> list[tuple[int, ...]]:
        return [self.catalog.sets[s] for s in self.table.path]


def solve_exact(instance: Instance, cap: int = DEFAULT_CAP) -> ExactResult:
    """Optimal schedule by catalog DP.

    The reported value is recomputed from the schedule with ``math.fsum``
    (exactly rounded), so it does not depend on DP summation order.
    """
    require_valid(instance)
    cat = enumerate_feasible(instance, cap)
    if len(cat) == 0:
        raise ValueError("no facility set satisfies the group bounds")
    table = solve_dp(cat.service, cat.membership, instance.open_cost, instance.close_cost)
    sol = evaluate(instance, schedule_from_sets(instance.n_locations, [cat.sets[s] for s in table.path]))
    sol.meta.update(solver="exact", catalog_size=len(cat), dp_value=table.optimum)
    return ExactResult(sol, sol.objective, table, cat)


def solve_weighted(
    instance: Instance, weights: np.ndarray, catalog: FeasibleSetCatalog | None = None, cap: int = DEFAULT_CAP
) -> tuple[list[tuple[int, ...]], float]:
    """Optimal schedule when serving ``i`` from ``j`` on day ``t`` costs
    ``weights[i, j, t]`` (nearest member of each day's set), plus transitions."""
    cat = catalog if catalog is not None else enumerate_sets(instance, [instance.fleet_size], cap)
    table = solve_dp(set_costs(weights, cat), cat.membership, instance.open_cost, instance.close_cost)
    return [cat.sets[s] for s in table.path], table.optimum
