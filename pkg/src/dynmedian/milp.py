"""Solve a :class:`LinearModel` with HiGHS through ``scipy.optimize.milp``.

Only meant for desk-scale cross-checks of the in-repo solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .model import BINARY, LinearModel


class MilpError(RuntimeError):
    pass


@dataclass(frozen=True)
class MilpResult:
    status: int
    message: str
    objective: float
    values: np.ndarray

    @property
    def optimal(self) -> bool:
        return self.status == 0


def to_arrays(model: LinearModel):
    n = len(model.variables)
    c = np.zeros(n)
    for j, a in model.objective:
        c[j] += a
    rows, cols, vals = [], [], []
    lo = np.empty(len(model.constraints))
    hi = np.empty(len(model.constraints))
    for r, con in enumerate(model.constraints):
        for j, a in con.terms:
            rows.append(r)
            cols.append(j)
            vals.append(a)
        lo[r] = con.rhs if con.sense in (">=", "=") else -np.inf
        hi[r] = con.rhs if con.sense in ("<=", "=") else np.inf
    A = sparse.csr_array((vals, (rows, cols)), shape=(len(model.constraints), n))
    integrality = np.array([1 if v.kind == BINARY else 0 for v in model.variables])
    bounds = Bounds([v.lower for v in model.variables], [v.upper for v in model.variables])
    return c, A, lo, hi, integrality, bounds


def solve_model(
    model: LinearModel, time_limit: float | None = None, relax: bool = False, presolve: bool = False
) -> MilpResult:
    """Minimize ``model``; ``relax=True`` drops integrality (LP relaxation).

    Presolve is off by default: the HiGHS build shipped with scipy 1.15
    returns a suboptimal point flagged optimal on some small instances of
    this model when presolve is on.
    """
    c, A, lo, hi, integrality, bounds = to_arrays(model)
    options = {"disp": False, "mip_rel_gap": 0.0, "presolve": presolve}
    if time_limit is not None:
        options["time_limit"] = time_limit
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    res = milp(c, constraints=cons, integrality=None if relax else integrality, bounds=bounds, options=options)
    if res.x is None:
        raise MilpError(f"HiGHS returned no solution: {res.message}")
    obj = math.fsum((c * res.x).tolist()) + model.objective_constant
    return MilpResult(res.status, res.message, obj, res.x)
