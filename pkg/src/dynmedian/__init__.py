"""Multi-period p-median with opening/closing costs, group bounds and
budget-robust demand."""

__version__ = "0.1.0"

from .instance import Group, Instance, InvalidInstanceError, generate_random, read_instance, validate
from .model import Solution, build_deterministic, evaluate
from .exact import CatalogTooLarge, solve_exact
from .lagrangian import LrConfig, run as run_lagrangian
from .robust import UncertaintySpec, protection, solve_robust_exact, violation_bound

__all__ = [
    "CatalogTooLarge",
    "Group",
    "Instance",
    "InvalidInstanceError",
    "LrConfig",
    "Solution",
    "UncertaintySpec",
    "build_deterministic",
    "evaluate",
    "generate_random",
    "protection",
    "read_instance",
    "run_lagrangian",
    "solve_exact",
    "solve_robust_exact",
    "validate",
    "violation_bound",
]
