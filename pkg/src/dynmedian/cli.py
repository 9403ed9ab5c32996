"""``dynmedian`` command-line interface.

Exit codes: 0 success, 2 bad input or infeasible solution, 3 solver
refusal (state space over the cap), 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, exact, formats, lagrangian, robust
from .campus import campus_instance, small_campus_instance
from .instance import (
    Group,
    InvalidInstanceError,
    group_bounds,
    generate_random,
    read_instance,
    require_valid,
    write_instance,
)
from .model import ScheduleError, build_deterministic
from .report import (
    convergence_csv,
    load_solution,
    opened_closed_ids,
    rows_to_csv,
    write_solution_files,
)

EXIT_OK, EXIT_INPUT, EXIT_REFUSED, EXIT_INTERNAL = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _load(args):
    inst = read_instance(args.instance, getattr(args, "demand_csv", None), getattr(args, "cost_csv", None))
    require_valid(inst)
    return inst


def _uncertainty(args, inst):
    if getattr(args, "uncertainty", None):
        data = json.loads(Path(args.uncertainty).read_text())
        if args.gamma is not None:
            data["gamma"] = args.gamma
        return robust.spec_from_dict(inst, data)
    gamma = args.gamma if args.gamma is not None else "0"
    return robust.spec_from_dict(inst, {"gamma": _gamma_value(gamma), "deviation_fraction": args.deviation})


def _gamma_value(text):
    if isinstance(text, (int, float)):
        return float(text)
    return "full" if str(text).strip().lower() == "full" else float(text)


def _lr_config(args) -> lagrangian.LrConfig:
    return lagrangian.LrConfig(
        max_iter=args.max_iter,
        gap_tol=args.gap_tol,
        alpha_min=args.alpha_min,
        stall_limit=args.stall_limit,
        dualize_groups=args.dualize_groups,
        paper_faithful_step=args.paper_faithful_step,
        free_eq_multipliers=args.free_eq_multipliers,
        joint_step=args.joint_step,
        cap=args.cap,
    )


def _write_meta(path: Path, command: str, started: float, extra: dict | None = None):
    meta = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_seconds": time.time() - started,
    }
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=1) + "\n")


def _solve(inst, args, spec=None):
    """Run the selected solver; returns (solution, summary dict, lr history or None)."""
    robust_mode = spec is not None and (args.robust or args.gamma is not None or getattr(args, "uncertainty", None))
    if args.method == "lr":
        cfg = _lr_config(args)
        if robust_mode:
            res = lagrangian.run_robust(inst, spec, cfg)
            summary = {"lower_bound": res.best_lb, "upper_bound": res.best_ub, "gap": res.gap, "runs": res.runs}
            return res.solution, summary, None
        res = lagrangian.run(inst, cfg)
        summary = {
            "lower_bound": res.best_lb,
            "upper_bound": res.best_ub,
            "gap": res.gap,
            "relative_gap": res.relative_gap,
            "iterations": len(res.history),
            "termination": res.reason,
        }
        return res.solution, summary, res.history
    if args.method == "milp":
        if robust_mode:
            value, sol = robust.solve_robust_milp(inst, spec)
            return sol, {"objective_milp": value}, None
        from .milp import solve_model
        from .model import solution_from_point

        mres = solve_model(build_deterministic(inst))
        if not mres.optimal:
            raise exact.CatalogTooLarge(f"HiGHS did not prove optimality: {mres.message}")
        sol = solution_from_point(inst, mres.values)
        return sol, {"objective_milp": mres.objective}, None
    if robust_mode:
        res = robust.solve_robust_exact(inst, spec, args.cap)
        return res.solution, {"robust_objective": res.value, "multiplier": res.multiplier}, None
    res = exact.solve_exact(inst, args.cap)
    return res.solution, {"catalog_size": len(res.catalog)}, None


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    if args.campus == "full":
        inst = campus_instance(args.p or 18, args.horizon, args.open_cost, args.close_cost, args.seed)
    elif args.campus == "small":
        inst = small_campus_instance(args.p or 4, args.horizon, args.open_cost, args.close_cost, args.seed)
    else:
        if args.p is None:
            raise UsageError("--p is required for random instances")
        inst = generate_random(
            args.seed, args.locations, args.groups, args.horizon, args.p, args.period, args.open_cost, args.close_cost
        )
    out = Path(args.output) if args.output else Path(args.out_dir) / "instance.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_instance(inst, out)
    print(f"wrote {out} ({inst.n_locations} locations, {inst.horizon} days, p={inst.fleet_size})")
    return EXIT_OK


def cmd_solve(args) -> int:
    started = time.time()
    inst = _load(args)
    spec = _uncertainty(args, inst) if (args.robust or args.gamma is not None or args.uncertainty) else None
    solution, summary, history = _solve(inst, args, spec)
    if spec is not None:
        summary["nominal_cost"] = solution.objective
        summary["worst_case_cost"] = robust.robust_objective(inst, spec, solution)
        summary["gamma"] = spec.budget
    out = Path(args.output) if args.output else Path(args.out_dir) / "solution.json"
    stem = out.name[: -len(".json")] if out.name.endswith(".json") else out.name
    write_solution_files(inst, solution, out.parent, stem, {"method": args.method, **summary})
    if history is not None:
        (out.parent / f"{stem}_convergence.csv").write_text(convergence_csv(history))
    _write_meta(out.parent / f"{stem}.meta.json", "solve", started)
    print(f"objective {solution.objective!r}")
    for k, v in summary.items():
        print(f"{k} {v!r}")
    print(f"change days {sum(1 for _ in _change_iter(solution))}")
    return EXIT_OK


def _change_iter(solution):
    sets = solution.open_sets()
    for t, s in enumerate(sets):
        if t == 0 or s != sets[t - 1]:
            yield t


def _swept_instance(inst, parameter, value, keep_bounds):
    if parameter == "horizon":
        return inst.with_horizon(int(value))
    if parameter == "open_close_cost":
        return replace(inst, open_cost=float(value), close_cost=float(value))
    if parameter == "fleet_size":
        p = int(value)
        groups = inst.groups
        if not keep_bounds:
            n = inst.n_locations
            groups = tuple(Group(g.id, g.members, *group_bounds(p, len(g.members), n)) for g in inst.groups)
        return replace(inst, fleet_size=p, groups=groups)
    return inst


def _parse_values(parameter, text):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if parameter == "gamma":
            vals.append(_gamma_value(tok))
        elif parameter in ("horizon", "fleet_size"):
            vals.append(int(tok))
        else:
            vals.append(float(tok))
    if not vals:
        raise UsageError("--values is empty")
    key = [math.inf if v == "full" else v for v in vals]
    if key != sorted(key):
        raise UsageError("--values must be sorted ascending")
    return vals


def cmd_sweep(args) -> int:
    started = time.time()
    base = _load(args)
    values = _parse_values(args.parameter, args.values)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(value):
        t0 = time.perf_counter()
        try:
            inst = _swept_instance(base, args.parameter, value, args.keep_bounds)
            require_valid(inst)
            spec = None
            if args.parameter == "gamma":
                spec = robust.spec_from_dict(inst, {"gamma": value, "deviation_fraction": args.deviation})
            sub = argparse.Namespace(**vars(args))
            sub.robust = spec is not None
            sub.gamma = value if spec is not None else None
            sub.uncertainty = None
            solution, summary, _ = _solve(inst, sub, spec)
            objective = summary.get("robust_objective") or (
                robust.robust_objective(inst, spec, solution) if spec is not None else solution.objective
            )
            opened, closed = opened_closed_ids(inst, solution)
            write_solution_files(inst, solution, out_dir / "runs", f"{args.parameter}_{value}", summary)
            return (value, objective, " ".join(opened), " ".join(closed), time.perf_counter() - t0, "ok")
        except (InvalidInstanceError, exact.CatalogTooLarge, ValueError, lagrangian.RepairError) as exc:
            return (value, float("nan"), "", "", time.perf_counter() - t0, f"error: {exc}")

    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            rows = list(pool.map(one, values))
    else:
        rows = [one(v) for v in values]
    (out_dir / "sweep.csv").write_text(
        rows_to_csv(["value", "objective", "opened_ids", "closed_ids", "seconds", "status"], rows)
    )
    if args.parameter == "horizon":
        deltas = []
        for (v0, o0, *_), (v1, o1, *_) in zip(rows, rows[1:]):
            weeks = (v1 - v0) / 7
            deltas.append((v0, v1, o1 - o0, (o1 - o0) / weeks if weeks else float("nan")))
        (out_dir / "week_deltas.csv").write_text(rows_to_csv(["from", "to", "delta", "per_week"], deltas))
    _write_meta(out_dir / "sweep.meta.json", "sweep", started)
    for r in rows:
        print(f"{r[0]}\t{r[1]!r}\t{r[5]}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    inst = _load(args)
    solution = load_solution(inst, args.solution)
    spec = _uncertainty(args, inst)
    mc = robust.monte_carlo_violation(inst, spec, solution, args.samples, args.seed, args.threads)
    lines = {
        "nominal_cost": solution.objective,
        "worst_case_cost": robust.robust_objective(inst, spec, solution),
        "gamma": spec.budget,
        "uncertain_entries": int(np.count_nonzero(spec.deviation * robust.service_loads(inst, solution.assign))),
        "violation_frequency": mc.frequency,
        "violation_bound": mc.bound,
        "samples": mc.samples,
    }
    for k, v in lines.items():
        print(f"{k} {v!r}")
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _load(args)
    if args.robust or args.gamma is not None:
        model = robust.build_robust(inst, _uncertainty(args, inst), args.pad_transitions).model
    else:
        model = build_deterministic(inst, args.pad_transitions)
    text = formats.export(model, args.format)
    out = Path(args.output) if args.output else Path(args.out_dir) / f"model.{'lp' if args.format == 'lp' else 'mps'}"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"wrote {out} ({len(model.variables)} variables, {len(model.constraints)} constraints)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_solver_flags(p):
    m = p.add_mutually_exclusive_group()
    m.add_argument("--exact", dest="method", action="store_const", const="exact", help="catalog DP (default)")
    m.add_argument("--lr", dest="method", action="store_const", const="lr", help="Lagrangian relaxation")
    m.add_argument("--milp", dest="method", action="store_const", const="milp", help="HiGHS via scipy")
    p.set_defaults(method="exact")
    p.add_argument("--cap", type=int, default=exact.DEFAULT_CAP, help="max enumerated facility sets")
    lr = p.add_argument_group("Lagrangian options")
    lr.add_argument("--max-iter", type=int, default=1000)
    lr.add_argument("--gap-tol", type=float, default=0.1)
    lr.add_argument("--alpha-min", type=float, default=1e-6)
    lr.add_argument("--stall-limit", type=int, default=1)
    lr.add_argument("--dualize-groups", action="store_true")
    lr.add_argument("--paper-faithful-step", action="store_true", help="step denominator sum(lambda * g**2), floored at 1e-12")
    lr.add_argument("--free-eq-multipliers", action="store_true")
    lr.add_argument("--joint-step", action="store_true")


def _add_uncertainty_flags(p, gamma_default=None):
    p.add_argument("--robust", action="store_true", help="budget-robust objective")
    p.add_argument("--gamma", default=gamma_default, help="budget of uncertainty, a number or 'full'")
    p.add_argument("--deviation", type=float, default=0.1, help="deviation as a fraction of nominal demand")
    p.add_argument("--uncertainty", help="uncertainty JSON file")


def _add_instance(p):
    p.add_argument("instance")
    p.add_argument("--demand-csv")
    p.add_argument("--cost-csv")


GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out_dir": "."}


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS so a subcommand's copy of a global flag does not reset a
    # value given before the subcommand name; defaults are filled in by main.
    # (set_defaults would not do: it edits the action objects the parsers share)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="dynmedian", description=__doc__.splitlines()[0], parents=[common])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write an instance file")
    g.add_argument("--campus", choices=["full", "small"])
    g.add_argument("--locations", type=int, default=6)
    g.add_argument("--groups", type=int, default=2)
    g.add_argument("--horizon", type=int, default=7)
    g.add_argument("--p", type=int)
    g.add_argument("--period", type=int, default=7)
    g.add_argument("--open-cost", type=float, default=5.0)
    g.add_argument("--close-cost", type=float, default=5.0)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", parents=[common], help="solve an instance")
    _add_instance(s)
    _add_solver_flags(s)
    _add_uncertainty_flags(s)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", parents=[common], help="sensitivity sweep")
    _add_instance(w)
    w.add_argument("--parameter", required=True, choices=["horizon", "fleet_size", "open_close_cost", "gamma"])
    w.add_argument("--values", required=True, help="comma-separated, ascending")
    w.add_argument("--keep-bounds", action="store_true", help="fleet sweeps: keep the file's group bounds")
    w.add_argument("--deviation", type=float, default=0.1)
    _add_solver_flags(w)
    w.set_defaults(func=cmd_sweep, robust=False, uncertainty=None, gamma=None)

    e = sub.add_parser("evaluate", parents=[common], help="robust and Monte Carlo evaluation")
    _add_instance(e)
    e.add_argument("solution")
    _add_uncertainty_flags(e, gamma_default="0")
    e.add_argument("--samples", type=int, default=10_000)
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export", parents=[common], help="write the MILP as MPS or LP")
    _add_instance(x)
    x.add_argument("--format", choices=["mps", "free-mps", "lp"], default="mps")
    x.add_argument("--pad-transitions", action="store_true")
    _add_uncertainty_flags(x)
    x.add_argument("-o", "--output")
    x.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    try:
        return args.func(args)
    except exact.CatalogTooLarge as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (
        InvalidInstanceError,
        ScheduleError,
        robust.DomainError,
        formats.ParseError,
        UsageError,
        json.JSONDecodeError,
        FileNotFoundError,
        KeyError,
        TypeError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
