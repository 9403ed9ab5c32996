"""Solution files and human-readable reports.

Days are 1-based in every report (``day 1`` is the first day of the
horizon) and 0-based in arrays.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .instance import Instance
from .model import Solution, evaluate, schedule_from_sets


@dataclass(frozen=True)
class ChangeDay:
    day: int  # 1-based
    open_ids: tuple[str, ...]
    opened: tuple[str, ...]
    closed: tuple[str, ...]


def change_days(instance: Instance, solution: Solution) -> list[ChangeDay]:
    """Day 1 plus every day whose open set differs from the day before."""
    names = instance.locations
    sets = solution.open_sets()
    out = []
    for t, s in enumerate(sets):
        if t and s == sets[t - 1]:
            continue
        prev = set(sets[t - 1]) if t else set()
        out.append(
            ChangeDay(
                t + 1,
                tuple(names[j] for j in s),
                tuple(names[j] for j in sorted(set(s) - prev)) if t else (),
                tuple(names[j] for j in sorted(prev - set(s))) if t else (),
            )
        )
    return out


def schedule_from_change_days(instance: Instance, log: Sequence[ChangeDay]) -> np.ndarray:
    """Inverse of :func:`change_days`."""
    index = {name: j for j, name in enumerate(instance.locations)}
    if not log or log[0].day != 1:
        raise ValueError("change log must start on day 1")
    sets, current = [], None
    by_day = {c.day: c for c in log}
    for t in range(1, instance.horizon + 1):
        if t in by_day:
            current = [index[n] for n in by_day[t].open_ids]
        sets.append(current)
    return schedule_from_sets(instance.n_locations, sets)


def change_days_text(instance: Instance, solution: Solution) -> str:
    lines = ["day\topen\topened\tclosed"]
    for c in change_days(instance, solution):
        lines.append(f"{c.day}\t{' '.join(c.open_ids)}\t{' '.join(c.opened)}\t{' '.join(c.closed)}")
    return "\n".join(lines) + "\n"


def opened_closed_ids(instance: Instance, solution: Solution) -> tuple[list[str], list[str]]:
    """Locations ever opened and ever closed after day 1, in index order."""
    names = instance.locations
    opened = np.flatnonzero(solution.opened.sum(axis=1) > 0) if solution.opened.size else []
    closed = np.flatnonzero(solution.closed.sum(axis=1) > 0) if solution.closed.size else []
    return [names[j] for j in opened], [names[j] for j in closed]


def solution_to_dict(instance: Instance, solution: Solution, extra: dict | None = None) -> dict:
    data = {
        "objective": solution.objective,
        "open": solution.open.astype(int).T.tolist(),
        "breakdown": solution.breakdown,
        "change_days": [
            {"day": c.day, "open": list(c.open_ids), "opened": list(c.opened), "closed": list(c.closed)}
            for c in change_days(instance, solution)
        ],
    }
    if extra:
        data.update(extra)
    return data


def dumps_solution(instance: Instance, solution: Solution, extra: dict | None = None) -> str:
    return json.dumps(solution_to_dict(instance, solution, extra), indent=1) + "\n"


def load_solution(instance: Instance, path: str | Path) -> Solution:
    """Read a solution file; ``open`` is indexed [day][location]."""
    data = json.loads(Path(path).read_text())
    y = np.asarray(data["open"], dtype=int).T.astype(bool)
    return evaluate(instance, y)


def day_sheet(instance: Instance, solution: Solution, t: int) -> str:
    """CSV for day ``t`` (0-based): one row per location with its server."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["location", "open", "served_by", "demand", "unit_cost", "cost"])
    server = solution.assigned_to()[:, t]
    for i, name in enumerate(instance.locations):
        j = int(server[i])
        d = float(instance.demand[i, t])
        c = float(instance.cost[i, j])
        w.writerow([name, int(solution.open[i, t]), instance.locations[j], repr(d), repr(c), repr(d * c)])
    return buf.getvalue()


def write_solution_files(instance: Instance, solution: Solution, out_dir: Path, stem: str, extra: dict | None = None):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.json").write_text(dumps_solution(instance, solution, extra))
    (out_dir / f"{stem}_changes.tsv").write_text(change_days_text(instance, solution))
    days = out_dir / f"{stem}_days"
    days.mkdir(exist_ok=True)
    width = len(str(instance.horizon))
    for t in range(instance.horizon):
        (days / f"day{t + 1:0{width}d}.csv").write_text(day_sheet(instance, solution, t))


def rows_to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def convergence_csv(history) -> str:
    return rows_to_csv(
        ["iter", "LB", "UB", "best_LB", "gap", "alpha"],
        ((h.iteration, h.lb, h.ub, h.best_lb, h.gap, h.alpha) for h in history),
    )
