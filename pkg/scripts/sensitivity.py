"""Horizon, fleet-size and transition-cost sweeps on the 12-building campus.

One CSV per sweep: swept value, objective, number of change days, opened and
closed building counts, seconds.
"""

import argparse
import time
from pathlib import Path

from dynmedian.campus import small_campus_instance
from dynmedian.exact import solve_exact
from dynmedian.report import change_days, opened_closed_ids, rows_to_csv


def row(value, inst):
    start = time.perf_counter()
    sol = solve_exact(inst).solution
    seconds = time.perf_counter() - start
    opened, closed = opened_closed_ids(inst, sol)
    return [value, repr(sol.objective), len(change_days(inst, sol)) - 1, len(opened), len(closed), f"{seconds:.3f}"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="results/sensitivity")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["value", "objective", "change_days", "n_opened", "n_closed", "seconds"]

    base = small_campus_instance(horizon=7)
    horizon = [row(T, base.with_horizon(T)) for T in (7, 14, 21, 28)]
    fleet = [row(p, small_campus_instance(p=p)) for p in range(3, 9)]
    cost = [row(g, small_campus_instance(open_cost=g, close_cost=g)) for g in (0, 2.5, 5, 10, 20, 40)]
    for name, rows in (("horizon", horizon), ("fleet_size", fleet), ("open_close_cost", cost)):
        (out / f"{name}.csv").write_text(rows_to_csv(header, rows))
        print(name)
        for r in rows:
            print("  ", *r[:3])
    deltas = [float(b[1]) - float(a[1]) for a, b in zip(horizon, horizon[1:])]
    print("weekly increments", [round(d, 4) for d in deltas])


if __name__ == "__main__":
    main()
