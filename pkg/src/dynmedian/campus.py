"""University-campus case data: the six functional segments with their
populations and weekday utilization rates, plus synthetic site layouts.

The real building coordinates are not available, so every layout produced
here is SYNTHETIC: segments are placed as clusters around fixed centres
(units: km) and members are scattered around them with a seeded generator.
"""

from __future__ import annotations

import numpy as np

from .instance import Instance, SegmentProfile, build_campus_instance

ACADEMIC = SegmentProfile("Academic", 54, 37103, (100, 90, 90, 80, 90, 30, 30))
PARKING = SegmentProfile("Parking", 20, 4000, (100, 100, 100, 100, 100, 20, 20))
RESIDENCE = SegmentProfile("Residence", 8, 5285, (50, 50, 50, 50, 60, 100, 100))
RESEARCH = SegmentProfile("ResearchPark", 6, 4100, (100, 90, 90, 80, 90, 10, 10))
ATHLETIC = SegmentProfile("Athletic", 2, 4300, (50, 50, 50, 60, 50, 100, 100))
PLAZA = SegmentProfile("UniversityPlaza", 1, 3200, (100, 100, 70, 80, 90, 50, 50))

SEGMENTS = (ACADEMIC, PARKING, RESIDENCE, RESEARCH, ATHLETIC, PLAZA)

# cluster centre and spread per segment, km
_LAYOUT = {
    "Academic": ((0.0, 0.0), 0.35),
    "Parking": ((0.0, 0.0), 0.75),
    "Residence": ((0.9, 0.7), 0.25),
    "ResearchPark": ((-1.3, 1.1), 0.2),
    "Athletic": ((0.6, -0.5), 0.15),
    "UniversityPlaza": ((0.3, 1.2), 0.0),
}


def scaled_segments(counts: tuple[int, ...]) -> tuple[SegmentProfile, ...]:
    """The six segments with new building counts and unchanged per-building
    population, so per-building demand matches the full campus."""
    if len(counts) != len(SEGMENTS):
        raise ValueError("need one count per segment")
    return tuple(
        SegmentProfile(s.name, c, s.per_facility * c, s.utilization) for s, c in zip(SEGMENTS, counts)
    )


def synthetic_layout(profiles=SEGMENTS, seed: int = 0) -> list[tuple[float, float]]:
    """SYNTHETIC coordinates, one per facility, ordered by segment."""
    rng = np.random.default_rng(seed)
    coords = []
    for pr in profiles:
        (cx, cy), spread = _LAYOUT[pr.name]
        pts = rng.normal((cx, cy), spread, size=(pr.facility_count, 2)) if spread else np.tile((cx, cy), (pr.facility_count, 1))
        coords.extend((float(x), float(y)) for x, y in np.round(pts, 4))
    return coords


def campus_instance(
    p: int = 18,
    horizon: int = 28,
    open_cost: float = 5.0,
    close_cost: float = 5.0,
    seed: int = 0,
) -> Instance:
    """Full 91-building campus on the synthetic layout."""
    return build_campus_instance(SEGMENTS, synthetic_layout(SEGMENTS, seed), p, horizon, open_cost, close_cost)


SMALL_COUNTS = (4, 3, 2, 1, 1, 1)


def small_campus_instance(
    p: int = 4,
    horizon: int = 28,
    open_cost: float = 5.0,
    close_cost: float = 5.0,
    seed: int = 0,
    counts: tuple[int, ...] = SMALL_COUNTS,
) -> Instance:
    """A 12-building campus (by default) small enough for the exact solver."""
    profiles = scaled_segments(counts)
    return build_campus_instance(profiles, synthetic_layout(profiles, seed), p, horizon, open_cost, close_cost)
