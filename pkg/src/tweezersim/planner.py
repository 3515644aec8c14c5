"""Rearrangement planning: shortest-move target filling, buffer refill
ordering, and an exact minimum-cost assignment oracle for benchmarking the
heuristic.

Plans are computed against the controller's *believed* occupancy, never the
ground truth; the cycle engine reconciles the two at each imaging step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import ArrayLayout, Position, distance
from .stochastic import TransportModel

__all__ = [
    "RESERVOIR",
    "Occupancy",
    "Move",
    "MovePlan",
    "PlanError",
    "plan_target_fill",
    "plan_buffer_refill",
    "optimal_assignment",
    "exhaustive_assignment",
    "Assignment",
]

# Sentinel source id for extraction moves out of the reservoir.
RESERVOIR = -1

# Believed occupancy: site id -> occupied?
Occupancy = dict[int, bool]


class PlanError(ValueError):
    """Raised when a plan request is inconsistent with the layout."""


@dataclass(frozen=True)
class Move:
    """One single-atom transport: ``src`` site (or RESERVOIR) to ``dst``."""

    src: int
    dst: int
    dist: float  # µm
    duration: float  # s

    def __post_init__(self):
        if self.src == self.dst:
            raise PlanError(f"move source and destination coincide (site {self.src})")


@dataclass(frozen=True)
class MovePlan:
    moves: tuple[Move, ...]

    def __post_init__(self):
        object.__setattr__(self, "moves", tuple(self.moves))
        srcs = [m.src for m in self.moves]
        dsts = [m.dst for m in self.moves]
        if len(set(srcs)) != len(srcs) or len(set(dsts)) != len(dsts):
            raise PlanError("a site may appear at most once as source and once as destination")

    @property
    def total_distance(self) -> float:
        return sum(m.dist for m in self.moves)

    def __len__(self) -> int:
        return len(self.moves)

    def __iter__(self):
        return iter(self.moves)


def _require_coverage(belief: Occupancy, layout: ArrayLayout) -> None:
    if set(belief) != set(layout.site_ids):
        missing = set(layout.site_ids) - set(belief)
        extra = set(belief) - set(layout.site_ids)
        raise PlanError(
            f"belief must cover exactly the layout sites "
            f"(missing {sorted(missing)}, extraneous {sorted(extra)})"
        )


def _move_duration(
    dist: float, transport: TransportModel, speed_um_per_s: float | None
) -> float:
    if speed_um_per_s is None:
        return transport.move_duration
    return 2.0 * transport.t_ramp + dist / speed_um_per_s


def plan_target_fill(
    belief: Occupancy,
    layout: ArrayLayout,
    *,
    transport: TransportModel | None = None,
    speed_um_per_s: float | None = None,
    strategy: str = "global",
) -> MovePlan:
    """Shortest-move-first plan filling empty target sites from occupied
    buffers.

    The default ``global`` strategy repeatedly picks the closest remaining
    (vacancy, source) pair over all candidates; ties break on smaller
    destination id, then smaller source id. ``per-vacancy`` instead walks
    vacancies in id order and gives each its nearest remaining source, an
    alternative reading of shortest-move sorting kept for comparison runs.

    The plan always contains min(#vacancies, #occupied buffers) moves. Move
    durations are the fixed ramp-translate-ramp time unless a transport
    speed is given, which makes the translate leg distance-proportional.
    """
    _require_coverage(belief, layout)
    if strategy not in ("global", "per-vacancy"):
        raise PlanError(f"unknown fill strategy {strategy!r}")
    transport = transport if transport is not None else TransportModel()
    vacancies = [t for t in layout.target_ids if not belief[t]]
    sources = [b for b in layout.buffer_ids if belief[b]]
    moves: list[Move] = []
    if strategy == "global":
        while vacancies and sources:
            d, dst, src = min(
                (layout.site_distance(s, v), v, s)
                for v in vacancies
                for s in sources
            )
            moves.append(Move(src, dst, d, _move_duration(d, transport, speed_um_per_s)))
            vacancies.remove(dst)
            sources.remove(src)
    else:
        for dst in vacancies:
            if not sources:
                break
            d, src = min((layout.site_distance(s, dst), s) for s in sources)
            moves.append(Move(src, dst, d, _move_duration(d, transport, speed_um_per_s)))
            sources.remove(src)
    return MovePlan(tuple(moves))


def plan_buffer_refill(belief: Occupancy, layout: ArrayLayout) -> list[int]:
    """Buffer sites believed empty, ordered nearest-to-reservoir first
    (ties by site id); the destinations of the next extraction round."""
    _require_coverage(belief, layout)
    empty = [b for b in layout.buffer_ids if not belief[b]]
    empty.sort(key=lambda b: (layout.reservoir_distance(b), b))
    return empty


# -- assignment oracle --------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    """A minimum-cost matching: (vacancy index, source index) pairs."""

    pairs: tuple[tuple[int, int], ...]
    total_distance: float


_EXHAUSTIVE_LIMIT = 8


def _cost_matrix(vacancies: Sequence[Position], sources: Sequence[Position]) -> np.ndarray:
    return np.array(
        [[distance(v, s) for s in sources] for v in vacancies], dtype=float
    )


def exhaustive_assignment(
    vacancies: Sequence[Position], sources: Sequence[Position]
) -> Assignment:
    """Exact matching by enumerating every injection of the smaller side
    into the larger; only viable for small instances."""
    nv, ns = len(vacancies), len(sources)
    if nv == 0 or ns == 0:
        return Assignment((), 0.0)
    cost = _cost_matrix(vacancies, sources)
    swap = nv > ns
    if swap:
        cost = cost.T
    rows, cols = cost.shape
    best_total = float("inf")
    best: tuple[int, ...] = ()
    for perm in itertools.permutations(range(cols), rows):
        total = 0.0
        for r, c in enumerate(perm):
            total += cost[r, c]
            if total >= best_total:
                break
        else:
            best_total = total
            best = perm
    pairs = [(r, c) for r, c in enumerate(best)]
    if swap:
        pairs = [(c, r) for r, c in pairs]
    return Assignment(tuple(sorted(pairs)), float(best_total))


def optimal_assignment(
    vacancies: Sequence[Position], sources: Sequence[Position]
) -> Assignment:
    """Minimum-total-distance matching of size min(#vacancies, #sources).

    Small instances are solved by exhaustive enumeration; larger ones fall
    back to the Hungarian-style solver from scipy.
    """
    nv, ns = len(vacancies), len(sources)
    if nv == 0 or ns == 0:
        return Assignment((), 0.0)
    if max(nv, ns) <= _EXHAUSTIVE_LIMIT:
        return exhaustive_assignment(vacancies, sources)
    cost = _cost_matrix(vacancies, sources)
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted((int(r), int(c)) for r, c in zip(rows, cols)))
    return Assignment(pairs, float(cost[rows, cols].sum()))
