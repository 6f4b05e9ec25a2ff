"""Survey grid construction and randomized flight planning.

The survey grid lays nodes on a square lattice (default 350 m pitch) and
keeps only nodes and 4-adjacent edges that lie inside the region. A flight
is a chain of up to `max_transects` connected grid edges starting at a
launch node. At each turnpoint the planner picks the next direction among
the unused candidate edges, never immediately reversing unless forced, and
weights each direction inversely to its usage count so far so that all four
cardinal directions stay represented. Edges are never reused across a
design, which is what keeps any animal from being overflown twice.

All randomness comes from a caller-supplied generator (see rng module), so
a design is a pure function of (region, grid spec, launch points, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, PlanningImpossibleError, ValidationError
from .geometry import PlanarPoint, SurveyRegion
from .rng import substream

__all__ = [
    "GridSpec", "GridGraph", "Transect", "FlightPlan", "SurveyDesign",
    "CoverageSummary", "build_grid", "snap_launch_points", "plan_flight",
    "plan_design", "coverage",
]

HEADINGS = ("N", "E", "S", "W")
_STEP = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}
_OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}

# Points sampled along an edge for the containment test: both endpoints,
# the midpoint, and 10 more interior points.
_EDGE_SAMPLES = np.linspace(0.0, 1.0, 13)


@dataclass(frozen=True)
class GridSpec:
    """Lattice origin and pitch. origin=None snaps to the region's
    bounding-box minimum corner."""

    origin: PlanarPoint | None = None
    spacing_m: float = 350.0

    def __post_init__(self):
        if self.spacing_m <= 0:
            raise ValidationError(f"grid spacing must be > 0, got {self.spacing_m}")


class GridGraph:
    """Lattice nodes inside the region plus the 4-adjacent edges whose full
    segment stays inside the region."""

    def __init__(self, spec: GridSpec, origin: PlanarPoint,
                 node_ij: list[tuple[int, int]], node_xy: list[PlanarPoint],
                 edges: set[tuple[int, int]]):
        self.spacing_m = spec.spacing_m
        self.origin = origin
        self.node_ij = tuple(node_ij)
        self.node_xy = tuple(node_xy)
        self.edges = frozenset(edges)
        self._index = {ij: k for k, ij in enumerate(node_ij)}
        self._xy_arr = np.array([(p.x, p.y) for p in node_xy], dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.node_xy)

    def node_point(self, node: int) -> PlanarPoint:
        return self.node_xy[node]

    def neighbor(self, node: int, heading: str) -> int | None:
        """Adjacent node in `heading` if the connecting edge is in the grid."""
        i, j = self.node_ij[node]
        di, dj = _STEP[heading]
        other = self._index.get((i + di, j + dj))
        if other is None or edge_key(node, other) not in self.edges:
            return None
        return other

    def nearest_node(self, point: PlanarPoint) -> tuple[int, float]:
        """(node index, distance in meters) of the closest node."""
        d = np.hypot(self._xy_arr[:, 0] - point.x, self._xy_arr[:, 1] - point.y)
        k = int(np.argmin(d))
        return k, float(d[k])


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def build_grid(region: SurveyRegion, spec: GridSpec) -> GridGraph:
    """Lay the lattice over the region and keep interior nodes and edges.

    An edge survives only if 13 evenly spaced samples along it (endpoints
    included) are all covered by the region.
    """
    minx, miny, maxx, maxy = region.bounds
    origin = spec.origin or PlanarPoint(minx, miny)
    s = spec.spacing_m
    i_lo = math.ceil((minx - origin.x) / s - 1e-9)
    i_hi = math.floor((maxx - origin.x) / s + 1e-9)
    j_lo = math.ceil((miny - origin.y) / s - 1e-9)
    j_hi = math.floor((maxy - origin.y) / s + 1e-9)

    node_ij: list[tuple[int, int]] = []
    node_xy: list[PlanarPoint] = []
    for i in range(i_lo, i_hi + 1):
        for j in range(j_lo, j_hi + 1):
            x, y = origin.x + i * s, origin.y + j * s
            if region.covers(x, y):
                node_ij.append((i, j))
                node_xy.append(PlanarPoint(x, y))
    if not node_xy:
        raise PlanningImpossibleError(
            "empty grid: region contains no lattice node at "
            f"{s:.0f} m spacing")

    index = {ij: k for k, ij in enumerate(node_ij)}
    edges = _build_edges(region, node_ij, node_xy, index)
    if not edges:
        raise PlanningImpossibleError(
            f"empty grid: no {s:.0f} m grid edge fits inside the region")
    return GridGraph(spec, origin, node_ij, node_xy, edges)


def _build_edges(region: SurveyRegion, node_ij, node_xy, index):
    edges: set[tuple[int, int]] = set()
    for k, (i, j) in enumerate(node_ij):
        p = node_xy[k]
        for di, dj in ((1, 0), (0, 1)):
            other = index.get((i + di, j + dj))
            if other is None:
                continue
            q = node_xy[other]
            xs = p.x + _EDGE_SAMPLES * (q.x - p.x)
            ys = p.y + _EDGE_SAMPLES * (q.y - p.y)
            if bool(np.all(region.covers_many(xs, ys))):
                edges.add(edge_key(k, other))
    return edges


def snap_launch_points(points: Sequence[PlanarPoint], grid: GridGraph,
                       tolerance_m: float | None = None,
                       ) -> tuple[list[int], list[PlanarPoint]]:
    """Map launch points to their nearest grid node within tolerance.

    Returns (snapped node indices, unmappable points). Duplicate snaps keep
    the first occurrence. Raises PlanningImpossibleError if nothing snaps.
    """
    if tolerance_m is None:
        tolerance_m = grid.spacing_m / 2.0
    if tolerance_m < 0:
        raise ValidationError("snap tolerance must be >= 0")
    snapped: list[int] = []
    unmappable: list[PlanarPoint] = []
    for p in points:
        node, dist = grid.nearest_node(p)
        if dist <= tolerance_m:
            if node not in snapped:
                snapped.append(node)
        else:
            unmappable.append(p)
    if not snapped:
        raise PlanningImpossibleError(
            f"no launch point within {tolerance_m:.1f} m of any grid node "
            f"({len(unmappable)} unmappable)")
    return snapped, unmappable


@dataclass(frozen=True)
class Transect:
    """One flown grid edge with its detection swath."""

    id: str
    start_node: int
    end_node: int
    heading: str
    length_m: float
    swath_width_m: float
    covered_area_km2: float


@dataclass(frozen=True)
class FlightPlan:
    """An ordered chain of connected transects from one launch node."""

    id: str
    launch_node: int
    transects: tuple[Transect, ...]

    @property
    def total_distance_m(self) -> float:
        return sum(t.length_m for t in self.transects)


def _swath_rect(p: PlanarPoint, q: PlanarPoint, swath_m: float,
                ) -> tuple[float, float, float, float]:
    """Axis-aligned swath rectangle of an N/E/S/W edge (xmin, ymin, xmax, ymax)."""
    half = swath_m / 2.0
    if p.x == q.x:  # north-south edge
        return (p.x - half, min(p.y, q.y), p.x + half, max(p.y, q.y))
    return (min(p.x, q.x), p.y - half, max(p.x, q.x), p.y + half)


def transect_covered_km2(grid: GridGraph, a: int, b: int, swath_m: float,
                         region: SurveyRegion | None) -> float:
    p, q = grid.node_point(a), grid.node_point(b)
    if region is None:
        return grid.spacing_m * swath_m / 1e6
    return region.clipped_rect_area_m2(*_swath_rect(p, q, swath_m)) / 1e6


def _heading_of(grid: GridGraph, a: int, b: int) -> str:
    (ia, ja), (ib, jb) = grid.node_ij[a], grid.node_ij[b]
    for h, (di, dj) in _STEP.items():
        if (ib - ia, jb - ja) == (di, dj):
            return h
    raise ValidationError(f"nodes {a} and {b} are not 4-adjacent")


def plan_flight(grid: GridGraph, start_node: int, rng: np.random.Generator,
                used_edges: set[tuple[int, int]], max_transects: int = 7,
                *, swath_width_m: float = 55.0,
                region: SurveyRegion | None = None,
                direction_counts: dict[str, int] | None = None,
                flight_id: str = "F01", transect_seq_start: int = 1,
                ) -> FlightPlan | None:
    """Plan one flight: a chain of <= max_transects unused connected edges.

    Candidate directions at each turnpoint are the grid edges not yet used
    anywhere in the design (nor earlier in this flight); the reverse of the
    previous transect is avoided unless it is the only option. Directions
    are drawn with probability inversely proportional to 1 + their count in
    `direction_counts`, which is updated in place as transects are chosen.

    Returns None when the start node has no usable edge (empty-flight
    signal; the caller skips this launch point). The caller is responsible
    for adding the returned edges to `used_edges`.
    """
    if not (0 <= start_node < grid.n_nodes):
        raise ValidationError(f"start node {start_node} not in grid")
    counts = direction_counts if direction_counts is not None \
        else {h: 0 for h in HEADINGS}
    cur = start_node
    prev_heading: str | None = None
    chain: list[tuple[int, int, str]] = []
    chain_edges: set[tuple[int, int]] = set()
    for _ in range(max_transects):
        cands = []
        for h in HEADINGS:
            nb = grid.neighbor(cur, h)
            if nb is None:
                continue
            ek = edge_key(cur, nb)
            if ek in used_edges or ek in chain_edges:
                continue
            cands.append((h, nb, ek))
        if not cands:
            break
        if prev_heading is not None:
            forward = [c for c in cands if c[0] != _OPPOSITE[prev_heading]]
            if forward:
                cands = forward
        w = np.array([1.0 / (1.0 + counts[h]) for h, _, _ in cands])
        pick = int(rng.choice(len(cands), p=w / w.sum()))
        h, nb, ek = cands[pick]
        chain.append((cur, nb, h))
        chain_edges.add(ek)
        counts[h] += 1
        prev_heading = h
        cur = nb
    if not chain:
        return None
    transects = tuple(
        Transect(
            id=f"T{transect_seq_start + k:03d}",
            start_node=a, end_node=b, heading=h,
            length_m=grid.spacing_m, swath_width_m=swath_width_m,
            covered_area_km2=transect_covered_km2(grid, a, b, swath_width_m, region),
        )
        for k, (a, b, h) in enumerate(chain))
    return FlightPlan(id=flight_id, launch_node=start_node, transects=transects)


@dataclass(frozen=True)
class SurveyDesign:
    """A full flight-day design: edge-disjoint flights over one region."""

    region: SurveyRegion
    grid: GridGraph
    flights: tuple[FlightPlan, ...]
    seed: int
    swath_width_m: float
    altitude_agl_m: float = 60.0
    target_coverage_fraction: float | None = None
    target_met: bool = True
    launch_nodes: tuple[int, ...] = ()
    unmappable_launch_points: tuple[PlanarPoint, ...] = ()

    def transects(self) -> list[Transect]:
        return [t for f in self.flights for t in f.transects]

    def edge_keys(self) -> list[tuple[int, int]]:
        return [edge_key(t.start_node, t.end_node) for t in self.transects()]


@dataclass(frozen=True)
class CoverageSummary:
    covered_km2: float
    covered_fraction: float
    per_direction_counts: dict[str, int]
    n_transects: int
    n_flights: int


def coverage(design: SurveyDesign) -> CoverageSummary:
    """Total covered area and per-direction transect tally.

    Edges are disjoint by construction, so covered area is the plain sum of
    per-transect swath areas; the O(swath^2) overlap where two swaths meet
    at a shared turnpoint is deliberately not subtracted.
    """
    transects = design.transects()
    covered = sum(t.covered_area_km2 for t in transects)
    counts = {h: 0 for h in HEADINGS}
    for t in transects:
        counts[t.heading] += 1
    return CoverageSummary(
        covered_km2=covered,
        covered_fraction=covered / design.region.area_km2,
        per_direction_counts=counts,
        n_transects=len(transects),
        n_flights=len(design.flights),
    )


def plan_design(region: SurveyRegion, grid_spec: GridSpec,
                launch_points: Sequence[PlanarPoint], seed: int, *,
                max_transects: int = 7,
                target_coverage_fraction: float | None = None,
                flights_per_launch: int | None = None,
                swath_width_m: float = 55.0,
                launch_tolerance_m: float | None = None,
                altitude_agl_m: float = 60.0) -> SurveyDesign:
    """Plan a flight day: edge-disjoint flights until the coverage target.

    Launch nodes are visited round-robin, one flight each. In coverage mode
    the last flight is capped at the number of edges still needed, so the
    achieved coverage overshoots the target by less than one nominal edge
    area. If planning stalls before the target (every launch node exhausted)
    the design is returned with target_met=False rather than failing.
    """
    if (target_coverage_fraction is None) == (flights_per_launch is None):
        raise ConfigError(
            "exactly one of target_coverage_fraction / flights_per_launch required")
    if max_transects < 1:
        raise ConfigError("max_transects must be >= 1")
    if swath_width_m <= 0:
        raise ConfigError("swath width must be > 0")

    grid = build_grid(region, grid_spec)
    launch_nodes, unmappable = snap_launch_points(launch_points, grid,
                                                  launch_tolerance_m)
    rng = substream(seed, "design")
    used: set[tuple[int, int]] = set()
    counts = {h: 0 for h in HEADINGS}
    flights: list[FlightPlan] = []
    covered = 0.0
    seq = 1
    edge_nominal_km2 = grid.spacing_m * swath_width_m / 1e6

    def next_flight(node: int, cap: int) -> FlightPlan | None:
        nonlocal seq
        fl = plan_flight(grid, node, rng, used, cap,
                         swath_width_m=swath_width_m, region=region,
                         direction_counts=counts,
                         flight_id=f"F{len(flights) + 1:02d}",
                         transect_seq_start=seq)
        if fl is not None:
            seq += len(fl.transects)
            used.update(edge_key(t.start_node, t.end_node) for t in fl.transects)
        return fl

    target_met = True
    if target_coverage_fraction is not None:
        if target_coverage_fraction < 0:
            raise ConfigError("target coverage fraction must be >= 0")
        target_km2 = target_coverage_fraction * region.area_km2
        while covered < target_km2:
            progressed = False
            for node in launch_nodes:
                if covered >= target_km2:
                    break
                needed = math.ceil((target_km2 - covered) / edge_nominal_km2)
                fl = next_flight(node, min(max_transects, needed))
                if fl is None:
                    continue
                flights.append(fl)
                covered += sum(t.covered_area_km2 for t in fl.transects)
                progressed = True
            if not progressed:
                break
        target_met = covered >= target_km2
    else:
        if flights_per_launch < 0:
            raise ConfigError("flights_per_launch must be >= 0")
        for node in launch_nodes:
            for _ in range(flights_per_launch):
                fl = next_flight(node, max_transects)
                if fl is None:
                    break
                flights.append(fl)

    return SurveyDesign(
        region=region, grid=grid, flights=tuple(flights), seed=seed,
        swath_width_m=swath_width_m, altitude_agl_m=altitude_agl_m,
        target_coverage_fraction=target_coverage_fraction,
        target_met=target_met, launch_nodes=tuple(launch_nodes),
        unmappable_launch_points=tuple(unmappable),
    )
