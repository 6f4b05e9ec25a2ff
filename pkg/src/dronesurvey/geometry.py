"""Planar geometry primitives for survey regions.

All coordinates are meters in a projected planar frame (x = east,
y = north). Geographic coordinates are rejected at the I/O boundary, never
here. Containment uses covers semantics: points on the boundary count as
inside, so a grid node sitting exactly on the region outline is usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon, box

from .errors import ValidationError

__all__ = ["PlanarPoint", "SurveyRegion"]


@dataclass(frozen=True)
class PlanarPoint:
    """A point in the projected planar frame, meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite coordinate: ({self.x}, {self.y})")

    def distance_to(self, other: "PlanarPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _as_ring(points: Iterable) -> list[tuple[float, float]]:
    ring = [(float(p[0]), float(p[1])) if not isinstance(p, PlanarPoint) else (p.x, p.y)
            for p in points]
    if len(ring) >= 2 and ring[0] == ring[-1]:
        ring = ring[:-1]
    if len(ring) < 3:
        raise ValidationError("polygon ring needs at least 3 distinct vertices")
    for x, y in ring:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValidationError("non-finite polygon vertex")
    return ring


class SurveyRegion:
    """A simple-polygon survey region with optional holes, in meters.

    Thin wrapper over a shapely polygon; exposes only the operations the
    planner and simulator need (area, covers, rectangle clipping).
    """

    def __init__(self, boundary: Sequence, holes: Sequence[Sequence] = ()):
        shell = _as_ring(boundary)
        hole_rings = [_as_ring(h) for h in holes]
        poly = Polygon(shell, hole_rings)
        if not poly.is_valid:
            raise ValidationError(
                f"invalid region polygon: {shapely.is_valid_reason(poly)}")
        if poly.area <= 0:
            raise ValidationError("region has zero area")
        self._poly = poly
        self.boundary = tuple(PlanarPoint(x, y) for x, y in shell)
        self.holes = tuple(tuple(PlanarPoint(x, y) for x, y in h) for h in hole_rings)

    @classmethod
    def rectangle(cls, width_m: float, height_m: float,
                  origin: tuple[float, float] = (0.0, 0.0)) -> "SurveyRegion":
        x0, y0 = origin
        return cls([(x0, y0), (x0 + width_m, y0), (x0 + width_m, y0 + height_m),
                    (x0, y0 + height_m)])

    @property
    def area_km2(self) -> float:
        return self._poly.area / 1e6

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(minx, miny, maxx, maxy) in meters."""
        return self._poly.bounds

    def covers(self, x: float, y: float) -> bool:
        """True if the point is inside the region or on its boundary."""
        return bool(shapely.covers(self._poly, shapely.points(x, y)))

    def covers_many(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized covers over coordinate arrays."""
        return shapely.covers(self._poly, shapely.points(xs, ys))

    def clipped_rect_area_m2(self, xmin: float, ymin: float,
                             xmax: float, ymax: float) -> float:
        """Area of an axis-aligned rectangle intersected with the region."""
        return box(xmin, ymin, xmax, ymax).intersection(self._poly).area

    def is_axis_aligned_rectangle(self) -> bool:
        if self.holes:
            return False
        minx, miny, maxx, maxy = self.bounds
        return math.isclose(self._poly.area, (maxx - minx) * (maxy - miny),
                            rel_tol=1e-12)

    def __eq__(self, other) -> bool:
        return isinstance(other, SurveyRegion) and self._poly.equals(other._poly)

    def __repr__(self) -> str:
        return (f"SurveyRegion(area_km2={self.area_km2:.4f}, "
                f"n_vertices={len(self.boundary)}, n_holes={len(self.holes)})")
