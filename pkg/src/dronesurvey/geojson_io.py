"""GeoJSON region input and design output.

Regions must arrive in a projected planar frame (meters). Because GeoJSON
is conventionally lon/lat, a `crs_note` property is mandatory and any file
whose coordinates all look like geographic degrees is rejected outright
rather than silently planned on a 180 m-wide region.

Design output is a FeatureCollection of per-transect LineStrings plus a
sidecar summary object; both serialize with sorted keys so identical
designs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ValidationError
from .geometry import PlanarPoint, SurveyRegion
from .geoplan import SurveyDesign, coverage

__all__ = [
    "read_region", "region_from_geojson", "design_to_geojson",
    "design_summary", "write_design", "read_design_transects",
    "PlannedTransect", "dump_json",
]


def dump_json(obj: Any, path: str | Path) -> None:
    """Write JSON deterministically (sorted keys, trailing newline)."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def _looks_geographic(rings: list[list[tuple[float, float]]]) -> bool:
    return all(abs(x) <= 180.0 and abs(y) <= 90.0
               for ring in rings for x, y in ring)


def _geometry_rings(geom: dict) -> list[list[tuple[float, float]]]:
    gtype = geom.get("type")
    if gtype == "Polygon":
        coords = geom.get("coordinates", [])
    elif gtype == "MultiPolygon":
        parts = geom.get("coordinates", [])
        if len(parts) != 1:
            raise ValidationError(
                f"region must be a single polygon; MultiPolygon has {len(parts)} parts")
        coords = parts[0]
    else:
        raise ValidationError(f"region geometry must be Polygon/MultiPolygon, got {gtype!r}")
    if not coords:
        raise ValidationError("region polygon has no rings")
    return [[(float(x), float(y)) for x, y in ring] for ring in coords]


def region_from_geojson(obj: dict) -> SurveyRegion:
    """Build a SurveyRegion from a parsed GeoJSON object.

    Accepts a bare geometry, a Feature, or a FeatureCollection with exactly
    one feature. A crs_note (feature property or top-level member) is
    required, and coordinates within lon/lat bounds are rejected.
    """
    crs_note = obj.get("crs_note")
    gtype = obj.get("type")
    if gtype == "FeatureCollection":
        feats = obj.get("features", [])
        if len(feats) != 1:
            raise ValidationError(
                f"region FeatureCollection must hold exactly 1 feature, got {len(feats)}")
        obj = feats[0]
        gtype = obj.get("type")
    if gtype == "Feature":
        props = obj.get("properties") or {}
        crs_note = props.get("crs_note", crs_note)
        geom = obj.get("geometry") or {}
    else:
        geom = obj
        crs_note = geom.get("crs_note", crs_note)
    if not crs_note:
        raise ValidationError(
            "region file must carry a crs_note property naming its projected CRS")
    rings = _geometry_rings(geom)
    if _looks_geographic(rings):
        raise ValidationError(
            "projection required: all coordinates fit lon/lat degree bounds; "
            "supply planar meters, not geographic coordinates")
    return SurveyRegion(rings[0], rings[1:])


def read_region(path: str | Path) -> SurveyRegion:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"region file {path} is not valid JSON: {e}") from e
    return region_from_geojson(obj)


def design_to_geojson(design: SurveyDesign) -> dict:
    """FeatureCollection of transect LineStrings in flown order."""
    features = []
    for flight in design.flights:
        for order, t in enumerate(flight.transects, start=1):
            p = design.grid.node_point(t.start_node)
            q = design.grid.node_point(t.end_node)
            features.append({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[p.x, p.y], [q.x, q.y]],
                },
                "properties": {
                    "transect_id": t.id,
                    "flight_id": flight.id,
                    "order_in_flight": order,
                    "heading": t.heading,
                    "swath_width_m": t.swath_width_m,
                    "covered_area_km2": t.covered_area_km2,
                },
            })
    return {"type": "FeatureCollection", "features": features}


def design_summary(design: SurveyDesign) -> dict:
    cov = coverage(design)
    return {
        "seed": design.seed,
        "covered_km2": cov.covered_km2,
        "covered_fraction": cov.covered_fraction,
        "region_area_km2": design.region.area_km2,
        "per_direction_counts": cov.per_direction_counts,
        "n_flights": cov.n_flights,
        "n_transects": cov.n_transects,
        "swath_width_m": design.swath_width_m,
        "altitude_agl_m": design.altitude_agl_m,
        "grid_spacing_m": design.grid.spacing_m,
        "target_coverage_fraction": design.target_coverage_fraction,
        "target_met": design.target_met,
        "n_unmappable_launch_points": len(design.unmappable_launch_points),
    }


def write_design(design: SurveyDesign, geojson_path: str | Path,
                 summary_path: str | Path) -> None:
    dump_json(design_to_geojson(design), geojson_path)
    dump_json(design_summary(design), summary_path)


@dataclass(frozen=True)
class PlannedTransect:
    """A transect read back from a design file; enough for the estimators."""

    id: str
    flight_id: str
    order_in_flight: int
    heading: str
    swath_width_m: float
    covered_area_km2: float
    start: PlanarPoint
    end: PlanarPoint


def read_design_transects(path: str | Path) -> list[PlannedTransect]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"design file {path} is not valid JSON: {e}") from e
    if obj.get("type") != "FeatureCollection":
        raise ValidationError("design file must be a GeoJSON FeatureCollection")
    out = []
    for k, feat in enumerate(obj.get("features", [])):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "LineString":
            raise ValidationError(f"design feature {k} is not a LineString")
        coords = geom.get("coordinates", [])
        if len(coords) != 2:
            raise ValidationError(f"design feature {k} must have 2 coordinates")
        try:
            out.append(PlannedTransect(
                id=str(props["transect_id"]),
                flight_id=str(props["flight_id"]),
                order_in_flight=int(props["order_in_flight"]),
                heading=str(props["heading"]),
                swath_width_m=float(props["swath_width_m"]),
                covered_area_km2=float(props["covered_area_km2"]),
                start=PlanarPoint(*map(float, coords[0])),
                end=PlanarPoint(*map(float, coords[1])),
            ))
        except KeyError as e:
            raise ValidationError(f"design feature {k} missing property {e}") from e
    if not out:
        raise ValidationError("design file contains no transects")
    return out
