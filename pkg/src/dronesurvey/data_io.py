"""Field-data parsing, validation, and per-transect summaries.

Two data streams feed the estimators: drone sightings (one row per
geo-referenced sighting, possibly annotated by two observers) and
camera-trap data (deployments plus encounter sequences). All files are
UTF-8 CSV with a mandatory header and ISO-8601 UTC timestamps. Parsers
never die on a bad row: malformed rows become line-numbered diagnostics
and the good rows survive, but a missing column or a referential breach
(unknown transect, sequence outside its camera's deployment window) is
fatal because silently dropping those would bias a density downstream.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .errors import ConfigError, DegenerateInputError, ValidationError

__all__ = [
    "SightingRecord", "TransectCount", "EncounterSequence", "CtDeployment",
    "RowError", "SightingParseResult", "parse_sightings",
    "reconcile_observers", "summarize_by_transect", "parse_encounters",
    "write_sightings_csv", "write_transect_counts_csv",
    "write_deployments_csv", "write_sequences_csv", "parse_utc",
    "format_utc", "read_transect_counts_csv", "read_launch_points",
    "write_launch_points_csv",
]

SIGHTING_COLUMNS = ("transect_id", "species", "count", "x_m", "y_m",
                    "timestamp", "observer")
DEPLOYMENT_COLUMNS = ("camera_id", "x_m", "y_m", "start", "end",
                      "detection_radius_m", "detection_angle_rad",
                      "mount_height_m")
SEQUENCE_COLUMNS = ("camera_id", "start", "end", "group_size")
TRANSECT_COUNT_COLUMNS = ("transect_id", "animal_count", "covered_area_km2")


def parse_utc(text: str) -> datetime:
    """ISO-8601 instant as a UTC datetime; naive input is taken as UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as e:
        raise ValidationError(f"bad timestamp {text!r}: {e}") from e
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_utc(dt: datetime) -> str:
    """Canonical Z-suffixed serialization (seconds, µs only when nonzero)."""
    dt = dt.astimezone(timezone.utc)
    return dt.isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class SightingRecord:
    """One geo-referenced drone sighting of >= 1 animals."""

    transect_id: str
    species: str
    count: int
    x_m: float
    y_m: float
    timestamp: datetime
    observer: str


@dataclass(frozen=True)
class TransectCount:
    """Animals seen and area covered on one flown transect."""

    transect_id: str
    animal_count: int
    covered_area_km2: float

    def __post_init__(self):
        if self.animal_count < 0:
            raise ValidationError(
                f"{self.transect_id}: negative animal count")
        if not (self.covered_area_km2 > 0) or not math.isfinite(
                self.covered_area_km2):
            raise ValidationError(
                f"{self.transect_id}: covered area must be > 0, "
                f"got {self.covered_area_km2}")


@dataclass(frozen=True)
class EncounterSequence:
    """One camera-trap encounter: a group crossing the field of view."""

    camera_id: str
    start_ts: datetime
    end_ts: datetime
    group_size: int


@dataclass(frozen=True)
class CtDeployment:
    """One camera-trap deployment with its detection geometry."""

    camera_id: str
    x_m: float
    y_m: float
    start_ts: datetime
    end_ts: datetime
    detection_radius_m: float
    detection_angle_rad: float
    mount_height_m: float = 0.0
    burst_size: int = 8

    @property
    def active_days(self) -> float:
        return (self.end_ts - self.start_ts).total_seconds() / 86400.0


@dataclass(frozen=True)
class RowError:
    """Line-numbered diagnostic for one malformed CSV row."""

    line: int
    message: str


@dataclass
class SightingParseResult:
    records: list[SightingRecord] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)
    n_rows: int = 0


def _open_text(source: str | Path | TextIO) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def _check_header(reader: csv.DictReader, required: Sequence[str],
                  what: str) -> None:
    got = reader.fieldnames
    if got is None:
        raise ValidationError(f"{what}: file is empty, header row required")
    missing = [c for c in required if c not in got]
    if missing:
        raise ValidationError(
            f"{what}: missing required column(s) {', '.join(missing)}")


def parse_sightings(source: str | Path | TextIO,
                    species_filter: str | None = None) -> SightingParseResult:
    """Parse a sightings CSV, skipping (and reporting) malformed rows.

    Rows of other species are silently dropped when species_filter is set.
    Line numbers in diagnostics are 1-based file lines (header is line 1).
    """
    stream, owned = _open_text(source)
    result = SightingParseResult()
    try:
        reader = csv.DictReader(stream)
        _check_header(reader, SIGHTING_COLUMNS, "sightings")
        for row in reader:
            line = reader.line_num
            result.n_rows += 1
            try:
                rec = _sighting_from_row(row)
            except ValidationError as e:
                result.errors.append(RowError(line, str(e)))
                continue
            if species_filter is None or rec.species == species_filter:
                result.records.append(rec)
    finally:
        if owned:
            stream.close()
    return result


def _require(row: dict, col: str) -> str:
    val = row.get(col)
    if val is None or val.strip() == "":
        raise ValidationError(f"empty field {col}")
    return val.strip()


def _parse_int(text: str, col: str) -> int:
    try:
        return int(text)
    except ValueError as e:
        raise ValidationError(f"bad integer in {col}: {text!r}") from e


def _parse_float(text: str, col: str) -> float:
    try:
        v = float(text)
    except ValueError as e:
        raise ValidationError(f"bad number in {col}: {text!r}") from e
    if not math.isfinite(v):
        raise ValidationError(f"non-finite {col}: {text!r}")
    return v


def _sighting_from_row(row: dict) -> SightingRecord:
    count = _parse_int(_require(row, "count"), "count")
    if count < 1:
        raise ValidationError(f"sighting count must be >= 1, got {count}")
    return SightingRecord(
        transect_id=_require(row, "transect_id"),
        species=_require(row, "species"),
        count=count,
        x_m=_parse_float(_require(row, "x_m"), "x_m"),
        y_m=_parse_float(_require(row, "y_m"), "y_m"),
        timestamp=parse_utc(_require(row, "timestamp")),
        observer=_require(row, "observer"),
    )


def reconcile_observers(records: Sequence[SightingRecord],
                        strategy: str = "max",
                        designated_observer: str | None = None,
                        ) -> list[SightingRecord]:
    """Merge dual-observer annotations into one record stream per transect.

    max           keep, per transect, the records of the observer with the
                  larger total count (ties go to the observer seen first)
    first         keep only the designated observer's records everywhere
                  (default: the first observer appearing in the input)
    mean_rounded  one synthetic record per transect whose count is the
                  mean of the per-observer totals, rounded half-up
    """
    if strategy not in ("max", "first", "mean_rounded"):
        raise ConfigError(f"unknown observer strategy {strategy!r}")
    if not records:
        return []

    observer_order: list[str] = []
    transect_order: list[str] = []
    by_transect: dict[str, dict[str, list[SightingRecord]]] = {}
    for rec in records:
        if rec.observer not in observer_order:
            observer_order.append(rec.observer)
        if rec.transect_id not in transect_order:
            transect_order.append(rec.transect_id)
        by_transect.setdefault(rec.transect_id, {}).setdefault(
            rec.observer, []).append(rec)

    if strategy == "first":
        keep = designated_observer or observer_order[0]
        if keep not in observer_order:
            raise ConfigError(f"designated observer {keep!r} has no records")
        return [r for r in records if r.observer == keep]

    out: list[SightingRecord] = []
    for tid in transect_order:
        per_obs = by_transect[tid]
        totals = {obs: sum(r.count for r in recs)
                  for obs, recs in per_obs.items()}
        if strategy == "max":
            winner = max((obs for obs in observer_order if obs in per_obs),
                         key=lambda obs: totals[obs])
            out.extend(per_obs[winner])
        else:  # mean_rounded, half-up
            mean = sum(totals.values()) / len(totals)
            merged_count = math.floor(mean + 0.5)
            first_obs = next(obs for obs in observer_order if obs in per_obs)
            proto = per_obs[first_obs][0]
            out.append(replace(proto, count=merged_count,
                               observer="merged"))
    return out


def summarize_by_transect(records: Sequence[SightingRecord],
                          transects) -> list[TransectCount]:
    """One TransectCount per flown transect, zeros included, design order.

    `transects` is a SurveyDesign or any sequence of objects with `id` and
    `covered_area_km2`. Records naming unknown transects are a fatal
    referential error (all offenders listed).
    """
    if hasattr(transects, "transects"):
        transects = transects.transects()
    transects = list(transects)
    if not transects:
        raise DegenerateInputError("design has no transects")
    known = {t.id for t in transects}
    unknown = sorted({r.transect_id for r in records} - known)
    if unknown:
        raise ValidationError(
            f"sightings reference unknown transect id(s): {', '.join(unknown)}")
    totals: dict[str, int] = {t.id: 0 for t in transects}
    for r in records:
        totals[r.transect_id] += r.count
    return [TransectCount(t.id, totals[t.id], t.covered_area_km2)
            for t in transects]


def _deployment_from_row(row: dict) -> CtDeployment:
    start = parse_utc(_require(row, "start"))
    end = parse_utc(_require(row, "end"))
    if end <= start:
        raise ValidationError(
            f"deployment interval empty: {format_utc(start)} .. {format_utc(end)}")
    radius = _parse_float(_require(row, "detection_radius_m"),
                          "detection_radius_m")
    if radius <= 0:
        raise ValidationError(f"detection radius must be > 0, got {radius}")
    angle = _parse_float(_require(row, "detection_angle_rad"),
                         "detection_angle_rad")
    if not (0 < angle < 2 * math.pi):
        raise ValidationError(
            f"detection angle must be in (0, 2*pi), got {angle}")
    return CtDeployment(
        camera_id=_require(row, "camera_id"),
        x_m=_parse_float(_require(row, "x_m"), "x_m"),
        y_m=_parse_float(_require(row, "y_m"), "y_m"),
        start_ts=start, end_ts=end,
        detection_radius_m=radius, detection_angle_rad=angle,
        mount_height_m=_parse_float(_require(row, "mount_height_m"),
                                    "mount_height_m"),
    )


def _sequence_from_row(row: dict) -> EncounterSequence:
    start = parse_utc(_require(row, "start"))
    end = parse_utc(_require(row, "end"))
    if end < start:
        raise ValidationError("sequence ends before it starts")
    group = _parse_int(_require(row, "group_size"), "group_size")
    if group < 1:
        raise ValidationError(f"group size must be >= 1, got {group}")
    return EncounterSequence(camera_id=_require(row, "camera_id"),
                             start_ts=start, end_ts=end, group_size=group)


def _parse_rows(source, columns, what, from_row):
    stream, owned = _open_text(source)
    try:
        reader = csv.DictReader(stream)
        _check_header(reader, columns, what)
        out = []
        errors = []
        for row in reader:
            try:
                out.append(from_row(row))
            except ValidationError as e:
                errors.append(RowError(reader.line_num, str(e)))
        if errors:
            listing = "; ".join(f"line {e.line}: {e.message}" for e in errors)
            raise ValidationError(f"{what}: {listing}")
        return out
    finally:
        if owned:
            stream.close()


def parse_encounters(deployments_source, sequences_source,
                     ) -> tuple[list[CtDeployment], list[EncounterSequence]]:
    """Parse and cross-validate camera deployments and encounter sequences.

    Every sequence must reference a known camera and fall inside that
    camera's active interval; all violations are listed in one error.
    """
    deployments = _parse_rows(deployments_source, DEPLOYMENT_COLUMNS,
                              "deployments", _deployment_from_row)
    sequences = _parse_rows(sequences_source, SEQUENCE_COLUMNS,
                            "sequences", _sequence_from_row)
    tally = Counter(d.camera_id for d in deployments)
    dup = {cid for cid, n in tally.items() if n > 1}
    if dup:
        raise ValidationError(
            f"duplicate camera id(s) in deployments: {', '.join(sorted(dup))}")
    window = {d.camera_id: (d.start_ts, d.end_ts) for d in deployments}
    violations = []
    for k, s in enumerate(sequences):
        if s.camera_id not in window:
            violations.append(f"sequence {k}: unknown camera {s.camera_id!r}")
            continue
        lo, hi = window[s.camera_id]
        if s.start_ts < lo or s.end_ts > hi:
            violations.append(
                f"sequence {k}: [{format_utc(s.start_ts)} .. "
                f"{format_utc(s.end_ts)}] outside deployment window of "
                f"{s.camera_id}")
    if violations:
        raise ValidationError("; ".join(violations))
    return deployments, sequences


def _write_csv(target, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    stream, owned = (open(target, "w", encoding="utf-8", newline=""), True) \
        if isinstance(target, (str, Path)) else (target, False)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if owned:
            stream.close()


def _fmt(v: float) -> str:
    return repr(float(v))


def write_sightings_csv(records: Sequence[SightingRecord], target) -> None:
    _write_csv(target, SIGHTING_COLUMNS,
               ((r.transect_id, r.species, r.count, _fmt(r.x_m),
                 _fmt(r.y_m), format_utc(r.timestamp), r.observer)
                for r in records))


def write_transect_counts_csv(counts: Sequence[TransectCount], target) -> None:
    _write_csv(target, TRANSECT_COUNT_COLUMNS,
               ((c.transect_id, c.animal_count, _fmt(c.covered_area_km2))
                for c in counts))


def read_transect_counts_csv(source) -> list[TransectCount]:
    def from_row(row: dict) -> TransectCount:
        area = _parse_float(_require(row, "covered_area_km2"),
                            "covered_area_km2")
        return TransectCount(_require(row, "transect_id"),
                             _parse_int(_require(row, "animal_count"),
                                        "animal_count"), area)
    return _parse_rows(source, TRANSECT_COUNT_COLUMNS, "transect counts",
                       from_row)


def write_deployments_csv(deployments: Sequence[CtDeployment], target) -> None:
    _write_csv(target, DEPLOYMENT_COLUMNS,
               ((d.camera_id, _fmt(d.x_m), _fmt(d.y_m),
                 format_utc(d.start_ts), format_utc(d.end_ts),
                 _fmt(d.detection_radius_m), _fmt(d.detection_angle_rad),
                 _fmt(d.mount_height_m))
                for d in deployments))


def write_sequences_csv(sequences: Sequence[EncounterSequence], target) -> None:
    _write_csv(target, SEQUENCE_COLUMNS,
               ((s.camera_id, format_utc(s.start_ts), format_utc(s.end_ts),
                 s.group_size)
                for s in sequences))


LAUNCH_COLUMNS = ("x_m", "y_m")


def read_launch_points(source) -> list:
    """Launch point CSV (columns x_m, y_m) as PlanarPoint list."""
    from .geometry import PlanarPoint

    def from_row(row: dict):
        return PlanarPoint(_parse_float(_require(row, "x_m"), "x_m"),
                           _parse_float(_require(row, "y_m"), "y_m"))
    points = _parse_rows(source, LAUNCH_COLUMNS, "launch points", from_row)
    if not points:
        raise DegenerateInputError("launch points file has no rows")
    return points


def write_launch_points_csv(points, target) -> None:
    _write_csv(target, LAUNCH_COLUMNS,
               ((_fmt(p.x), _fmt(p.y)) for p in points))
