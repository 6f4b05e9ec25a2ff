"""Random Encounter Model density estimation from camera-trap data.

Animals are assumed to move like an ideal gas: independently, in straight
lines of random heading, at a mean day range of v km per day.  A camera
senses a circular sector of radius r km and angle theta radians, so the
expected encounter rate per camera-day at density D is

    E[y / t] = D * v * r * (2 + theta) / pi

which inverts to the density estimator

    D = (y / t) * pi / (v * r * (2 + theta))

with y encounter sequences over t camera-days.  Movement and detection
parameters are field-specific biology and must be supplied explicitly;
this module ships no numeric defaults for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .data_io import CtDeployment, EncounterSequence
from .errors import ConfigError, ValidationError
from .estimators import DensityEstimate

__all__ = [
    "RemParams", "RemInput", "rem_params_from_mapping", "effort",
    "encounters_from_sequences", "rem_input_from_data", "rem_density",
    "encounter_adequacy", "REM_PARAM_KEYS",
]

_Z95 = 1.959963984540054

# encounter-count thresholds for a usable REM estimate
IDEAL_ENCOUNTERS = 100
MINIMUM_ENCOUNTERS = 40

# required keys in a REM parameter file (use_group_size is optional)
REM_PARAM_KEYS = ("day_range_km_per_day", "detection_radius_km",
                  "detection_angle_rad")


@dataclass(frozen=True)
class RemParams:
    """Movement and detection-geometry parameters of the encounter model."""

    day_range_km_per_day: float
    detection_radius_km: float
    detection_angle_rad: float
    use_group_size: bool = False

    def __post_init__(self):
        v = self.day_range_km_per_day
        r = self.detection_radius_km
        theta = self.detection_angle_rad
        for name, value in (("day_range_km_per_day", v),
                            ("detection_radius_km", r),
                            ("detection_angle_rad", theta)):
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value}")
        if v <= 0:
            raise ValidationError(f"day_range_km_per_day must be > 0, got {v}")
        if r <= 0:
            raise ValidationError(f"detection_radius_km must be > 0, got {r}")
        if not 0 < theta < 2 * math.pi:
            raise ValidationError(
                f"detection_angle_rad must be in (0, 2*pi), got {theta}")


@dataclass(frozen=True)
class RemInput:
    """Encounter total and survey effort feeding the density formula."""

    encounters_y: int
    effort_t_camera_days: float
    params: RemParams
    n_cameras: int | None = None

    def __post_init__(self):
        if self.encounters_y < 0:
            raise ValidationError(
                f"encounter count must be >= 0, got {self.encounters_y}")
        t = self.effort_t_camera_days
        if not (math.isfinite(t) and t > 0):
            raise ValidationError(f"effort must be > 0 camera-days, got {t}")
        if self.n_cameras is not None and self.n_cameras <= 0:
            raise ValidationError(
                f"camera count must be positive, got {self.n_cameras}")


def _as_float(key: str, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"REM parameter {key!r} is not a number: {value!r}")


def _as_bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "1", "on"):
        return True
    if text in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"REM parameter {key!r} is not a boolean: {value!r}")


def rem_params_from_mapping(mapping: Mapping[str, object]) -> RemParams:
    """Build RemParams from parsed config keys; every movement and
    detection parameter must be present, none default silently."""
    for key in REM_PARAM_KEYS:
        if key not in mapping:
            raise ConfigError(f"missing REM parameter key: {key!r}")
    return RemParams(
        day_range_km_per_day=_as_float("day_range_km_per_day",
                                       mapping["day_range_km_per_day"]),
        detection_radius_km=_as_float("detection_radius_km",
                                      mapping["detection_radius_km"]),
        detection_angle_rad=_as_float("detection_angle_rad",
                                      mapping["detection_angle_rad"]),
        use_group_size=_as_bool("use_group_size",
                                mapping.get("use_group_size", False)),
    )


def effort(deployments: Sequence[CtDeployment]) -> float:
    """Total survey effort in camera-days, fractional days kept."""
    if not deployments:
        raise ValidationError("no camera deployments")
    total = 0.0
    for dep in deployments:
        days = dep.active_days
        if days <= 0:
            raise ValidationError(
                f"camera {dep.camera_id}: empty active interval "
                f"({dep.start_ts.isoformat()} .. {dep.end_ts.isoformat()})")
        total += days
    return total


def encounters_from_sequences(sequences: Sequence[EncounterSequence],
                              use_group_size: bool = False) -> int:
    """Encounter total: sequence count, or summed group sizes when the
    estimate should count individual contacts instead of group crossings."""
    if use_group_size:
        return int(sum(s.group_size for s in sequences))
    return len(sequences)


def rem_input_from_data(deployments: Sequence[CtDeployment],
                        sequences: Sequence[EncounterSequence],
                        params: RemParams) -> RemInput:
    return RemInput(
        encounters_y=encounters_from_sequences(sequences,
                                               params.use_group_size),
        effort_t_camera_days=effort(deployments),
        params=params,
        n_cameras=len(deployments))


def encounter_adequacy(y: int) -> str:
    """Encounter-count verdict: adequate (>= 100), marginal (40..99),
    inadequate (< 40)."""
    if y < 0:
        raise ValidationError(f"encounter count must be >= 0, got {y}")
    if y >= IDEAL_ENCOUNTERS:
        return "adequate"
    if y >= MINIMUM_ENCOUNTERS:
        return "marginal"
    return "inadequate"


def rem_density(inp: RemInput, vif: float | None = 1.0) -> DensityEstimate:
    """Density in animals per km²: D = (y/t) * pi / (v * r * (2 + theta)).

    Units must be v in km/day, r in km, t in camera-days.  The standard
    error treats y as a count with variance vif * y (vif = 1 is Poisson);
    vif = None skips the SE, for exact known counts.  Zero encounters give
    density 0 with a low-encounter warning in the diagnostics.
    """
    if vif is not None and not (math.isfinite(vif) and vif > 0):
        raise ConfigError(f"variance inflation factor must be > 0, got {vif}")
    p = inp.params
    y = inp.encounters_y
    t = inp.effort_t_camera_days
    scale = math.pi / (p.day_range_km_per_day * p.detection_radius_km
                       * (2.0 + p.detection_angle_rad))
    density = (y / t) * scale
    diagnostics = {
        "encounters": y,
        "effort_camera_days": t,
        "adequacy": encounter_adequacy(y),
    }
    if y == 0:
        diagnostics["warning"] = ("no encounters: density 0 is a floor, "
                                  "not an estimate")
    se = ci_low = ci_high = None
    if vif is not None and y > 0:
        se = math.sqrt(vif * y) / t * scale
        ci_low = max(0.0, density - _Z95 * se)
        ci_high = density + _Z95 * se
    return DensityEstimate(
        method="rem", density_per_km2=density,
        n_units=inp.n_cameras if inp.n_cameras is not None else 0,
        se=se, ci_low=ci_low, ci_high=ci_high, diagnostics=diagnostics)
