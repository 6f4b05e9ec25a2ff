"""Known-truth ecological simulator for validating the estimators.

Synthetic animal populations are placed in a survey region at a known
density, then observed two ways: a simulated drone survey counts animals
inside each planned transect swath, and a simulated camera-trap study
moves animals as an ideal gas (straight exponential-duration segments,
uniform headings, reflecting boundary) past fixed detection sectors.
Because the generating density is known exactly, every estimator in the
package can be checked for bias and confidence-interval coverage with
recovery_experiment.

Placement is homogeneous Poisson by default; a Thomas cluster process
(Poisson parents, Gaussian-scattered offspring) produces over-dispersed
populations.  Either way the expected realized intensity inside the
region equals the requested true density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import timedelta
from typing import Mapping, Sequence

import numpy as np

from .data_io import CtDeployment, EncounterSequence, TransectCount
from .errors import ConfigError, ValidationError
from .estimators import (BootstrapConfig, bootstrap_density, fit_zinb,
                         naive_density, zinb_density)
from .geometry import SurveyRegion
from .geoplan import SurveyDesign, _swath_rect
from .rem import RemParams, rem_density, rem_input_from_data
from .rng import substream

__all__ = [
    "SimWorld", "ThomasPlacement", "MovementModel", "DetectionModel",
    "generate_population", "swath_counts", "simulate_drone_survey",
    "grid_deployments", "simulate_ct", "RecoveryReport",
    "recovery_experiment",
]

NORTH_RAD = math.pi / 2.0  # camera azimuth in math convention (+x = 0)


@dataclass(frozen=True)
class ThomasPlacement:
    """Thomas cluster process: Poisson parents, Gaussian offspring.

    Parent intensity defaults to true_density / mean_cluster_size so the
    expected realized intensity matches the world's true density; when an
    explicit parent intensity is given, the offspring mean is recalibrated
    to true_density / parent_intensity for the same reason.
    """

    mean_cluster_size: float
    cluster_sd_m: float
    parent_intensity_per_km2: float | None = None

    def __post_init__(self):
        if self.mean_cluster_size <= 0:
            raise ValidationError(
                f"mean_cluster_size must be > 0, got {self.mean_cluster_size}")
        if self.cluster_sd_m <= 0:
            raise ValidationError(
                f"cluster_sd_m must be > 0, got {self.cluster_sd_m}")
        if (self.parent_intensity_per_km2 is not None
                and self.parent_intensity_per_km2 <= 0):
            raise ValidationError(
                f"parent_intensity_per_km2 must be > 0, got "
                f"{self.parent_intensity_per_km2}")


@dataclass(frozen=True)
class SimWorld:
    """A region with a known animal density; placement None is Poisson."""

    region: SurveyRegion
    true_density_per_km2: float
    seed: int
    placement: ThomasPlacement | None = None

    def __post_init__(self):
        if not (math.isfinite(self.true_density_per_km2)
                and self.true_density_per_km2 > 0):
            raise ValidationError(
                f"true density must be > 0, got {self.true_density_per_km2}")


@dataclass(frozen=True)
class MovementModel:
    """Ideal-gas movement: straight segments with exponential duration."""

    speed_km_per_day: float
    mean_segment_minutes: float = 60.0
    step_minutes: float = 1.0

    def __post_init__(self):
        if self.speed_km_per_day < 0:
            raise ValidationError(
                f"speed must be >= 0, got {self.speed_km_per_day}")
        if self.mean_segment_minutes <= 0:
            raise ValidationError(
                f"mean segment duration must be > 0 minutes, got "
                f"{self.mean_segment_minutes}")
        if self.step_minutes <= 0:
            raise ValidationError(
                f"step must be > 0 minutes, got {self.step_minutes}")

    @property
    def step_m(self) -> float:
        return self.speed_km_per_day * 1000.0 / 1440.0 * self.step_minutes


@dataclass(frozen=True)
class DetectionModel:
    """Observation imperfections applied on top of geometry."""

    drone_detection_prob: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.drone_detection_prob <= 1.0:
            raise ValidationError(
                f"detection probability must be in [0, 1], got "
                f"{self.drone_detection_prob}")


def _uniform_in_region(region: SurveyRegion, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    """n points uniform over the region by bounding-box rejection."""
    xmin, ymin, xmax, ymax = region.bounds
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        batch = max(64, int((n - filled) * 1.6))
        xs = rng.uniform(xmin, xmax, batch)
        ys = rng.uniform(ymin, ymax, batch)
        keep = region.covers_many(xs, ys)
        take = min(int(keep.sum()), n - filled)
        out[filled:filled + take, 0] = xs[keep][:take]
        out[filled:filled + take, 1] = ys[keep][:take]
        filled += take
    return out


def _sample_positions(world: SimWorld, rng: np.random.Generator,
                      ) -> np.ndarray:
    """One population draw as an (n, 2) array of meter coordinates."""
    region = world.region
    density = world.true_density_per_km2
    if world.placement is None:
        n = int(rng.poisson(density * region.area_km2))
        return _uniform_in_region(region, n, rng)
    placement = world.placement
    if placement.parent_intensity_per_km2 is not None:
        lam_parent = placement.parent_intensity_per_km2
        mean_size = density / lam_parent
    else:
        mean_size = placement.mean_cluster_size
        lam_parent = density / mean_size
    sd = placement.cluster_sd_m
    # parents drawn in a buffered box so clusters straddling the boundary
    # contribute; 6 sd of buffer leaves negligible truncation
    buffer_m = 6.0 * sd
    xmin, ymin, xmax, ymax = region.bounds
    bx0, by0 = xmin - buffer_m, ymin - buffer_m
    bx1, by1 = xmax + buffer_m, ymax + buffer_m
    buffered_km2 = (bx1 - bx0) * (by1 - by0) / 1e6
    n_parents = int(rng.poisson(lam_parent * buffered_km2))
    px = rng.uniform(bx0, bx1, n_parents)
    py = rng.uniform(by0, by1, n_parents)
    sizes = rng.poisson(mean_size, n_parents)
    total = int(sizes.sum())
    if total == 0:
        return np.empty((0, 2))
    ox = np.repeat(px, sizes) + rng.normal(0.0, sd, total)
    oy = np.repeat(py, sizes) + rng.normal(0.0, sd, total)
    keep = region.covers_many(ox, oy)
    return np.column_stack([ox[keep], oy[keep]])


def generate_population(world: SimWorld) -> np.ndarray:
    """Animal positions for one realization of the world, (n, 2) meters."""
    return _sample_positions(world, substream(world.seed, "population"))


def swath_counts(positions: np.ndarray, design: SurveyDesign,
                 ) -> list[TransectCount]:
    """Assign static animal positions to transect swaths in flown order.

    An animal inside two overlapping swaths (adjacent transects share a
    corner of swath-width extent) is counted once, on the earlier-flown
    transect.  Swath rectangle containment is boundary-inclusive.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    free = np.ones(len(positions), dtype=bool)
    counts: list[TransectCount] = []
    for flight in design.flights:
        for transect in flight.transects:
            p = design.grid.node_point(transect.start_node)
            q = design.grid.node_point(transect.end_node)
            xmin, ymin, xmax, ymax = _swath_rect(p, q,
                                                 transect.swath_width_m)
            assigned = 0
            if len(positions):
                inside = (free
                          & (positions[:, 0] >= xmin)
                          & (positions[:, 0] <= xmax)
                          & (positions[:, 1] >= ymin)
                          & (positions[:, 1] <= ymax))
                assigned = int(inside.sum())
                free &= ~inside
            counts.append(TransectCount(
                transect_id=transect.id, animal_count=assigned,
                covered_area_km2=transect.covered_area_km2))
    return counts


def simulate_drone_survey(world: SimWorld, design: SurveyDesign,
                          detection: DetectionModel | None = None,
                          *, reshuffle_between_flights: bool = False,
                          ) -> list[TransectCount]:
    """Count animals inside each transect swath, in flown order.

    Animals are static during the survey by default; an animal inside two
    overlapping swaths is assigned to the earlier-flown transect only.
    With reshuffle_between_flights the population is redrawn before every
    flight, which reintroduces between-day double counting for study.
    """
    if detection is None:
        detection = DetectionModel()
    if not (design.region == world.region):
        raise ValidationError("design region differs from world region")
    rng = substream(world.seed, "drone-survey")
    prob = detection.drone_detection_prob
    counts: list[TransectCount] = []
    if not reshuffle_between_flights:
        return _thin(swath_counts(generate_population(world), design),
                     prob, rng)
    for flight in design.flights:
        positions = _sample_positions(
            world, substream(world.seed, f"population:{flight.id}"))
        one_flight = SurveyDesign(
            region=design.region, grid=design.grid, flights=(flight,),
            seed=design.seed, swath_width_m=design.swath_width_m)
        counts.extend(swath_counts(positions, one_flight))
    return _thin(counts, prob, rng)


def _thin(counts: list[TransectCount], prob: float,
          rng: np.random.Generator) -> list[TransectCount]:
    """Keep each assigned animal with the drone detection probability."""
    if prob >= 1.0:
        return counts
    return [TransectCount(
        transect_id=c.transect_id,
        animal_count=int(rng.binomial(c.animal_count, prob))
        if c.animal_count else 0,
        covered_area_km2=c.covered_area_km2) for c in counts]


def grid_deployments(region: SurveyRegion, n_cameras: int, *,
                     detection_radius_m: float, detection_angle_rad: float,
                     start_ts, duration_days: float,
                     boundary_margin_m: float = 100.0,
                     ) -> list[CtDeployment]:
    """Place n cameras on an even lattice inside the region."""
    if n_cameras < 1:
        raise ValidationError(f"need at least one camera, got {n_cameras}")
    xmin, ymin, xmax, ymax = region.bounds
    xmin += boundary_margin_m
    ymin += boundary_margin_m
    xmax -= boundary_margin_m
    ymax -= boundary_margin_m
    if xmin >= xmax or ymin >= ymax:
        raise ValidationError("region too small for the boundary margin")
    end_ts = start_ts + timedelta(days=duration_days)
    # walk lattice sizes up until enough in-region cells exist
    for cells_per_side in range(int(math.ceil(math.sqrt(n_cameras))), 200):
        xs = np.linspace(xmin, xmax, cells_per_side)
        ys = np.linspace(ymin, ymax, cells_per_side)
        gx, gy = np.meshgrid(xs, ys)
        keep = region.covers_many(gx.ravel(), gy.ravel())
        if int(keep.sum()) >= n_cameras:
            px = gx.ravel()[keep][:n_cameras]
            py = gy.ravel()[keep][:n_cameras]
            return [CtDeployment(
                camera_id=f"CT{i + 1:02d}", x_m=float(px[i]),
                y_m=float(py[i]), start_ts=start_ts, end_ts=end_ts,
                detection_radius_m=detection_radius_m,
                detection_angle_rad=detection_angle_rad)
                for i in range(n_cameras)]
    raise ValidationError(
        f"could not place {n_cameras} cameras inside the region")


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _reflect_axis(coord: np.ndarray, direction: np.ndarray, lo: float,
                  hi: float) -> np.ndarray:
    """Specular reflection of one coordinate into [lo, hi], in place.

    Returns the mask of entries that bounced; their direction component
    is negated so the caller can recompute headings."""
    bounced = np.zeros(len(coord), dtype=bool)
    for _ in range(8):
        below = coord < lo
        above = coord > hi
        if not (below.any() or above.any()):
            return bounced
        coord[below] = 2.0 * lo - coord[below]
        direction[below] = -direction[below]
        coord[above] = 2.0 * hi - coord[above]
        direction[above] = -direction[above]
        bounced |= below | above
    raise ValidationError("step exceeds region size: cannot reflect")


def simulate_ct(world: SimWorld, deployments: Sequence[CtDeployment],
                movement: MovementModel, duration_days: float, *,
                azimuth_rad: float | Mapping[str, float] = NORTH_RAD,
                debug_check_containment: bool = False,
                ) -> list[EncounterSequence]:
    """Move animals past camera detection sectors and emit sequences.

    A sequence opens when any animal enters a camera's sector while that
    camera is active and closes when the sector empties; its group size
    is the maximum number of simultaneous occupants.  Sector entry cannot
    be skipped because the per-step displacement is required to be at
    most half the detection radius.  The boundary reflects specularly on
    axis-aligned rectangular regions; on other shapes an exiting animal
    keeps its position and draws a fresh heading.
    """
    if not deployments:
        raise ValidationError("no camera deployments")
    ids = [d.camera_id for d in deployments]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate camera ids in deployments")
    if duration_days <= 0:
        raise ValidationError(f"duration must be > 0 days, got "
                              f"{duration_days}")
    region = world.region
    xs = np.array([d.x_m for d in deployments])
    ys = np.array([d.y_m for d in deployments])
    if not bool(region.covers_many(xs, ys).all()):
        raise ValidationError("camera deployments must lie inside the region")
    radius = np.array([d.detection_radius_m for d in deployments])
    half_angle = np.array([d.detection_angle_rad for d in deployments]) / 2.0
    if movement.step_m > float(radius.min()) / 2.0:
        raise ConfigError(
            f"time step too coarse: per-step displacement "
            f"{movement.step_m:.2f} m exceeds half the smallest detection "
            f"radius {float(radius.min()) / 2.0:.2f} m; reduce step_minutes")
    if isinstance(azimuth_rad, Mapping):
        azimuth = np.array([float(azimuth_rad[i]) for i in ids])
    else:
        azimuth = np.full(len(ids), float(azimuth_rad))

    positions = generate_population(world).copy()
    n = len(positions)
    rng = substream(world.seed, "ct-movement")
    t0 = min(d.start_ts for d in deployments)
    steps = int(round(duration_days * 1440.0 / movement.step_minutes))
    step_td = timedelta(minutes=movement.step_minutes)
    end_time = t0 + steps * step_td
    active_from = np.array(
        [(d.start_ts - t0) / step_td for d in deployments])
    active_to = np.array([(d.end_ts - t0) / step_td for d in deployments])

    headings = rng.uniform(0.0, 2.0 * math.pi, n)
    remaining = rng.exponential(movement.mean_segment_minutes, n)
    rect = region.is_axis_aligned_rectangle()
    xmin, ymin, xmax, ymax = region.bounds
    r2 = radius ** 2

    open_start = [-1] * len(ids)  # step index when the sector filled
    open_group = [0] * len(ids)
    sequences: list[EncounterSequence] = []

    def close(cam: int, step: int) -> None:
        start_ts = t0 + open_start[cam] * step_td
        end_ts = min(t0 + step * step_td, deployments[cam].end_ts)
        sequences.append(EncounterSequence(
            camera_id=ids[cam], start_ts=start_ts, end_ts=end_ts,
            group_size=open_group[cam]))
        open_start[cam] = -1
        open_group[cam] = 0

    step_m = movement.step_m
    for step in range(steps + 1):
        if n and step > 0 and step_m > 0.0:
            dx = np.cos(headings) * step_m
            dy = np.sin(headings) * step_m
            if rect:
                nx = positions[:, 0] + dx
                ny = positions[:, 1] + dy
                bounced = _reflect_axis(nx, dx, xmin, xmax)
                bounced |= _reflect_axis(ny, dy, ymin, ymax)
                positions[:, 0] = nx
                positions[:, 1] = ny
                if bounced.any():
                    headings[bounced] = np.arctan2(dy[bounced], dx[bounced])
            else:
                nx = positions[:, 0] + dx
                ny = positions[:, 1] + dy
                ok = region.covers_many(nx, ny)
                positions[ok, 0] = nx[ok]
                positions[ok, 1] = ny[ok]
                stuck = ~ok
                if stuck.any():
                    headings[stuck] = rng.uniform(
                        0.0, 2.0 * math.pi, int(stuck.sum()))
        if n and step > 0:
            remaining -= movement.step_minutes
            expired = remaining <= 0.0
            if expired.any():
                cnt = int(expired.sum())
                headings[expired] = rng.uniform(0.0, 2.0 * math.pi, cnt)
                remaining[expired] = rng.exponential(
                    movement.mean_segment_minutes, cnt)
        if debug_check_containment and n:
            if not bool(region.covers_many(positions[:, 0],
                                           positions[:, 1]).all()):
                raise ValidationError(
                    f"animal escaped the region at step {step}")

        if n:
            ddx = positions[:, 0][:, None] - xs[None, :]
            ddy = positions[:, 1][:, None] - ys[None, :]
            near = ddx * ddx + ddy * ddy <= r2[None, :]
            if near.any():
                ang = np.arctan2(ddy, ddx)
                dev = np.abs(_wrap_angle(ang - azimuth[None, :]))
                occupied = near & (dev <= half_angle[None, :])
            else:
                occupied = near
            active = (active_from <= step) & (step < active_to)
            occupants = occupied.sum(axis=0) * active
        else:
            occupants = np.zeros(len(ids), dtype=int)

        for cam in range(len(ids)):
            count = int(occupants[cam])
            if count > 0:
                if open_start[cam] < 0:
                    open_start[cam] = step
                if count > open_group[cam]:
                    open_group[cam] = count
            elif open_start[cam] >= 0:
                close(cam, step)
    for cam in range(len(ids)):
        if open_start[cam] >= 0:
            close(cam, steps)
    sequences.sort(key=lambda s: (s.start_ts, s.camera_id))
    return sequences


@dataclass(frozen=True)
class RecoveryReport:
    """Bias and CI coverage of one estimator against known truth."""

    estimator: str
    true_density_per_km2: float
    replicates: int
    n_ok: int
    n_failed: int
    mean_density: float
    relative_bias: float
    ci_coverage: float | None
    per_replicate: tuple[dict, ...]
    errors: tuple[str, ...]

    def to_json_dict(self) -> dict:
        def _num(x):
            return None if x is None or math.isnan(x) else x
        return {
            "estimator": self.estimator,
            "true_density_per_km2": self.true_density_per_km2,
            "replicates": self.replicates,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "mean_density": _num(self.mean_density),
            "relative_bias": _num(self.relative_bias),
            "ci_coverage": self.ci_coverage,
            "per_replicate": list(self.per_replicate),
            "errors": list(self.errors),
        }


def replicate_world(world: SimWorld, rep: int) -> SimWorld:
    """The world a given recovery replicate simulates.

    Replicate seeds are independent labeled substreams of the world seed,
    so replicates are order-independent and any one of them can be
    regenerated in isolation (for example to export its raw data).
    """
    child_seed = int(substream(world.seed, f"replicate:{rep}")
                     .integers(0, 2 ** 62))
    return SimWorld(region=world.region,
                    true_density_per_km2=world.true_density_per_km2,
                    seed=child_seed, placement=world.placement)


def recovery_experiment(world: SimWorld, estimator: str, replicates: int, *,
                        design: SurveyDesign | None = None,
                        detection: DetectionModel | None = None,
                        deployments: Sequence[CtDeployment] | None = None,
                        movement: MovementModel | None = None,
                        rem_params: RemParams | None = None,
                        duration_days: float | None = None,
                        bootstrap_iterations: int = 1000,
                        ) -> RecoveryReport:
    """Run plan -> simulate -> estimate end to end many times.

    Each replicate gets an independent substream of the world seed, so
    reports are reproducible and replicates are order-independent.
    Estimator failures (for example ZINB non-convergence on a degenerate
    draw) are recorded per replicate, not fatal.
    """
    if replicates < 1:
        raise ValidationError(f"need >= 1 replicate, got {replicates}")
    drone = estimator in ("naive", "bootstrap", "zinb")
    if drone and design is None:
        raise ConfigError(f"estimator {estimator!r} needs a survey design")
    if estimator == "rem":
        if deployments is None or movement is None or rem_params is None:
            raise ConfigError(
                "rem estimator needs deployments, movement, and rem_params")
        if duration_days is None:
            duration_days = max(d.active_days for d in deployments)
    elif not drone:
        raise ConfigError(f"unknown estimator {estimator!r}")

    truth = world.true_density_per_km2
    per_replicate: list[dict] = []
    errors: list[str] = []
    for rep in range(replicates):
        world_r = replicate_world(world, rep)
        try:
            extras: dict = {}
            if drone:
                counts = simulate_drone_survey(world_r, design, detection)
                if estimator == "naive":
                    est = naive_density(counts)
                elif estimator == "bootstrap":
                    est = bootstrap_density(counts, BootstrapConfig(
                        seed=world_r.seed, iterations=bootstrap_iterations))
                else:
                    est = zinb_density(fit_zinb(counts, seed=world_r.seed),
                                       counts)
            else:
                sequences = simulate_ct(world_r, deployments, movement,
                                        duration_days)
                inp = rem_input_from_data(deployments, sequences, rem_params)
                est = rem_density(inp)
                extras["encounters"] = inp.encounters_y
            covers = None
            if est.ci_low is not None and est.ci_high is not None:
                covers = bool(est.ci_low <= truth <= est.ci_high)
            per_replicate.append({
                "replicate": rep, "density": est.density_per_km2,
                "ci_low": est.ci_low, "ci_high": est.ci_high,
                "covers": covers, **extras})
        except Exception as exc:  # noqa: BLE001 - recorded, not fatal
            errors.append(f"replicate {rep}: {exc}")
    densities = [r["density"] for r in per_replicate]
    n_ok = len(densities)
    mean_density = float(np.mean(densities)) if densities else float("nan")
    with_ci = [r["covers"] for r in per_replicate if r["covers"] is not None]
    return RecoveryReport(
        estimator=estimator, true_density_per_km2=truth,
        replicates=replicates, n_ok=n_ok, n_failed=replicates - n_ok,
        mean_density=mean_density,
        relative_bias=(mean_density - truth) / truth if densities
        else float("nan"),
        ci_coverage=sum(with_ci) / len(with_ci) if with_ci else None,
        per_replicate=tuple(per_replicate), errors=tuple(errors))
