"""Command-line orchestration: plan, estimate, rem, compare, simulate, plot.

Exit codes: 0 success, 2 invalid input or configuration, 3 planning
impossible, 4 numeric or model failure. Every command is deterministic
given fixed inputs and seed; re-running overwrites output files with
identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .configfile import read_config
from .data_io import (_fmt, _write_csv, parse_sightings, parse_encounters,
                      parse_utc, read_launch_points, reconcile_observers,
                      summarize_by_transect, write_deployments_csv,
                      write_sequences_csv, write_transect_counts_csv)
from .ecosim import (DetectionModel, MovementModel, SimWorld,
                     ThomasPlacement, grid_deployments, recovery_experiment,
                     replicate_world, simulate_ct, simulate_drone_survey)
from .errors import (ConfigError, NumericError, PlanningImpossibleError,
                     ValidationError)
from .estimators import (BootstrapConfig, bootstrap_density, fit_zinb,
                         naive_density, zinb_density)
from .geojson_io import dump_json, read_design_transects, read_region, \
    write_design
from .geometry import PlanarPoint, SurveyRegion
from .geoplan import GridSpec, coverage, plan_design
from .plotting import bars_from_estimate_files, render_grouped_bars_svg, \
    write_plot_csv
from .rem import (RemParams, rem_density, rem_input_from_data,
                  rem_params_from_mapping)
from .stats_compare import (anova_type2, comparison_report_json,
                            fit_additive_model, read_density_table,
                            tukey_hsd)

__all__ = ["main"]

ESTIMATE_CSV_COLUMNS = ("method", "density_per_km2", "se", "ci_low",
                        "ci_high", "n_units")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _opt(value) -> str:
    return "" if value is None else _fmt(value)


def _write_estimates(out: Path, unit: str, estimates) -> None:
    dump_json({"survey_unit": unit,
               "estimates": [e.to_json_dict() for e in estimates]},
              out / "estimates.json")
    _write_csv(out / "estimates.csv", ESTIMATE_CSV_COLUMNS,
               ((e.method, _fmt(e.density_per_km2), _opt(e.se),
                 _opt(e.ci_low), _opt(e.ci_high), e.n_units)
                for e in estimates))


def _print_estimate(est) -> None:
    line = f"{est.method:<10s} {est.density_per_km2:10.4f} per km2"
    if est.ci_low is not None:
        line += f"   CI [{est.ci_low:.4f}, {est.ci_high:.4f}]"
    print(line)


def cmd_plan(args) -> int:
    region = read_region(args.region)
    launches = read_launch_points(args.launch_points)
    if args.transect_length is not None \
            and args.transect_length != args.grid_spacing:
        raise ValidationError(
            f"transects span exactly one grid edge, so --transect-length "
            f"({args.transect_length}) must equal --grid-spacing "
            f"({args.grid_spacing})")
    if (args.target_coverage is None) == (args.flights_per_launch is None):
        raise ValidationError(
            "choose exactly one of --target-coverage and "
            "--flights-per-launch")
    target = None
    if args.target_coverage is not None:
        if not 0.0 <= args.target_coverage <= 100.0:
            raise ValidationError(
                f"--target-coverage is a percentage in [0, 100], got "
                f"{args.target_coverage}")
        target = args.target_coverage / 100.0
    design = plan_design(
        region, GridSpec(spacing_m=args.grid_spacing), launches, args.seed,
        max_transects=args.max_per_flight, target_coverage_fraction=target,
        flights_per_launch=args.flights_per_launch,
        swath_width_m=args.swath_width,
        launch_tolerance_m=args.launch_tolerance)
    out = _out_dir(args.out)
    write_design(design, out / "design.geojson",
                 out / "design_summary.json")
    cov = coverage(design)
    print(f"flights        {cov.n_flights}")
    print(f"transects      {cov.n_transects}")
    print(f"covered area   {cov.covered_km2:.4f} km2")
    print(f"coverage       {100.0 * cov.covered_fraction:.2f}% of "
          f"{region.area_km2:.4f} km2")
    print(f"target met     {design.target_met}")
    for heading in "NESW":
        print(f"heading {heading}      "
              f"{cov.per_direction_counts.get(heading, 0)}")
    if design.unmappable_launch_points:
        print(f"unmappable launch points: "
              f"{len(design.unmappable_launch_points)}", file=sys.stderr)
    return 0


def cmd_estimate(args) -> int:
    transects = read_design_transects(args.design)
    parsed = parse_sightings(args.sightings, species_filter=args.species)
    for err in parsed.errors:
        print(f"warning: sightings line {err.line}: {err.message}",
              file=sys.stderr)
    records = reconcile_observers(parsed.records,
                                  strategy=args.observer_strategy)
    counts = summarize_by_transect(records, transects)
    unit = args.unit or Path(args.sightings).stem
    methods = ["naive", "bootstrap", "zinb"] if args.method == "all" \
        else [args.method]
    estimates = []
    failures = []
    for method in methods:
        try:
            if method == "naive":
                estimates.append(naive_density(counts))
            elif method == "bootstrap":
                estimates.append(bootstrap_density(counts, BootstrapConfig(
                    seed=args.seed, iterations=args.bootstrap_iters)))
            else:
                estimates.append(zinb_density(
                    fit_zinb(counts, seed=args.seed), counts))
        except (ValidationError, NumericError) as exc:
            failures.append((method, exc))
    out = _out_dir(args.out)
    _write_estimates(out, unit, estimates)
    for est in estimates:
        _print_estimate(est)
    for method, exc in failures:
        print(f"error: {method}: {exc}", file=sys.stderr)
    if failures:
        return 4 if any(isinstance(e, NumericError) for _, e in failures) \
            else 2
    return 0


def cmd_rem(args) -> int:
    deployments, sequences = parse_encounters(args.deployments,
                                              args.sequences)
    params = rem_params_from_mapping(read_config(args.params).as_dict())
    inp = rem_input_from_data(deployments, sequences, params)
    est = rem_density(inp, vif=args.vif)
    out = _out_dir(args.out)
    _write_estimates(out, args.unit, [est])
    _print_estimate(est)
    print(f"encounters     {inp.encounters_y}")
    print(f"effort         {inp.effort_t_camera_days:.4f} camera-days")
    print(f"adequacy       {est.diagnostics['adequacy']}")
    if "warning" in est.diagnostics:
        print(f"warning: {est.diagnostics['warning']}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    table = read_density_table(args.densities)
    missing = table.missing_cells()
    if missing:
        cells = ", ".join(f"({unit}, {method})" for unit, method in missing)
        raise ValidationError(
            f"incomplete method x survey_unit crossing; missing cells: "
            f"{cells}")
    fit = fit_additive_model(table)
    anova = anova_type2(fit)
    tukey = tukey_hsd(fit, factor="method", alpha=args.alpha)
    out = _out_dir(args.out)
    (out / "comparison.json").write_text(
        comparison_report_json(anova, tukey), encoding="utf-8")
    text = anova.to_text() + "\n\n" + tukey.to_text() + "\n"
    (out / "comparison.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _lattice_points(region: SurveyRegion, spacing: float,
                    ) -> list[PlanarPoint]:
    if spacing <= 0:
        raise ConfigError(f"launch_spacing_m must be > 0, got {spacing}")
    xmin, ymin, xmax, ymax = region.bounds
    points = []
    y = ymin + spacing / 2.0
    while y < ymax:
        x = xmin + spacing / 2.0
        while x < xmax:
            if region.covers(x, y):
                points.append(PlanarPoint(x, y))
            x += spacing
        y += spacing
    if not points:
        raise ConfigError(
            f"launch_spacing_m {spacing} places no launch point inside "
            f"the region")
    return points


def _simulate_drone(cfg, world, estimator, replicates, out):
    dsgn = cfg.subview("design")
    if "launch_points_file" in dsgn:
        launches = read_launch_points(dsgn.require_str("launch_points_file"))
    else:
        launches = _lattice_points(world.region,
                                   dsgn.require_float("launch_spacing_m"))
    design = plan_design(
        world.region, GridSpec(spacing_m=dsgn.get_float("grid_spacing_m",
                                                        350.0)),
        launches, dsgn.get_int("seed", world.seed),
        max_transects=dsgn.get_int("max_transects", 7),
        target_coverage_fraction=dsgn.get_float("target_coverage_fraction"),
        flights_per_launch=dsgn.get_int("flights_per_launch"),
        swath_width_m=dsgn.get_float("swath_width_m", 55.0))
    detection = DetectionModel(cfg.subview("detection").get_float(
        "drone_detection_prob", 1.0))
    iters = cfg.subview("bootstrap").get_int("iterations", 1000)
    report = recovery_experiment(world, estimator, replicates,
                                 design=design, detection=detection,
                                 bootstrap_iterations=iters)
    write_design(design, out / "design.geojson", out / "design_summary.json")
    counts0 = simulate_drone_survey(replicate_world(world, 0), design,
                                    detection)
    write_transect_counts_csv(counts0, out / "replicate0_transect_counts.csv")
    return report


def _simulate_rem(cfg, world, replicates, out):
    cams = cfg.subview("cameras")
    radius_m = cams.require_float("detection_radius_m")
    angle = cams.require_float("detection_angle_rad")
    duration = cams.require_float("duration_days")
    deployments = grid_deployments(
        world.region, cams.require_int("n"), detection_radius_m=radius_m,
        detection_angle_rad=angle,
        start_ts=parse_utc(cams.get_str("start", "2021-10-01T00:00:00Z")),
        duration_days=duration,
        boundary_margin_m=cams.get_float("boundary_margin_m", 100.0))
    mov = cfg.subview("movement")
    movement = MovementModel(
        mov.require_float("speed_km_per_day"),
        mov.get_float("mean_segment_minutes", 60.0),
        mov.get_float("step_minutes", 1.0))
    # the estimator is fed the simulation's own movement and sensor truth
    params = RemParams(day_range_km_per_day=movement.speed_km_per_day,
                       detection_radius_km=radius_m / 1000.0,
                       detection_angle_rad=angle)
    report = recovery_experiment(world, "rem", replicates,
                                 deployments=deployments, movement=movement,
                                 rem_params=params, duration_days=duration)
    write_deployments_csv(deployments, out / "deployments.csv")
    sequences0 = simulate_ct(replicate_world(world, 0), deployments,
                             movement, duration)
    write_sequences_csv(sequences0, out / "replicate0_sequences.csv")
    return report


def cmd_simulate(args) -> int:
    cfg = read_config(args.config)
    seed = cfg.require_int("seed")
    estimator = cfg.require_str("estimator")
    if estimator not in ("naive", "bootstrap", "zinb", "rem"):
        raise ConfigError(
            f"estimator must be one of naive, bootstrap, zinb, rem; got "
            f"{estimator!r}")
    replicates = cfg.require_int("replicates")
    density = cfg.require_float("true_density_per_km2")
    reg = cfg.subview("region")
    if "file" in reg:
        region = read_region(reg.require_str("file"))
    else:
        region = SurveyRegion.rectangle(reg.require_float("width_m"),
                                        reg.require_float("height_m"))
    placement = None
    pl = cfg.subview("placement")
    if pl.keys():
        placement = ThomasPlacement(
            mean_cluster_size=pl.require_float("mean_cluster_size"),
            cluster_sd_m=pl.require_float("cluster_sd_m"),
            parent_intensity_per_km2=pl.get_float("parent_intensity_per_km2"))
    world = SimWorld(region, density, seed=seed, placement=placement)
    out = _out_dir(args.out)
    if estimator == "rem":
        report = _simulate_rem(cfg, world, replicates, out)
    else:
        report = _simulate_drone(cfg, world, estimator, replicates, out)
    unused = cfg.unused_keys()
    if unused:
        raise ConfigError(f"unknown config key(s): {', '.join(unused)}")
    if report.n_ok == 0:
        first = report.errors[0] if report.errors else "no replicates ran"
        raise NumericError(
            f"all {replicates} replicate(s) failed; first error: {first}")
    dump_json(report.to_json_dict(), out / "report.json")
    print(f"estimator      {report.estimator}")
    print(f"replicates     {report.n_ok} ok, {report.n_failed} failed")
    print(f"true density   {report.true_density_per_km2:.4f} per km2")
    print(f"mean estimate  {report.mean_density:.4f} per km2")
    print(f"relative bias  {100.0 * report.relative_bias:+.2f}%")
    cov = "n/a" if report.ci_coverage is None \
        else f"{100.0 * report.ci_coverage:.1f}%"
    print(f"ci coverage    {cov}")
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    return 0


def cmd_plot(args) -> int:
    bars = bars_from_estimate_files(args.estimates)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".svg":
        out.write_text(render_grouped_bars_svg(
            bars, width=args.width, height=args.height, title=args.title),
            encoding="utf-8")
    elif out.suffix == ".csv":
        write_plot_csv(bars, out)
    else:
        raise ValidationError(
            f"--out must end in .svg or .csv, got {out.name!r}")
    print(f"wrote {out} ({len(bars)} bars)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dronesurvey",
        description="Plan drone transect surveys, estimate animal density "
                    "from drone or camera-trap data, compare methods, and "
                    "validate estimators against a known-truth simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan randomized drone transects")
    p.add_argument("--region", required=True,
                   help="GeoJSON polygon in planar meters with a crs_note")
    p.add_argument("--launch-points", required=True,
                   help="CSV with columns x_m,y_m")
    p.add_argument("--grid-spacing", type=float, default=350.0,
                   help="lattice pitch in meters (default 350)")
    p.add_argument("--transect-length", type=float, default=None,
                   help="must equal --grid-spacing; transects span one edge")
    p.add_argument("--max-per-flight", type=int, default=7,
                   help="max connected transects per flight (default 7)")
    p.add_argument("--swath-width", type=float, default=55.0,
                   help="detection swath width in meters (default 55)")
    p.add_argument("--target-coverage", type=float, default=None,
                   help="stop when this percent of the region is covered")
    p.add_argument("--flights-per-launch", type=int, default=None,
                   help="fixed flight count per launch point instead of a "
                        "coverage target")
    p.add_argument("--launch-tolerance", type=float, default=None,
                   help="max launch-to-node snap distance in meters")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("estimate",
                       help="estimate density from drone sightings")
    p.add_argument("--design", required=True, help="design GeoJSON file")
    p.add_argument("--sightings", required=True, help="sightings CSV")
    p.add_argument("--species", default=None,
                   help="keep only rows of this species tag")
    p.add_argument("--method", required=True,
                   choices=("naive", "bootstrap", "zinb", "all"))
    p.add_argument("--bootstrap-iters", type=int, default=1000)
    p.add_argument("--observer-strategy", default="max",
                   choices=("max", "first", "mean_rounded"))
    p.add_argument("--unit", default=None,
                   help="survey unit label (default: sightings file stem)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("rem",
                       help="estimate density from camera-trap encounters")
    p.add_argument("--deployments", required=True, help="deployments CSV")
    p.add_argument("--sequences", required=True, help="sequences CSV")
    p.add_argument("--params", required=True,
                   help="key=value file with day_range_km_per_day, "
                        "detection_radius_km, detection_angle_rad")
    p.add_argument("--vif", type=float, default=1.0,
                   help="variance inflation factor for the SE (default 1)")
    p.add_argument("--unit", default="camera-traps",
                   help="survey unit label for downstream plots")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_rem)

    p = sub.add_parser("compare",
                       help="two-factor ANOVA and Tukey HSD on densities")
    p.add_argument("--densities", required=True,
                   help="CSV with columns survey_unit,method,density")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("simulate",
                       help="known-truth recovery experiment from a config")
    p.add_argument("--config", required=True, help="key=value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("plot", help="grouped-bar figure of estimates")
    p.add_argument("--estimates", nargs="+", required=True,
                   help="estimate JSON files from estimate/rem commands")
    p.add_argument("--out", required=True, help="output .svg or .csv path")
    p.add_argument("--width", type=int, default=900)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--title", default="Density by survey unit and method")
    p.set_defaults(handler=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except PlanningImpossibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
