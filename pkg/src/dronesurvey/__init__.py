"""Drone transect survey planning and wildlife density estimation.

The package covers the full workflow: plan systematically randomized
drone transects on a lattice, summarize drone sightings or camera-trap
encounter sequences, estimate animal density (naive, bootstrap,
zero-inflated negative binomial, random encounter model), compare
methods with a two-factor ANOVA plus Tukey HSD, and validate every
estimator against a known-truth ecological simulator. The `dronesurvey`
command line exposes each step; this namespace re-exports the library
entry points.
"""

from .configfile import ConfigView, parse_config, read_config
from .data_io import (CtDeployment, EncounterSequence, SightingRecord,
                      TransectCount, parse_encounters, parse_sightings,
                      read_launch_points, read_transect_counts_csv,
                      reconcile_observers, summarize_by_transect,
                      write_deployments_csv, write_launch_points_csv,
                      write_sequences_csv, write_sightings_csv,
                      write_transect_counts_csv)
from .ecosim import (DetectionModel, MovementModel, RecoveryReport,
                     SimWorld, ThomasPlacement, generate_population,
                     grid_deployments, recovery_experiment, replicate_world,
                     simulate_ct, simulate_drone_survey, swath_counts)
from .errors import (ConfigError, DegenerateInputError, DroneSurveyError,
                     NonConvergenceError, NumericError,
                     PlanningImpossibleError, ValidationError)
from .estimators import (BootstrapConfig, DensityEstimate, ZinbFit,
                         bootstrap_density, bootstrap_iterates,
                         estimate_from_json_dict, fit_zinb, naive_density,
                         zero_fraction, zinb_density, zinb_loglik)
from .geojson_io import (design_summary, design_to_geojson,
                         read_design_transects, read_region, write_design)
from .geometry import PlanarPoint, SurveyRegion
from .geoplan import (CoverageSummary, FlightPlan, GridGraph, GridSpec,
                      SurveyDesign, Transect, build_grid, coverage,
                      plan_design, snap_launch_points)
from .plotting import (BarDatum, bars_from_estimate_files, plot_table,
                       render_grouped_bars_svg, write_plot_csv)
from .rem import (RemInput, RemParams, encounter_adequacy,
                  encounters_from_sequences, effort, rem_density,
                  rem_input_from_data, rem_params_from_mapping)
from .rng import substream
from .stats_compare import (AdditiveFit, AnovaResult, DensityRow,
                            DensityTable, TukeyResult, anova_type2,
                            comparison_report_json, fit_additive_model,
                            read_density_table, studentized_range_cdf,
                            studentized_range_quantile, tukey_hsd,
                            write_density_table)

__version__ = "0.1.0"

__all__ = [
    "ConfigView", "parse_config", "read_config",
    "CtDeployment", "EncounterSequence", "SightingRecord", "TransectCount",
    "parse_encounters", "parse_sightings", "read_launch_points",
    "read_transect_counts_csv", "reconcile_observers",
    "summarize_by_transect", "write_deployments_csv",
    "write_launch_points_csv", "write_sequences_csv", "write_sightings_csv",
    "write_transect_counts_csv",
    "DetectionModel", "MovementModel", "RecoveryReport", "SimWorld",
    "ThomasPlacement", "generate_population", "grid_deployments",
    "recovery_experiment", "replicate_world", "simulate_ct",
    "simulate_drone_survey", "swath_counts",
    "ConfigError", "DegenerateInputError", "DroneSurveyError",
    "NonConvergenceError", "NumericError", "PlanningImpossibleError",
    "ValidationError",
    "BootstrapConfig", "DensityEstimate", "ZinbFit", "bootstrap_density",
    "bootstrap_iterates", "estimate_from_json_dict", "fit_zinb",
    "naive_density", "zero_fraction", "zinb_density", "zinb_loglik",
    "design_summary", "design_to_geojson", "read_design_transects",
    "read_region", "write_design",
    "PlanarPoint", "SurveyRegion",
    "CoverageSummary", "FlightPlan", "GridGraph", "GridSpec",
    "SurveyDesign", "Transect", "build_grid", "coverage", "plan_design",
    "snap_launch_points",
    "BarDatum", "bars_from_estimate_files", "plot_table",
    "render_grouped_bars_svg", "write_plot_csv",
    "RemInput", "RemParams", "encounter_adequacy",
    "encounters_from_sequences", "effort", "rem_density",
    "rem_input_from_data", "rem_params_from_mapping",
    "substream",
    "AdditiveFit", "AnovaResult", "DensityRow", "DensityTable",
    "TukeyResult", "anova_type2", "comparison_report_json",
    "fit_additive_model", "read_density_table", "studentized_range_cdf",
    "studentized_range_quantile", "tukey_hsd", "write_density_table",
    "__version__",
]
