"""Acceptance scorecard: one test per numbered release criterion.

Each test exercises one externally stated guarantee end to end and prints
a single ``criterion N: PASS/FAIL`` line; ``conftest.py`` repeats the
collected lines after the run so a plain ``pytest`` shows the scorecard.
Every Monte Carlo check runs on frozen substreams of one master seed, so
results are deterministic run to run; tolerances are stated inline.
"""

from __future__ import annotations

import math
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import expit, gammaln, logit

from dronesurvey.data_io import TransectCount
from dronesurvey.ecosim import (MovementModel, SimWorld, grid_deployments,
                                recovery_experiment)
from dronesurvey.errors import NumericError, ValidationError
from dronesurvey.estimators import (BootstrapConfig, bootstrap_density,
                                    fit_zinb, naive_density, zero_fraction,
                                    zinb_density, zinb_loglik)
from dronesurvey.geometry import PlanarPoint, SurveyRegion
from dronesurvey.geoplan import GridSpec, SurveyDesign, coverage, plan_design
from dronesurvey.rem import RemParams
from dronesurvey.rng import substream
from dronesurvey.stats_compare import (DensityRow, DensityTable, anova_type2,
                                       f_survival, fit_additive_model,
                                       studentized_range_cdf)

MASTER = 20240817

RESULTS: list[str] = []


def _report(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# Reference tallies from a published deer survey campaign, three blocks
# flown in October and November: (total covered km2, animals sighted,
# transects with sightings, transects flown). Only these per-unit totals
# were released, not per-transect counts.
REFERENCE_UNITS = {
    "A-Oct": (0.76, 21, 9, 40),
    "A-Nov": (0.51, 25, 8, 28),
    "B-Oct": (0.94, 37, 13, 47),
    "B-Nov": (0.74, 25, 8, 36),
    "C-Oct": (0.93, 35, 17, 45),
    "C-Nov": (0.64, 23, 11, 31),
}


def reference_counts(unit: str) -> list[TransectCount]:
    covered, animals, with_sightings, flown = REFERENCE_UNITS[unit]
    # Per-transect counts were not published; spread the sightings over
    # the nonzero transects. Zero fraction and naive density depend only
    # on the totals, not on the split.
    base, extra = divmod(animals, with_sightings)
    ys = [0] * (flown - with_sightings) \
        + [base + (1 if i < extra else 0) for i in range(with_sightings)]
    area = covered / flown
    return [TransectCount(f"{unit}-{i:03d}", y, area)
            for i, y in enumerate(ys)]


def test_criterion_01_zero_fractions_match_reported_extremes():
    zf = {unit: 100.0 * zero_fraction(reference_counts(unit))
          for unit in REFERENCE_UNITS}
    ok = abs(zf["A-Oct"] - 77.5) <= 0.1 and abs(zf["C-Oct"] - 62.2) <= 0.1
    _report(1, ok,
            f"zero fraction A-Oct {zf['A-Oct']:.2f}% (reported 77.5), "
            f"C-Oct {zf['C-Oct']:.2f}% (reported 62.2), tolerance 0.1 pp")


def test_criterion_02_naive_densities_inside_reported_range():
    dens = {unit: naive_density(reference_counts(unit)).density_per_km2
            for unit in REFERENCE_UNITS}
    all_in = all(27.0 <= d <= 64.3 for d in dens.values())
    a_oct_in = 26.5 <= dens["A-Oct"] <= 28.5
    ok = all_in and a_oct_in
    _report(2, ok,
            f"naive densities {min(dens.values()):.2f}..{max(dens.values()):.2f}"
            f" per km2, all inside [27.0, 64.3]: {all_in}, "
            f"A-Oct {dens['A-Oct']:.2f} inside [26.5, 28.5]: {a_oct_in}")


def test_criterion_03_method_density_table_documented_as_unreproducible():
    # Bootstrap and ZINB densities cannot be recomputed from the released
    # per-unit totals: both need the full per-transect count vectors. The
    # README states this and the estimators are validated against known
    # synthetic truth instead (criteria 4 through 7 below).
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    documented = "cannot be recomputed" in readme
    substitutes = all(name in globals() for name in (
        "test_criterion_04_bootstrap_interval_coverage",
        "test_criterion_05_zinb_parameter_recovery",
        "test_criterion_06_estimators_agree_on_sparse_surveys",
        "test_criterion_07_rem_closes_on_simulated_camera_networks",
    ))
    ok = documented and substitutes
    _report(3, ok,
            "resampling and model densities need unpublished per-transect "
            f"counts; limitation in README: {documented}, simulator-based "
            f"substitutes present: {substitutes}")


def _sparse_counts(rep: int, label: str, n: int = 40, area: float = 0.02,
                   ) -> list[TransectCount]:
    # Zero-inflated NB counts: mask 0.5, conditional mean 1.2, k 1.5 gives
    # about 70 percent zeros and true density 0.5 * 1.2 / 0.02 = 30.
    rng = substream(MASTER, f"{label}:{rep}")
    lam = rng.gamma(1.5, 1.2 / 1.5, size=n)
    y = rng.poisson(lam)
    y[rng.random(n) < 0.5] = 0
    return [TransectCount(f"T{i:03d}", int(v), area)
            for i, v in enumerate(y)]


def test_criterion_04_bootstrap_interval_coverage():
    # 200 synthetic surveys, n=40 transects of 0.02 km2, truth 30 per km2.
    t0 = time.time()
    cover = 0
    worst_z = 0.0
    zero_fracs = []
    for rep in range(200):
        counts = _sparse_counts(rep, "acc4")
        zero_fracs.append(zero_fraction(counts))
        naive = naive_density(counts).density_per_km2
        boot = bootstrap_density(counts, BootstrapConfig(
            seed=int(substream(MASTER, f"acc4-boot:{rep}").integers(0, 2**62)),
            iterations=1000))
        if boot.ci_low <= 30.0 <= boot.ci_high:
            cover += 1
        mc_se = boot.se / math.sqrt(1000.0)
        z = abs(boot.density_per_km2 - naive) / mc_se if mc_se > 0 else 0.0
        worst_z = max(worst_z, z)
    elapsed = time.time() - t0
    ok = cover >= 176 and worst_z <= 3.0 and elapsed <= 120.0
    _report(4, ok,
            f"95% CI covered truth in {cover}/200 surveys (need >= 176), "
            f"worst |bootstrap mean - naive| {worst_z:.2f} resampling SEs "
            f"(limit 3.0), mean zero fraction "
            f"{100.0 * float(np.mean(zero_fracs)):.0f}%, {elapsed:.0f}s")


def _zinb_counts(rep: int) -> list[TransectCount]:
    # n=500 unit-area transects, point mass 0.7, mean 100 per km2, k 1.5.
    rng = substream(MASTER, f"acc5:{rep}")
    lam = rng.gamma(1.5, 100.0 / 1.5, size=500)
    y = rng.poisson(lam)
    y[rng.random(500) < 0.7] = 0
    return [TransectCount(f"T{i:03d}", int(v), 1.0)
            for i, v in enumerate(y)]


def test_criterion_05_zinb_parameter_recovery():
    t0 = time.time()
    truth = np.array([logit(0.7), math.log(100.0), math.log(1.5)])
    hits = np.zeros(3)
    n_ok = 0
    for rep in range(100):
        fit = fit_zinb(_zinb_counts(rep), seed=rep)
        if not fit.converged:
            continue
        n_ok += 1
        u = np.array([logit(fit.pi), fit.beta0, math.log(fit.k)])
        se = np.sqrt(np.diag(fit.covariance))
        hits += np.abs(u - truth) <= 3.0 * se

    # First-order condition at one fitted optimum, central differences in
    # the unconstrained coordinates (logit pi, beta0, log k).
    counts0 = _zinb_counts(0)
    fit0 = fit_zinb(counts0, seed=0)
    u_hat = np.array([logit(fit0.pi), fit0.beta0, math.log(fit0.k)])

    def loglik(u: np.ndarray) -> float:
        return zinb_loglik(counts0, float(expit(u[0])), float(u[1]),
                           float(math.exp(u[2])))

    h = 1e-4
    grad = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        grad[j] = (loglik(u_hat + e) - loglik(u_hat - e)) / (2.0 * h)
    fd_max = float(np.max(np.abs(grad)))

    # Large-k limit must reproduce an independently coded zero-inflated
    # Poisson likelihood on Poisson-generated data.
    rng = substream(MASTER, "acc5-zip")
    yz = rng.poisson(np.full(150, 15.0 * 0.019))
    yz[rng.random(150) < 0.6] = 0
    zcounts = [TransectCount(f"Z{i:03d}", int(v), 0.019)
               for i, v in enumerate(yz)]
    zfit = fit_zinb(zcounts, seed=1)

    def zip_loglik(pi: float, beta0: float) -> float:
        ll = 0.0
        for c in zcounts:
            m = math.exp(beta0) * c.covered_area_km2
            if c.animal_count == 0:
                ll += math.log(pi + (1.0 - pi) * math.exp(-m))
            else:
                ll += (math.log(1.0 - pi) - m
                       + c.animal_count * math.log(m)
                       - gammaln(c.animal_count + 1))
        return ll

    zip_gap = abs(zinb_loglik(zcounts, zfit.pi, zfit.beta0, 1e6)
                  - zip_loglik(zfit.pi, zfit.beta0))

    elapsed = time.time() - t0
    ok = (n_ok == 100 and bool(np.all(hits >= 95)) and fd_max < 1e-4
          and zip_gap < 1e-6 and elapsed <= 300.0)
    _report(5, ok,
            f"converged {n_ok}/100, params within 3 SE "
            f"{[int(v) for v in hits]}/100 (need >= 95 each), FD gradient "
            f"{fd_max:.1e} (limit 1e-4), ZIP-limit gap {zip_gap:.1e} "
            f"(limit 1e-6), {elapsed:.0f}s")


def test_criterion_06_estimators_agree_on_sparse_surveys():
    t0 = time.time()
    agree = 0
    failures = 0
    for rep in range(100):
        counts = _sparse_counts(rep, "acc6")
        try:
            d = [naive_density(counts).density_per_km2,
                 bootstrap_density(counts, BootstrapConfig(
                     seed=int(substream(MASTER, f"acc6-boot:{rep}")
                              .integers(0, 2**62)),
                     iterations=500)).density_per_km2,
                 zinb_density(fit_zinb(counts, seed=rep),
                              counts).density_per_km2]
        except (ValidationError, NumericError):
            failures += 1
            continue
        if max(d) <= 1.15 * min(d):
            agree += 1
    elapsed = time.time() - t0
    ok = agree >= 80 and elapsed <= 180.0
    _report(6, ok,
            f"naive, bootstrap, and ZINB within 15% of each other on "
            f"{agree}/100 sparse surveys (need >= 80), {failures} fit "
            f"failures, {elapsed:.0f}s")


def test_criterion_07_rem_closes_on_simulated_camera_networks():
    # Truth 20 per km2 on a 3 km x 3 km block, 22 cameras for 30 days,
    # estimator fed the simulation's own movement and sensor parameters.
    t0 = time.time()
    region = SurveyRegion.rectangle(3000.0, 3000.0)
    deployments = grid_deployments(
        region, 22, detection_radius_m=10.0, detection_angle_rad=0.7,
        start_ts=datetime(2021, 10, 1, tzinfo=timezone.utc),
        duration_days=30.0)
    world = SimWorld(region, 20.0, seed=42)
    report = recovery_experiment(
        world, "rem", 20, deployments=deployments,
        movement=MovementModel(1.0), rem_params=RemParams(1.0, 0.01, 0.7),
        duration_days=30.0)
    encounters = [r["encounters"] for r in report.per_replicate]
    mean_enc = float(np.mean(encounters))
    elapsed = time.time() - t0
    ok = (report.n_ok == 20 and abs(report.relative_bias) <= 0.10
          and mean_enc >= 100.0 and min(encounters) >= 40
          and elapsed <= 300.0)
    _report(7, ok,
            f"relative bias {100.0 * report.relative_bias:+.1f}% (limit "
            f"10%), mean encounters {mean_enc:.0f} (need >= 100), min "
            f"{min(encounters)} (need >= 40), {report.n_ok}/20 replicates, "
            f"{elapsed:.0f}s")


def _lstsq_rss(x: np.ndarray, y: np.ndarray) -> float:
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ beta
    return float(r @ r)


def _close(a: float, b: float, rel: float = 1e-8) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def test_criterion_08_anova_and_tukey_match_independent_oracles():
    t0 = time.time()

    # One-way hand data against longhand sums of squares.
    groups = {"g1": [1.0, 2.0, 3.0, 4.0],
              "g2": [2.0, 3.0, 4.0, 5.0],
              "g3": [6.0, 7.0, 8.0, 9.0]}
    rows = [DensityRow(f"u{i:02d}", g, v) for i, (g, v) in enumerate(
        (g, v) for g, vs in groups.items() for v in vs)]
    one_way = anova_type2(fit_additive_model(DensityTable(tuple(rows)),
                                             factors=("method",)))
    y_all = np.array([v for vs in groups.values() for v in vs])
    grand = y_all.mean()
    ss_between = sum(len(vs) * (np.mean(vs) - grand) ** 2
                     for vs in groups.values())
    ss_within = sum(float(((np.array(vs) - np.mean(vs)) ** 2).sum())
                    for vs in groups.values())
    f_brute = (ss_between / 2.0) / (ss_within / 9.0)
    line = one_way.line("method")
    one_way_ok = (_close(line.ss, ss_between)
                  and _close(one_way.line("residual").ss, ss_within)
                  and _close(line.f, f_brute)
                  and line.df == 2 and one_way.line("residual").df == 9)

    # Balanced 4 methods x 6 units against brute-force type II RSS drops.
    methods = ("naive", "bootstrap", "zinb", "rem")
    units = tuple(f"u{j}" for j in range(6))
    rows2 = [DensityRow(units[j], methods[i],
                        20.0 + 2.5 * i + 1.7 * j + 0.9 * ((i * j) % 3))
             for i in range(4) for j in range(6)]
    fit2 = fit_additive_model(DensityTable(tuple(rows2)))
    two_way = anova_type2(fit2)
    y2 = np.array([r.density for r in rows2])
    ones = np.ones((24, 1))
    dm = np.array([[1.0 if rows2[n].method == m else 0.0
                    for m in methods[1:]] for n in range(24)])
    du = np.array([[1.0 if rows2[n].survey_unit == u else 0.0
                    for u in units[1:]] for n in range(24)])
    rss_full = _lstsq_rss(np.hstack([ones, dm, du]), y2)
    ss_m = _lstsq_rss(np.hstack([ones, du]), y2) - rss_full
    ss_u = _lstsq_rss(np.hstack([ones, dm]), y2) - rss_full
    lm, lu = two_way.line("method"), two_way.line("survey_unit")
    two_way_ok = (_close(lm.ss, ss_m) and _close(lu.ss, ss_u)
                  and _close(lm.f, (ss_m / 3.0) / (rss_full / 15.0))
                  and _close(lu.f, (ss_u / 5.0) / (rss_full / 15.0))
                  and lm.df == 3 and lu.df == 5
                  and two_way.line("residual").df == 15)

    # Two-level studentized range must collapse to the t distribution.
    worst_t_gap = max(
        abs(studentized_range_cdf(q, 2, df)
            - (2.0 * stats.t.cdf(q / math.sqrt(2.0), df) - 1.0))
        for q in (0.5, 1.0, 2.0, 3.0, 4.0) for df in (3, 10, 30))

    # Studentized range CDF against 1e7 Monte Carlo draws at k=3, df=12.
    target = studentized_range_cdf(3.77, 3, 12)
    below = 0
    for chunk in range(10):
        rng = substream(MASTER, f"acc8-mc:{chunk}")
        z = rng.standard_normal((1_000_000, 3))
        s = np.sqrt(rng.chisquare(12, size=1_000_000) / 12.0)
        q = (z.max(axis=1) - z.min(axis=1)) / s
        below += int(np.count_nonzero(q <= 3.77))
    mc_gap = abs(below / 1e7 - target)

    # A balanced 4x6 additive fit puts the method F on (3, 15) degrees of
    # freedom; a reported F of 3.57 with p 0.038 is consistent with that
    # pairing and not with the one-way alternative (3, 20).
    p_15 = f_survival(3.57, 3, 15)
    p_20 = f_survival(3.57, 3, 20)
    df_ok = (abs(p_15 - 0.038) <= 0.002
             and abs(p_15 - 0.038) < abs(p_20 - 0.038))

    elapsed = time.time() - t0
    ok = (one_way_ok and two_way_ok and worst_t_gap < 1e-6
          and mc_gap <= 0.002 and df_ok and elapsed <= 120.0)
    _report(8, ok,
            f"longhand SS/F match (one-way {one_way_ok}, type II "
            f"{two_way_ok}, rel 1e-8), k=2 range vs t gap {worst_t_gap:.1e} "
            f"(limit 1e-6), MC CDF gap {mc_gap:.1e} (limit 2e-3), "
            f"p(3.57; 3,15) = {p_15:.4f} within 0.002 of 0.038: {df_ok}, "
            f"{elapsed:.0f}s")


# Three block shapes matching the reference campaign areas (2.98, 4.2 and
# 5.49 km2) with launch points on the interior of each block.
PLANNER_REGIONS = {
    "A": (SurveyRegion.rectangle(1720.0, 1735.0),
          [PlanarPoint(x, y) for x in (350.0, 1050.0)
           for y in (350.0, 1050.0)]),
    "B": (SurveyRegion.rectangle(2100.0, 2000.0),
          [PlanarPoint(x, y) for x in (350.0, 1050.0, 1750.0)
           for y in (350.0, 1050.0, 1750.0)]),
    "C": (SurveyRegion.rectangle(2680.0, 2050.0),
          [PlanarPoint(x, y) for x in (350.0, 1050.0, 1750.0, 2450.0)
           for y in (350.0, 1050.0, 1750.0)]),
}


def _design_violations(design: SurveyDesign) -> list[str]:
    out = []
    keys = design.edge_keys()
    if len(set(keys)) != len(keys):
        out.append("repeated grid edge")
    for flight in design.flights:
        if not 1 <= len(flight.transects) <= 7:
            out.append(f"{flight.id}: {len(flight.transects)} transects")
        if flight.transects[0].start_node != flight.launch_node:
            out.append(f"{flight.id}: does not start at its launch node")
        for prev, cur in zip(flight.transects, flight.transects[1:]):
            if cur.start_node != prev.end_node:
                out.append(f"{flight.id}: broken chain")
        for t in flight.transects:
            for node in (t.start_node, t.end_node):
                p = design.grid.node_point(node)
                if not design.region.covers(p.x, p.y):
                    out.append(f"{t.id}: endpoint outside region")
    return out


def test_criterion_09_planner_invariants_and_coverage_band():
    t0 = time.time()
    violations: list[str] = []
    fracs = []
    in_band = True
    for seed in range(100):
        for region, launches in PLANNER_REGIONS.values():
            design = plan_design(region, GridSpec(), launches, seed,
                                 target_coverage_fraction=0.17)
            violations += _design_violations(design)
            frac = coverage(design).covered_fraction
            fracs.append(frac)
            in_band = in_band and design.target_met \
                and 0.119 <= frac <= 0.255

    deterministic = all(
        plan_design(*PLANNER_REGIONS["B"][:1], GridSpec(),
                    PLANNER_REGIONS["B"][1], seed,
                    target_coverage_fraction=0.17).edge_keys()
        == plan_design(*PLANNER_REGIONS["B"][:1], GridSpec(),
                       PLANNER_REGIONS["B"][1], seed,
                       target_coverage_fraction=0.17).edge_keys()
        for seed in range(5))

    # The reported coverage band (11.9 to 25.5 percent) is reachable: its
    # low end on every block, its high end on the mid-sized block.
    low_end = all(
        plan_design(region, GridSpec(), launches, seed,
                    target_coverage_fraction=0.119).target_met
        for region, launches in PLANNER_REGIONS.values()
        for seed in range(10))
    region_b, launches_b = PLANNER_REGIONS["B"]
    high_end = all(
        plan_design(region_b, GridSpec(), launches_b, seed,
                    target_coverage_fraction=0.255).target_met
        for seed in range(10))

    elapsed = time.time() - t0
    ok = (not violations and in_band and deterministic and low_end
          and high_end and elapsed <= 60.0)
    _report(9, ok,
            f"300 designs, {len(violations)} invariant violations, coverage "
            f"{min(fracs):.3f}..{max(fracs):.3f} inside [0.119, 0.255]: "
            f"{in_band}, deterministic: {deterministic}, band endpoints "
            f"met (0.119 all blocks, 0.255 block B): "
            f"{low_end and high_end}, {elapsed:.0f}s")


def test_criterion_10_end_to_end_recovery_with_bootstrap_intervals():
    # Plan on a 5 km2 block, simulate truth 30 per km2, estimate, repeat.
    t0 = time.time()
    region = SurveyRegion.rectangle(2500.0, 2000.0)
    launches = [PlanarPoint(x, y) for x in (350.0, 1050.0, 1750.0)
                for y in (350.0, 1050.0, 1750.0)]
    design = plan_design(region, GridSpec(), launches, seed=17,
                         target_coverage_fraction=0.17)
    world = SimWorld(region, 30.0, seed=MASTER)
    report = recovery_experiment(world, "bootstrap", 100, design=design,
                                 bootstrap_iterations=1000)
    elapsed = time.time() - t0
    ok = (report.n_ok == 100 and report.ci_coverage is not None
          and report.ci_coverage >= 0.85 and elapsed < 60.0)
    _report(10, ok,
            f"bootstrap 95% CI covered truth in "
            f"{round(100 * (report.ci_coverage or 0.0))}/100 end-to-end "
            f"replicates (need >= 85), relative bias "
            f"{100.0 * report.relative_bias:+.1f}%, {elapsed:.0f}s "
            f"(limit 60s)")
