"""Statistical comparison of density estimates across methods.

The comparison model is additive: density ~ method + survey_unit, a
randomized block layout where each survey unit (area x flight day) is a
block.  Factor significance uses type II sums of squares, the residual
sum increase from dropping that factor from the full additive model.
Pairwise method differences use Tukey's honest significant difference,
which needs the studentized range distribution; its CDF is computed here
by direct double numerical integration (outer integral over the chi-based
scale, inner over the range of k standard normals) so results can be
cross-checked against independent oracles.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
from scipy import integrate, optimize
from scipy.special import betainc, gammaln, ndtr

from .errors import DegenerateInputError, NumericError, ValidationError

__all__ = [
    "DensityRow", "DensityTable", "AdditiveFit", "AnovaLine", "AnovaResult",
    "TukeyRow", "TukeyResult", "fit_additive_model", "anova_type2",
    "tukey_hsd", "studentized_range_cdf", "studentized_range_quantile",
    "f_survival",
]

DENSITY_TABLE_COLUMNS = ("survey_unit", "method", "density")


@dataclass(frozen=True)
class DensityRow:
    survey_unit: str
    method: str
    density: float

    def __post_init__(self):
        if not math.isfinite(self.density):
            raise ValidationError(
                f"density for ({self.survey_unit}, {self.method}) "
                f"is not finite: {self.density}")


@dataclass(frozen=True)
class DensityTable:
    """Long-form table of density estimates, one row per unit x method."""

    rows: tuple[DensityRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise ValidationError("empty density table")

    def levels(self, factor: str) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(getattr(row, factor), None)
        return tuple(seen)

    def missing_cells(self) -> list[tuple[str, str]]:
        """Survey-unit x method combinations absent from the table."""
        present = {(r.survey_unit, r.method) for r in self.rows}
        return [(u, m) for u in self.levels("survey_unit")
                for m in self.levels("method") if (u, m) not in present]


def read_density_table(source: str | Path | TextIO) -> DensityTable:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as f:
            return read_density_table(f)
    reader = csv.DictReader(source)
    got = tuple(reader.fieldnames or ())
    if set(DENSITY_TABLE_COLUMNS) - set(got):
        raise ValidationError(
            f"density table header must contain {DENSITY_TABLE_COLUMNS}, "
            f"got {got}")
    rows = []
    for rec in reader:
        line = reader.line_num
        unit = (rec["survey_unit"] or "").strip()
        method = (rec["method"] or "").strip()
        if not unit or not method:
            raise ValidationError(f"line {line}: empty survey_unit or method")
        try:
            dens = float(rec["density"])
        except (TypeError, ValueError):
            raise ValidationError(
                f"line {line}: density is not a number: {rec['density']!r}")
        rows.append(DensityRow(unit, method, dens))
    return DensityTable(tuple(rows))


def write_density_table(table: DensityTable,
                        target: str | Path | TextIO) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as f:
            write_density_table(table, f)
            return
    w = csv.writer(target, lineterminator="\n")
    w.writerow(DENSITY_TABLE_COLUMNS)
    for row in table.rows:
        w.writerow([row.survey_unit, row.method, repr(float(row.density))])


@dataclass(frozen=True)
class AdditiveFit:
    """Least-squares fit of density ~ sum of factor effects."""

    factors: tuple[str, ...]
    levels: dict[str, tuple[str, ...]]
    codes: dict[str, np.ndarray]
    y: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    rss: float
    df_residual: int
    grand_mean: float
    effects: dict[str, dict[str, float]]


def _design_matrix(n: int, codes: dict[str, np.ndarray],
                   levels: dict[str, tuple[str, ...]],
                   include: Sequence[str]) -> np.ndarray:
    cols = [np.ones(n)]
    for factor in include:
        for j in range(1, len(levels[factor])):  # first level absorbed
            cols.append((codes[factor] == j).astype(float))
    return np.column_stack(cols)


def _rss(x: np.ndarray, y: np.ndarray) -> float:
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ coef
    return float(r @ r)


def fit_additive_model(table: DensityTable,
                       factors: Sequence[str] = ("method", "survey_unit"),
                       ) -> AdditiveFit:
    factors = tuple(factors)
    levels = {f: table.levels(f) for f in factors}
    for f in factors:
        if len(levels[f]) < 2:
            raise DegenerateInputError(
                f"factor {f!r} needs at least 2 levels, has {len(levels[f])}")
    n = len(table.rows)
    y = np.array([r.density for r in table.rows], dtype=float)
    codes = {}
    for f in factors:
        index = {lev: j for j, lev in enumerate(levels[f])}
        codes[f] = np.array([index[getattr(r, f)] for r in table.rows])
    x = _design_matrix(n, codes, levels, factors)
    rank = int(np.linalg.matrix_rank(x))
    if rank < x.shape[1]:
        raise DegenerateInputError(
            f"rank-deficient design: rank {rank} < {x.shape[1]} columns "
            f"({n} observations)")
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    fitted = x @ coef
    residuals = y - fitted
    # per-factor effects centered to mean zero over that factor's levels
    effects: dict[str, dict[str, float]] = {}
    pos = 1
    for f in factors:
        k = len(levels[f])
        raw = np.concatenate([[0.0], coef[pos:pos + k - 1]])
        pos += k - 1
        centered = raw - raw.mean()
        effects[f] = {lev: float(e) for lev, e in zip(levels[f], centered)}
    return AdditiveFit(
        factors=factors, levels=levels, codes=codes, y=y, fitted=fitted,
        residuals=residuals, rss=float(residuals @ residuals),
        df_residual=n - rank, grand_mean=float(y.mean()), effects=effects)


@dataclass(frozen=True)
class AnovaLine:
    source: str
    ss: float
    df: int
    ms: float
    f: float | None = None
    p: float | None = None


@dataclass(frozen=True)
class AnovaResult:
    lines: tuple[AnovaLine, ...]

    def line(self, source: str) -> AnovaLine:
        for line in self.lines:
            if line.source == source:
                return line
        raise KeyError(source)

    def to_json_dict(self) -> dict:
        return {"anova": [vars(line) for line in self.lines]}

    def to_text(self) -> str:
        header = f"{'source':<14}{'ss':>12}{'df':>5}{'ms':>12}" \
                 f"{'F':>9}{'p':>10}"
        out = [header]
        for ln in self.lines:
            f_txt = f"{ln.f:9.4f}" if ln.f is not None else f"{'':>9}"
            p_txt = f"{ln.p:10.5f}" if ln.p is not None else f"{'':>10}"
            out.append(f"{ln.source:<14}{ln.ss:12.5f}{ln.df:>5}"
                       f"{ln.ms:12.5f}{f_txt}{p_txt}")
        return "\n".join(out) + "\n"


def f_survival(f_stat: float, df_num: int, df_den: int) -> float:
    """P(F > f_stat) via the regularized incomplete beta function."""
    if f_stat < 0 or df_num < 1 or df_den < 1:
        raise ValidationError(
            f"bad F-test arguments: f={f_stat}, df=({df_num}, {df_den})")
    x = df_den / (df_den + df_num * f_stat)
    return float(betainc(df_den / 2.0, df_num / 2.0, x))


def anova_type2(fit: AdditiveFit) -> AnovaResult:
    """Type II table: each factor's SS is the RSS increase from dropping
    it while keeping every other factor in the model."""
    if fit.df_residual < 1:
        raise NumericError("zero residual degrees of freedom: p undefined")
    total_ss = float(((fit.y - fit.y.mean()) ** 2).sum())
    # rss at rounding-noise level (exact fit or constant data) leaves F 0/0
    if total_ss <= 0.0 or fit.rss <= 1e-12 * total_ss:
        raise NumericError(
            "residual mean square is zero (model fits exactly): "
            "F and p undefined")
    ms_resid = fit.rss / fit.df_residual
    n = len(fit.y)
    lines = []
    for factor in fit.factors:
        others = [f for f in fit.factors if f != factor]
        x_red = _design_matrix(n, fit.codes, fit.levels, others)
        ss = max(0.0, _rss(x_red, fit.y) - fit.rss)
        df = len(fit.levels[factor]) - 1
        ms = ss / df
        f_stat = ms / ms_resid
        lines.append(AnovaLine(source=factor, ss=ss, df=df, ms=ms, f=f_stat,
                               p=f_survival(f_stat, df, fit.df_residual)))
    lines.append(AnovaLine(source="residual", ss=fit.rss,
                           df=fit.df_residual, ms=ms_resid))
    return AnovaResult(tuple(lines))


# --- studentized range distribution ------------------------------------

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / _SQRT2PI


def _range_cdf(r: float, k: int) -> float:
    """P(max - min <= r) for k independent standard normals."""
    if r <= 0.0:
        return 0.0

    def integrand(x):
        return _phi(x) * (ndtr(x) - ndtr(x - r)) ** (k - 1)

    value, err = integrate.quad(integrand, -np.inf, np.inf,
                                epsabs=1e-11, epsrel=1e-11, limit=200)
    if err > 1e-8:
        raise NumericError(
            f"range CDF quadrature did not converge: r={r}, k={k}, "
            f"abs error {err:.2e}")
    return min(1.0, k * value)


def studentized_range_cdf(q: float, k: int, df: int) -> float:
    """P(Q <= q) where Q = (max - min of k standard normals) / S and
    S^2 is an independent chi-square over df.  Double numerical
    integration, absolute tolerance 1e-6."""
    if k < 2 or df < 1:
        raise ValidationError(f"need k >= 2 and df >= 1, got k={k}, df={df}")
    if not math.isfinite(q):
        raise ValidationError(f"q must be finite, got {q}")
    if q <= 0.0:
        return 0.0
    half_df = df / 2.0
    log_norm = half_df * math.log(df) - gammaln(half_df) \
        - (half_df - 1.0) * math.log(2.0)

    def outer(s):
        log_dens = log_norm + (df - 1.0) * math.log(s) - 0.5 * df * s * s
        return math.exp(log_dens) * _range_cdf(q * s, k)

    value, err = integrate.quad(outer, 0.0, np.inf,
                                epsabs=1e-9, epsrel=1e-9, limit=200)
    if err > 1e-6:
        raise NumericError(
            f"studentized range quadrature did not converge: q={q}, k={k}, "
            f"df={df}, abs error {err:.2e}")
    return min(1.0, max(0.0, value))


def studentized_range_quantile(p: float, k: int, df: int) -> float:
    """Inverse of studentized_range_cdf in q at fixed (k, df)."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile level must be in (0, 1), got {p}")
    hi = 4.0
    while studentized_range_cdf(hi, k, df) < p:
        hi *= 2.0
        if hi > 1e4:
            raise NumericError(
                f"studentized range quantile bracket failed: p={p}, "
                f"k={k}, df={df}")
    return float(optimize.brentq(
        lambda q: studentized_range_cdf(q, k, df) - p, 0.0, hi, xtol=1e-8))


# --- Tukey HSD ----------------------------------------------------------

@dataclass(frozen=True)
class TukeyRow:
    method_a: str
    method_b: str
    mean_diff: float
    q_statistic: float
    p_adjusted: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class TukeyResult:
    factor: str
    alpha: float
    q_critical: float
    df_residual: int
    n_per_level: int
    rows: tuple[TukeyRow, ...]

    def to_json_dict(self) -> dict:
        return {
            "factor": self.factor, "alpha": self.alpha,
            "q_critical": self.q_critical,
            "df_residual": self.df_residual,
            "n_per_level": self.n_per_level,
            "pairs": [vars(r) for r in self.rows],
        }

    def to_text(self) -> str:
        out = [f"Tukey HSD on {self.factor} "
               f"(alpha={self.alpha:g}, q_crit={self.q_critical:.4f}, "
               f"df={self.df_residual})",
               f"{'pair':<24}{'diff':>10}{'q':>9}{'p_adj':>9}"
               f"{'ci_low':>11}{'ci_high':>11}"]
        for r in self.rows:
            pair = f"{r.method_a} - {r.method_b}"
            out.append(f"{pair:<24}{r.mean_diff:10.4f}{r.q_statistic:9.4f}"
                       f"{r.p_adjusted:9.4f}{r.ci_low:11.4f}"
                       f"{r.ci_high:11.4f}")
        return "\n".join(out) + "\n"


def tukey_hsd(fit: AdditiveFit, factor: str = "method",
              alpha: float = 0.05) -> TukeyResult:
    """All-pairs comparison of one factor's level means; balanced levels
    only (every level must appear equally often)."""
    if factor not in fit.factors:
        raise ValidationError(f"unknown factor {factor!r}")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if fit.df_residual < 1:
        raise NumericError("zero residual degrees of freedom")
    total_ss = float(((fit.y - fit.y.mean()) ** 2).sum())
    if total_ss <= 0.0 or fit.rss <= 1e-12 * total_ss:
        raise NumericError("residual mean square is zero: q undefined")
    ms_resid = fit.rss / fit.df_residual
    levels = fit.levels[factor]
    codes = fit.codes[factor]
    counts = np.bincount(codes, minlength=len(levels))
    if len(set(counts.tolist())) != 1:
        raise ValidationError(
            f"unbalanced levels for {factor!r}: counts "
            f"{dict(zip(levels, counts.tolist()))}; balanced design required")
    n_per = int(counts[0])
    means = {lev: float(fit.y[codes == j].mean())
             for j, lev in enumerate(levels)}
    stderr = math.sqrt(ms_resid / n_per)
    k = len(levels)
    q_crit = studentized_range_quantile(1.0 - alpha, k, fit.df_residual)
    half_width = q_crit * stderr
    rows = []
    for a, b in combinations(levels, 2):
        diff = means[a] - means[b]
        q_stat = abs(diff) / stderr
        p_adj = 1.0 - studentized_range_cdf(q_stat, k, fit.df_residual)
        rows.append(TukeyRow(
            method_a=a, method_b=b, mean_diff=diff, q_statistic=q_stat,
            p_adjusted=p_adj, ci_low=diff - half_width,
            ci_high=diff + half_width))
    return TukeyResult(factor=factor, alpha=alpha, q_critical=q_crit,
                       df_residual=fit.df_residual, n_per_level=n_per,
                       rows=tuple(rows))


def comparison_report_json(anova: AnovaResult, tukey: TukeyResult) -> str:
    return json.dumps({**anova.to_json_dict(), "tukey": tukey.to_json_dict()},
                      sort_keys=True, indent=2) + "\n"
