"""Density estimators for per-transect count data.

Three extrapolation routes from the same per-transect counts and covered
areas, in increasing order of model structure:

naive      total animals / total area
bootstrap  resample transects with replacement, mean and percentile CI
zinb       zero-inflated negative binomial with a log link and an area
           offset, so excess empty transects and over-dispersed counts are
           modeled instead of averaged away

The ZINB mean model is ln mu_i = beta0 + ln a_i with a_i the covered area
of transect i in km², which makes exp(beta0) the expected animals per km²
of the count process and (1 - pi) * exp(beta0) the animal density.
Optimization runs on the unconstrained scale (logit pi, beta0, ln k) with
an analytic gradient; the covariance comes from the numerically inverted
negative Hessian at the optimum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import digamma, expit, gammaln, logit

from .data_io import TransectCount
from .errors import (ConfigError, DegenerateInputError, NonConvergenceError,
                     NumericError)
from .rng import substream

__all__ = [
    "DensityEstimate", "BootstrapConfig", "ZinbFit", "naive_density",
    "bootstrap_density", "fit_zinb", "zinb_density", "zero_fraction",
    "write_estimates_csv", "estimate_from_json_dict",
]

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class DensityEstimate:
    """A density in animals per km² with optional uncertainty."""

    method: str
    density_per_km2: float
    n_units: int
    se: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.density_per_km2 < 0:
            raise NumericError(f"negative density: {self.density_per_km2}")
        if self.ci_low is not None and self.ci_high is not None:
            if not (self.ci_low <= self.density_per_km2 <= self.ci_high):
                raise NumericError(
                    f"CI [{self.ci_low}, {self.ci_high}] does not bracket "
                    f"estimate {self.density_per_km2}")

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "density_per_km2": self.density_per_km2,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_units": self.n_units,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


def estimate_from_json_dict(obj: dict) -> DensityEstimate:
    return DensityEstimate(
        method=obj["method"], density_per_km2=obj["density_per_km2"],
        n_units=obj["n_units"], se=obj.get("se"),
        ci_low=obj.get("ci_low"), ci_high=obj.get("ci_high"),
        diagnostics=obj.get("diagnostics") or {})


_CSV_COLUMNS = ("method", "density_per_km2", "se", "ci_low", "ci_high",
                "n_units")


def write_estimates_csv(estimates: Sequence[DensityEstimate], target) -> None:
    """Tabular one-row-per-estimate form (absent uncertainty left blank)."""
    rows = [[e.method, repr(float(e.density_per_km2)),
             "" if e.se is None else repr(float(e.se)),
             "" if e.ci_low is None else repr(float(e.ci_low)),
             "" if e.ci_high is None else repr(float(e.ci_high)),
             e.n_units] for e in estimates]
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(_CSV_COLUMNS)
            w.writerows(rows)
    else:
        w = csv.writer(target, lineterminator="\n")
        w.writerow(_CSV_COLUMNS)
        w.writerows(rows)


def _arrays(counts: Sequence[TransectCount]) -> tuple[np.ndarray, np.ndarray]:
    if not counts:
        raise DegenerateInputError("no transects")
    y = np.array([c.animal_count for c in counts], dtype=float)
    a = np.array([c.covered_area_km2 for c in counts], dtype=float)
    if np.any(a <= 0):
        raise DegenerateInputError("non-positive covered area")
    return y, a


def zero_fraction(counts: Sequence[TransectCount]) -> float:
    """Fraction of transects with no sightings."""
    y, _ = _arrays(counts)
    return float(np.mean(y == 0))


def naive_density(counts: Sequence[TransectCount]) -> DensityEstimate:
    """Total animals divided by total covered area; no uncertainty."""
    y, a = _arrays(counts)
    total_area = float(a.sum())
    return DensityEstimate(
        method="naive",
        density_per_km2=float(y.sum()) / total_area,
        n_units=len(counts),
        diagnostics={"total_count": float(y.sum()),
                     "total_area_km2": total_area,
                     "zero_fraction": zero_fraction(counts)},
    )


@dataclass(frozen=True)
class BootstrapConfig:
    """Transect-resampling settings.

    statistic: ratio_of_sums uses sum(counts)/sum(areas) per resample
    (area-weighted ratio estimator); mean_of_ratios averages per-transect
    densities. Iteration i draws its indices from the RNG substream
    labeled "bootstrap:i" of `seed`, so results do not depend on execution
    order.
    """

    seed: int
    iterations: int = 1000
    confidence: float = 0.95
    statistic: str = "ratio_of_sums"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not (0.0 < self.confidence < 1.0):
            raise ConfigError(f"confidence must be in (0,1), got {self.confidence}")
        if self.statistic not in ("ratio_of_sums", "mean_of_ratios"):
            raise ConfigError(f"unknown bootstrap statistic {self.statistic!r}")


def bootstrap_iterates(counts: Sequence[TransectCount],
                       config: BootstrapConfig) -> np.ndarray:
    """The raw per-iteration statistics, in iteration order."""
    y, a = _arrays(counts)
    n = len(y)
    per_transect = y / a
    out = np.empty(config.iterations)
    for i in range(config.iterations):
        idx = substream(config.seed, f"bootstrap:{i}").integers(0, n, size=n)
        if config.statistic == "ratio_of_sums":
            out[i] = y[idx].sum() / a[idx].sum()
        else:
            out[i] = per_transect[idx].mean()
    return out


def bootstrap_density(counts: Sequence[TransectCount],
                      config: BootstrapConfig) -> DensityEstimate:
    """Resampling mean and percentile CI over transects."""
    stats = bootstrap_iterates(counts, config)
    alpha = 1.0 - config.confidence
    lo, hi = np.quantile(stats, [alpha / 2.0, 1.0 - alpha / 2.0])
    est = float(stats.mean())
    return DensityEstimate(
        method="bootstrap",
        density_per_km2=est,
        n_units=len(counts),
        se=float(stats.std(ddof=1)) if len(stats) > 1 else 0.0,
        ci_low=min(float(lo), est), ci_high=max(float(hi), est),
        diagnostics={"iterations": config.iterations,
                     "confidence": config.confidence,
                     "statistic": config.statistic,
                     "seed": config.seed},
    )


@dataclass(frozen=True)
class ZinbFit:
    """Fitted zero-inflated negative binomial parameters.

    covariance is 3x3 on the unconstrained (logit pi, beta0, ln k) scale.
    """

    beta0: float
    pi: float
    k: float
    covariance: np.ndarray
    loglik: float
    converged: bool
    n_iterations: int


def _zinb_loglik_grad(u: np.ndarray, y: np.ndarray, log_a: np.ndarray,
                      ) -> tuple[float, np.ndarray]:
    """Log-likelihood and its analytic gradient on the unconstrained scale.

    u = (q, b, c) with pi = expit(q), k = exp(c); mu_i = exp(b + log a_i).
    """
    q, b, c = u
    pi = expit(q)
    k = math.exp(c)
    log_mu = b + log_a
    mu = np.exp(log_mu)
    log_k_over_kmu = c - np.logaddexp(c, log_mu)   # ln(k/(k+mu)), stable
    mu_over_kmu = expit(log_mu - c)                # mu/(k+mu)
    k_over_kmu = 1.0 - mu_over_kmu

    zero = y == 0
    pos = ~zero
    g = np.zeros(3)

    # ln pi and ln(1-pi) via softplus for stability at extreme q
    log_pi = -np.logaddexp(0.0, -q)
    log_1mpi = -np.logaddexp(0.0, q)

    ll = 0.0
    if np.any(zero):
        s = k * log_k_over_kmu[zero]               # ln NB(0) = ln p0
        log_A = np.logaddexp(log_pi, log_1mpi + s)
        ll += float(log_A.sum())
        # d lnA/dq = (1 - p0) * pi*(1-pi) / A; express via exp(log ratios)
        w_pi = np.exp(log_pi - log_A)              # pi / A
        w_nb = np.exp(log_1mpi + s - log_A)        # (1-pi) p0 / A
        g[0] += float(((1.0 - pi) * w_pi * (1.0 - np.exp(s))).sum())
        ds_db = -k * mu_over_kmu[zero]
        ds_dc = k * (log_k_over_kmu[zero] + mu_over_kmu[zero])
        g[1] += float((w_nb * ds_db).sum())
        g[2] += float((w_nb * ds_dc).sum())
    if np.any(pos):
        yp = y[pos]
        ll += float(pos.sum()) * log_1mpi
        ll += float((gammaln(yp + k) - gammaln(k) - gammaln(yp + 1.0)
                     + k * log_k_over_kmu[pos]
                     + yp * (log_mu[pos] - np.logaddexp(c, log_mu[pos]))).sum())
        g[0] += -pi * float(pos.sum())
        g[1] += float((yp - (yp + k) * mu_over_kmu[pos]).sum())
        g[2] += k * float((digamma(yp + k) - digamma(k) + log_k_over_kmu[pos]
                           + 1.0 - (yp + k) / (k + mu[pos])).sum())
    return ll, g


def _numeric_hessian(u: np.ndarray, y: np.ndarray, log_a: np.ndarray,
                     ) -> np.ndarray:
    """Central differences of the analytic gradient."""
    H = np.zeros((3, 3))
    for j in range(3):
        h = 1e-5 * max(1.0, abs(u[j]))
        up, un = u.copy(), u.copy()
        up[j] += h
        un[j] -= h
        _, gp = _zinb_loglik_grad(up, y, log_a)
        _, gn = _zinb_loglik_grad(un, y, log_a)
        H[:, j] = (gp - gn) / (2.0 * h)
    return (H + H.T) / 2.0


def _psd_covariance(neg_hessian: np.ndarray) -> np.ndarray:
    """Pseudo-inverse projected onto the symmetric PSD cone."""
    cov = np.linalg.pinv(neg_hessian, hermitian=True)
    cov = (cov + cov.T) / 2.0
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def _polish(u, ll, g, y, log_a, max_rounds=40):
    """Modified-Newton ascent that never worsens the gradient sup-norm.

    Works on the PD-projected negative Hessian with per-eigendirection step
    clipping: a flat ridge (k -> infinity on Poisson-like data, or exactly
    non-identifiable 0/1 histograms) advances by the clip bound while the
    well-conditioned directions keep their Newton step. Candidate steps are
    accepted only if they shrink max |grad| without losing log-likelihood,
    or genuinely raise the log-likelihood; the best-gradient visited point
    is what gets returned, so a noisy Hessian on a ridge cannot drag a
    already-stationary point away from stationarity.
    """
    best = (u, ll, g)
    for _ in range(max_rounds):
        if np.max(np.abs(g)) < 1e-8:
            break
        neg_h = -_numeric_hessian(u, y, log_a)
        vals, vecs = np.linalg.eigh(neg_h)
        floor = max(1e-8, 1e-10 * float(vals.max(initial=0.0)))
        coef = (vecs.T @ g) / np.maximum(vals, floor)
        step = vecs @ np.clip(coef, -20.0, 20.0)
        scale = 1.0
        accepted = False
        for _ in range(30):
            cand = u + scale * step
            ll_c, g_c = _zinb_loglik_grad(cand, y, log_a)
            shrinks = np.max(np.abs(g_c)) < 0.999 * np.max(np.abs(g))
            if np.isfinite(ll_c) and ((shrinks and ll_c >= ll - 1e-9) or
                                      ll_c > ll + 1e-12):
                u, ll, g = cand, ll_c, g_c
                accepted = True
                break
            scale /= 2.0
        if not accepted:
            break
        if np.max(np.abs(g)) < np.max(np.abs(best[2])) and \
                ll >= best[1] - 1e-6:
            best = (u, ll, g)
    return best


def _maximize(u0, y, log_a, max_iter, tol):
    """Alternate BFGS runs with gradient-safe Newton polish.

    BFGS line searches stall with 'precision loss' on likelihood ridges;
    restarting from the stall point with a fresh Hessian approximation
    recovers, and the polish pass cleans up whatever gradient remains.
    """

    def neg(v):
        ll, g = _zinb_loglik_grad(v, y, log_a)
        return -ll, -g

    u = np.asarray(u0, dtype=float)
    ll, g = _zinb_loglik_grad(u, y, log_a)
    best = (u, ll, g)
    nit = 0
    for _ in range(10):
        res = optimize.minimize(neg, best[0], jac=True, method="BFGS",
                                options={"maxiter": max_iter, "gtol": tol})
        nit += int(res.nit) + 1
        if np.all(np.isfinite(res.x)):
            ll_r, g_r = _zinb_loglik_grad(res.x, y, log_a)
            if np.isfinite(ll_r) and ll_r >= best[1] - 1e-9 and \
                    np.max(np.abs(g_r)) < np.max(np.abs(best[2])):
                best = (res.x, ll_r, g_r)
            elif np.isfinite(ll_r) and ll_r > best[1]:
                best = (res.x, ll_r, g_r)
        prev_grad = np.max(np.abs(best[2]))
        best = _polish(*best, y, log_a)
        if np.max(np.abs(best[2])) < 1e-8:
            break
        if np.max(np.abs(best[2])) >= prev_grad * 0.95:
            break  # no longer making progress; stop burning rounds
    return best[0], best[1], best[2], nit


def fit_zinb(counts: Sequence[TransectCount], *, max_iter: int = 10000,
             tol: float = 1e-8, n_starts: int = 3, seed: int = 0) -> ZinbFit:
    """Maximum-likelihood ZINB fit with area offset and multiple starts.

    Raises DegenerateInputError when every count is zero (pi and beta0 are
    then not jointly identifiable) and NonConvergenceError (carrying the
    best log-likelihood seen) when no start reaches a stationary point.
    """
    y, a = _arrays(counts)
    if np.all(y == 0):
        raise DegenerateInputError(
            "all counts are zero: zero-inflation and mean are not "
            "jointly identifiable")
    if n_starts < 1:
        raise ConfigError("n_starts must be >= 1")
    log_a = np.log(a)

    zfrac = float(np.mean(y == 0))
    dens = float(y.sum() / a.sum())
    pi0 = min(max(zfrac * 0.5, 0.02), 0.90)
    base = np.array([logit(pi0),
                     math.log(dens / (1.0 - pi0)),
                     0.0])
    rng = substream(seed, "zinb-starts")
    starts = [base] + [base + rng.normal(0.0, 0.75, size=3)
                       for _ in range(n_starts - 1)]

    best = None
    total_nit = 0
    start_lls = []
    for u0 in starts:
        start_lls.append(_zinb_loglik_grad(u0, y, log_a)[0])
        u, ll, g, nit = _maximize(u0, y, log_a, max_iter, tol)
        total_nit += nit
        if np.all(np.isfinite(u)) and np.isfinite(ll) and \
                (best is None or ll > best[1]):
            best = (u, ll, g)
    if best is None:
        raise NonConvergenceError("every start diverged", best_loglik=None)
    u, ll, g = best

    grad_ok = bool(np.max(np.abs(g)) < 1e-4)
    monotone = ll >= max(start_lls) - 1e-6
    if not (grad_ok and monotone and np.isfinite(ll)):
        raise NonConvergenceError(
            f"ZINB fit did not converge (max |grad| = {np.max(np.abs(g)):.2e})",
            best_loglik=float(ll))

    H = _numeric_hessian(u, y, log_a)
    return ZinbFit(
        beta0=float(u[1]), pi=float(expit(u[0])), k=float(math.exp(u[2])),
        covariance=_psd_covariance(-H), loglik=float(ll),
        converged=True, n_iterations=total_nit)


def zinb_loglik(counts: Sequence[TransectCount], pi: float, beta0: float,
                k: float) -> float:
    """ZINB log-likelihood at natural-scale parameters (for diagnostics)."""
    if not (0.0 <= pi < 1.0) or k <= 0:
        raise ConfigError("need 0 <= pi < 1 and k > 0")
    y, a = _arrays(counts)
    q = logit(pi) if pi > 0 else -745.0  # exp(-745) underflows to 0
    ll, _ = _zinb_loglik_grad(np.array([q, beta0, math.log(k)]), y, np.log(a))
    return ll


def zinb_density(fit: ZinbFit, counts: Sequence[TransectCount],
                 ) -> DensityEstimate:
    """Density (1-pi)*exp(beta0) with a delta-method SE from the fit.

    The gradient of the density with respect to (logit pi, beta0, ln k) is
    (-pi*D, D, 0), so se² = grad' C grad on the unconstrained scale.
    """
    if not fit.converged:
        raise NumericError("refusing to derive a density from a "
                           "non-converged ZINB fit")
    density = (1.0 - fit.pi) * math.exp(fit.beta0)
    grad = np.array([-fit.pi * density, density, 0.0])
    var = float(grad @ fit.covariance @ grad)
    se = math.sqrt(max(var, 0.0))
    return DensityEstimate(
        method="zinb",
        density_per_km2=density,
        n_units=len(counts),
        se=se,
        ci_low=max(0.0, density - _Z95 * se),
        ci_high=density + _Z95 * se,
        diagnostics={"pi": fit.pi, "beta0": fit.beta0, "k": fit.k,
                     "loglik": fit.loglik,
                     "zero_fraction": zero_fraction(counts)},
    )
