"""Forecast-error modeling with the t location-scale distribution.

Residuals (actual minus predicted, kW) are fitted by maximum likelihood;
the fitted location revises subsequent forecasts, and the fitted density
feeds the probability-sequence discretization used for reserve sizing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _nm_minimize
from sklearn.base import BaseEstimator

MIN_FIT_SAMPLES = 30
PER_HOUR_MIN_SAMPLES = 100


class FitError(ValueError):
    """Distribution fitting failed (degenerate residuals, bad parameters)."""


class MetricsError(ValueError):
    """Undefined evaluation index (e.g. MAPE with all-zero actuals)."""


@dataclass(frozen=True)
class TlsParams:
    """Location mu (kW), scale epsilon (kW, > 0), shape vartheta (> 0)."""

    mu: float
    epsilon: float
    vartheta: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.epsilon > 0 and self.vartheta > 0):
            raise FitError(f"invalid t location-scale parameters: {self}")


def tls_logpdf(p: TlsParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = p.vartheta
    z = (x - p.mu) / p.epsilon
    return (
        math.lgamma((v + 1.0) / 2.0)
        - math.lgamma(v / 2.0)
        - 0.5 * math.log(v * math.pi)
        - math.log(p.epsilon)
        - (v + 1.0) / 2.0 * np.log1p(z * z / v)
    )


def tls_pdf(p: TlsParams, x):
    """Density of the t location-scale distribution; symmetric about mu."""
    out = np.exp(tls_logpdf(p, x))
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def tls_loglik(p: TlsParams, xs) -> float:
    return float(np.sum(tls_logpdf(p, xs)))


def fit_tls(residuals, max_iter: int = 2000) -> TlsParams:
    """Maximum-likelihood fit via derivative-free simplex search.

    The search runs over (mu, log epsilon, log vartheta) starting from the
    median, the scaled median absolute deviation, and shape 5; the returned
    point never has lower log-likelihood than that start.
    """
    xs = np.asarray(residuals, dtype=float)
    if xs.ndim != 1 or xs.size < MIN_FIT_SAMPLES:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} residuals, got {xs.size}")
    if not np.all(np.isfinite(xs)):
        raise FitError("residuals contain non-finite entries")
    med = float(np.median(xs))
    mad = float(np.median(np.abs(xs - med)))
    scale0 = 1.4826 * mad
    if scale0 <= 0.0:
        scale0 = float(np.std(xs))
    if scale0 <= 0.0:
        raise FitError("degenerate residuals (all equal): scale underflow")

    def nll(theta):
        mu, log_eps, log_nu = theta
        if abs(log_eps) > 60 or abs(log_nu) > 12:
            return 1e30
        p = TlsParams(mu, math.exp(log_eps), math.exp(log_nu))
        val = -tls_loglik(p, xs)
        return val if math.isfinite(val) else 1e30

    x0 = np.array([med, math.log(scale0), math.log(5.0)])
    res = _nm_minimize(nll, x0, method="Nelder-Mead",
                       options={"maxiter": max_iter, "xatol": 1e-7, "fatol": 1e-9})
    best = res.x if res.fun <= nll(x0) else x0
    return TlsParams(float(best[0]), math.exp(float(best[1])), math.exp(float(best[2])))


def normal_loglik(xs) -> float:
    """Gaussian MLE log-likelihood of the same residuals, for comparison."""
    xs = np.asarray(xs, dtype=float)
    var = xs.var()
    if var <= 0:
        raise FitError("degenerate residuals")
    return float(-0.5 * len(xs) * (math.log(2 * math.pi * var) + 1.0))


def error_expectation(p: TlsParams, residuals) -> tuple[float, bool]:
    """Expected forecast error.

    Returns ``(mu, False)`` when the distribution mean exists
    (``vartheta > 1``); otherwise falls back to the sample mean with a
    warning flag.
    """
    if p.vartheta > 1.0:
        return p.mu, False
    return float(np.mean(np.asarray(residuals, dtype=float))), True


def revise(forecast: float, expected_error: float) -> tuple[float, bool]:
    """Subtract the expected error; clamp at zero (physical non-negativity).

    Returns ``(revised, clamped)``.
    """
    if not (math.isfinite(forecast) and math.isfinite(expected_error)):
        raise ValueError("revise needs finite inputs")
    raw = forecast - expected_error
    if raw < 0.0:
        return 0.0, True
    return raw, False


def revise_array(forecasts, expected_errors) -> np.ndarray:
    raw = np.asarray(forecasts, dtype=float) - np.asarray(expected_errors, dtype=float)
    return np.maximum(raw, 0.0)


@dataclass(frozen=True)
class ForecastMetrics:
    mape: float
    rmse: float
    n_skipped: int  # zero actuals excluded from MAPE


def metrics(actual, predicted) -> ForecastMetrics:
    """MAPE and RMSE over paired samples; zero actuals are skipped in MAPE."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or a.size == 0:
        raise MetricsError("need equally sized, non-empty 1-d arrays")
    err = a - p
    rmse = float(np.sqrt(np.mean(err * err)))
    mask = a != 0.0
    if not mask.any():
        raise MetricsError("MAPE undefined: all actuals are zero")
    mape = float(np.mean(np.abs(err[mask] / a[mask])))
    return ForecastMetrics(mape, rmse, int((~mask).sum()))


class TlsErrorModel(BaseEstimator):
    """Estimator-style wrapper: fit on residuals, expose pdf and expectation."""

    def fit(self, residuals, y=None):
        residuals = np.asarray(residuals, dtype=float)
        self.params_ = fit_tls(residuals)
        self.expectation_, self.fallback_ = error_expectation(self.params_, residuals)
        self.n_samples_ = residuals.size
        return self

    def pdf(self, x):
        return tls_pdf(self.params_, x)

    def expectation(self) -> float:
        return self.expectation_


# ----------------------------------------------------------------------
# Granular fitting across (source, hour) cells
# ----------------------------------------------------------------------

@dataclass
class ErrorModel:
    """One fitted cell of the error-model map."""

    source: str
    hour: int | str  # 0-23 or "all"
    params: TlsParams
    n_samples: int
    expectation: float
    fallback: bool

    def to_dict(self) -> dict:
        return {
            "mu": self.params.mu,
            "epsilon": self.params.epsilon,
            "vartheta": self.params.vartheta,
            "n_samples": self.n_samples,
            "fallback_flag": self.fallback,
        }


def fit_error_models(residuals_by_cell: dict) -> dict:
    """Fit one model per (source, hour) cell with enough data, plus a pooled
    per-source model covering the rest.

    ``residuals_by_cell`` maps ``(source, hour)`` to residual arrays.  Hours
    with at least ``PER_HOUR_MIN_SAMPLES`` residuals get their own fit;
    every source also gets an ``(source, "all")`` pooled fit.
    """
    out: dict = {}
    by_source: dict[str, list] = {}
    for (source, hour), res in residuals_by_cell.items():
        by_source.setdefault(source, []).append(np.asarray(res, dtype=float))
        if len(res) >= PER_HOUR_MIN_SAMPLES:
            params = fit_tls(res)
            exp, fb = error_expectation(params, res)
            out[(source, hour)] = ErrorModel(source, hour, params, len(res), exp, fb)
    for source, chunks in by_source.items():
        pooled = np.concatenate(chunks)
        params = fit_tls(pooled)
        exp, fb = error_expectation(params, pooled)
        out[(source, "all")] = ErrorModel(source, "all", params, len(pooled), exp, fb)
    return out


def lookup_error_model(models: dict, source: str, hour: int) -> ErrorModel:
    return models.get((source, hour)) or models[(source, "all")]


def save_error_models(models: dict, path):
    doc: dict = {}
    for (source, hour), m in models.items():
        doc.setdefault(source, {})[str(hour)] = m.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_error_models(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for source, hours in doc.items():
        for hour_key, d in hours.items():
            hour = hour_key if hour_key == "all" else int(hour_key)
            params = TlsParams(d["mu"], d["epsilon"], d["vartheta"])
            out[(source, hour)] = ErrorModel(
                source, hour, params, d["n_samples"],
                params.mu if params.vartheta > 1 else d["mu"],
                d["fallback_flag"],
            )
    return out
