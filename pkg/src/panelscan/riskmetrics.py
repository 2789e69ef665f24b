"""Parametric value-at-risk and imputation quality metrics.

Log-returns are modelled jointly normal, R ~ N(mu_R, Sigma_R); a portfolio
P = Q^T R then has VaR_alpha(P) = mu_P + q_alpha sigma_P. The quantity is a
return quantile, not a loss figure: no sign flip. The inverse normal CDF is
Acklam's rational approximation polished by one Newton step on the CDF, good
to well below 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import simgen

VAR_SOURCES = ("theo", "clean", "anom", "loc_true", "loc_pred")


@dataclass
class ReturnModel:
    mu: np.ndarray      # length-N mean of h-step log-returns
    sigma: np.ndarray   # N x N covariance
    horizon: int = 1


@dataclass
class Portfolio:
    weights: np.ndarray  # position units

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("portfolio weights must be finite")


@dataclass
class VarEstimate:
    value: float
    alpha: float
    horizon: int
    source: str

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0.5, 1), got {self.alpha}")
        if self.source not in VAR_SOURCES:
            raise ValueError(f"source must be one of {VAR_SOURCES}, got {self.source!r}")


def log_returns(panel, h_steps=1):
    """Overlapping h-step log returns per series."""
    prices = panel.prices if isinstance(panel, simgen.PricePanel) else np.asarray(panel, dtype=float)
    prices = np.atleast_2d(prices)
    h = int(h_steps)
    if not 1 <= h < prices.shape[1]:
        raise ValueError(f"h_steps must lie in 1..{prices.shape[1] - 1}, got {h}")
    if np.any(prices <= 0):
        raise ValueError("log returns need positive prices")
    return np.log(prices[:, h:] / prices[:, :-h])


def estimate_params(returns, h_steps=1) -> ReturnModel:
    """Sample mean and 1/(n-1) covariance of the return observations."""
    returns = np.atleast_2d(np.asarray(returns, dtype=float))
    if returns.shape[1] < 2:
        raise ValueError("need at least two return observations")
    mu = returns.mean(axis=1)
    sigma = np.atleast_2d(np.cov(returns, ddof=1))
    return ReturnModel(mu=mu, sigma=sigma, horizon=int(h_steps))


def theoretical_return_model(mu, sigma, correlation, dt, h_steps=1) -> ReturnModel:
    """Return model implied by the generating GBM parameters."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    mat = simgen.correlation_matrix(correlation, mu.size)
    h = int(h_steps)
    mean = (mu - 0.5 * sigma**2) * dt * h
    cov = np.outer(sigma, sigma) * mat * dt * h
    return ReturnModel(mu=mean, sigma=cov, horizon=h)


# Acklam's inverse normal CDF coefficients.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _norm_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def norm_quantile(p):
    """Inverse standard normal CDF, rational approximation + one Newton step."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # one Newton step on the CDF
    return x - (_norm_cdf(x) - p) / _norm_pdf(x)


def portfolio_var(model: ReturnModel, portfolio: Portfolio, alpha, source="clean") -> VarEstimate:
    """VaR_alpha = mu_P + q_alpha sigma_P for P = Q^T R."""
    weights = portfolio.weights
    if weights.size != model.mu.size:
        raise ValueError("portfolio and return model disagree on dimension")
    mu_p = float(weights @ model.mu)
    var_p = float(weights @ model.sigma @ weights)
    if var_p < -1e-10:
        raise ValueError(f"portfolio variance is negative: {var_p:.3e}")
    sigma_p = math.sqrt(max(var_p, 0.0))
    value = mu_p + norm_quantile(alpha) * sigma_p
    return VarEstimate(value=value, alpha=float(alpha), horizon=model.horizon, source=source)


def _value(v):
    return float(v.value) if isinstance(v, VarEstimate) else float(v)


def var_errors(theo, est):
    """(absolute, relative) error of an estimated VaR against the true one."""
    t = _value(theo)
    e = _value(est)
    if t == 0.0:
        raise ValueError("relative VaR error undefined for zero theoretical VaR")
    absolute = abs(t - e)
    return absolute, absolute / abs(t)


def imputation_error(clean_row, imputed_row, n_anom):
    """sqrt(sum (S - S_tilde)^2 / n_anom) over a full series."""
    clean = np.asarray(clean_row, dtype=float).ravel()
    imputed = np.asarray(imputed_row, dtype=float).ravel()
    if clean.size != imputed.size:
        raise ValueError("series lengths differ")
    if n_anom < 1:
        raise ValueError("n_anom must be >= 1")
    return float(np.sqrt(np.sum((clean - imputed) ** 2) / n_anom))


def cov_error(sigma, sigma_tilde):
    """Frobenius norm of the covariance estimation error."""
    a = np.asarray(sigma, dtype=float)
    b = np.asarray(sigma_tilde, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
