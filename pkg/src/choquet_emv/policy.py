"""Location-scale exploration policies induced by a distortion function.

A policy is the distribution with quantile Q(p) = M + S h'(1 - p).  Its
mean is M (h' integrates to zero) and its variance is S^2 ||h'||_2^2.  The
three built-in distortions give closed-form densities:

* gaussian_score: N(M, S^2),
* entropy_like:   shifted exponential, density exp(-((u-M)/S + 1))/S on
                  u >= M - S,
* gini:           uniform on [M - S, M + S].

Log-densities and their exact (M, S) partials feed the policy-gradient
estimator; the CDFs feed sampling-law tests.  Outside-support points are a
zero-density condition (log-density -inf), not an error, so trajectories
replayed after a location shift degrade gracefully.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .distortion import DistortionFn

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DensityUnavailableError(ValueError):
    """The distortion has no registered closed-form density."""


@dataclass(frozen=True)
class LocationScalePolicy:
    """Exploratory action distribution with quantile M + S h'(1 - p)."""

    h: DistortionFn
    location: float
    scale: float

    def __post_init__(self):
        if self.scale < 0.0:
            raise ValueError(f"scale must be nonnegative, got {self.scale}")

    @property
    def support(self) -> tuple[float, float]:
        lo, hi = self.h.hprime_range
        return self.location + self.scale * lo, self.location + self.scale * hi


def sample(policy: LocationScalePolicy, p):
    """Inverse-transform sample: Q(p) for a uniform draw p in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("uniform draw must lie strictly inside (0, 1)")
    if policy.scale == 0.0:
        return np.full_like(p, policy.location) if p.ndim else float(policy.location)
    out = policy.location + policy.scale * np.asarray(policy.h.hprime(1.0 - p), dtype=float)
    return out if out.ndim else float(out)


def moments(policy: LocationScalePolicy) -> tuple[float, float]:
    """(mean, variance) = (M, S^2 ||h'||_2^2)."""
    return policy.location, policy.scale**2 * policy.h.l2_norm**2


def regularizer_value(policy: LocationScalePolicy, mode: str) -> float:
    """Choquet regularizer of the policy: S ||h'||_2^2, or its log.

    A degenerate policy (S = 0) in log mode reports -inf rather than
    raising; the caller decides whether that is acceptable.
    """
    phi = policy.scale * policy.h.l2_norm**2
    if mode == "plain":
        return phi
    if mode == "log":
        return math.log(phi) if phi > 0.0 else -math.inf
    raise ValueError(f"mode must be 'plain' or 'log', got {mode!r}")


# ---------------------------------------------------------------------------
# Closed-form densities of the built-in families.  Each entry maps the
# standardized coordinate y = (u - M)/S to (logpdf + log S, d/dy terms)
# so the (M, S) partials assemble uniformly:
#   d logf / dM = -g(y)/S,   d logf / dS = (-1 - y g(y))/S,
# where g = d/dy of the standardized log-density.
# ---------------------------------------------------------------------------


def _std_norm_logpdf(y):
    return -0.5 * y * y - LOG_SQRT_2PI


def _logpdf_gaussian(y):
    return _std_norm_logpdf(y)


def _dlog_gaussian(y):
    return -y


def _logpdf_entropy(y):
    # standardized density exp(-(y+1)) on y >= -1
    return np.where(y >= -1.0, -(y + 1.0), -np.inf)


def _dlog_entropy(y):
    return np.where(y >= -1.0, -1.0, np.nan)


def _logpdf_gini(y):
    return np.where(np.abs(y) <= 1.0, -math.log(2.0), -np.inf)


def _dlog_gini(y):
    return np.where(np.abs(y) <= 1.0, 0.0, np.nan)


_FAMILIES = {
    "gaussian_score": (_logpdf_gaussian, _dlog_gaussian),
    "entropy_like": (_logpdf_entropy, _dlog_entropy),
    "gini": (_logpdf_gini, _dlog_gini),
}


def _family(policy: LocationScalePolicy):
    try:
        return _FAMILIES[policy.h.name]
    except KeyError:
        raise DensityUnavailableError(
            f"density unavailable for distortion {policy.h.name!r}; "
            "closed forms exist only for the built-in families"
        ) from None


def log_density(policy: LocationScalePolicy, u):
    """log of the policy density at u; -inf outside the support."""
    if policy.scale <= 0.0:
        raise ValueError("log_density requires a nondegenerate policy (S > 0)")
    logpdf, _ = _family(policy)
    y = (np.asarray(u, dtype=float) - policy.location) / policy.scale
    out = logpdf(y) - math.log(policy.scale)
    return out if np.ndim(out) else float(out)


def log_density_grad_fields(h: DistortionFn, u, location, scale):
    """(d/dM, d/dS) of the log-density, vectorized over aligned arrays.

    With y = (u - M)/S and g the standardized log-density derivative, the
    partials are -g/S and (-1 - y g)/S.  Outside the support both come back
    NaN, mirroring the zero-density condition.
    """
    try:
        _, dlog = _FAMILIES[h.name]
    except KeyError:
        raise DensityUnavailableError(
            f"density unavailable for distortion {h.name!r}; "
            "closed forms exist only for the built-in families"
        ) from None
    s = np.asarray(scale, dtype=float)
    y = (np.asarray(u, dtype=float) - np.asarray(location, dtype=float)) / s
    g = dlog(y)
    return -g / s, (-1.0 - y * g) / s


def log_density_grad(policy: LocationScalePolicy, u):
    """Exact partials (d/dM, d/dS) of log_density at u.

    At the support boundary of the uniform and exponential families the
    right-derivative in S is used.
    """
    if policy.scale <= 0.0:
        raise ValueError("log_density_grad requires a nondegenerate policy (S > 0)")
    dm, ds = log_density_grad_fields(policy.h, u, policy.location, policy.scale)
    if np.ndim(dm):
        return dm, ds
    return float(dm), float(ds)


def cdf(policy: LocationScalePolicy, u):
    """Closed-form CDF of the built-in families (test and KS oracle)."""
    logf_key = policy.h.name
    if logf_key not in _FAMILIES:
        raise DensityUnavailableError(f"density unavailable for {logf_key!r}")
    if policy.scale == 0.0:
        return (np.asarray(u, dtype=float) >= policy.location).astype(float)
    y = (np.asarray(u, dtype=float) - policy.location) / policy.scale
    if logf_key == "gaussian_score":
        out = ndtr(y)
    elif logf_key == "entropy_like":
        out = np.where(y >= -1.0, 1.0 - np.exp(-np.minimum(y + 1.0, 700.0)), 0.0)
    else:  # gini
        out = np.clip(0.5 * (y + 1.0), 0.0, 1.0)
    return out if np.ndim(out) else float(out)


def standardized_draw(h: DistortionFn, p):
    """h'(1 - p) for uniform draws p: the unit-scale sampling template."""
    p = np.asarray(p, dtype=float)
    if h.name == "gaussian_score":
        return ndtri(p)
    if h.name == "entropy_like":
        return -np.log1p(-p) - 1.0
    if h.name == "gini":
        return 2.0 * p - 1.0
    return np.asarray(h.hprime(1.0 - p), dtype=float)
