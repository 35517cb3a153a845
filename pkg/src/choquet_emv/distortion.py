"""Concave distortion functions and the Choquet randomness measure.

A distortion is a concave h on [0, 1] with h(0) = h(1) = 0.  On quantile
functions the induced Choquet measure of randomness has the representation

    Phi_h(Q) = integral_0^1 Q(p) h'(1 - p) dp,

where h' is the right-derivative of h.  Phi_h is location invariant,
positively homogeneous in scale, and zero exactly on degenerate
distributions.  Over all distributions with mean m and standard deviation
s > 0 it is maximized by the quantile function

    Q*(p) = m + s h'(1 - p) / ||h'||_2,

with maximum value s ||h'||_2.  That maximizer is what turns each
distortion into a location-scale family of exploration samplers: the
standard normal quantile weight yields Gaussians, -p log p yields shifted
exponentials and the Gini weight p - p^2 yields uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .quadrature import gauss_legendre_01, integrate_01, tanh_sinh_01

Array = np.ndarray
ScalarFn = Callable[[Array], Array]


class DivergentNormError(ValueError):
    """The quadrature for ||h'||_2 did not return a finite value."""


class DivergentIntegralError(ValueError):
    """A Choquet integral failed to evaluate to a finite value."""


@dataclass(frozen=True)
class DistortionFn:
    """A concave distortion h with its right-derivative and L2 norm.

    ``hprime_singular`` marks derivatives that are unbounded at an endpoint
    of (0, 1); integrals involving them are routed to the tanh-sinh rule.
    ``hprime_range`` is (inf h', sup h') over (0, 1), i.e. the limits at
    p -> 1 and p -> 0 since h' is nonincreasing; it determines the support
    of the induced location-scale family.
    """

    name: str
    h: ScalarFn
    hprime: ScalarFn
    l2_norm: float
    l2_analytic: bool
    hprime_singular: bool = False
    hprime_range: tuple[float, float] = (-math.inf, math.inf)

    def rule(self) -> tuple[Array, Array]:
        return tanh_sinh_01() if self.hprime_singular else gauss_legendre_01()


@dataclass(frozen=True)
class QuantileFn:
    """A nondecreasing quantile function on (0, 1) with support bounds."""

    q: ScalarFn
    lower: float = -math.inf
    upper: float = math.inf
    smooth: bool = True  # False routes integrals to the tanh-sinh rule

    def __call__(self, p: Array) -> Array:
        return self.q(p)


def _entropy_h(p: Array) -> Array:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0.0, -p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return out


def _gaussian_h(p: Array) -> Array:
    # h(p) = integral_0^p z(1-s) ds = phi(z(p)) - phi(z(0+)) = pdf of N(0,1) at z(p)
    p = np.asarray(p, dtype=float)
    inner = np.clip(p, 1e-300, 1.0 - 1e-16)
    zp = ndtri(inner)
    out = np.exp(-0.5 * zp * zp) / math.sqrt(2.0 * math.pi)
    return np.where((p <= 0.0) | (p >= 1.0), 0.0, out)


BUILTIN_DISTORTIONS: dict[str, DistortionFn] = {
    "entropy_like": DistortionFn(
        name="entropy_like",
        h=_entropy_h,
        hprime=lambda p: -np.log(p) - 1.0,
        l2_norm=1.0,
        l2_analytic=True,
        hprime_singular=True,
        hprime_range=(-1.0, math.inf),
    ),
    "gaussian_score": DistortionFn(
        name="gaussian_score",
        h=_gaussian_h,
        hprime=lambda p: ndtri(1.0 - np.asarray(p, dtype=float)),
        l2_norm=1.0,
        l2_analytic=True,
        hprime_singular=True,
        hprime_range=(-math.inf, math.inf),
    ),
    "gini": DistortionFn(
        name="gini",
        h=lambda p: np.asarray(p, dtype=float) * (1.0 - np.asarray(p, dtype=float)),
        hprime=lambda p: 1.0 - 2.0 * np.asarray(p, dtype=float),
        l2_norm=math.sqrt(1.0 / 3.0),
        l2_analytic=True,
        hprime_singular=False,
        hprime_range=(-1.0, 1.0),
    ),
}


def get_distortion(name: str) -> DistortionFn:
    try:
        return BUILTIN_DISTORTIONS[name]
    except KeyError:
        raise KeyError(
            f"unknown distortion {name!r}; available: {sorted(BUILTIN_DISTORTIONS)}"
        ) from None


def validate_distortion(fn: DistortionFn, n_grid: int = 2048):
    """Sampled validity checks: h(0) = h(1) = 0 and h' nonincreasing."""
    ends = np.asarray(fn.h(np.array([0.0, 1.0])), dtype=float)
    if np.max(np.abs(ends)) > 1e-12:
        raise ValueError(f"distortion {fn.name!r} must vanish at 0 and 1, got {ends}")
    grid = np.linspace(1e-9, 1.0 - 1e-9, n_grid)
    vals = np.asarray(fn.hprime(grid), dtype=float)
    if np.any(np.diff(vals) > 1e-10):
        raise ValueError(f"distortion {fn.name!r} is not concave: h' increases on (0,1)")


def custom_distortion(
    name: str,
    h: ScalarFn,
    hprime: ScalarFn,
    hprime_singular: bool = True,
    hprime_range: tuple[float, float] | None = None,
    n_grid: int = 2048,
) -> DistortionFn:
    """Wrap a user-supplied (h, h') pair; ||h'||_2 is computed by quadrature.

    The pair is checked on a sampled grid (endpoints of h vanish, h'
    nonincreasing) before the norm is measured.
    """
    if hprime_range is None:
        eps = 1e-12
        ends = np.asarray(hprime(np.array([1.0 - eps, eps])), dtype=float)
        hprime_range = (float(ends[0]), float(ends[1]))
    fn = DistortionFn(
        name=name,
        h=h,
        hprime=hprime,
        l2_norm=1.0,  # placeholder until measured below
        l2_analytic=False,
        hprime_singular=hprime_singular,
        hprime_range=hprime_range,
    )
    validate_distortion(fn, n_grid=n_grid)
    norm = l2_norm(fn)
    return replace(fn, l2_norm=norm)


def scale_distortion(fn: DistortionFn, c: float) -> DistortionFn:
    """Return the distortion c*h, whose derivative norm is c*||h'||_2."""
    if c <= 0.0:
        raise ValueError("scale factor must be positive")
    lo, hi = fn.hprime_range
    return replace(
        fn,
        name=f"{fn.name}_x{c:g}",
        h=lambda p, _f=fn.h: c * _f(p),
        hprime=lambda p, _f=fn.hprime: c * _f(p),
        l2_norm=c * fn.l2_norm,
        hprime_range=(c * lo, c * hi),
    )


def l2_norm(fn: DistortionFn, analytic_ok: bool = True) -> float:
    """||h'||_2, analytic when the descriptor carries it, else by quadrature."""
    if fn.l2_analytic and analytic_ok:
        return fn.l2_norm
    with np.errstate(over="ignore"):
        sq = integrate_01(lambda p: np.asarray(fn.hprime(p), dtype=float) ** 2, fn.rule())
    if not math.isfinite(sq) or sq <= 0.0:
        raise DivergentNormError(f"divergent derivative norm for distortion {fn.name!r}")
    return math.sqrt(sq)


def regularizer_of_quantile(fn: DistortionFn, quantile: QuantileFn | ScalarFn) -> float:
    """Phi_h of a distribution given through its quantile function.

    Evaluates integral_0^1 Q(p) h'(1-p) dp on the tanh-sinh rule whenever
    either factor is endpoint-singular.  The complement 1-p is taken from
    the symmetric node layout, so h' is never evaluated at a rounded 0 or 1.
    """
    smooth = not fn.hprime_singular
    if isinstance(quantile, QuantileFn):
        smooth = smooth and quantile.smooth
        qf: ScalarFn = quantile.q
    else:
        qf = quantile
        smooth = False
    if smooth:
        nodes, weights = gauss_legendre_01()
        comp = 1.0 - nodes
    else:
        nodes, weights = tanh_sinh_01()
        comp = nodes[::-1]  # layout is symmetric by construction, so exact
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(qf(nodes), dtype=float) * np.asarray(fn.hprime(comp), dtype=float)
        total = float(np.dot(weights, vals))
    if not math.isfinite(total):
        raise DivergentIntegralError(
            f"Choquet integral for distortion {fn.name!r} did not converge"
        )
    return total


def max_constrained(fn: DistortionFn, m: float, s: float) -> tuple[QuantileFn, float]:
    """Maximize Phi_h over distributions with mean m and variance s^2.

    Returns the maximizing quantile Q*(p) = m + s h'(1-p)/||h'||_2 together
    with the maximum value s ||h'||_2.
    """
    if s <= 0.0:
        raise ValueError(f"scale must be positive, got {s}")
    norm = fn.l2_norm
    if not (norm > 0.0):
        raise ValueError(f"distortion {fn.name!r} is constantly zero")

    def q(p: Array, _hp=fn.hprime, _m=m, _c=s / norm) -> Array:
        return _m + _c * np.asarray(_hp(1.0 - np.asarray(p, dtype=float)), dtype=float)

    lo, hi = fn.hprime_range
    return (
        QuantileFn(q=q, lower=m + (s / norm) * lo, upper=m + (s / norm) * hi,
                   smooth=not fn.hprime_singular),
        s * norm,
    )


def quantile_moments(quantile: QuantileFn | ScalarFn, smooth: bool = False) -> tuple[float, float]:
    """(mean, variance) of a distribution given by its quantile function."""
    if isinstance(quantile, QuantileFn):
        smooth = quantile.smooth
        qf: ScalarFn = quantile.q
    else:
        qf = quantile
    nodes, weights = gauss_legendre_01() if smooth else tanh_sinh_01()
    vals = np.asarray(qf(nodes), dtype=float)
    mean = float(np.dot(weights, vals))
    var = float(np.dot(weights, (vals - mean) ** 2))
    return mean, var
