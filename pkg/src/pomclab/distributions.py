"""Noise densities, CDFs and samplers.

Only the four families the models need are provided: a symmetric Pareto law
(heavy-tailed transition noise), the centered Gaussian, the negative binomial
and a finite mixture of centered Gaussians. All log-densities are vectorized
over their first argument and return ``-inf`` (never NaN) for zero density.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import InvalidParameter
from .rng import INDICATOR, OBS_NOISE, RngStream, as_generator

LOG_2PI = float(np.log(2.0 * np.pi))


def _check_pareto(alpha, scale):
    if not alpha > 2:
        raise InvalidParameter(f"symmetric Pareto needs alpha > 2, got {alpha}")
    if not scale > 0:
        raise InvalidParameter(f"symmetric Pareto needs scale > 0, got {scale}")


def _check_sigma(sigma):
    if not sigma > 0:
        raise InvalidParameter(f"Gaussian needs sigma > 0, got {sigma}")


def pareto_sym_logpdf(u, alpha, scale=1.0):
    r"""Log of ``r(u) = alpha / (2 s) * (1 + |u|/s)^-(alpha+1)``."""
    _check_pareto(alpha, scale)
    u = np.asarray(u, dtype=float)
    return np.log(alpha / (2.0 * scale)) - (alpha + 1.0) * np.log1p(np.abs(u) / scale)


def pareto_sym_sf(u, alpha, scale=1.0):
    """Survival function ``P(U > u)``, accurate in the upper tail."""
    return pareto_sym_cdf(-np.asarray(u, dtype=float), alpha, scale)


def pareto_sym_cdf(u, alpha, scale=1.0):
    """Closed-form CDF of the symmetric Pareto law.

    ``F(u) = 1 - (1 + u/s)^-alpha / 2`` for ``u >= 0`` and
    ``F(u) = (1 + |u|/s)^-alpha / 2`` otherwise.
    """
    _check_pareto(alpha, scale)
    u = np.asarray(u, dtype=float)
    half_tail = 0.5 * (1.0 + np.abs(u) / scale) ** (-alpha)
    return np.where(u >= 0, 1.0 - half_tail, half_tail)


def pareto_sym_interval_mass(lo, hi, alpha, scale=1.0):
    """``P(lo < U <= hi)`` without cancellation in either tail."""
    _check_pareto(alpha, scale)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    tail = lambda v: 0.5 * (1.0 + np.abs(v) / scale) ** (-alpha)  # noqa: E731
    right = tail(lo) - tail(hi)  # both >= 0: difference of upper-tail masses
    left = tail(hi) - tail(lo)  # both <= 0: difference of lower-tail masses
    straddle = 1.0 - tail(lo) - tail(hi)
    out = np.where(lo >= 0, right, np.where(hi <= 0, left, straddle))
    return np.maximum(out, 0.0)


def gauss_logpdf(v, sigma=1.0):
    """Log density of N(0, sigma^2)."""
    _check_sigma(sigma)
    v = np.asarray(v, dtype=float)
    return -0.5 * LOG_2PI - np.log(sigma) - 0.5 * (v / sigma) ** 2


def nb_logpmf(k, r, p):
    """Log of ``Gamma(k+r) / (k! Gamma(r)) * p^r * (1-p)^k``.

    ``p`` is the success probability, so the mean is ``r (1-p) / p``.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(~(r > 0)):
        raise InvalidParameter(f"negative binomial needs r > 0, got {r}")
    if np.any(~((p > 0) & (p < 1))):
        raise InvalidParameter(f"negative binomial needs 0 < p < 1, got {p}")
    k = np.asarray(k)
    if np.any(k < 0) or np.any(np.floor(k) != k):
        raise InvalidParameter("negative binomial support is the nonnegative integers")
    k = k.astype(float)
    return gammaln(k + r) - gammaln(k + 1.0) - gammaln(r) + r * np.log(p) + k * np.log1p(-p)


def mixture_gauss_logpdf(y, x, gamma):
    """Log density of ``sum_l gamma_l N(0, x_l)`` evaluated at ``y``.

    ``x`` holds component variances (last axis) and may carry leading batch
    axes that broadcast against ``y``.
    """
    x = np.asarray(x, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_simplex(gamma)
    if np.any(~(x > 0)):
        raise InvalidParameter("mixture component variances must be positive")
    y = np.asarray(y, dtype=float)[..., None]
    comp = -0.5 * (LOG_2PI + np.log(x)) - 0.5 * y**2 / x
    with np.errstate(divide="ignore"):
        log_gamma = np.log(gamma)
    return logsumexp(comp + log_gamma, axis=-1)


def _check_simplex(gamma, tol=1e-12):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < -tol) or np.any(np.abs(gamma.sum(axis=-1) - 1.0) > tol):
        raise InvalidParameter(f"mixture weights must lie on the simplex, got {gamma}")


# --------------------------------------------------------------------------
# Distribution objects


@dataclass(frozen=True)
class SymmetricPareto:
    alpha: float = 3.5
    scale: float = 1.0

    def __post_init__(self):
        _check_pareto(self.alpha, self.scale)

    def logpdf(self, u):
        return pareto_sym_logpdf(u, self.alpha, self.scale)

    def cdf(self, u):
        return pareto_sym_cdf(u, self.alpha, self.scale)

    def interval_mass(self, lo, hi):
        return pareto_sym_interval_mass(lo, hi, self.alpha, self.scale)

    def ppf(self, q):
        """Inverse CDF; used by the sampler."""
        q = np.asarray(q, dtype=float)
        lower = q < 0.5
        tail = np.where(lower, 2.0 * q, 2.0 * (1.0 - q))
        mag = self.scale * (tail ** (-1.0 / self.alpha) - 1.0)
        return np.where(lower, -mag, mag)

    def draw(self, gen, size=None):
        return self.ppf(gen.random(size))


@dataclass(frozen=True)
class Gaussian:
    sigma: float = 1.0

    def __post_init__(self):
        _check_sigma(self.sigma)

    def logpdf(self, v):
        return gauss_logpdf(v, self.sigma)

    def draw(self, gen, size=None):
        return self.sigma * gen.standard_normal(size)


@dataclass(frozen=True)
class NegativeBinomial:
    r: float
    p: float

    def __post_init__(self):
        if not self.r > 0 or not 0 < self.p < 1:
            raise InvalidParameter(f"invalid negative binomial ({self.r}, {self.p})")

    def logpmf(self, k):
        return nb_logpmf(k, self.r, self.p)

    def draw(self, gen, size=None):
        return gen.negative_binomial(self.r, self.p, size)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Centered Gaussian mixture with variances ``x`` and weights ``gamma``."""

    x: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        g = np.asarray(self.gamma, dtype=float)
        if x.shape != g.shape or x.ndim != 1:
            raise InvalidParameter("mixture variances and weights must be 1-d of equal length")
        _check_simplex(g)
        if np.any(~(x > 0)):
            raise InvalidParameter("mixture component variances must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "gamma", g)

    def logpdf(self, y):
        return mixture_gauss_logpdf(y, self.x, self.gamma)

    def draw(self, gen, size=None, gen_indicator=None):
        gen_indicator = gen if gen_indicator is None else gen_indicator
        comp = gen_indicator.choice(len(self.gamma), size=size, p=self.gamma)
        return np.sqrt(self.x[comp]) * gen.standard_normal(size)


NoiseSpec = SymmetricPareto | Gaussian


def sample(dist, rng, size=None):
    """Draw from ``dist`` using ``rng`` (an ``RngStream`` or a Generator).

    Passing the same ``RngStream`` twice reproduces the same draws. For
    mixtures driven by an ``RngStream`` the component indicators and the
    Gaussian draws come from two separate substreams.
    """
    if isinstance(dist, GaussianMixture) and isinstance(rng, RngStream):
        return dist.draw(rng.child(OBS_NOISE).generator(), size,
                         gen_indicator=rng.child(INDICATOR).generator())
    if not hasattr(dist, "draw"):
        raise TypeError(f"cannot sample from {dist!r}")
    return dist.draw(as_generator(rng), size)


@dataclass(frozen=True)
class NoisePair:
    """Transition noise ``U`` and observation noise ``V`` of the HMM."""

    transition: SymmetricPareto = SymmetricPareto()
    emission: Gaussian = Gaussian()

    def __post_init__(self):
        if not isinstance(self.transition, SymmetricPareto):
            raise InvalidParameter("transition noise must be symmetric Pareto")
        if not isinstance(self.emission, Gaussian):
            raise InvalidParameter("observation noise must be Gaussian")
