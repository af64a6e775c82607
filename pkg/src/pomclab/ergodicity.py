"""Return times to the atom, tail diagnostics and stationary moments.

The reflected random walk regenerates at ``{0}``. Starting from ``X_0 = 0``
and while it stays positive, ``X_n`` is the partial sum of ``U_k - m``, so
an excursion length is the first ``n >= 1`` at which that sum drops to or
below zero.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .distributions import NoisePair, SymmetricPareto
from .errors import CensoringWarning, InsufficientData, InvalidParameter
from .estimate import N_BATCHES, batch_means
from .hmm import Hmm1, ThetaHmm, simulate_hmm
from .rng import RngStream

_FIRST_BLOCK = 64
_MAX_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class ReturnTimeSample:
    """Uncensored return times (in excursion order) plus censoring count."""

    times: np.ndarray
    censored_count: int
    cap: int

    @property
    def n_excursions(self) -> int:
        return self.times.size + self.censored_count

    def __add__(self, other: "ReturnTimeSample") -> "ReturnTimeSample":
        if self.cap != other.cap:
            raise InvalidParameter("cannot merge samples with different caps")
        return ReturnTimeSample(np.concatenate([self.times, other.times]),
                                self.censored_count + other.censored_count, self.cap)


def _excursion(transition: SymmetricPareto, m: float, cap: int, gen) -> int:
    """Length of one excursion from 0, or 0 if it reaches ``cap`` steps."""
    level, done, block = 0.0, 0, _FIRST_BLOCK
    while done < cap:
        size = min(block, cap - done)
        path = level + np.cumsum(transition.draw(gen, size) - m)
        hit = np.flatnonzero(path <= 0.0)
        if hit.size:
            return done + int(hit[0]) + 1
        level = float(path[-1])
        done += size
        block = min(2 * block, _MAX_BLOCK)
    return 0


def return_times(theta: ThetaHmm, noise, n_samples: int, cap: int = 10**6,
                 rng: RngStream | None = None, start_index: int = 0) -> ReturnTimeSample:
    """Simulate ``n_samples`` independent excursions started at ``X_0 = 0``.

    Excursion ``i`` draws from ``rng.child(start_index + i)``, so a run of
    ``n1 + n2`` excursions equals a run of ``n1`` followed by a run of ``n2``
    with ``start_index = n1``.
    """
    if cap < 10:
        raise InvalidParameter("cap must be at least 10")
    if n_samples < 1:
        raise InvalidParameter("n_samples must be positive")
    rng = RngStream(0) if rng is None else rng
    transition = noise.transition if isinstance(noise, NoisePair) else noise
    times, censored = [], 0
    for i in range(start_index, start_index + n_samples):
        t = _excursion(transition, theta.m, cap, rng.child(i).generator())
        if t:
            times.append(t)
        else:
            censored += 1
    if censored > 0.5 * n_samples:
        warnings.warn(f"{censored} of {n_samples} excursions hit the cap {cap}",
                      CensoringWarning, stacklevel=2)
    return ReturnTimeSample(np.asarray(times, dtype=np.int64), censored, int(cap))


@dataclass(frozen=True, eq=False)
class TailReport:
    t: np.ndarray
    log_survival: np.ndarray
    geometric_fit_slope: float
    curvature_stat: float
    curvature_stderr: float
    z: float
    significant: bool
    level: float
    split: int


def tail_diagnostic(sample: ReturnTimeSample, level: float = 0.05) -> TailReport:
    """Compare the hazard of early and late return times.

    A geometric law has constant hazard. The sample is split at ``t*``, the
    smallest time with at least half of the returns strictly before it, and
    the pooled hazards ``h1`` on ``[1, t*)`` and ``h2`` on ``[t*, inf)`` are
    estimated as returns divided by time at risk. The curvature statistic
    ``log h1 - log h2`` is positive when the log-survival flattens (heavier
    than geometric tail). ``significant`` is the one-sided test at ``level``
    using the delta-method standard error
    ``sqrt((1 - h1)/D1 + (1 - h2)/D2)``.
    """
    times = np.asarray(sample.times, dtype=np.int64)
    if times.size < 100:
        raise InsufficientData(f"tail diagnostic needs >= 100 return times, got {times.size}")
    if not 0 < level < 0.5:
        raise InvalidParameter("level must lie in (0, 0.5)")
    n = times.size
    t_max = int(times.max())
    counts = np.bincount(times, minlength=t_max + 1)
    t = np.arange(1, t_max + 1)
    at_risk = n - np.concatenate([[0], np.cumsum(counts[1:])])[:-1]  # #{tau >= t}
    survival = (at_risk - counts[1:]) / n  # P(tau > t)
    with np.errstate(divide="ignore"):
        log_surv = np.log(survival)

    below = np.cumsum(counts)  # #{tau <= t}
    split = int(np.searchsorted(below, n / 2.0)) + 1
    split = min(max(split, 2), t_max)
    d1 = int(below[split - 1])
    e1 = float(at_risk[: split - 1].sum())
    d2 = n - d1
    e2 = float(at_risk[split - 1:].sum())
    if d1 == 0 or d2 == 0:
        raise InsufficientData("return times do not span two hazard windows")
    h1, h2 = d1 / e1, d2 / e2
    stat = math.log(h1) - math.log(h2)
    se = math.sqrt((1.0 - h1) / d1 + (1.0 - h2) / d2)
    z = stat / se if se > 0 else (math.inf if stat > 0 else 0.0)

    ok = np.isfinite(log_surv)
    slope = float(np.polyfit(t[ok], log_surv[ok], 1)[0]) if ok.sum() >= 2 else math.nan
    return TailReport(t, log_surv, slope, stat, se, z, bool(z > norm.ppf(1.0 - level)),
                      level, split)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    beta: float
    n: int


def moment_estimate(theta: ThetaHmm, noise: NoisePair, beta: float, n: int, burn: int,
                    rng: RngStream, x0: float = 0.0) -> MomentEstimate:
    """Ergodic average of ``X_k^beta`` after ``burn`` steps.

    Only ``1 <= beta < alpha - 1`` is accepted: beyond that the stationary
    moment is not guaranteed to be finite and an average would mislead.
    """
    alpha = noise.transition.alpha
    if not 1.0 <= beta < alpha - 1.0:
        raise InvalidParameter(f"beta must lie in [1, alpha - 1) = [1, {alpha - 1:g}), got {beta}")
    if burn < 0 or n < 2 * N_BATCHES:
        raise InvalidParameter("need burn >= 0 and n >= 60")
    xs = burnin_sample_stationary(Hmm1(noise), theta, n, max(burn, 1), rng, x0=x0)
    value, se = batch_means(xs**beta)
    return MomentEstimate(value, se, float(beta), int(n))


def burnin_sample_stationary(model, theta, n: int, burn: int, rng, x0=None) -> np.ndarray:
    """States ``burn .. burn + n - 1`` of one trajectory."""
    if burn < 1:
        raise InvalidParameter("burn must be >= 1")
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    x0 = model.default_state() if x0 is None else x0
    if isinstance(model, Hmm1):
        xs, _ = simulate_hmm(theta, model.noise, x0, n + burn, rng)
    else:
        xs, _ = model.simulate(theta, x0, n + burn - 1, rng)
    return xs[burn: burn + n]
