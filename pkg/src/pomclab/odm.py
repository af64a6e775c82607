"""Observation-driven models: NBIN-GARCH(1,1) and NM(d)-GARCH(1,1).

The hidden state is a deterministic function of the past observations,
``X_{k+1} = psi_{Y_k}(X_k)``, and ``Y_{k+1} ~ G(X_{k+1}, .)``. The conditional
likelihood given ``X_1 = x`` is therefore available in closed form and is
evaluated here both for one parameter and for a whole batch of parameters
(rows of a 2-d array of free coordinates) at once.

Free-coordinate layouts::

    NBIN:  (omega, a, b, r)
    NM(d): (gamma_1..gamma_{d-1}, omega_1..omega_d, A_11..A_dd (row-major), b_1..b_d)

``gamma_d`` is implied by the simplex constraint.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, logsumexp

from .distributions import LOG_2PI, mixture_gauss_logpdf, nb_logpmf
from .errors import (
    ConvergenceError,
    DimensionMismatch,
    EmptyPath,
    InvalidParameter,
    InvalidState,
)
from .rng import INDICATOR, OBS_NOISE, as_generator, RngStream


# --------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class ThetaNbin:
    omega: float
    a: float
    b: float
    r: float

    def __post_init__(self):
        for name in ("omega", "a", "b", "r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.omega > 0 and self.r > 0 and self.a >= 0 and self.b >= 0):
            raise InvalidParameter(f"NBIN parameter out of range: {self}")

    @property
    def stationary(self) -> bool:
        return self.r * self.b + self.a < 1.0


@dataclass(frozen=True, eq=False)
class ThetaNm:
    gamma: np.ndarray
    omega: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float).reshape(-1)
        omega = np.array(self.omega, dtype=float).reshape(-1)
        b = np.array(self.b, dtype=float).reshape(-1)
        d = gamma.size
        A = np.array(self.A, dtype=float)
        if A.ndim == 0 and A == 0:
            A = np.zeros((d, d))
        if omega.size != d or b.size != d or A.shape != (d, d):
            raise DimensionMismatch(
                f"NM parameter blocks disagree on d: gamma {d}, omega {omega.size}, "
                f"A {A.shape}, b {b.size}")
        if np.any(gamma < -1e-12) or abs(gamma.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"gamma must lie on the simplex, got {gamma}")
        if np.any(~(omega > 0)) or np.any(A < 0) or np.any(b < 0):
            raise InvalidParameter("NM needs omega > 0 and nonnegative A, b")
        for name, val in (("gamma", gamma), ("omega", omega), ("A", A), ("b", b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def d(self) -> int:
        return self.gamma.size

    def __eq__(self, other):
        if not isinstance(other, ThetaNm):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("gamma", "omega", "A", "b"))

    def __repr__(self):
        return (f"ThetaNm(gamma={self.gamma.tolist()}, omega={self.omega.tolist()}, "
                f"A={self.A.tolist()}, b={self.b.tolist()})")


# --------------------------------------------------------------------------
# Models


def identity(theta):
    return theta


@dataclass(frozen=True)
class ComponentPermutation:
    """Relabel mixture components: ``(gamma, omega, A, b)`` permuted jointly.

    Relabelling leaves the mixture density and the state recursion's law
    unchanged, so it maps a parameter to another member of its class.
    """

    perm: tuple

    def __call__(self, th: ThetaNm) -> ThetaNm:
        p = np.asarray(self.perm)
        return ThetaNm(th.gamma[p], th.omega[p], th.A[np.ix_(p, p)], th.b[p])


class NbinGarch:
    """Negative binomial INGARCH(1,1).

    ``parametrization="mean"`` (default) draws ``Y ~ NB(r, 1/(1+X))`` so that
    ``E[Y | X] = r X`` and ``r b + a < 1`` is the stationarity condition.
    ``parametrization="literal"`` uses success probability ``X/(1+X)``
    (conditional mean ``r / X``).
    """

    kind = "nbin"
    param_names = ("omega", "a", "b", "r")
    d = 1

    def __init__(self, parametrization: str = "mean"):
        if parametrization not in ("mean", "literal"):
            raise InvalidParameter(f"unknown NB parametrization {parametrization!r}")
        self.parametrization = parametrization

    def __repr__(self):
        return f"NbinGarch(parametrization={self.parametrization!r})"

    def __eq__(self, other):
        return isinstance(other, NbinGarch) and other.parametrization == self.parametrization

    def __hash__(self):
        return hash(("nbin", self.parametrization))

    # parameters
    def to_vector(self, theta: ThetaNbin) -> np.ndarray:
        return np.array([theta.omega, theta.a, theta.b, theta.r])

    def from_vector(self, v) -> ThetaNbin:
        v = np.asarray(v, dtype=float)
        if v.shape != (4,):
            raise DimensionMismatch(f"NBIN takes 4 coordinates, got shape {v.shape}")
        return ThetaNbin(*v)

    def check_theta(self, theta):
        if not isinstance(theta, ThetaNbin):
            raise InvalidParameter(f"expected ThetaNbin, got {type(theta).__name__}")

    def default_state(self):
        return 1.0

    def check_state(self, x):
        if np.ndim(x) != 0:
            raise DimensionMismatch("NBIN state is scalar")
        if not x > 0:
            raise InvalidState(f"NBIN state must be positive, got {x}")

    def success_prob(self, x):
        if self.parametrization == "mean":
            return 1.0 / (1.0 + x)
        return x / (1.0 + x)

    # one parameter
    def psi(self, theta: ThetaNbin, x, y):
        return theta.omega + theta.a * x + theta.b * y

    def psi_exact(self, theta: ThetaNbin, x, y):
        return (Fraction(theta.omega) + Fraction(theta.a) * x
                + Fraction(theta.b) * Fraction(y))

    def log_g(self, theta: ThetaNbin, x, y):
        return float(nb_logpmf(y, theta.r, self.success_prob(x)))

    def draw_obs(self, theta, x, gen_obs, gen_ind):
        return int(gen_obs.negative_binomial(theta.r, self.success_prob(x)))

    def stability(self, theta: ThetaNbin):
        margin = 1.0 - (theta.r * theta.b + theta.a)
        return margin > 0, margin

    def generators(self):
        return [identity]

    def simulate(self, theta, x0, n, rng):
        return simulate_odm(self, theta, x0, n, rng)

    # batches of parameters: V has shape (G, 4), x shape (G,)
    def initial_states(self, V, x0):
        return np.full(V.shape[0], float(x0))

    def psi_batch(self, V, x, y):
        return V[:, 0] + V[:, 1] * x + V[:, 2] * y

    def log_g_const(self, V, y_path):
        """State-free part of ``sum_k log g``: the Gamma-function terms."""
        y = np.asarray(y_path, dtype=float)
        r_unique, inv = np.unique(V[:, 3], return_inverse=True)
        per_r = (gammaln(y[:, None] + r_unique[None, :]).sum(axis=0)
                 - y.size * gammaln(r_unique) - gammaln(y + 1.0).sum())
        return per_r[inv]

    def log_g_kernel(self, V, x, y):
        """State-dependent part of ``log g``; adds to :meth:`log_g_const`."""
        r = V[:, 3]
        log1px = np.log1p(x)
        if self.parametrization == "mean":
            # r log(1/(1+x)) + y log(x/(1+x))
            return -r * log1px + (y * (np.log(x) - log1px) if y else 0.0)
        return r * (np.log(x) - log1px) - y * log1px


class NmGarch:
    """Normal-mixture GARCH(1,1) with ``d`` mixture components."""

    kind = "nm"

    def __init__(self, d: int = 2):
        if int(d) != d or d < 1:
            raise InvalidParameter(f"NM needs a positive integer d, got {d}")
        self.d = int(d)
        self.param_names = (
            tuple(f"gamma_{i + 1}" for i in range(self.d - 1))
            + tuple(f"omega_{i + 1}" for i in range(self.d))
            + tuple(f"A_{i + 1}{j + 1}" for i in range(self.d) for j in range(self.d))
            + tuple(f"b_{i + 1}" for i in range(self.d))
        )

    def __repr__(self):
        return f"NmGarch(d={self.d})"

    def __eq__(self, other):
        return isinstance(other, NmGarch) and other.d == self.d

    def __hash__(self):
        return hash(("nm", self.d))

    def to_vector(self, theta: ThetaNm) -> np.ndarray:
        self.check_theta(theta)
        return np.concatenate([theta.gamma[:-1], theta.omega, theta.A.ravel(), theta.b])

    def unpack(self, V):
        """Split a ``(G, p)`` batch into gamma, omega, A, b blocks."""
        d = self.d
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if V.shape[1] != len(self.param_names):
            raise DimensionMismatch(
                f"NM({d}) takes {len(self.param_names)} coordinates, got {V.shape[1]}")
        g_free = V[:, : d - 1]
        gamma = np.concatenate([g_free, 1.0 - g_free.sum(axis=1, keepdims=True)], axis=1)
        o = d - 1
        omega = V[:, o: o + d]
        A = V[:, o + d: o + d + d * d].reshape(-1, d, d)
        b = V[:, o + d + d * d:]
        return gamma, omega, A, b

    def from_vector(self, v) -> ThetaNm:
        gamma, omega, A, b = self.unpack(np.asarray(v, dtype=float)[None, :])
        return ThetaNm(gamma[0], omega[0], A[0], b[0])

    def check_theta(self, theta):
        if not isinstance(theta, ThetaNm):
            raise InvalidParameter(f"expected ThetaNm, got {type(theta).__name__}")
        if theta.d != self.d:
            raise DimensionMismatch(f"model has d={self.d}, parameter has d={theta.d}")

    def default_state(self):
        return np.ones(self.d)

    def check_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DimensionMismatch(f"NM({self.d}) state must have length {self.d}, got {x.shape}")
        if np.any(~(x > 0)):
            raise InvalidState(f"NM state must be entrywise positive, got {x}")

    def psi(self, theta: ThetaNm, x, y):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DimensionMismatch(f"NM({self.d}) state must have length {self.d}")
        return theta.omega + theta.A @ x + y * y * theta.b

    def psi_exact(self, theta: ThetaNm, x, y):
        y2 = Fraction(y) ** 2
        return [Fraction(theta.omega[i])
                + sum(Fraction(theta.A[i, j]) * x[j] for j in range(self.d))
                + y2 * Fraction(theta.b[i])
                for i in range(self.d)]

    def log_g(self, theta: ThetaNm, x, y):
        return float(mixture_gauss_logpdf(y, x, theta.gamma))

    def draw_obs(self, theta, x, gen_obs, gen_ind):
        comp = int(np.searchsorted(np.cumsum(theta.gamma), gen_ind.random(), side="right"))
        comp = min(comp, self.d - 1)
        return float(np.sqrt(x[comp]) * gen_obs.standard_normal())

    def stability(self, theta: ThetaNm):
        rho = spectral_radius(theta.A + np.outer(theta.b, theta.gamma))
        return rho < 1.0, 1.0 - rho

    def generators(self):
        """All joint permutations of the mixture components."""
        return [ComponentPermutation(p) for p in itertools.permutations(range(self.d))]

    def simulate(self, theta, x0, n, rng):
        return simulate_odm(self, theta, x0, n, rng)

    def initial_states(self, V, x0):
        x0 = np.asarray(x0, dtype=float)
        return np.broadcast_to(x0, (np.atleast_2d(V).shape[0], self.d)).copy()

    def psi_batch(self, V, x, y):
        _, omega, A, b = self.unpack(V)
        return omega + np.einsum("gij,gj->gi", A, x) + y * y * b

    def log_g_const(self, V, y_path):
        return np.zeros(np.atleast_2d(V).shape[0])

    def log_g_kernel(self, V, x, y):
        gamma = self.unpack(V)[0]
        with np.errstate(divide="ignore"):
            log_gamma = np.log(gamma)
        comp = -0.5 * (LOG_2PI + np.log(x)) - 0.5 * y * y / x
        return logsumexp(comp + log_gamma, axis=-1)


OdmModel = NbinGarch | NmGarch


# --------------------------------------------------------------------------
# Operations


def psi_step(model, theta, x, y):
    """One step of the state recursion ``x' = psi_y(x)``."""
    model.check_theta(theta)
    return model.psi(theta, x, y)


def psi_iterate(model, theta, x, y_path):
    """Compose ``psi_{y_p} o ... o psi_{y_1}`` applied to ``x``.

    An empty path returns ``x`` unchanged.
    """
    model.check_theta(theta)
    for y in y_path:
        x = model.psi(theta, x, y)
    return x


def emission_logdensity(model, theta, x, y) -> float:
    """``log g(x; y)``; raises ``InvalidState`` outside the state space."""
    model.check_theta(theta)
    model.check_state(x)
    return model.log_g(theta, x, y)


def simulate_odm(model, theta, x0, n: int, rng):
    """Simulate ``n`` observations started from ``X_1 = x0``.

    Returns ``(X_1..X_{n+1}, Y_1..Y_n)``; the last state is the one the
    recursion would use for ``Y_{n+1}``. The observation draws and (for NM)
    the mixture indicators use separate substreams of ``rng``.
    """
    model.check_theta(theta)
    model.check_state(x0)
    if n < 1:
        raise InvalidParameter("simulation length must be at least 1")
    if isinstance(rng, RngStream):
        gen_obs = rng.child(OBS_NOISE).generator()
        gen_ind = rng.child(INDICATOR).generator()
    else:
        gen_obs = gen_ind = as_generator(rng)
    x = np.asarray(x0, dtype=float).copy() if model.d > 1 else float(x0)
    xs = [x]
    ys = np.empty(n, dtype=np.int64 if model.kind == "nbin" else float)
    for k in range(n):
        y = model.draw_obs(theta, x, gen_obs, gen_ind)
        ys[k] = y
        x = model.psi(theta, x, y)
        xs.append(x)
    return np.asarray(xs), ys


def cond_loglik_batch(model, V, x0, y_path) -> np.ndarray:
    """Normalized conditional log-likelihood for each row of ``V``.

    ``V`` is a ``(G, p)`` array of free coordinates. Returns shape ``(G,)``.
    """
    y_path = np.asarray(y_path)
    if y_path.size == 0:
        raise EmptyPath("conditional likelihood needs at least one observation")
    V = np.atleast_2d(np.asarray(V, dtype=float))
    x = model.initial_states(V, x0)
    total = model.log_g_const(V, y_path)
    with np.errstate(divide="ignore", invalid="ignore"):
        for y in y_path.tolist():
            total = total + model.log_g_kernel(V, x, y)
            x = model.psi_batch(V, x, y)
    total = np.where(np.isnan(total), -np.inf, total)
    return total / y_path.size


def cond_loglik(model, theta, x, y_path) -> float:
    """``n^-1 sum_k log g(f_{y_1:k-1}(x); y_k)``."""
    model.check_theta(theta)
    model.check_state(x)
    return float(cond_loglik_batch(model, model.to_vector(theta)[None, :], x, y_path)[0])


def predictive_logdensities(model, theta, x, y_path, window: int | None = None):
    """Per-step ``log g(state_k; y_k)``.

    With ``window=None`` the state is the full recursion from ``X_1 = x``.
    With an integer ``window = m`` each state is rebuilt from ``x`` through
    only the ``m`` preceding observations, ``f_{y_{k-m:k-1}}(x)``; the first
    ``m`` steps have no full window and are returned as NaN.
    """
    model.check_theta(theta)
    y = np.asarray(y_path)
    n = y.size
    V = model.to_vector(theta)[None, :]
    if window is None:
        out = np.empty(n)
        xs = model.initial_states(V, x)
        for k, yk in enumerate(y.tolist()):
            out[k] = model.log_g_kernel(V, xs, yk)[0]
            xs = model.psi_batch(V, xs, yk)
        return out + _const_per_step(model, V, y)
    m = int(window)
    out = np.full(n, np.nan)
    if n <= m:
        return out
    targets = np.arange(m, n)
    Vb = np.repeat(V, targets.size, axis=0)
    xs = model.initial_states(Vb, x)
    for j in range(m):
        yj = y[targets - m + j].astype(float)
        yj = yj[:, None] if model.d > 1 else yj
        xs = model.psi_batch(Vb, xs, yj)
    yt = y[targets].astype(float)
    out[m:] = _log_g_rows(model, Vb, xs, yt)
    return out


def _const_per_step(model, V, y):
    if model.kind != "nbin":
        return 0.0
    r = V[0, 3]
    y = y.astype(float)
    return gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)


def _log_g_rows(model, Vb, xs, yt):
    """``log g`` with a different observation per batch row."""
    if model.kind == "nbin":
        r = Vb[:, 3]
        p = model.success_prob(xs)
        return nb_logpmf(yt, r, p)
    gamma = model.unpack(Vb)[0]
    with np.errstate(divide="ignore"):
        log_gamma = np.log(gamma)
    comp = -0.5 * (LOG_2PI + np.log(xs)) - 0.5 * yt[:, None] ** 2 / xs
    return logsumexp(comp + log_gamma, axis=-1)


def forgetting_gap(model, theta, y_past, x1, x2, exact: bool = True) -> np.ndarray:
    """Distance between the two state orbits driven by the same observations.

    Entry ``k-1`` is ``|f_{y_1:k}(x1) - f_{y_1:k}(x2)|`` (Euclidean norm).
    With ``exact=True`` both orbits are propagated in rational arithmetic, so
    gaps far below the states' own rounding error are still resolved.
    """
    model.check_theta(theta)
    y_past = list(np.asarray(y_past).tolist())
    if not y_past:
        raise EmptyPath("forgetting_gap needs at least one past observation")
    gaps = np.empty(len(y_past))
    if exact:
        if model.d > 1:
            u = [Fraction(v) for v in np.asarray(x1, dtype=float)]
            w = [Fraction(v) for v in np.asarray(x2, dtype=float)]
        else:
            u, w = Fraction(float(x1)), Fraction(float(x2))
        for k, y in enumerate(y_past):
            u = model.psi_exact(theta, u, y)
            w = model.psi_exact(theta, w, y)
            if model.d > 1:
                gaps[k] = math.sqrt(float(sum((p - q) ** 2 for p, q in zip(u, w))))
            else:
                gaps[k] = float(abs(u - w))
        return gaps
    u, w = x1, x2
    for k, y in enumerate(y_past):
        u = model.psi(theta, u, y)
        w = model.psi(theta, w, y)
        gaps[k] = float(np.linalg.norm(np.atleast_1d(np.asarray(u) - np.asarray(w))))
    return gaps


def stability_check(model, theta):
    """``(is_stable, margin)`` for the model's stationarity condition.

    NBIN: ``margin = 1 - (r b + a)``; NM: ``margin = 1 - rho(A + b gamma^T)``.
    """
    model.check_theta(theta)
    stable, margin = model.stability(theta)
    return bool(stable), float(margin)


def spectral_radius(M, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Perron root of a square nonnegative matrix by power iteration.

    Periodic matrices make the plain iteration oscillate; in that case the
    iteration is rerun on ``M + I`` (same Perron vector, strictly dominant
    root). Raises ``ConvergenceError`` if neither run settles.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"spectral_radius needs a square matrix, got {M.shape}")
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise InvalidParameter("spectral_radius expects a finite nonnegative matrix")
    if not np.any(M):
        return 0.0
    try:
        return _power_iteration(M, tol, max_iter)
    except ConvergenceError:
        pass
    shifted = M + np.eye(M.shape[0])
    try:
        return _power_iteration(shifted, tol, max_iter) - 1.0
    except ConvergenceError as err:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations (with shift)",
            estimate=err.estimate - 1.0) from None


def _power_iteration(M, tol, max_iter):
    d = M.shape[0]
    x = np.full(d, 1.0 / d)
    lam_prev = np.inf
    lam = np.nan
    for _ in range(max_iter):
        y = M @ x
        lam = y.sum()  # x sums to one and everything is nonnegative
        if lam == 0.0:
            return 0.0
        x = y / lam
        if abs(lam - lam_prev) <= tol * max(1.0, lam):
            return float(lam)
        lam_prev = lam
    raise ConvergenceError("power iteration did not converge", estimate=float(lam))
