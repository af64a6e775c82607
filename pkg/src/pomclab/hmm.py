"""Reflected random-walk HMM with an atom at zero.

    X_k = (X_{k-1} + U_k - m)^+,      Y_k = a X_k + V_k

``U`` is symmetric Pareto, ``V`` centered Gaussian. The transition has a
density with respect to ``mu = Lebesgue + delta_0``: ``r(x' - x + m)`` for
``x' > 0`` and the CDF mass ``F(m - x)`` at ``x' = 0``.

Three likelihood routes are provided and kept independent of each other:

* :func:`loglik_grid` -- filter recursion on a fixed grid ``{0} U cells``;
* :func:`loglik_bruteforce` -- nested Gauss-Legendre quadrature of the
  n-fold integral (``n <= 3``), no recursion;
* :func:`particle_filter_loglik` -- bootstrap particle filter with a
  genealogy-based variance estimate.

All likelihoods are normalized: they return ``n^-1`` times the log of the
unnormalized block ``xi P<y_0:n-1> 1`` where ``y_0`` is emitted by ``X_0 ~ xi``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distributions import NoisePair, gauss_logpdf
from .errors import (
    DegeneracyWarning,
    EmptyPath,
    InvalidParameter,
    InvalidState,
)
from .odm import identity
from .rng import INIT, OBS_NOISE, RESAMPLE, STATE_NOISE, RngStream, as_generator


@dataclass(frozen=True)
class ThetaHmm:
    m: float
    a: float

    def __post_init__(self):
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "a", float(self.a))
        if not self.m > 0:
            raise InvalidParameter(f"drift m must be positive, got {self.m}")
        if not math.isfinite(self.a):
            raise InvalidParameter("loading a must be finite")


# --------------------------------------------------------------------------
# Initial laws


@dataclass(frozen=True)
class Dirac:
    x: float = 0.0

    def __post_init__(self):
        if not self.x >= 0:
            raise InvalidState(f"initial point must be nonnegative, got {self.x}")


@dataclass(frozen=True)
class Uniform:
    """Law with constant density w.r.t. ``mu`` on ``[0, x_max]``.

    The atom at zero gets ``1 / (1 + x_max)``. ``x_max=None`` means "the
    grid's upper end" when used with a grid.
    """

    x_max: float | None = None


def parse_initial(spec) -> Dirac | Uniform:
    """``"dirac:0.5"``, ``"dirac"`` (at 0), ``"uniform"`` or ``"uniform:20"``."""
    if isinstance(spec, (Dirac, Uniform)):
        return spec
    kind, _, arg = str(spec).partition(":")
    kind = kind.strip().lower()
    if kind == "dirac":
        return Dirac(float(arg) if arg else 0.0)
    if kind == "uniform":
        return Uniform(float(arg) if arg else None)
    raise InvalidParameter(f"unknown initial law {spec!r}")


def format_initial(xi) -> str:
    if isinstance(xi, Dirac):
        return f"dirac:{xi.x!r}"
    return "uniform" if xi.x_max is None else f"uniform:{xi.x_max!r}"


# --------------------------------------------------------------------------
# Densities


def q_logdensity(theta: ThetaHmm, noise: NoisePair, x, x_prime):
    """Log transition density w.r.t. ``mu``.

    At ``x' = 0`` this is the log of the atom mass ``F(m - x)``.
    """
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if np.any(x < 0) or np.any(x_prime < 0):
        raise InvalidState("HMM states are nonnegative")
    r = noise.transition
    with np.errstate(divide="ignore"):
        atom = np.log(r.cdf(theta.m - x))
    return np.where(x_prime > 0, r.logpdf(x_prime - x + theta.m), atom)


def g_logdensity(theta: ThetaHmm, noise: NoisePair, x, y):
    """``log h(y - a x)`` with ``h`` the Gaussian observation density."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InvalidState("HMM states are nonnegative")
    return gauss_logpdf(np.asarray(y, dtype=float) - theta.a * x, noise.emission.sigma)


def simulate_hmm(theta: ThetaHmm, noise: NoisePair, x0: float, n: int, rng):
    """Simulate ``(X_0..X_{n-1}, Y_0..Y_{n-1})`` with ``X_0 = x0``.

    Every observation, including ``Y_0``, is ``a X_k + V_k``. Transition and
    observation noise come from separate substreams of ``rng``.
    """
    if not x0 >= 0:
        raise InvalidState("initial state must be nonnegative")
    if n < 1:
        raise InvalidParameter("simulation length must be at least 1")
    if isinstance(rng, RngStream):
        gen_u = rng.child(STATE_NOISE).generator()
        gen_v = rng.child(OBS_NOISE).generator()
    else:
        gen_u = gen_v = as_generator(rng)
    u = noise.transition.draw(gen_u, n - 1).tolist()
    m = theta.m
    xs = [float(x0)]
    x = float(x0)
    for uk in u:
        x = x + uk - m
        if x < 0.0:
            x = 0.0
        xs.append(x)
    xs = np.asarray(xs)
    ys = theta.a * xs + noise.emission.draw(gen_v, n)
    return xs, ys


# --------------------------------------------------------------------------
# Grid


@dataclass(frozen=True)
class GridSpec:
    """Discretization of ``[0, x_max]`` for the dominating measure ``mu``.

    Nodes are ``0`` (the atom, weight 1) followed by the midpoints of
    ``n_cells`` cells with Lebesgue weights equal to the cell widths.
    ``spacing="geometric"`` makes widths grow by a constant ratio so that the
    last cell is ``stretch`` times wider than the first.

    ``scheme`` chooses how a transition into a cell is weighted:
    ``"cell"`` integrates the transition density exactly over the cell (via
    the CDF); ``"midpoint"`` uses ``r(x_j - x_i + m) * width_j``.
    """

    x_max: float = 40.0
    n_cells: int = 400
    spacing: str = "geometric"
    stretch: float = 10.0
    scheme: str = "cell"
    edges: np.ndarray = field(init=False, repr=False, compare=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.x_max > 0:
            raise InvalidParameter("grid x_max must be positive")
        if int(self.n_cells) != self.n_cells or self.n_cells < 0:
            raise InvalidParameter("n_cells must be a nonnegative integer")
        if self.spacing not in ("uniform", "geometric"):
            raise InvalidParameter(f"unknown spacing {self.spacing!r}")
        if self.scheme not in ("cell", "midpoint"):
            raise InvalidParameter(f"unknown scheme {self.scheme!r}")
        if not self.stretch >= 1:
            raise InvalidParameter("stretch must be >= 1")
        n = int(self.n_cells)
        object.__setattr__(self, "n_cells", n)
        if self.spacing == "uniform" or n < 2 or self.stretch == 1:
            edges = np.linspace(0.0, self.x_max, n + 1)
        else:
            rho = self.stretch ** (1.0 / (n - 1))
            edges = self.x_max * (rho ** np.arange(n + 1) - 1.0) / (rho**n - 1.0)
            edges[-1] = self.x_max
        widths = np.diff(edges)
        nodes = np.concatenate([[0.0], 0.5 * (edges[:-1] + edges[1:])])
        weights = np.concatenate([[1.0], widths])
        for name, val in (("edges", edges), ("nodes", nodes), ("weights", weights)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def size(self) -> int:
        return self.nodes.size

    def nearest(self, x: float) -> int:
        return int(np.argmin(np.abs(self.nodes - x)))


def transition_matrix(theta: ThetaHmm, noise: NoisePair, grid: GridSpec) -> np.ndarray:
    """``K[i, j]``: probability of moving from node ``i`` into node/cell ``j``.

    Column 0 is the atom. Row sums fall short of one by the mass that leaves
    ``[0, x_max]``.
    """
    r = noise.transition
    src = grid.nodes[:, None]
    K = np.empty((grid.size, grid.size))
    K[:, 0] = r.cdf(theta.m - grid.nodes)
    if grid.scheme == "cell":
        lo = grid.edges[None, :-1] - src + theta.m
        hi = grid.edges[None, 1:] - src + theta.m
        K[:, 1:] = r.interval_mass(lo, hi)
    else:
        K[:, 1:] = np.exp(r.logpdf(grid.nodes[None, 1:] - src + theta.m)) * grid.weights[None, 1:]
    return K


# --------------------------------------------------------------------------
# Filter


@dataclass(frozen=True, eq=False)
class FilterState:
    """Normalized filter on the grid plus the running log-normalizer."""

    log_weights: np.ndarray
    log_normalizer_accum: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def _initial_weights(grid: GridSpec, xi) -> np.ndarray:
    xi = parse_initial(xi)
    w = np.zeros(grid.size)
    if isinstance(xi, Dirac):
        if xi.x > grid.x_max:
            raise InvalidState(f"dirac point {xi.x} lies beyond x_max={grid.x_max}")
        w[grid.nearest(xi.x)] = 1.0
        return w
    upper = grid.x_max if xi.x_max is None else xi.x_max
    w = np.where(grid.nodes <= upper, grid.weights, 0.0)
    return w / w.sum()


def filter_init(grid: GridSpec, xi) -> FilterState:
    """Filter holding the initial law ``xi`` (a ``Dirac`` is snapped to the
    nearest node)."""
    w = _initial_weights(grid, xi)
    with np.errstate(divide="ignore"):
        return FilterState(np.log(w), 0.0)


def _condition(w, lg):
    """Multiply weights by ``exp(lg)``; return (new weights, log mass)."""
    shift = lg.max(axis=-1, keepdims=True)
    u = w * np.exp(lg - shift)
    s = u.sum(axis=-1, keepdims=True)
    return u / s, (np.log(s) + shift)[..., 0]


def filter_condition(theta, noise, grid, state: FilterState, y) -> FilterState:
    """Absorb an observation without moving the state (the ``g(x_0; y_0)``
    factor of the block likelihood)."""
    lg = g_logdensity(theta, noise, grid.nodes, y)
    w, logc = _condition(state.weights, lg)
    with np.errstate(divide="ignore"):
        return FilterState(np.log(w), state.log_normalizer_accum + float(logc))


def filter_step(theta, noise, grid, state: FilterState, y_prev, y, K=None) -> FilterState:
    """One prediction-correction step: ``w'_j ~ sum_i w_i K_ij g(x_j; y)``.

    ``y_prev`` is accepted for symmetry with the general two-observation
    kernel; the HMM kernel does not depend on it. ``K`` may be passed to
    avoid rebuilding the transition matrix.
    """
    if K is None:
        K = transition_matrix(theta, noise, grid)
    pred = state.weights @ K
    lg = g_logdensity(theta, noise, grid.nodes, y)
    w, logc = _condition(pred, lg)
    with np.errstate(divide="ignore"):
        return FilterState(np.log(w), state.log_normalizer_accum + float(logc))


def _run_filter(K, lg_fn, w0, y, record_weights=False):
    """Core loop shared by the likelihood and the forgetting diagnostics.

    ``w0`` has shape (B, C); ``lg_fn(y)`` returns (B, C) log-emissions.
    Returns per-step log-normalizers (n, B), mass lost off-grid per step
    (n, B) and optionally the filtered weights (n, B, C).
    """
    n = len(y)
    B = w0.shape[0]
    logc = np.empty((n, B))
    lost = np.zeros((n, B))
    ws = np.empty((n,) + w0.shape) if record_weights else None
    w, logc[0] = _condition(w0, lg_fn(y[0]))
    if record_weights:
        ws[0] = w
    for k in range(1, n):
        pred = w @ K
        lost[k] = 1.0 - pred.sum(axis=-1)
        w, logc[k] = _condition(pred, lg_fn(y[k]))
        if record_weights:
            ws[k] = w
    return logc, lost, ws


def loglik_grid(theta: ThetaHmm, noise: NoisePair, grid: GridSpec, xi, y_path,
                details: bool = False):
    """Grid approximation of ``n^-1 log xi P<y_0:n-1> 1``.

    With ``details=True`` also returns a dict with the per-step predictive
    log-densities and ``truncation_mass`` (largest one-step mass that left
    the grid along this path).
    """
    y = np.asarray(y_path, dtype=float)
    if y.size == 0:
        raise EmptyPath("likelihood needs at least one observation")
    K = transition_matrix(theta, noise, grid)
    w0 = _initial_weights(grid, xi)[None, :]
    sigma = noise.emission.sigma
    lg_fn = lambda yk: gauss_logpdf(yk - theta.a * grid.nodes, sigma)[None, :]  # noqa: E731
    logc, lost, _ = _run_filter(K, lg_fn, w0, y)
    value = float(logc[:, 0].sum() / y.size)
    if details:
        return value, {"step_loglik": logc[:, 0], "truncation_mass": float(lost.max())}
    return value


def loglik_grid_batch(V, noise: NoisePair, grid: GridSpec, xi, y_path) -> np.ndarray:
    """:func:`loglik_grid` for each row ``(m, a)`` of ``V``.

    Rows sharing ``m`` share one transition matrix and are filtered together.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    y = np.asarray(y_path, dtype=float)
    if y.size == 0:
        raise EmptyPath("likelihood needs at least one observation")
    out = np.empty(V.shape[0])
    w_init = _initial_weights(grid, xi)
    sigma = noise.emission.sigma
    for m in np.unique(V[:, 0]):
        rows = np.flatnonzero(V[:, 0] == m)
        a = V[rows, 1][:, None]
        K = transition_matrix(ThetaHmm(m, 0.0), noise, grid)
        w0 = np.repeat(w_init[None, :], rows.size, axis=0)
        lg_fn = lambda yk: gauss_logpdf(yk - a * grid.nodes[None, :], sigma)  # noqa: E731
        logc, _, _ = _run_filter(K, lg_fn, w0, y)
        out[rows] = logc.sum(axis=0) / y.size
    return out


def filter_step_logliks(theta, noise, grid, xi, y_path) -> np.ndarray:
    """Per-step log predictive densities ``log p(y_k | y_0:k-1)`` on the grid."""
    return loglik_grid(theta, noise, grid, xi, y_path, details=True)[1]["step_loglik"]


def filter_tv_gap(theta, noise, grid, xi1, xi2, y_path) -> np.ndarray:
    """Total-variation distance between two filters fed the same data.

    Entry ``k`` compares the filters after absorbing ``y_0..y_k``.
    """
    y = np.asarray(y_path, dtype=float)
    if y.size == 0:
        raise EmptyPath("filter_tv_gap needs at least one observation")
    K = transition_matrix(theta, noise, grid)
    w0 = np.stack([_initial_weights(grid, xi1), _initial_weights(grid, xi2)])
    sigma = noise.emission.sigma
    lg_fn = lambda yk: gauss_logpdf(yk - theta.a * grid.nodes, sigma)[None, :]  # noqa: E731
    _, _, ws = _run_filter(K, lg_fn, w0, y, record_weights=True)
    return 0.5 * np.abs(ws[:, 0, :] - ws[:, 1, :]).sum(axis=-1)


# --------------------------------------------------------------------------
# Brute-force quadrature oracle


@dataclass(frozen=True)
class QuadSpec:
    """Composite Gauss-Legendre rule used by :func:`loglik_bruteforce`.

    ``[0, x_upper]`` is cut at every potential kink of the integrand and then
    into panels no wider than ``step``; ``[x_upper, inf)`` is mapped to
    ``[0, 1)`` by ``x = x_upper (1 + t / (1 - t))`` and covered by
    ``tail_panels`` panels.
    """

    step: float = 0.25
    order: int = 10
    x_upper: float = 60.0
    tail_panels: int = 16

    def refined(self) -> "QuadSpec":
        return QuadSpec(self.step / 2, self.order, self.x_upper, 2 * self.tail_panels)


def _gl_nodes(breaks, step, order):
    t, w = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        k = max(1, int(math.ceil((hi - lo) / step - 1e-12)))
        edges = np.linspace(lo, hi, k + 1)
        half = 0.5 * np.diff(edges)[:, None]
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        xs.append((mid + half * t).ravel())
        ws.append((half * w).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def _tail_nodes(x_upper, panels, order):
    t, w = _gl_nodes(np.array([0.0, 1.0]), 1.0 / panels, order)
    x = x_upper * (1.0 + t / (1.0 - t))
    return x, w * x_upper / (1.0 - t) ** 2


def loglik_bruteforce(theta: ThetaHmm, noise: NoisePair, xi, y_path,
                      quad: QuadSpec = QuadSpec(), order=None) -> float:
    """Reference value of ``n^-1 log xi P<y_0:n-1> 1`` for ``n <= 3``.

    Integrates ``prod_k g(x_k; y_k) prod_k q(x_{k-1}, x_k)`` over every free
    state against ``mu`` by nested quadrature. ``order`` lists the integration
    variables from outermost to innermost (default: time order); changing it
    is a Fubini check. Cost grows as (nodes per axis) ** (free variables - 1).
    """
    y = np.asarray(y_path, dtype=float)
    n = y.size
    if n == 0:
        raise EmptyPath("likelihood needs at least one observation")
    if n > 3:
        raise InvalidParameter("brute-force likelihood is limited to n <= 3")
    xi = parse_initial(xi)
    r = noise.transition
    sigma = noise.emission.sigma
    m, a = theta.m, theta.a

    free = list(range(n)) if isinstance(xi, Uniform) else list(range(1, n))
    if isinstance(xi, Uniform) and xi.x_max is None:
        raise InvalidParameter("uniform initial law needs an explicit x_max here")
    order = list(free) if order is None else list(order)
    if sorted(order) != free:
        raise InvalidParameter(f"order must be a permutation of {free}")

    def log_g(k, x):
        return gauss_logpdf(y[k] - a * x, sigma)

    def log_trans(x_prev, x, atom):
        with np.errstate(divide="ignore"):
            return np.where(atom, np.log(r.cdf(m - x_prev)), r.logpdf(x - x_prev + m))

    def measure(k, fixed):
        """Nodes, weights and atom flags for integrating x_k."""
        if k == 0:  # uniform initial law on [0, x_max]
            upper = xi.x_max
        else:
            upper = quad.x_upper
        base = [0.0] + list(fixed.values())
        if isinstance(xi, Uniform):
            base.append(xi.x_max)
        pts = {b + j * m for b in base for j in range(-n, n + 1)}
        breaks = np.array(sorted({0.0, upper} | {p for p in pts if 0.0 < p < upper}))
        xs, ws = _gl_nodes(breaks, quad.step, quad.order)
        if k != 0:
            xt, wt = _tail_nodes(quad.x_upper, quad.tail_panels, quad.order)
            xs, ws = np.concatenate([xs, xt]), np.concatenate([ws, wt])
        if k == 0:
            ws = ws / (1.0 + xi.x_max)
            atom_w = 1.0 / (1.0 + xi.x_max)
        else:
            atom_w = 1.0
        xs = np.concatenate([[0.0], xs])
        ws = np.concatenate([[atom_w], ws])
        atoms = np.zeros(xs.size, dtype=bool)
        atoms[0] = True
        return xs, ws, atoms

    def log_integrand(vals, atoms):
        total = 0.0
        for k in range(n):
            total = total + log_g(k, vals[k])
            if k >= 1:
                total = total + log_trans(vals[k - 1], vals[k], atoms[k])
        return total

    def integrate(depth, fixed, fixed_atoms):
        k = order[depth]
        xs, ws, at = measure(k, fixed)
        if depth == len(order) - 1:
            vals = dict(fixed)
            atoms = dict(fixed_atoms)
            vals[k], atoms[k] = xs, at
            full_vals = [vals[j] for j in range(n)]
            full_atoms = [atoms[j] for j in range(n)]
            return float(np.sum(ws * np.exp(log_integrand(full_vals, full_atoms))))
        acc = 0.0
        for x, w, is_atom in zip(xs, ws, at):
            acc += w * integrate(depth + 1, {**fixed, k: x}, {**fixed_atoms, k: bool(is_atom)})
        return acc

    fixed, fixed_atoms = {}, {}
    if isinstance(xi, Dirac):
        fixed[0] = xi.x
        fixed_atoms[0] = xi.x == 0.0
    if not order:
        total = float(np.exp(log_integrand([fixed[0]], [fixed_atoms[0]])))
    else:
        total = integrate(0, fixed, fixed_atoms)
    return math.log(total) / n


# --------------------------------------------------------------------------
# Particle filter


@dataclass(frozen=True, eq=False)
class ParticleEstimate:
    loglik: float
    stderr: float
    ess: np.ndarray
    n_particles: int


def particle_filter_loglik(theta: ThetaHmm, noise: NoisePair, xi, y_path, N: int,
                           rng) -> ParticleEstimate:
    """Bootstrap particle filter estimate of the normalized log-likelihood.

    Multinomial resampling at every step. The standard error comes from the
    genealogy (Eve-index) variance estimator of the likelihood estimate,
    turned into a standard error on the normalized log scale by the delta
    method.
    """
    y = np.asarray(y_path, dtype=float)
    n = y.size
    if n == 0:
        raise EmptyPath("likelihood needs at least one observation")
    if N < 100:
        raise InvalidParameter("particle filter needs N >= 100")
    xi = parse_initial(xi)
    if isinstance(rng, RngStream):
        gen_init = rng.child(INIT).generator()
        gen_u = rng.child(STATE_NOISE).generator()
        gen_res = rng.child(RESAMPLE).generator()
    else:
        gen_init = gen_u = gen_res = as_generator(rng)

    if isinstance(xi, Dirac):
        x = np.full(N, float(xi.x))
    else:
        if xi.x_max is None:
            raise InvalidParameter("uniform initial law needs an explicit x_max here")
        on_atom = gen_init.random(N) < 1.0 / (1.0 + xi.x_max)
        x = np.where(on_atom, 0.0, gen_init.uniform(0.0, xi.x_max, N))

    sigma = noise.emission.sigma
    eve = np.arange(N)
    ess = np.empty(n)
    log_z = 0.0
    W = None
    for k in range(n):
        if k > 0:
            idx = gen_res.choice(N, size=N, p=W)
            x, eve = x[idx], eve[idx]
            x = np.maximum(x + noise.transition.draw(gen_u, N) - theta.m, 0.0)
        lw = gauss_logpdf(y[k] - theta.a * x, sigma)
        shift = lw.max()
        w = np.exp(lw - shift)
        s = w.sum()
        log_z += shift + math.log(s / N)
        W = w / s
        ess[k] = 1.0 / np.sum(W * W)

    # relative variance of the likelihood estimate (multinomial resampling,
    # n time points)
    group = np.bincount(eve, weights=W, minlength=N)
    rel_var = 1.0 - (N / (N - 1.0)) ** n * (1.0 - np.sum(group**2))
    stderr = math.sqrt(max(rel_var, 0.0)) / n
    if ess.min() < 10:
        warnings.warn(f"particle degeneracy: minimum ESS {ess.min():.1f} < 10",
                      DegeneracyWarning, stacklevel=2)
    return ParticleEstimate(log_z / n, stderr, ess, N)


# --------------------------------------------------------------------------
# Model wrapper used by the estimation layer


class Hmm1:
    """The reflected random-walk HMM with fixed noise laws and grid."""

    kind = "hmm1"
    param_names = ("m", "a")
    d = 1

    def __init__(self, noise: NoisePair = NoisePair(), grid: GridSpec | None = None,
                 xi="dirac:0"):
        self.noise = noise
        self.grid = GridSpec() if grid is None else grid
        self.xi = parse_initial(xi)

    def __repr__(self):
        return f"Hmm1(noise={self.noise!r}, grid={self.grid!r}, xi={format_initial(self.xi)!r})"

    def to_vector(self, theta: ThetaHmm) -> np.ndarray:
        return np.array([theta.m, theta.a])

    def from_vector(self, v) -> ThetaHmm:
        m, a = np.asarray(v, dtype=float)
        return ThetaHmm(m, a)

    def check_theta(self, theta):
        if not isinstance(theta, ThetaHmm):
            raise InvalidParameter(f"expected ThetaHmm, got {type(theta).__name__}")

    def default_state(self):
        return 0.0

    def stability(self, theta):
        return True, math.inf

    def generators(self):
        return [identity]

    def simulate(self, theta, x0, n, rng):
        return simulate_hmm(theta, self.noise, x0, n, rng)

    def loglik_batch(self, V, y_path, x0=None):
        return loglik_grid_batch(V, self.noise, self.grid, self.xi, y_path)
