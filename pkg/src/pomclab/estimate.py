"""Maximum-likelihood fitting, Kullback-Leibler profiles and consistency runs.

Every model exposes ``param_names``, ``to_vector``/``from_vector`` and a
batched likelihood; the routines here work on the free-coordinate vectors
and only convert back to parameter objects at the edges.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InstabilityError, InsufficientData, InvalidParameter, PomcError
from .hmm import Hmm1, filter_step_logliks
from .odm import cond_loglik_batch, predictive_logdensities
from .rng import RngStream

N_BATCHES = 30


# --------------------------------------------------------------------------
# Boxes and equivalence classes


@dataclass(frozen=True, eq=False)
class ThetaBox:
    """Closed interval per free coordinate, in ``model.param_names`` order.

    An interval with ``lo == hi`` pins that coordinate: it is scanned at a
    single value and left out of the refinement.
    """

    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (len(self.names),) or hi.shape != lo.shape:
            raise InvalidParameter("box bounds must match the parameter names")
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(lo > hi):
            raise InvalidParameter(f"invalid box bounds {lo} .. {hi}")
        if not np.any(lo < hi):
            raise InvalidParameter("box has no free coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_dict(cls, model, bounds: dict) -> "ThetaBox":
        missing = set(model.param_names) - set(bounds)
        extra = set(bounds) - set(model.param_names)
        if missing or extra:
            raise InvalidParameter(
                f"box keys must be exactly {model.param_names}; "
                f"missing {sorted(missing)}, unexpected {sorted(extra)}")
        lo = [float(bounds[k][0]) for k in model.param_names]
        hi = [float(bounds[k][1]) for k in model.param_names]
        return cls(model.param_names, np.array(lo), np.array(hi))

    def to_dict(self) -> dict:
        return {k: [float(a), float(b)] for k, a, b in zip(self.names, self.lower, self.upper)}

    @property
    def free(self) -> np.ndarray:
        return self.lower < self.upper

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def clip(self, v) -> np.ndarray:
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def axes(self, resolution: int) -> list:
        return [np.linspace(a, b, resolution) if a < b else np.array([a])
                for a, b in zip(self.lower, self.upper)]

    def grid(self, resolution: int) -> np.ndarray:
        """Product grid with ``resolution`` points on every free axis."""
        mesh = np.meshgrid(*self.axes(resolution), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def check_stability(self, model, n_samples: int = 256) -> None:
        """Raise ``InstabilityError`` if some point of the box is unstable.

        NBIN: ``r b + a`` is increasing in each coordinate, so the upper
        corner decides. NM: the spectral radius is increasing in ``A`` and
        ``b``; ``gamma`` is scanned over a fixed pseudo-random sample.
        """
        kind = getattr(model, "kind", None)
        if kind == "nbin":
            th = model.from_vector(self.upper)
            ok, margin = model.stability(th)
            if not ok:
                raise InstabilityError(f"box corner has r*b + a = {1 - margin:.6g} >= 1")
        elif kind == "nm":
            d = model.d
            gen = RngStream(0, (0x57AB,)).generator()
            corner = np.array(self.upper)
            g_lo, g_hi = self.lower[: d - 1], self.upper[: d - 1]
            samples = [g_lo, g_hi] + [gen.uniform(g_lo, g_hi) for _ in range(n_samples)]
            for g in samples:
                if g.sum() > 1.0:
                    continue
                v = corner.copy()
                v[: d - 1] = g
                ok, margin = model.stability(model.from_vector(v))
                if not ok:
                    raise InstabilityError(
                        f"spectral radius {1 - margin:.6g} >= 1 inside the box")


@dataclass(frozen=True)
class EquivClassSpec:
    """Transformations mapping a parameter to other members of its class.

    ``floor`` bounds the denominator of the relative per-coordinate error
    used by :func:`class_distance`, so that coordinates equal to zero do
    not blow the metric up.
    """

    generators: tuple
    floor: float = 0.1

    @classmethod
    def for_model(cls, model, floor: float = 0.1) -> "EquivClassSpec":
        return cls(tuple(model.generators()), floor)


def full_vector(theta) -> np.ndarray:
    """All fields of a parameter flattened in declaration order."""
    return np.concatenate([np.ravel(np.asarray(getattr(theta, f.name), dtype=float))
                           for f in dataclasses.fields(theta)])


def orbit(theta, spec: EquivClassSpec) -> list:
    return [g(theta) for g in spec.generators]


def class_distance(theta_hat, theta_star, spec: EquivClassSpec) -> float:
    """``min`` over the orbit of ``theta_star`` of the max relative error.

    Coordinate ``i`` contributes ``|hat_i - t_i| / max(|t_i|, floor)``.
    """
    v = full_vector(theta_hat)
    best = math.inf
    for t in orbit(theta_star, spec):
        w = full_vector(t)
        if w.shape != v.shape:
            raise InvalidParameter("parameters belong to different model families")
        err = np.max(np.abs(v - w) / np.maximum(np.abs(w), spec.floor))
        best = min(best, float(err))
    return best


# --------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class FitConfig:
    resolution: int = 15
    min_n: int = 50
    max_scan_points: int = 200_000
    max_iter: int | None = None
    xatol: float = 1e-6
    fatol: float = 1e-10


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: object
    theta_hat_vector: np.ndarray
    loglik_at_hat: float
    surface_points: np.ndarray
    surface_values: np.ndarray
    refine_iterations: int
    converged: bool
    message: str = ""

    @property
    def surface_samples(self) -> list:
        return list(zip(map(tuple, self.surface_points), self.surface_values))


def loglik_batch(model, V, y_path, x0=None) -> np.ndarray:
    """Normalized log-likelihood for each row of ``V`` (free coordinates)."""
    if isinstance(model, Hmm1):
        return model.loglik_batch(V, y_path)
    x0 = model.default_state() if x0 is None else x0
    return cond_loglik_batch(model, V, x0, y_path)


def _safe(values):
    values = np.asarray(values, dtype=float)
    return np.where(np.isfinite(values), values, -np.inf)


def fit_mle(model, data, box: ThetaBox, cfg: FitConfig = FitConfig(), x0=None) -> FitResult:
    """Grid scan over ``box`` followed by bounded Nelder-Mead refinement.

    The refinement works in box-normalized coordinates and starts at the
    best scanned point; if it ends below the scan's best value the scan
    point is kept. Fully deterministic given ``data`` and ``cfg``.
    """
    y = np.asarray(data)
    if y.size < cfg.min_n:
        raise InsufficientData(f"fit needs at least {cfg.min_n} observations, got {y.size}")
    if tuple(box.names) != tuple(model.param_names):
        raise InvalidParameter("box coordinates do not match the model")
    free = box.free
    k = int(free.sum())
    res = cfg.resolution
    if res ** k > cfg.max_scan_points:
        res = max(2, int(math.floor(cfg.max_scan_points ** (1.0 / k))))
    pts = box.grid(res)
    vals = _safe(loglik_batch(model, pts, y, x0))
    if not np.any(np.isfinite(vals)):
        raise PomcError("likelihood is -inf on every scanned point")
    i0 = int(np.argmax(vals))
    best_v, best_val = pts[i0].copy(), float(vals[i0])

    lo, width = box.lower[free], box.upper[free] - box.lower[free]

    def expand(z):
        v = np.array(box.lower, dtype=float)
        v[free] = lo + np.clip(z, 0.0, 1.0) * width
        return v

    def objective(z):
        val = _safe(loglik_batch(model, expand(z)[None, :], y, x0))[0]
        return -val if np.isfinite(val) else 1e300

    z0 = (best_v[free] - lo) / width
    step = 1.0 / (res - 1)
    simplex = [z0]
    for j in range(k):
        z = z0.copy()
        z[j] = z[j] + step if z[j] + step <= 1.0 else z[j] - step
        simplex.append(z)
    opt = minimize(objective, z0, method="Nelder-Mead",
                   bounds=[(0.0, 1.0)] * k,
                   options={"initial_simplex": np.array(simplex), "xatol": cfg.xatol,
                            "fatol": cfg.fatol, "maxiter": cfg.max_iter or 400 * k})
    refined = -float(opt.fun)
    if refined >= best_val:
        best_v, best_val = expand(opt.x), refined
    return FitResult(model.from_vector(best_v), best_v, best_val, pts, vals,
                     int(opt.nit), bool(opt.success), str(opt.message))


# --------------------------------------------------------------------------
# Kullback-Leibler profile


@dataclass(frozen=True, eq=False)
class KlPoint:
    theta: object
    estimate: float
    stderr: float
    sensitivity: float = math.nan


def batch_means(values, n_batches: int = N_BATCHES):
    """Mean and batch-means standard error of a stationary sequence."""
    v = np.asarray(values, dtype=float)
    if v.size < 2 * n_batches:
        raise InsufficientData(f"need at least {2 * n_batches} values for batch means")
    size = v.size // n_batches
    means = v[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(v.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def _pred_terms(model, theta, x0, y, m):
    if isinstance(model, Hmm1):
        return filter_step_logliks(theta, model.noise, model.grid, model.xi, y)[m:]
    return predictive_logdensities(model, theta, x0, y, window=m)[m:]


def kl_profile(model, theta_star, theta_grid, n: int, m: int = 200, rng=None,
               x0=None, sensitivity: bool = True) -> list:
    """Monte Carlo estimates of ``E[log p*(Y|past) - log p_theta(Y|past)]``.

    One path of length ``n + m`` is simulated under ``theta_star``. For
    observation-driven models each predictive density uses the state rebuilt
    from ``x0`` through the ``m`` preceding observations, for both
    parameters. For the HMM both terms come from grid filters and the first
    ``m`` steps are discarded. ``sensitivity`` re-evaluates with ``m // 2``
    and stores the absolute change.
    """
    if n < 2 * N_BATCHES:
        raise InsufficientData("profile path too short")
    rng = RngStream(0) if rng is None else rng
    hmm = isinstance(model, Hmm1)
    for th in [theta_star, *theta_grid]:
        ok, margin = model.stability(th)
        if not ok:
            raise InstabilityError(f"parameter {th} fails the stability check")
    x0 = model.default_state() if x0 is None else x0
    _, y = model.simulate(theta_star, x0, n + m, rng)
    star = _pred_terms(model, theta_star, x0, y, m)
    star_half = _pred_terms(model, theta_star, x0, y, m // 2)[m - m // 2:] \
        if sensitivity and not hmm else None
    out = []
    for th in theta_grid:
        diff = star - _pred_terms(model, th, x0, y, m)
        est, se = batch_means(diff)
        sens = math.nan
        if sensitivity and not hmm:
            d2 = star_half - _pred_terms(model, th, x0, y, m // 2)[m - m // 2:]
            sens = abs(est - float(np.mean(d2)))
        out.append(KlPoint(th, est, se, sens))
    return out


def argmax_check(profile, theta_star, spec: EquivClassSpec, tol) -> bool:
    """True iff every minimizer of the profile is within ``tol`` of the orbit.

    ``tol`` is a scalar or per-coordinate array of absolute tolerances on
    :func:`full_vector` coordinates.
    """
    if not profile:
        raise InsufficientData("empty profile")
    est = np.array([p.estimate for p in profile])
    best = est.min()
    members = [full_vector(t) for t in orbit(theta_star, spec)]
    for p in profile:
        if p.estimate != best:
            continue
        v = full_vector(p.theta)
        if not any(np.all(np.abs(v - w) <= np.asarray(tol) + 1e-12) for w in members):
            return False
    return True


# --------------------------------------------------------------------------
# Consistency


@dataclass(frozen=True, eq=False)
class ReplicateFit:
    n: int
    replicate: int
    theta_hat_vector: np.ndarray | None
    loglik: float
    delta: float
    error: str = ""


@dataclass(frozen=True, eq=False)
class ConsistencyTable:
    n: np.ndarray
    mean_delta: np.ndarray
    q10: np.ndarray
    q50: np.ndarray
    q90: np.ndarray
    n_failed: np.ndarray
    replicates: list = field(default_factory=list)


def _fit_replicate(task):
    model, theta_star, n, rep, box, spec, rng, cfg, x0 = task
    stream = rng.child(n, rep)
    try:
        _, y = model.simulate(theta_star, x0, n, stream)
        fit = fit_mle(model, y, box, cfg, x0=None if isinstance(model, Hmm1) else x0)
        return ReplicateFit(n, rep, fit.theta_hat_vector, fit.loglik_at_hat,
                            class_distance(fit.theta_hat, theta_star, spec))
    except PomcError as exc:
        return ReplicateFit(n, rep, None, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("POMCLAB_WORKERS", "1") or 1)
    if workers < 1:
        raise InvalidParameter("workers must be >= 1")
    return workers


def run_tasks(fn, tasks, workers: int | None = None) -> list:
    """Map ``fn`` over ``tasks``; results come back in task order."""
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def consistency_curve(model, theta_star, n_list, replicates: int, box: ThetaBox,
                      spec: EquivClassSpec, rng: RngStream, cfg: FitConfig = FitConfig(),
                      x0=None, workers: int | None = None) -> ConsistencyTable:
    """Simulate, fit and measure the class distance for each ``(n, replicate)``.

    Replicate ``j`` at length ``n`` uses the substream ``rng.child(n, j)``,
    so tables are reproducible and independent of the worker count.
    Failed fits are recorded and left out of the aggregates.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParameter("n_list must be strictly increasing")
    if replicates < 3:
        raise InvalidParameter("consistency_curve needs at least 3 replicates")
    x0 = model.default_state() if x0 is None else x0
    tasks = [(model, theta_star, n, j, box, spec, rng, cfg, x0)
             for n, j in itertools.product(n_list, range(replicates))]
    fits = run_tasks(_fit_replicate, tasks, workers)
    rows = {k: [] for k in ("mean", "q10", "q50", "q90", "fail")}
    for n in n_list:
        d = np.array([f.delta for f in fits if f.n == n and not f.error])
        rows["fail"].append(sum(1 for f in fits if f.n == n and f.error))
        if d.size:
            rows["mean"].append(d.mean())
            q = np.quantile(d, [0.1, 0.5, 0.9])
        else:
            rows["mean"].append(math.nan)
            q = [math.nan] * 3
        for key, val in zip(("q10", "q50", "q90"), q):
            rows[key].append(val)
    return ConsistencyTable(np.array(n_list), np.array(rows["mean"]), np.array(rows["q10"]),
                            np.array(rows["q50"]), np.array(rows["q90"]),
                            np.array(rows["fail"]), fits)
