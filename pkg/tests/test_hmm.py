import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from pomclab.distributions import Gaussian, NoisePair, SymmetricPareto, gauss_logpdf
from pomclab.errors import DegeneracyWarning, EmptyPath, InvalidParameter, InvalidState
from pomclab.hmm import (
    Dirac,
    GridSpec,
    Hmm1,
    QuadSpec,
    ThetaHmm,
    Uniform,
    filter_condition,
    filter_init,
    filter_step,
    filter_step_logliks,
    filter_tv_gap,
    format_initial,
    g_logdensity,
    loglik_bruteforce,
    loglik_grid,
    loglik_grid_batch,
    parse_initial,
    particle_filter_loglik,
    q_logdensity,
    simulate_hmm,
    transition_matrix,
)
from pomclab.rng import STATE_NOISE, RngStream

NOISE = NoisePair()
STAR = ThetaHmm(1.0, 0.8)


def _path(n, seed=5, theta=STAR):
    return simulate_hmm(theta, NOISE, 0.0, n, RngStream(seed))[1]


# ---- densities ---------------------------------------------------------------


def test_q_atom_at_drift():
    # from x = m the atom has mass F(0) = 1/2
    assert float(q_logdensity(STAR, NOISE, 1.0, 0.0)) == pytest.approx(math.log(0.5), abs=1e-15)


@pytest.mark.parametrize("x", [0.0, 1.0, 3.0])
def test_q_integrates_to_one_against_mu(x):
    atom = math.exp(q_logdensity(STAR, NOISE, x, 0.0))
    f = lambda xp: math.exp(q_logdensity(STAR, NOISE, x, xp))  # noqa: E731
    kink = x - STAR.m
    pts = [kink] if kink > 0 else None
    upper = max(kink, 0.0) + 50.0
    body, _ = integrate.quad(f, 0.0, upper, points=pts, limit=200, epsabs=1e-13)
    tail = NOISE.transition.interval_mass(upper - x + STAR.m, np.inf)
    assert atom + body + float(tail) == pytest.approx(1.0, abs=1e-9)


def test_q_g_reject_negative_states():
    with pytest.raises(InvalidState):
        q_logdensity(STAR, NOISE, -0.1, 1.0)
    with pytest.raises(InvalidState):
        g_logdensity(STAR, NOISE, -0.1, 1.0)


@given(x=st.floats(0, 100), y=st.floats(-50, 50))
def test_g_is_shifted_gaussian(x, y):
    assert float(g_logdensity(STAR, NOISE, x, y)) == pytest.approx(
        float(stats.norm.logpdf(y, loc=0.8 * x)), rel=1e-12, abs=1e-12)


def test_theta_and_initial_validation():
    with pytest.raises(InvalidParameter):
        ThetaHmm(0.0, 1.0)
    with pytest.raises(InvalidParameter):
        ThetaHmm(1.0, float("nan"))
    with pytest.raises(InvalidState):
        parse_initial("dirac:-1")
    with pytest.raises(InvalidParameter):
        parse_initial("gamma:1")
    assert parse_initial("dirac") == Dirac(0.0)
    assert parse_initial("uniform:20") == Uniform(20.0)
    for spec in ("dirac:0.5", "uniform", "uniform:3.0"):
        assert parse_initial(format_initial(parse_initial(spec))) == parse_initial(spec)


# ---- simulation --------------------------------------------------------------


def test_simulate_follows_reflected_recursion():
    rng = RngStream(3)
    xs, ys = simulate_hmm(STAR, NOISE, 2.0, 200, rng)
    u = NOISE.transition.draw(rng.child(STATE_NOISE).generator(), 199)
    x, expect = 2.0, [2.0]
    for uk in u:
        x = max(x + uk - 1.0, 0.0)
        expect.append(x)
    assert np.array_equal(xs, expect)
    assert ys.shape == xs.shape == (200,)


def test_simulate_deterministic_and_nonnegative():
    a = simulate_hmm(STAR, NOISE, 0.0, 500, RngStream(4))
    b = simulate_hmm(STAR, NOISE, 0.0, 500, RngStream(4))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.all(a[0] >= 0)


def test_zero_fraction_increases_with_drift():
    fr = [np.mean(simulate_hmm(ThetaHmm(m, 0.8), NOISE, 0.0, 50_000, RngStream(6))[0] == 0)
          for m in (1.0, 3.0)]
    assert 0 < fr[0] < fr[1] < 1


def test_observation_noise_matches_emission_law():
    xs, ys = simulate_hmm(STAR, NOISE, 0.0, 50_000, RngStream(2))
    resid = ys - 0.8 * xs
    assert stats.kstest(resid, "norm").pvalue > 1e-3


# ---- grid --------------------------------------------------------------------


def test_grid_layout():
    g = GridSpec(x_max=40.0, n_cells=400)
    assert g.size == 401 and g.nodes[0] == 0.0 and g.weights[0] == 1.0
    assert g.weights[1:].sum() == pytest.approx(40.0, abs=1e-12)
    widths = np.diff(g.edges)
    assert widths[-1] / widths[0] == pytest.approx(10.0, rel=1e-10)
    assert np.allclose(widths[1:] / widths[:-1], widths[1] / widths[0])
    u = GridSpec(x_max=10.0, n_cells=10, spacing="uniform")
    assert np.allclose(u.nodes[1:], np.arange(10) + 0.5)
    with pytest.raises(ValueError):
        g.nodes[0] = 1.0


@pytest.mark.parametrize("kw", [{"x_max": 0.0}, {"n_cells": -1}, {"spacing": "log"},
                                {"scheme": "trapezoid"}, {"stretch": 0.5}])
def test_grid_rejects_bad_spec(kw):
    with pytest.raises(InvalidParameter):
        GridSpec(**kw)


@pytest.mark.parametrize("scheme", ["cell", "midpoint"])
def test_transition_rows_are_subprobabilities(scheme):
    g = GridSpec(40.0, 200, scheme=scheme)
    K = transition_matrix(STAR, NOISE, g)
    assert np.all(K >= 0)
    # what leaves the grid is the Pareto tail past x_max
    lost = NOISE.transition.interval_mass(g.x_max - g.nodes + 1.0, np.inf)
    if scheme == "cell":
        assert np.allclose(K.sum(axis=1) + lost, 1.0, atol=1e-13)
    else:
        # accurate only for sources whose density cusp x - m lies off the grid
        smooth = g.nodes < STAR.m
        assert np.allclose(K.sum(axis=1)[smooth] + lost[smooth], 1.0, atol=1e-3)


# ---- filter ------------------------------------------------------------------


def test_filter_init():
    g = GridSpec(10.0, 20, spacing="uniform")
    w = filter_init(g, "dirac:0").weights
    assert w[0] == 1.0 and w[1:].sum() == 0.0
    w = filter_init(g, "dirac:3.2").weights
    assert w[g.nearest(3.2)] == 1.0 and g.nodes[g.nearest(3.2)] == pytest.approx(3.25)
    w = filter_init(g, "uniform").weights
    assert w[0] == pytest.approx(1.0 / 11.0) and w.sum() == pytest.approx(1.0)
    with pytest.raises(InvalidState):
        filter_init(g, "dirac:11")


def test_filter_stays_normalized():
    g = GridSpec(40.0, 200)
    y = _path(300)
    state = filter_condition(STAR, NOISE, g, filter_init(g, "dirac:0"), y[0])
    K = transition_matrix(STAR, NOISE, g)
    for k in range(1, 300):
        state = filter_step(STAR, NOISE, g, state, y[k - 1], y[k], K=K)
        assert abs(state.weights.sum() - 1.0) < 1e-10
    assert state.log_normalizer_accum / 300 == pytest.approx(
        loglik_grid(STAR, NOISE, g, "dirac:0", y), abs=1e-12)


def test_single_node_grid_closed_form():
    g = GridSpec(5.0, 0)
    y = _path(25)
    expect = (gauss_logpdf(y, 1.0).sum() + 24 * math.log(NOISE.transition.cdf(1.0))) / 25
    assert loglik_grid(STAR, NOISE, g, "dirac:0", y) == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("xi", ["dirac:0", "uniform"])
def test_recursion_equals_path_enumeration(n, xi):
    # exhaustive sum over all node sequences on a small grid
    g = GridSpec(6.0, 7)
    K = transition_matrix(STAR, NOISE, g)
    w0 = filter_init(g, xi).weights
    y = _path(n, seed=12)
    G = np.exp(g_logdensity(STAR, NOISE, g.nodes[None, :], y[:, None]))
    total = 0.0
    for seq in itertools.product(range(g.size), repeat=n):
        p = w0[seq[0]] * G[0, seq[0]]
        for k in range(1, n):
            p *= K[seq[k - 1], seq[k]] * G[k, seq[k]]
        total += p
    assert loglik_grid(STAR, NOISE, g, xi, y) == pytest.approx(math.log(total) / n, abs=1e-10)


def test_grid_loglik_n1_closed_form():
    y = _path(1, seed=3)
    assert loglik_grid(STAR, NOISE, GridSpec(), "dirac:0", y) == pytest.approx(
        gauss_logpdf(y[0], 1.0), abs=1e-14)


def test_a_zero_reduces_to_iid_gaussian():
    th = ThetaHmm(1.0, 0.0)
    y = _path(40)
    iid = gauss_logpdf(y, 1.0).mean()
    # the grid differs only by the mass that leaves [0, x_max]
    _, det = loglik_grid(th, NOISE, GridSpec(), "dirac:0", y, details=True)
    diff = det["step_loglik"] - gauss_logpdf(y, 1.0)
    assert np.all(diff <= 1e-14)
    assert np.all(diff >= math.log1p(-det["truncation_mass"]) - 1e-14)
    pf = particle_filter_loglik(th, NOISE, "dirac:0", y, 200, RngStream(1))
    assert pf.loglik == pytest.approx(iid, abs=1e-10)


def test_batch_matches_single():
    y = _path(80)
    g = GridSpec(40.0, 100)
    V = np.array([[1.0, 0.8], [1.0, 0.3], [0.6, 1.2], [1.0, -0.2]])
    batch = loglik_grid_batch(V, NOISE, g, "dirac:0", y)
    for v, b in zip(V, batch):
        assert b == pytest.approx(loglik_grid(ThetaHmm(*v), NOISE, g, "dirac:0", y), abs=1e-12)
    model = Hmm1(NOISE, g)
    assert np.array_equal(model.loglik_batch(V, y), batch)


def test_details_and_step_logliks():
    y = _path(50)
    val, det = loglik_grid(STAR, NOISE, GridSpec(), "dirac:0", y, details=True)
    assert det["step_loglik"].mean() == pytest.approx(val, abs=1e-14)
    assert 0 <= det["truncation_mass"] < 1e-3
    assert np.array_equal(filter_step_logliks(STAR, NOISE, GridSpec(), "dirac:0", y),
                          det["step_loglik"])


def test_empty_path():
    with pytest.raises(EmptyPath):
        loglik_grid(STAR, NOISE, GridSpec(), "dirac:0", [])
    with pytest.raises(EmptyPath):
        loglik_bruteforce(STAR, NOISE, "dirac:0", [])


# ---- brute-force oracle --------------------------------------------------------


def test_bruteforce_n1_uniform_closed_form():
    # (1 + L)^-1 [phi(y) + (Phi(y) - Phi(y - a L)) / a]
    L, y = 20.0, 1.3
    closed = (stats.norm.pdf(y) + (stats.norm.cdf(y) - stats.norm.cdf(y - 0.8 * L)) / 0.8) / (1 + L)
    assert loglik_bruteforce(STAR, NOISE, "uniform:20", [y]) == pytest.approx(
        math.log(closed), abs=1e-12)


def test_bruteforce_insensitive_to_refinement():
    y = _path(3)
    base = loglik_bruteforce(STAR, NOISE, "dirac:0", y[:2])
    fine = loglik_bruteforce(STAR, NOISE, "dirac:0", y[:2], quad=QuadSpec().refined())
    assert abs(base - fine) < 1e-10


def test_bruteforce_fubini():
    y = _path(2, seed=8)
    a = loglik_bruteforce(STAR, NOISE, "uniform:10", y, order=[0, 1])
    b = loglik_bruteforce(STAR, NOISE, "uniform:10", y, order=[1, 0])
    assert a == pytest.approx(b, abs=1e-12)


def test_bruteforce_limits():
    with pytest.raises(InvalidParameter):
        loglik_bruteforce(STAR, NOISE, "dirac:0", np.zeros(4))
    with pytest.raises(InvalidParameter):
        loglik_bruteforce(STAR, NOISE, "uniform", np.zeros(2))
    with pytest.raises(InvalidParameter):
        loglik_bruteforce(STAR, NOISE, "dirac:0", np.zeros(2), order=[0, 1])


@pytest.mark.parametrize("scheme", ["cell", "midpoint"])
def test_grid_error_is_second_order(scheme):
    # halving the cells divides the error by about four
    y = _path(2)
    ref = loglik_bruteforce(STAR, NOISE, "dirac:0", y)
    errs = [abs(loglik_grid(STAR, NOISE, GridSpec(n_cells=nc, scheme=scheme), "dirac:0", y) - ref)
            for nc in (100, 200, 400)]
    assert errs[0] > errs[1] > errs[2]
    for e1, e2 in zip(errs[:-1], errs[1:]):
        assert 3.0 < e1 / e2 < 5.0


def test_grid_close_to_bruteforce_n3():
    y = _path(3, seed=9)
    ref = loglik_bruteforce(STAR, NOISE, "dirac:0", y)
    assert loglik_grid(STAR, NOISE, GridSpec(), "dirac:0", y) == pytest.approx(ref, abs=1e-4)


def test_other_noise_parameters():
    noise = NoisePair(SymmetricPareto(2.5, 0.5), Gaussian(0.7))
    th = ThetaHmm(0.4, 1.1)
    y = simulate_hmm(th, noise, 0.0, 2, RngStream(1))[1]
    ref = loglik_bruteforce(th, noise, "dirac:0", y)
    assert loglik_grid(th, noise, GridSpec(60.0, 800), "dirac:0", y) == pytest.approx(ref, abs=1e-4)


# ---- particle filter -------------------------------------------------------------


def test_pf_deterministic():
    y = _path(30)
    a = particle_filter_loglik(STAR, NOISE, "dirac:0", y, 500, RngStream(3))
    b = particle_filter_loglik(STAR, NOISE, "dirac:0", y, 500, RngStream(3))
    assert a.loglik == b.loglik and a.stderr == b.stderr
    assert a.ess.shape == (30,) and a.n_particles == 500


def test_pf_agrees_with_grid():
    y = _path(20, seed=14)
    grid = loglik_grid(STAR, NOISE, GridSpec(), "dirac:0", y)
    est = [particle_filter_loglik(STAR, NOISE, "dirac:0", y, 5000, RngStream(15, (i,))).loglik
           for i in range(20)]
    se = np.std(est, ddof=1) / math.sqrt(20)
    assert abs(np.mean(est) - grid) < 4 * se + 1e-4


def test_pf_spread_scales_as_inverse_root_n():
    y = np.full(50, 0.5)
    sd = []
    for N in (500, 2000):
        est = [particle_filter_loglik(STAR, NOISE, "dirac:0", y, N, RngStream(7, (N, i))).loglik
               for i in range(40)]
        sd.append(np.std(est, ddof=1))
    # ratio of sample SDs from 40 draws each: 0.5 within sampling error
    assert 0.35 < sd[1] / sd[0] < 0.7


def test_pf_uniform_start_needs_bound():
    with pytest.raises(InvalidParameter):
        particle_filter_loglik(STAR, NOISE, "uniform", [0.0], 100, RngStream(1))
    with pytest.raises(InvalidParameter):
        particle_filter_loglik(STAR, NOISE, "dirac:0", [0.0], 50, RngStream(1))


def test_pf_warns_on_degeneracy():
    y = np.array([0.0, 40.0])
    with pytest.warns(DegeneracyWarning):
        particle_filter_loglik(STAR, NOISE, "dirac:0", y, 200, RngStream(2))


def test_pf_no_warning_on_typical_path():
    y = _path(30)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegeneracyWarning)
        particle_filter_loglik(STAR, NOISE, "dirac:0", y, 2000, RngStream(2))


# ---- forgetting ----------------------------------------------------------------


def test_tv_gap_same_start_is_zero():
    y = _path(50)
    gap = filter_tv_gap(STAR, NOISE, GridSpec(), "dirac:0", "dirac:0", y)
    assert np.all(gap == 0.0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_tv_gap_bounded(seed):
    y = _path(40, seed=seed)
    gap = filter_tv_gap(STAR, NOISE, GridSpec(40.0, 100), "dirac:0", "uniform", y)
    assert np.all((gap >= 0) & (gap <= 1 + 1e-12))


def test_tv_gap_decays():
    y = _path(300)
    gap = filter_tv_gap(STAR, NOISE, GridSpec(), "dirac:0", "uniform", y)
    assert gap[-1] < 1e-3 < gap[0]
