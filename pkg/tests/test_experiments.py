import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallball.errors import ConfigurationError, ValidationError
from smallball.experiments import (EventSpec, detect_event, fit_smallball_exponent, g_reduction_check,
                                   grid_and_ball_probability, markov_additivity, scheme_for,
                                   single_interval_probability, support_theorem_run,
                                   total_smallball_probability, verify_scaling_reduction,
                                   weighted_linear_fit)
from smallball.girsanov import SmallBallEstimate, importance_estimate
from smallball.solver import DriftSpec, PathRecord, SigmaSpec, TargetPath, solve
from smallball.white_noise import Grid, path_seed, sample_noise

EPS = 0.5
SCHEME = scheme_for(EPS)


def scheme_grid(n_int=3, spi=8, cps=2):
    return SCHEME.simulation_grid(n_int * SCHEME.t1, spi, cps)


def test_zero_path_satisfies_every_event():
    g = scheme_grid()
    rec = PathRecord(np.zeros((g.n_t + 1, g.n_x, 1)), g)
    for spec in (EventSpec("ball", EPS), EventSpec("A", EPS, 1, scheme=SCHEME),
                 EventSpec("A-chain", EPS, count=3, scheme=SCHEME), EventSpec("F", EPS, 2, scheme=SCHEME),
                 EventSpec("F-chain", EPS, count=3, scheme=SCHEME),
                 EventSpec("tube", EPS, target=TargetPath.zero())):
        assert detect_event(rec, spec)


def test_single_large_value_breaks_grid_event():
    g = scheme_grid()
    snaps = np.zeros((g.n_t + 1, g.n_x, 1))
    m, q = SCHEME.embedding(g)
    snaps[2 * m, 1 * q, 0] = 2 * EPS
    rec = PathRecord(snaps, g)
    assert not detect_event(rec, EventSpec("F", EPS, 2, scheme=SCHEME))
    assert detect_event(rec, EventSpec("F", EPS, 1, scheme=SCHEME))
    # a value off the scheme points leaves F_n alone
    snaps[2 * m, 1 * q, 0] = 0.0
    snaps[2 * m, 1 * q + 1, 0] = 2 * EPS
    assert detect_event(PathRecord(snaps, g), EventSpec("F", EPS, 2, scheme=SCHEME))


def test_terminal_condition_uses_a_third():
    g = scheme_grid()
    m, _ = SCHEME.embedding(g)
    snaps = np.zeros((g.n_t + 1, g.n_x, 1))
    snaps[m, 0, 0] = 0.5 * EPS
    rec = PathRecord(snaps, g)
    assert not detect_event(rec, EventSpec("A", EPS, 0, scheme=SCHEME))
    assert detect_event(rec, EventSpec("ball", EPS))


def test_event_needs_embedded_grid():
    g = Grid(1.0, 3 * SCHEME.t1, 17, 13)
    rec = PathRecord(np.zeros((14, 17, 1)), g)
    with pytest.raises(ConfigurationError):
        detect_event(rec, EventSpec("A", EPS, 0, scheme=SCHEME))
    with pytest.raises(ConfigurationError):
        EventSpec("A", EPS)
    # a scheme passed at detection time also works
    assert detect_event(PathRecord(np.zeros((scheme_grid().n_t + 1, scheme_grid().n_x, 1)), scheme_grid()),
                        EventSpec("F", EPS, 0, scheme=SCHEME), SCHEME)
    with pytest.raises(ValueError):
        EventSpec("ball", -1.0)


@given(st.integers(0, 10**6), st.floats(0.3, 1.5))
@settings(max_examples=25, deadline=None)
def test_stricter_events_imply_ball(seed, scale):
    g = scheme_grid()
    rec = solve(np.zeros((g.n_x, 1)), sample_noise(g, 1, seed), SigmaSpec.diagonal(scale))
    m, _ = SCHEME.embedding(g)
    if detect_event(rec, EventSpec("A-chain", EPS, count=3, scheme=SCHEME)):
        assert detect_event(rec, EventSpec("ball", EPS))
    for n in range(3):
        if detect_event(rec, EventSpec("A", EPS, n, scheme=SCHEME)):
            sub = PathRecord(rec.snapshots[n * m:(n + 1) * m + 1], g.with_horizon(m))
            assert detect_event(sub, EventSpec("ball", EPS))
    if detect_event(rec, EventSpec("ball", EPS)):
        assert detect_event(rec, EventSpec("F-chain", EPS, count=4, scheme=SCHEME))


def test_plain_probability_monotone_in_eps():
    g = Grid(1.0, 0.005, 16, 16)
    ps = [importance_estimate(EventSpec("ball", e), None, 400, 3, u0=np.zeros((16, 1)), grid=g,
                              sigma=SigmaSpec.identity()).p_hat for e in (0.2, 0.3, 0.4, 0.6)]
    assert all(a <= b for a, b in zip(ps, ps[1:]))


def test_single_interval_saturates_for_weak_noise():
    est = single_interval_probability(EPS, sigma=SigmaSpec.diagonal(0.02), n_paths=300, tilted=False,
                                      master_seed=1)
    assert est.p_hat > 0.99


def test_single_interval_tilted_matches_plain():
    kw = dict(n_paths=6000, cells_per_spacing=2)
    plain = single_interval_probability(0.75, tilted=False, master_seed=1, **kw)
    tilted = single_interval_probability(0.75, tilted=True, master_seed=2, **kw)
    assert plain.p_hat >= 0.1
    assert abs(plain.p_hat - tilted.p_hat) < 3 * math.hypot(plain.stderr, tilted.stderr)


def test_single_interval_start_hypothesis():
    with pytest.raises(ValidationError):
        single_interval_probability(0.5, n_paths=10, u0=np.full(SCHEME.simulation_grid(SCHEME.t1, 32, 4).n_x, 0.3))


def test_composite_exceeds_products():
    kw = dict(n_paths=4000, steps_per_interval=8)
    ball = total_smallball_probability(EPS, 2 * SCHEME.t1, tilted=False, master_seed=4, **kw)
    chain = total_smallball_probability(EPS, 2 * SCHEME.t1, event="A-chain", tilted=False, master_seed=5, **kw)
    single = single_interval_probability(EPS, n_paths=4000, tilted=False, master_seed=6, steps_per_interval=8,
                                         cells_per_spacing=4)
    assert ball.p_hat + 3 * ball.stderr >= chain.p_hat
    product = single.p_hat**2
    assert ball.p_hat + 3 * ball.stderr >= product


def test_grid_event_dominates_ball_event():
    f, b = grid_and_ball_probability(EPS, 2 * SCHEME.t1, n_paths=500, master_seed=2)
    assert f.p_hat >= b.p_hat
    assert f.n_paths == b.n_paths == 500


def test_additivity_increments_match():
    fit = markov_additivity(EPS, [2 * SCHEME.t1, 3 * SCHEME.t1, 4 * SCHEME.t1], n_paths=3000, master_seed=2)
    a, b, c = (e.log_p for e in fit.estimates)
    assert a > b > c
    assert abs((b - a) - (c - b)) < 0.3 * abs(c - a)
    assert fit.r2 > 0.98


def test_scaling_identity_parts():
    rep = verify_scaling_reduction(1.0, 0.4, 0.01, n_paths=600, n_x=16, n_t=16, master_seed=1)
    assert rep.pathwise_max_error == 0.0
    assert rep.kernel_max_error < 1e-9
    assert rep.agree or rep.joint_z < 3
    rep2 = verify_scaling_reduction(2.0, 0.4, 0.04, SigmaSpec.state_dependent(0.5, 1.5, 0.5), n_paths=50,
                                    n_x=16, n_t=16)
    assert rep2.pathwise_max_error < 1e-12


def test_support_requires_close_start():
    h = TargetPath.stationary(lambda x: 0.1 * np.sin(2 * np.pi * x)[:, None], H=0.1 * (2 * np.pi) ** 2)
    with pytest.raises(ValidationError):
        support_theorem_run(np.full(16, 0.3), h, 0.4, 0.01, SigmaSpec.identity(), n_paths=10, n_x=16, n_t=8)


def test_support_with_zero_target_is_ball_problem():
    rep = support_theorem_run(None, TargetPath.zero(), 0.4, 0.005, SigmaSpec.identity(), n_paths=500,
                              n_x=16, n_t=16, master_seed=3)
    g = Grid(1.0, 0.005, 16, 16)
    ball = importance_estimate(EventSpec("ball", 0.4), None, 500, 3, u0=np.zeros((16, 1)), grid=g,
                               sigma=SigmaSpec.identity())
    assert rep.direct.p_hat == ball.p_hat
    assert rep.identity_max_error < 1e-12


def test_g_reduction_cases():
    sigma = SigmaSpec.identity()
    zero = g_reduction_check(DriftSpec.zero(), sigma, 0.4, 0.005, n_paths=2000, n_x=16, n_t=16)
    assert zero.M == 0.0 and zero.factor == 1.0
    assert abs(zero.with_drift.p_hat - zero.without_drift.p_hat) < 3 * math.hypot(
        zero.with_drift.stderr, zero.without_drift.stderr)
    const = g_reduction_check(DriftSpec.constant([5.0]), sigma, 0.4, 0.005, n_paths=2000, n_x=16, n_t=16)
    assert const.holds
    assert const.M == pytest.approx(5.0)
    assert const.factor == pytest.approx(math.exp(25 * 0.005 / 2))


def test_weighted_fit_recovers_line():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    fit = weighted_linear_fit(x, 2.0 + 0.5 * x, [0.1, 0.2, 0.1, 0.3])
    assert fit.slope == pytest.approx(0.5) and fit.intercept == pytest.approx(2.0)
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        weighted_linear_fit([1.0], [1.0])


def test_exponent_fit_on_synthetic_estimates():
    eps = np.array([0.6, 0.4, 0.3, 0.2])
    ests = [SmallBallEstimate(math.exp(-0.5 / e**2), 0.05 * math.exp(-0.5 / e**2), 1000, 500.0, e, 1.0, 1.0,
                              "tilted", -0.5 / e**2) for e in eps]
    assert fit_smallball_exponent(ests).slope == pytest.approx(2.0)
    bad = ests[:1] + [SmallBallEstimate(0.0, 0.0, 10, 0.0, 0.1, 1.0, 1.0, "plain")]
    with pytest.raises(ValueError):
        fit_smallball_exponent(bad)
