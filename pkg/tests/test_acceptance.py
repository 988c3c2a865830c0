"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and run sizes are pinned here; every test also checks its own
wall-clock budget.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from smallball.experiments import (fit_smallball_exponent, markov_additivity, scheme_for,
                                   single_interval_probability, support_theorem_run,
                                   total_smallball_probability, verify_scaling_reduction)
from smallball.gaussian import (GridScheme, SlabSet, beta_solve, build_covariance_model, choose_theta,
                                conditional_floor, conditional_variance, estimate_tail_constants,
                                gaussian_correlation_check, grid_event_probability, per_point_bound)
from smallball.girsanov import accumulate_weight, check_second_moment
from smallball.heat_kernel import (KernelPoint, heat_kernel, kernel_fourier_sum, kernel_image_sum,
                                   lemma_g_integrals)
from smallball.solver import DriftSpec, SigmaSpec, TargetPath, integrate, solve
from smallball.white_noise import Grid, path_seed, sample_noise, sample_noise_batch

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line past pytest's capture, then assert."""
    def report(n: int, ok: bool, detail: str, started: float, budget: float):
        elapsed = time.perf_counter() - started
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.1f}s / {budget:.0f}s]")
        assert ok, detail
    return report


def test_criterion_01_kernel_identities(verdict):
    t0 = time.perf_counter()
    series = max(abs(kernel_image_sum(KernelPoint(t, x)) - kernel_fourier_sum(KernelPoint(t, x)))
                 for t in np.geomspace(1e-4, 10.0, 15) for x in (0.0, 0.1, 0.25, 0.4, 0.5, 0.9))

    def g(t, x):
        return float(heat_kernel(t, x))

    mass = max(abs(quad(lambda x: g(t, x), -0.5, 0.5, points=[0.0], epsabs=1e-13, epsrel=1e-13, limit=400)[0] - 1)
               for t in (1e-4, 1e-2, 1.0, 10.0))
    semi = 0.0
    for s, t, x in ((0.01, 0.02, 0.1), (0.05, 0.2, 0.45), (0.3, 0.7, 0.8)):
        lhs = quad(lambda z: g(s, x - z) * g(t, z), -0.5, 0.5, points=[0.0, x - 1, x], epsabs=1e-13,
                   epsrel=1e-13, limit=400)[0]
        semi = max(semi, abs(lhs - g(s + t, x)))
    scaling = max(abs(float(heat_kernel(t / J**2, x / J)) - J * float(heat_kernel(t, x, J)))
                  for J in (2.0, 3.0) for t in (1e-3, 0.1, 2.0) for x in (0.0, 0.37, 1.1))
    ok = series < 1e-9 and mass < 1e-10 and semi < 1e-8 and scaling < 1e-9
    verdict(1, ok, f"series gap {series:.2e}, mass error {mass:.2e}, semigroup {semi:.2e}, "
                   f"scaling {scaling:.2e}", t0, 10)


def test_criterion_02_increment_exponents(verdict):
    t0 = time.perf_counter()
    d = np.geomspace(1e-4, 1e-2, 9)
    h = np.geomspace(1e-5, 1e-3, 9)
    space = [lemma_g_integrals(0.0, 1.0, 0.0, v).space_increment for v in d]
    tail = [lemma_g_integrals(0.5, 0.5 + v, 0.0, 0.0).tail_square for v in h]
    time_inc = [lemma_g_integrals(0.5, 0.5 + v, 0.0, 0.0).time_increment for v in h]
    k_space = np.polyfit(np.log(d), np.log(space), 1)[0]
    k_tail = np.polyfit(np.log(h), np.log(tail), 1)[0]
    k_time = np.polyfit(np.log(h), np.log(time_inc), 1)[0]
    ok = abs(k_space - 1.0) <= 0.05 and abs(k_tail - 0.5) <= 0.05 and abs(k_time - 0.5) <= 0.05
    verdict(2, ok, f"exponents space {k_space:.4f}, tail {k_tail:.4f}, time {k_time:.4f}", t0, 60)


def _terminal_values(t: float, n_x: int, n_paths: int, seed: int) -> np.ndarray:
    g = Grid(1.0, t, n_x, 4)
    out = []
    for lo in range(0, n_paths, 1000):
        inc = sample_noise_batch(g, 1, seed, range(lo, min(lo + 1000, n_paths)))
        for st in integrate(np.zeros((inc.shape[0], n_x, 1)), inc, SigmaSpec.identity(), grid=g):
            last = st.u
        out.append(last[:, 0, 0])
    return np.concatenate(out)


def test_criterion_03_noise_variance(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    # the finer grid resolves the sqrt(1e-4) = 0.01 correlation length
    for t, n_x in ((1e-4, 1024), (1e-3, 256)):
        ref = quad(lambda r: float(heat_kernel(2 * r, 0.0)), 0.0, t, limit=200)[0]
        closed = math.sqrt(t / math.pi)
        var = float(_terminal_values(t, n_x, 10000, seed=7).var())
        ok &= abs(var / ref - 1) <= 0.05 and abs(var / closed - 1) <= 0.05
        parts.append(f"t={t:g}: var {var:.5f} vs quadrature {ref:.5f}, sqrt(t/pi) {closed:.5f}")
    verdict(3, ok, "; ".join(parts), t0, 120)


def test_criterion_04_girsanov_weights(verdict):
    t0 = time.perf_counter()
    g = Grid(1.0, 0.05, 16, 16)
    n = 10000
    sine = 2.0 * np.sin(2 * np.pi * g.x)[None, :, None] * np.cos(2 * np.pi * g.times[:-1] / g.T)[:, None, None]
    feedback = DriftSpec.from_function(lambda t, x, u: -3.0 * np.clip(u, -1.0, 1.0), 3.0, name="feedback")
    tilts = [("constant", np.full((g.n_t, g.n_x, 1), 2.0), 2.0), ("space-time", sine, 2.0),
             ("feedback", feedback, 3.0)]
    parts, ok = [], True
    for k, (name, f, M) in enumerate(tilts):
        lw, excess = np.empty(n), -np.inf
        for i in range(n):
            noise = sample_noise(g, 1, path_seed(40 + k, i))
            path = solve(np.zeros((g.n_x, 1)), noise, SigmaSpec.identity()) if isinstance(f, DriftSpec) else None
            w = accumulate_weight(f, noise, path)
            lw[i] = w.log_weight
            excess = max(excess, float(w.z2) - M * M * g.T * g.J)
        w = np.exp(lw)
        se = w.std(ddof=1) / math.sqrt(n)
        rep = check_second_moment(M, g.T, g.J, w)
        mean_ok = abs(w.mean() - 1.0) <= 3 * se
        second_ok = rep.mean_square <= rep.upper * (1 + 3 * rep.stderr)
        ok &= mean_ok and excess <= 0.0 and second_ok
        parts.append(f"{name}: E[W]={w.mean():.4f}+-{se:.4f}, max z2-M^2tJ={excess:.2e}, "
                     f"E[W^2]={rep.mean_square:.3f}<={rep.upper:.3f}")
    verdict(4, ok, "; ".join(parts), t0, 120)


def test_criterion_05_tilted_matches_plain(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for i, eps in enumerate((0.4, 0.5, 0.6)):
        T = 2 * 0.1 * eps**4
        plain = total_smallball_probability(eps, T, tilted=False, n_paths=10000, master_seed=10 + i)
        tilted = total_smallball_probability(eps, T, tilted=True, n_paths=10000, master_seed=20 + i)
        in_range = 0.05 <= plain.p_hat <= 0.5
        overlap = abs(plain.p_hat - tilted.p_hat) <= 1.96 * (plain.stderr + tilted.stderr)
        ok &= in_range and overlap
        parts.append(f"eps={eps}: plain {plain.p_hat:.4f}+-{plain.stderr:.4f}, "
                     f"tilted {tilted.p_hat:.4f}+-{tilted.stderr:.4f}")
    verdict(5, ok, "; ".join(parts), t0, 300)


def test_criterion_06_single_interval_exponent(verdict):
    t0 = time.perf_counter()
    eps_values = (0.75, 0.5, 0.35, 0.25)
    ests = [single_interval_probability(e, n_paths=20000, tilted=True, cells_per_spacing=2, master_seed=600 + i)
            for i, e in enumerate(eps_values)]
    fit = fit_smallball_exponent(ests)
    logs = ", ".join(f"{-e.log_p:.2f}" for e in ests)
    ok = abs(fit.slope - 2.0) <= 0.5 and max(eps_values) / min(eps_values) >= 3
    verdict(6, ok, f"slope {fit.slope:.3f} +- {fit.fit.slope_se:.3f} over eps {eps_values}, -log p = [{logs}]",
            t0, 900)


def test_criterion_07_markov_additivity(verdict):
    t0 = time.perf_counter()
    eps = 0.5
    t1 = scheme_for(eps).t1
    fit = markov_additivity(eps, [2 * t1, 4 * t1, 8 * t1], n_paths=20000, master_seed=700)
    logs = ", ".join(f"{-e.log_p:.3f}" for e in fit.estimates)
    verdict(7, fit.r2 >= 0.99, f"R^2 {fit.r2:.5f}, -log p = [{logs}] at T/t1 = 2, 4, 8", t0, 900)


def test_criterion_08_gaussian_machinery(verdict):
    t0 = time.perf_counter()
    c0 = 0.1
    choice = choose_theta(c0, [0.1, 0.2])
    parts, ok, floors = [], True, []
    for i, eps in enumerate((0.1, 0.2)):
        model = build_covariance_model(GridScheme.snapped(eps, c0, choice.theta))
        beta_max = max(float(np.abs(beta_solve(model, j)).sum()) for j in range(1, model.size))
        per_j = min(conditional_variance(model, j) for j in range(model.size)) / eps**2
        floor = conditional_floor(model)
        eta = per_point_bound(floor)
        cap = eta ** (model.size)
        p, se = grid_event_probability(model, 20000, seed=80 + i)
        floors.append(per_j)
        ok &= beta_max <= 0.5 and abs(per_j - floor) <= 1e-8 * floor and eta < 1 and p <= cap + 1.96 * se
        parts.append(f"eps={eps}: {model.size} points, max|beta|_1 {beta_max:.4f}, var floor/eps^2 {per_j:.4f}, "
                     f"eta {eta:.4f}, P(grid) {p:.4f}+-{se:.4f} <= eta^(n2-1) {cap:.4f}")
    ok &= min(floors) > 0.1
    verdict(8, ok, f"theta {choice.theta:.4f}; " + "; ".join(parts), t0, 300)


def test_criterion_09_tail_shape(verdict):
    t0 = time.perf_counter()
    fits = [estimate_tail_constants(a, [0.25, 0.5], 3000, master_seed=5) for a in (0.25, 1.0, 4.0)]
    scaled = [f.decay * math.sqrt(f.alpha) for f in fits]
    ref = scaled[1]
    ok = all(f.r2 >= 0.98 for f in fits) and all(abs(s / ref - 1) <= 0.2 for s in scaled)
    parts = [f"alpha={f.alpha:g}: R^2 {f.r2:.4f}, decay*sqrt(alpha) {s:.4f}" for f, s in zip(fits, scaled)]
    verdict(9, ok, "; ".join(parts), t0, 600)


def test_criterion_10_scaling_reduction(verdict):
    t0 = time.perf_counter()
    rep = verify_scaling_reduction(2.0, 0.6, 0.01, n_paths=8000, master_seed=1000)
    ok = rep.joint_z <= 1.96 and rep.pathwise_max_error < 1e-10 and rep.kernel_max_error < 1e-9
    verdict(10, ok, f"direct {rep.direct.p_hat:.4f}+-{rep.direct.stderr:.4f}, rescaled "
                    f"{rep.rescaled.p_hat:.4f}+-{rep.rescaled.stderr:.4f}, joint z {rep.joint_z:.3f}, "
                    f"pathwise {rep.pathwise_max_error:.1e}", t0, 600)


def test_criterion_11_support_reduction(verdict):
    t0 = time.perf_counter()
    a, w, c = 0.3, 2 * np.pi, 0.5
    h = TargetPath(lambda t, x: (a * np.sin(w * (np.asarray(x) - c * t)))[:, None], a * w * w, name="travelling")
    x = np.arange(64) / 64
    u0 = a * np.sin(w * x) + 0.1 * np.cos(2 * w * x)
    rep = support_theorem_run(u0, h, 0.6, 0.01, SigmaSpec.state_dependent(0.5, 1.5, 0.5), DriftSpec.constant([1.0]),
                              n_paths=8000, master_seed=1100, identity_paths=8)
    ok = rep.identity_max_error <= 1e-10 and rep.joint_z <= 1.96
    verdict(11, ok, f"identity error {rep.identity_max_error:.1e}, direct {rep.direct.p_hat:.4f}+-"
                    f"{rep.direct.stderr:.4f}, reduced {rep.reduced.p_hat:.4f}+-{rep.reduced.stderr:.4f}, "
                    f"joint z {rep.joint_z:.3f}", t0, 600)


def test_criterion_12_gaussian_correlation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    A = rng.standard_normal((5, 5))
    cov5 = A @ A.T / 5 + 0.2 * np.eye(5)
    configs = [
        (SlabSet([[1, 0]], [1.0]), SlabSet([[0, 1]], [1.0]), [[1, 0.6], [0.6, 1]]),
        (SlabSet([[1, 1]], [1.0]), SlabSet([[1, -1]], [0.5]), [[1, -0.3], [-0.3, 2]]),
        (SlabSet([[1, 0], [0, 1]], [0.8, 1.5]), SlabSet([[1, 2]], [1.2]), np.eye(2)),
        (SlabSet(rng.standard_normal((2, 5)), [1.0, 1.5]), SlabSet(rng.standard_normal((3, 5)), [2.0, 1.0, 1.5]),
         cov5),
        (SlabSet(np.eye(5)[:3], [0.7, 0.7, 0.7]), SlabSet(np.ones((1, 5)), [1.0]), cov5),
    ]
    parts, ok = [], True
    for i, (K, L, cov) in enumerate(configs):
        rep = gaussian_correlation_check(K, L, cov, 200000, seed=1200 + i)
        ok &= not rep.violated
        parts.append(f"d={K.dim}: gap {rep.gap:+.4f}+-{rep.gap_stderr:.4f}")
    verdict(12, ok, "; ".join(parts), t0, 120)
