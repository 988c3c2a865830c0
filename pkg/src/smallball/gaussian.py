"""Covariance structure of the noise term on the spatial grid of one time step.

For a coefficient that does not depend on ``u`` the noise term
``N(t, x) = int_0^t int G(t - s, x - y) sigma(s) W(dy ds)`` is a centered
Gaussian field and, by the semigroup property,

    Cov(N(t1, x), N(t1, x')) = int_0^{t1} sigma(t1 - r)^2 G(2 r, x - x') dr.

This module builds the matrix of these covariances at the points
``p_k = (t1, x_k)``, ``x_k = k c1 eps^2``, solves the regression of one point
on its predecessors, estimates the constants of the variance window and of
the sub-Gaussian tail of ``sup |N|``, and checks the Gaussian correlation
inequality on slab intersections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, linalg, stats

from .errors import ConditioningError, ConfigurationError, InsufficientDataError
from .heat_kernel import heat_kernel
from .solver import SigmaSpec, integrate as integrate_paths, sup_norm
from .white_noise import Grid, sample_noise_batch

__all__ = [
    "GridScheme",
    "CovarianceModel",
    "C0Check",
    "ThetaChoice",
    "VarianceConstants",
    "TailFit",
    "SlabSet",
    "CorrelationReport",
    "noise_covariance",
    "build_covariance_model",
    "beta_solve",
    "conditional_variance",
    "conditional_floor",
    "matrix_norm_11",
    "per_point_bound",
    "grid_event_probability",
    "check_c0",
    "estimate_variance_constants",
    "choose_theta",
    "estimate_tail_constants",
    "gaussian_correlation_check",
    "MAX_CONDITION",
]

# condition number above which a covariance solve is refused
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class GridScheme:
    """Time points ``t_n = n c0 eps^4`` and space points ``x_n = n c1 eps^2``, ``c1^2 = theta c0``."""

    eps: float
    c0: float
    theta: float
    J: float = 1.0
    T: float | None = None

    def __post_init__(self):
        if not (self.eps > 0 and self.c0 > 0 and self.theta > 0 and self.J > 0):
            raise ConfigurationError("eps, c0, theta and J must be positive")
        if self.T is not None and not self.T > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.T}")

    @classmethod
    def snapped(cls, eps: float, c0: float, theta_min: float, J: float = 1.0,
                T: float | None = None) -> "GridScheme":
        """Smallest ``theta >= theta_min`` for which the spacing divides ``J``.

        The spacing becomes ``J / n_s`` with ``n_s = floor(J / (c1_min eps^2))``,
        so the space points close up around the circle.
        """
        c1_min = math.sqrt(theta_min * c0)
        n_s = math.floor(J / (c1_min * eps * eps) * (1 + 1e-12))
        if n_s < 2:
            raise ConfigurationError(f"spacing {c1_min * eps * eps:.4g} leaves fewer than two points on [0, {J})")
        c1 = J / (n_s * eps * eps)
        return cls(eps, c0, c1 * c1 / c0, J, T)

    @property
    def c1(self) -> float:
        return math.sqrt(self.theta * self.c0)

    @property
    def t1(self) -> float:
        return self.c0 * self.eps**4

    @property
    def spacing(self) -> float:
        return self.c1 * self.eps**2

    def t_n(self, n) -> np.ndarray:
        return np.asarray(n) * self.t1

    def x_n(self, n) -> np.ndarray:
        return np.asarray(n) * self.spacing

    @property
    def n1(self) -> int:
        """``min{n >= 1 : t_n > T}``."""
        if self.T is None:
            raise ConfigurationError("scheme has no horizon T")
        return int(math.floor(self.T / self.t1 * (1 + 1e-12))) + 1

    @property
    def n2(self) -> int:
        """``min{n >= 1 : x_n > J}``."""
        return int(math.floor(self.J / self.spacing * (1 + 1e-12))) + 1

    @property
    def n_points(self) -> int:
        """Number of space points ``x_0 .. x_{n2-2}``."""
        return self.n2 - 1

    def first_condition(self) -> float:
        """``max{2, 4 log(1 / (2 c0))}``: the lower bound on ``theta``."""
        return max(2.0, 4.0 * math.log(1.0 / (2.0 * self.c0)))

    def embedding(self, grid: Grid) -> tuple[int, int]:
        """``(steps per interval, cells per spacing)`` of ``grid``, both integers.

        Raises :class:`ConfigurationError` when the scheme's points are not
        grid points.
        """
        if not math.isclose(grid.J, self.J, rel_tol=1e-12):
            raise ConfigurationError(f"grid length {grid.J} differs from scheme length {self.J}")
        steps = self.t1 / grid.dt
        cells = self.spacing / grid.dx
        if abs(steps - round(steps)) > 1e-6 * steps or round(steps) < 1:
            raise ConfigurationError(f"interval c0 eps^4 is {steps:.6g} time steps, not an integer")
        if abs(cells - round(cells)) > 1e-6 * cells or round(cells) < 1:
            raise ConfigurationError(f"spacing c1 eps^2 is {cells:.6g} cells, not an integer")
        return int(round(steps)), int(round(cells))

    def simulation_grid(self, T: float | None = None, steps_per_interval: int = 8,
                        cells_per_spacing: int = 4) -> Grid:
        """Grid with ``dt = t1 / steps_per_interval`` and ``dx = spacing / cells_per_spacing``."""
        T = self.T if T is None else T
        if T is None:
            raise ConfigurationError("a horizon is needed to build a grid")
        n_int = T / self.t1
        if abs(n_int - round(n_int)) > 1e-9 * max(1.0, n_int) or round(n_int) < 1:
            raise ConfigurationError(f"T = {T} is not a whole number of intervals ({n_int:.6g})")
        n_s = self.J / self.spacing
        if abs(n_s - round(n_s)) > 1e-9 * n_s:
            raise ConfigurationError("spacing does not divide J; build the scheme with GridScheme.snapped")
        return Grid(self.J, T, int(round(n_s)) * cells_per_spacing, int(round(n_int)) * steps_per_interval)


def _sigma_sq(sigma_profile) -> Callable[[float], float]:
    if isinstance(sigma_profile, SigmaSpec):
        if sigma_profile.scalar is None:
            raise ValueError("covariances need a u-independent scalar level; use a float or a callable of time")
        level = sigma_profile.scalar
        return lambda s: level * level
    if callable(sigma_profile):
        return lambda s: float(sigma_profile(s)) ** 2
    level = float(sigma_profile)
    return lambda s: level * level


def _lag_covariance(t1: float, delta: float, J: float, sig2: Callable) -> float:
    # r = v^2 removes the r^{-1/2} singularity at r = 0 when delta = 0
    def integrand(v):
        r = v * v
        if r == 0.0:
            return 0.0
        return 2.0 * v * sig2(t1 - r) * float(heat_kernel(2.0 * r, delta, J))

    # purely relative tolerance: far lags are tiny but enter C10 after division by exp(-theta m^2/8)
    val, _ = integrate.quad(integrand, 0.0, math.sqrt(t1), epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def noise_covariance(k: int, kp: int, scheme: GridScheme, sigma_profile=1.0) -> float:
    """``Cov(N(t1, x_k), N(t1, x_kp))`` by adaptive quadrature.

    ``sigma_profile`` is the scalar noise level: a float, a callable of time
    ``s`` or a scalar :class:`SigmaSpec`.
    """
    for idx in (k, kp):
        if not 0 <= idx <= scheme.n2 - 2:
            raise IndexError(f"point index {idx} outside 0..{scheme.n2 - 2}")
    sig2 = _sigma_sq(sigma_profile)
    delta = abs(k - kp) * scheme.spacing
    return _lag_covariance(scheme.t1, delta, scheme.J, sig2)


@dataclass(frozen=True)
class CovarianceModel:
    """``S = D T D`` for the points ``x_0 .. x_{n-1}`` of one scheme."""

    S: np.ndarray = field(repr=False)
    scheme: GridScheme
    sigma_profile: object = 1.0

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
            raise ValueError("S must be a non-empty square matrix")
        if not np.allclose(S, S.T, rtol=1e-12, atol=0.0):
            raise ValueError("S is not symmetric")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("S is not positive definite") from exc
        S.flags.writeable = False
        object.__setattr__(self, "S", S)

    @property
    def size(self) -> int:
        return self.S.shape[0]

    @property
    def D_diag(self) -> np.ndarray:
        return np.sqrt(np.diag(self.S))

    @cached_property
    def T_corr(self) -> np.ndarray:
        d = self.D_diag
        return self.S / np.outer(d, d)

    @property
    def eps(self) -> float:
        return self.scheme.eps


def build_covariance_model(scheme: GridScheme, sigma_profile=1.0, size: int | None = None) -> CovarianceModel:
    """Covariance matrix of ``N(p_1k)`` for ``k = 0 .. size-1`` (default ``n2 - 1`` points).

    The time-only noise level makes the field stationary in ``x``, so one
    quadrature per lag fills the whole Toeplitz matrix.
    """
    n = scheme.n_points if size is None else size
    if not 1 <= n <= scheme.n_points:
        raise ValueError(f"size must be in 1..{scheme.n_points}, got {n}")
    sig2 = _sigma_sq(sigma_profile)
    lags = np.array([_lag_covariance(scheme.t1, m * scheme.spacing, scheme.J, sig2)
                     for m in range(n)])
    return CovarianceModel(linalg.toeplitz(lags), scheme, sigma_profile)


def _sub_system(model: CovarianceModel, j: int):
    if not 1 <= j <= model.size - 1:
        raise IndexError(f"j must be in 1..{model.size - 1}, got {j}")
    S = model.S[:j, :j]
    y = model.S[:j, j]
    cond = np.linalg.cond(S)
    if not cond <= MAX_CONDITION:
        raise ConditioningError(f"condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}")
    return S, y


def beta_solve(model: CovarianceModel, j: int) -> np.ndarray:
    """Coefficients of ``E[N(p_1j) | N(p_10), ..., N(p_1,j-1)]``, i.e. ``S^{-1} y``."""
    S, y = _sub_system(model, j)
    beta = linalg.solve(S, y, assume_a="pos")
    resid = np.linalg.norm(S @ beta - y) / max(np.linalg.norm(y), 1e-300)
    if resid > 1e-10:
        raise ConditioningError(f"relative residual {resid:.3g} of the beta system exceeds 1e-10")
    return beta


def conditional_variance(model: CovarianceModel, j: int) -> float:
    """``Var(N(p_1j)) - y^T beta``; the marginal variance for ``j = 0``."""
    if j == 0:
        return float(model.S[0, 0])
    beta = beta_solve(model, j)
    _, y = _sub_system(model, j)
    val = float(model.S[j, j] - y @ beta)
    if not val > 0:
        raise ConditioningError(f"non-positive conditional variance {val:.3g} at j={j}")
    return val


def conditional_floor(model: CovarianceModel) -> float:
    """Uniform lower bound ``min_j Var(N(p_1j) | past) / eps^2`` over the model's points."""
    # the Cholesky pivots are the successive conditional variances
    L = np.linalg.cholesky(model.S)
    return float(np.min(np.diag(L) ** 2) / model.eps**2)


def matrix_norm_11(A) -> float:
    """Operator norm induced by the l1 vector norm: the largest absolute column sum."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ValueError("empty matrix")
    if A.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    return float(np.abs(A).sum(axis=0).max())


def per_point_bound(model_or_floor, eps: float | None = None) -> float:
    """``eta = P(|Z| <= 1 / sqrt(C11))`` for a standard normal ``Z``.

    Accepts a :class:`CovarianceModel` (``C11`` is then its conditional
    floor) or the value ``C11`` itself.
    """
    c11 = conditional_floor(model_or_floor) if isinstance(model_or_floor, CovarianceModel) \
        else float(model_or_floor)
    if not c11 > 0:
        raise ValueError(f"conditional floor must be positive, got {c11}")
    if math.isinf(c11):
        return 0.0
    return float(2.0 * stats.norm.cdf(1.0 / math.sqrt(c11)) - 1.0)


def grid_event_probability(model: CovarianceModel, n_samples: int, seed: int = 0,
                           radius: float | None = None) -> tuple[float, float]:
    """Monte Carlo ``P(|N(p_1k)| <= radius for all k)`` from the exact Gaussian law ``S``.

    Returns the frequency and its standard error; ``radius`` defaults to eps.
    """
    radius = model.eps if radius is None else radius
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(model.S)
    hits = 0
    done = 0
    batch = max(1, min(n_samples, int(2e6 // model.size)))
    while done < n_samples:
        b = min(batch, n_samples - done)
        z = rng.standard_normal((b, model.size)) @ L.T
        hits += int(np.all(np.abs(z) <= radius, axis=1).sum())
        done += b
    p = hits / n_samples
    return p, math.sqrt(max(p * (1 - p), 0.0) / n_samples)


@dataclass(frozen=True)
class C0Check:
    """``c0 < max{(K2 / (36 log(K1) C2^2))^2, 1}`` and which branch sets the bound."""

    c0: float
    tail_branch: float
    upper: float
    binding: str

    @property
    def ok(self) -> bool:
        return 0 < self.c0 < self.upper


def check_c0(c0: float, K1: float, K2: float, C2: float) -> C0Check:
    """Evaluate the admissible range of ``c0`` literally."""
    logk = math.log(K1)
    branch = math.inf if logk == 0 else (K2 / (36.0 * logk * C2 * C2)) ** 2
    upper = max(branch, 1.0)
    return C0Check(c0, branch, upper, "tail-constant" if branch > 1.0 else "unit")


@dataclass(frozen=True)
class VarianceConstants:
    """``C8 <= Var / eps^2 <= C9`` and ``Cov_m / eps^2 <= C10 exp(-theta m^2 / 8)``."""

    C8: float
    C9: float
    C10: float
    eps_values: tuple


def estimate_variance_constants(c0: float, theta: float, eps_values: Sequence[float],
                                sigma_level: float = 1.0, J: float = 1.0) -> VarianceConstants:
    """Constants of the variance window and the covariance decay over ``eps_values``.

    ``C10`` is the smallest constant making the decay bound hold at every lag
    ``m >= 1`` with ``0 < m c1 eps^2 <= J / 2``.
    """
    variances, ratios = [], [0.0]
    sig2 = _sigma_sq(sigma_level)
    for eps in eps_values:
        sch = GridScheme(eps, c0, theta, J)
        var = _lag_covariance(sch.t1, 0.0, J, sig2)
        variances.append(var / eps**2)
        m_max = int(math.floor(0.5 * J / sch.spacing))
        for m in range(1, m_max + 1):
            cov = _lag_covariance(sch.t1, m * sch.spacing, J, sig2)
            if cov > 0:
                ratios.append(math.exp(math.log(cov / eps**2) + theta * m * m / 8.0))
    return VarianceConstants(min(variances), max(variances), max(ratios), tuple(eps_values))


@dataclass(frozen=True)
class ThetaChoice:
    """A ``theta`` meeting both spacing conditions with the constants it was checked against."""

    theta: float
    constants: VarianceConstants
    decay_sum: float

    @property
    def ratio(self) -> float:
        """``(C10 / C8) sum_k exp(-theta k^2 / 8)``, required below 1/6."""
        return self.constants.C10 / self.constants.C8 * self.decay_sum


def _decay_sum(theta: float) -> float:
    k = np.arange(1, 200)
    return float(np.exp(-theta * k * k / 8.0).sum())


def choose_theta(c0: float, eps_values: Sequence[float], sigma_level: float = 1.0,
                 growth: float = 1.1, max_iter: int = 200, J: float = 1.0) -> ThetaChoice:
    """Smallest ``theta`` on a geometric ladder meeting both spacing conditions.

    ``C10`` depends on ``theta`` through the lags it is measured at, so it
    is re-estimated at every rung.
    """
    theta = max(2.0, 4.0 * math.log(1.0 / (2.0 * c0)))
    for _ in range(max_iter):
        consts = estimate_variance_constants(c0, theta, eps_values, sigma_level, J)
        choice = ThetaChoice(theta, consts, _decay_sum(theta))
        if choice.ratio < 1.0 / 6.0:
            return choice
        theta *= growth
    raise ConfigurationError(f"no theta up to {theta:.4g} satisfies the decay condition")


@dataclass(frozen=True)
class TailFit:
    """Least-squares fit ``log P(sup |N| > lam eps) ~ intercept - decay lam^2``."""

    alpha: float
    decay: float
    intercept: float
    r2: float
    K1: float
    K2: float
    lambdas: np.ndarray = field(repr=False)
    log_freq: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    n_samples: int = 0


def _window_sups(alpha: float, eps: float, n_paths: int, sigma_level: float, master_seed: int,
                 cells_per_window: int, steps: int, chunk: int) -> np.ndarray:
    n_windows = int(round(1.0 / eps**2))
    if abs(n_windows * eps**2 - 1.0) > 1e-9:
        raise ConfigurationError(f"1/eps^2 = {1 / eps**2:.6g} must be an integer to tile the circle")
    grid = Grid(1.0, alpha * eps**4, n_windows * cells_per_window, steps)
    sigma = SigmaSpec.diagonal(sigma_level) if sigma_level != 1.0 else SigmaSpec.identity()
    out = []
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        inc = sample_noise_batch(grid, 1, master_seed, range(lo, hi))
        running = np.zeros((hi - lo, grid.n_x))
        for st in integrate_paths(np.zeros((grid.n_x, 1)), inc, sigma, grid=grid):
            np.maximum(running, np.abs(st.u[..., 0]), out=running)
        # a window [x_j, x_j + eps^2] includes its right end point
        w = running.reshape(hi - lo, n_windows, cells_per_window)
        right = np.roll(w[:, :, 0], -1, axis=1)
        out.append(np.maximum(w.max(axis=2), right).ravel() / eps)
    return np.concatenate(out)


def estimate_tail_constants(alpha: float, eps_list: Sequence[float], n_paths: int, *,
                            sigma_level: float = 1.0, master_seed: int = 0,
                            cells_per_window: int = 16, steps: int = 32,
                            p_range: tuple[float, float] = (0.3, 2e-3), n_levels: int = 12,
                            min_count: int = 20, chunk: int = 256) -> TailFit:
    """Fit the Gaussian tail of ``sup |N| / eps`` over ``[0, alpha eps^4] x [0, eps^2]``.

    Every path contributes the ``1/eps^2`` disjoint windows of the unit
    circle (identically distributed by stationarity).  Levels ``lam`` are
    the empirical quantiles between the two tail probabilities of
    ``p_range``.  ``K2 = decay C2^2 sqrt(alpha)`` and
    ``K1 = exp(intercept) (1 ^ sqrt(alpha))`` read the fit in the form of
    the tail bound.
    """
    sups = np.concatenate([
        _window_sups(alpha, eps, n_paths, sigma_level, master_seed + i, cells_per_window, steps, chunk)
        for i, eps in enumerate(eps_list)
    ])
    n = sups.size
    hi_p, lo_p = p_range
    lams = np.quantile(sups, 1.0 - np.geomspace(hi_p, lo_p, n_levels))
    counts = np.array([(sups > lam).sum() for lam in lams])
    keep = counts >= min_count
    if keep.sum() < 4:
        raise InsufficientDataError(f"only {int(keep.sum())} tail levels have {min_count}+ exceedances")
    lams, counts = lams[keep], counts[keep]
    logf = np.log(counts / n)
    x = lams**2
    slope, intercept, r, _, _ = stats.linregress(x, logf)
    decay = -slope
    K2 = decay * sigma_level**2 * math.sqrt(alpha)
    K1 = math.exp(intercept) * min(1.0, math.sqrt(alpha))
    return TailFit(alpha, decay, intercept, r * r, K1, K2, lams, logf, counts, n)


@dataclass(frozen=True)
class SlabSet:
    """Intersection of symmetric slabs ``{x : |<a_i, x>| <= b_i}``."""

    normals: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.atleast_1d(np.asarray(self.bounds, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("one bound per slab normal is required")
        if np.any(b <= 0):
            raise ValueError("slab half-widths must be positive")
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "bounds", b)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.all(np.abs(np.asarray(x) @ self.normals.T) <= self.bounds, axis=-1)


@dataclass(frozen=True)
class CorrelationReport:
    """Monte Carlo ``mu(K), mu(L), mu(K n L)`` with the standard error of the gap."""

    mu_K: float
    mu_L: float
    mu_KL: float
    gap: float
    gap_stderr: float
    n_samples: int

    @property
    def violated(self) -> bool:
        """True when ``mu(K n L) < mu(K) mu(L)`` by more than three standard errors."""
        return self.gap < -3.0 * self.gap_stderr


def gaussian_correlation_check(K: SlabSet, L: SlabSet, cov, n_samples: int,
                               seed: int = 0) -> CorrelationReport:
    """Estimate ``mu(K n L) - mu(K) mu(L)`` under ``Normal(0, cov)``.

    The standard error comes from the influence function
    ``1_KL - mu_L 1_K - mu_K 1_L`` of the gap.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] != K.dim or L.dim != K.dim:
        raise ValueError("covariance and slab dimensions disagree")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, cov.shape[0])) @ chol.T
    ik = K.contains(x).astype(float)
    il = L.contains(x).astype(float)
    ikl = ik * il
    mk, ml, mkl = ik.mean(), il.mean(), ikl.mean()
    infl = ikl - ml * ik - mk * il
    se = float(infl.std(ddof=1) / math.sqrt(n_samples))
    return CorrelationReport(float(mk), float(ml), float(mkl), float(mkl - mk * ml), se, n_samples)
