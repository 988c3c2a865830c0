"""Small-ball experiments: event detection, probability estimates and exponent fits.

Events are evaluated on the simulation grid.  Those tied to a
:class:`GridScheme` (``A_n``, ``F_n`` and their chains) require the scheme's
points ``(t_n, x_j)`` to be grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError, ValidationError
from .gaussian import GridScheme
from .girsanov import (BoxSteeringTilt, SmallBallEstimate, estimate_from_weights,
                       importance_estimate, simulate_weighted)
from .heat_kernel import heat_kernel
from .solver import (DriftSpec, Field, PathRecord, SigmaSpec, TargetPath, integrate,
                     support_reduction, sup_norm)
from .white_noise import Grid, NoisePath, rescale_noise, sample_noise

__all__ = [
    "EVENT_KINDS",
    "EventSpec",
    "SmallBallEstimate",
    "detect_event",
    "LinearFit",
    "weighted_linear_fit",
    "single_interval_probability",
    "total_smallball_probability",
    "grid_and_ball_probability",
    "ExponentFit",
    "fit_smallball_exponent",
    "AdditivityFit",
    "markov_additivity",
    "ScalingReport",
    "verify_scaling_reduction",
    "SupportReport",
    "support_theorem_run",
    "GReductionReport",
    "g_reduction_check",
    "scheme_for",
]

EVENT_KINDS = ("ball", "tube", "A", "A-chain", "F", "F-chain")

# defaults used by the tilted small-ball estimators
DEFAULT_C0 = 0.1
TERMINAL_KAPPA = 0.6
STRIP_KAPPA = 0.4
STRIP_HORIZON = 1.0 / 16.0


@dataclass(frozen=True)
class EventSpec:
    """A path event of radius ``radius``.

    ``ball``: ``|u| <= radius`` at every grid point and step (up to
    ``horizon`` when given).  ``tube``: ``|u - h| <= radius`` for ``target``
    ``h``.  ``A``: on interval ``index`` of ``scheme``, ``|u| <= radius``
    throughout and ``|u| <= radius / 3`` at its right end.  ``F``:
    ``|u(t_index, x_j)| <= radius`` for ``j <= n2 - 2``.  The chains
    intersect ``A_0 .. A_{count-1}`` or ``F_0 .. F_{count-1}``.
    """

    kind: str
    radius: float
    index: int = 0
    count: int | None = None
    scheme: GridScheme | None = None
    target: TargetPath | None = None
    horizon: float | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"kind must be one of {EVENT_KINDS}, got {self.kind!r}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.kind in ("A", "A-chain", "F", "F-chain") and self.scheme is None:
            raise ConfigurationError(f"event {self.kind} needs a grid scheme")
        if self.kind in ("A-chain", "F-chain") and (self.count is None or self.count < 1):
            raise ConfigurationError(f"event {self.kind} needs count >= 1")
        if self.kind == "tube" and self.target is None:
            raise ConfigurationError("tube event needs a target path")

    def with_scheme(self, scheme: GridScheme) -> "EventSpec":
        return EventSpec(self.kind, self.radius, self.index, self.count, scheme, self.target, self.horizon)

    def monitor(self, grid: Grid, u_start: np.ndarray) -> "_EventMonitor":
        return _EventMonitor(self, grid, u_start.shape[0] if u_start.ndim == 3 else 1)


class _EventMonitor:
    """Streaming evaluation of an :class:`EventSpec` over a batch of paths."""

    def __init__(self, spec: EventSpec, grid: Grid, batch: int):
        self.spec = spec
        self.grid = grid
        self.ok = np.ones(batch, dtype=bool)
        self.x = grid.x
        self.last_step = grid.n_t
        if spec.horizon is not None:
            self.last_step = int(math.floor(spec.horizon / grid.dt * (1 + 1e-12)))
        if spec.scheme is not None and spec.kind != "ball" and spec.kind != "tube":
            self.m, self.q = spec.scheme.embedding(grid)
            n_int = spec.count if spec.kind.endswith("chain") else spec.index + 1
            if spec.kind.startswith("A") and n_int * self.m > grid.n_t:
                raise ConfigurationError(f"grid covers {grid.n_t // self.m} intervals, event needs {n_int}")
            if spec.kind.startswith("F") and (n_int - 1) * self.m > grid.n_t:
                raise ConfigurationError("grid ends before the event's last time point")
            self.cols = np.arange(spec.scheme.n2 - 1) * self.q
            if self.cols.size and self.cols[-1] >= grid.n_x:
                raise ConfigurationError("scheme space points run past the grid")

    def _norm(self, u: np.ndarray) -> np.ndarray:
        u = u if u.ndim == 3 else u[None]
        return np.sqrt((u * u).sum(axis=-1)) if u.shape[-1] > 1 else np.abs(u[..., 0])

    def update(self, n: int, t: float, u: np.ndarray) -> None:
        s = self.spec
        r = s.radius
        if s.kind == "ball":
            if n <= self.last_step:
                self.ok &= self._norm(u).max(axis=-1) <= r
        elif s.kind == "tube":
            if n <= self.last_step:
                self.ok &= self._norm(u - s.target(t, self.x)).max(axis=-1) <= r
        elif s.kind in ("A", "A-chain"):
            lo_int = s.index if s.kind == "A" else 0
            hi_int = s.index if s.kind == "A" else s.count - 1
            if lo_int * self.m <= n <= (hi_int + 1) * self.m:
                sup = self._norm(u).max(axis=-1)
                self.ok &= sup <= r
                if n > lo_int * self.m and n % self.m == 0:
                    self.ok &= sup <= r / 3.0
        else:
            lo_int = s.index if s.kind == "F" else 0
            hi_int = s.index if s.kind == "F" else s.count - 1
            if n % self.m == 0 and lo_int <= n // self.m <= hi_int:
                self.ok &= self._norm(u)[..., self.cols].max(axis=-1) <= r

    def result(self) -> np.ndarray:
        return self.ok.copy()


def detect_event(path: PathRecord, spec: EventSpec, scheme: GridScheme | None = None) -> bool:
    """Evaluate ``spec`` exactly on the grid points of one recorded path."""
    if scheme is not None:
        spec = spec.with_scheme(scheme)
    mon = _EventMonitor(spec, path.grid, 1)
    for n in range(path.grid.n_t + 1):
        mon.update(n, n * path.grid.dt, path.snapshots[n][None])
    return bool(mon.result()[0])


@dataclass(frozen=True)
class LinearFit:
    """Weighted least-squares line ``y = intercept + slope x``."""

    slope: float
    intercept: float
    slope_se: float
    r2: float


def weighted_linear_fit(x, y, y_se=None) -> LinearFit:
    """Fit with weights ``1 / y_se^2`` (uniform when ``y_se`` is None).

    ``r2`` is the weighted coefficient of determination.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.shape != y.shape:
        raise ValueError("need at least two matching points")
    w = np.ones_like(x) if y_se is None else 1.0 / np.maximum(np.asarray(y_se, dtype=float), 1e-12) ** 2
    X = np.column_stack([np.ones_like(x), x])
    WX = X * w[:, None]
    cov = np.linalg.inv(X.T @ WX)
    a, b = cov @ (WX.T @ y)
    resid = y - (a + b * x)
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - float(np.sum(w * resid**2)) / ss_tot if ss_tot > 0 else 1.0
    if y_se is None and x.size > 2:
        cov = cov * float(np.sum(resid**2)) / (x.size - 2)
    return LinearFit(float(b), float(a), float(math.sqrt(cov[1, 1])), r2)


def scheme_for(eps: float, c0: float = DEFAULT_C0, J: float = 1.0, T: float | None = None) -> GridScheme:
    """Scheme with ``theta`` at the first spacing condition, snapped to close up on the circle."""
    theta_min = max(2.0, 4.0 * math.log(1.0 / (2.0 * c0)))
    return GridScheme.snapped(eps, c0, theta_min, J, T)


def _zero_start(grid: Grid, d: int, u0) -> np.ndarray:
    if u0 is None:
        return np.zeros((grid.n_x, d))
    v = u0.values if isinstance(u0, Field) else np.asarray(u0, dtype=float)
    return v.reshape(grid.n_x, d)


def single_interval_probability(eps: float, scheme: GridScheme | None = None,
                                sigma: SigmaSpec | None = None, n_paths: int = 10000,
                                tilted: bool = True, *, master_seed: int = 0, u0=None,
                                steps_per_interval: int = 32, cells_per_spacing: int = 4,
                                kappa: float = TERMINAL_KAPPA, workers: int = 1,
                                chunk_size: int | None = None) -> SmallBallEstimate:
    """``P(A_0)`` over one interval of length ``c0 eps^4``.

    The tilted estimator steers every grid point into ``|u| <= eps/3`` at the
    interval end (:class:`BoxSteeringTilt`, terminal mode).
    """
    sigma = sigma or SigmaSpec.identity()
    scheme = scheme or scheme_for(eps)
    if not math.isclose(scheme.eps, eps):
        raise ConfigurationError("scheme radius differs from eps")
    grid = scheme.simulation_grid(scheme.t1, steps_per_interval, cells_per_spacing)
    start = _zero_start(grid, sigma.d, u0)
    if sup_norm(start) > eps / 3.0 * (1 + 1e-12):
        raise ValidationError("initial profile must satisfy |u0| <= eps/3")
    event = EventSpec("A", eps, 0, scheme=scheme)
    tilt = None
    if tilted:
        tilt = BoxSteeringTilt(eps / 3.0, kappa, "terminal", interval_steps=steps_per_interval,
                               anchor_radius=eps)
    return importance_estimate(event, tilt, n_paths, master_seed, u0=start, grid=grid, sigma=sigma,
                               eps=eps, workers=workers, chunk_size=chunk_size)


def total_smallball_probability(eps: float, T: float, scheme: GridScheme | None = None,
                                sigma: SigmaSpec | None = None, n_paths: int = 10000, *,
                                tilted: bool = True, event: str = "ball", master_seed: int = 0,
                                steps_per_interval: int = 16, cells_per_spacing: int = 4,
                                kappa: float | None = None, horizon_intervals: float = STRIP_HORIZON,
                                workers: int = 1, chunk_size: int | None = None) -> SmallBallEstimate:
    """``P(sup_{t <= T, x} |u| <= eps)`` from ``u0 = 0``, or ``P(A_0 n ... n A_{n-1})``.

    ``T`` must be a whole number of intervals.  The tilt is re-derived from
    the running profile at every step: for the ball event it is the strip
    steering with look-ahead ``horizon_intervals * c0 eps^4``; for the
    ``A``-chain it is the terminal steering towards ``eps/3`` at every
    interval end.
    """
    sigma = sigma or SigmaSpec.identity()
    scheme = scheme or scheme_for(eps, T=T)
    grid = scheme.simulation_grid(T, steps_per_interval, cells_per_spacing)
    n_int = grid.n_t // steps_per_interval
    start = np.zeros((grid.n_x, sigma.d))
    if event == "ball":
        spec = EventSpec("ball", eps)
        tilt = BoxSteeringTilt(eps, STRIP_KAPPA if kappa is None else kappa, "strip",
                               horizon=horizon_intervals * scheme.t1, anchor_radius=eps) if tilted else None
    elif event == "A-chain":
        spec = EventSpec("A-chain", eps, count=n_int, scheme=scheme)
        tilt = BoxSteeringTilt(eps / 3.0, TERMINAL_KAPPA if kappa is None else kappa, "terminal",
                               interval_steps=steps_per_interval, anchor_radius=eps) if tilted else None
    else:
        raise ValueError(f"event must be 'ball' or 'A-chain', got {event!r}")
    return importance_estimate(spec, tilt, n_paths, master_seed, u0=start, grid=grid, sigma=sigma,
                               eps=eps, workers=workers, chunk_size=chunk_size)


class _PairMonitor:
    def __init__(self, first, second):
        self.parts = (first, second)

    def update(self, n, t, u):
        for m in self.parts:
            m.update(n, t, u)

    def result(self):
        return np.column_stack([m.result() for m in self.parts])


def grid_and_ball_probability(eps: float, T: float, scheme: GridScheme | None = None,
                              sigma: SigmaSpec | None = None, n_paths: int = 10000, *,
                              master_seed: int = 0, steps_per_interval: int = 16,
                              cells_per_spacing: int = 4, workers: int = 1
                              ) -> tuple[SmallBallEstimate, SmallBallEstimate]:
    """Plain estimates of ``F_0 n ... n F_{n1-1}`` and of the ball event on the same paths.

    The first only looks at the scheme points ``p_nj``; the second at every
    grid point and step, so it is the smaller of the two pathwise.
    """
    sigma = sigma or SigmaSpec.identity()
    scheme = scheme or scheme_for(eps, T=T)
    grid = scheme.simulation_grid(T, steps_per_interval, cells_per_spacing)
    n_int = grid.n_t // steps_per_interval
    f_spec = EventSpec("F-chain", eps, count=n_int + 1, scheme=scheme)
    b_spec = EventSpec("ball", eps)

    def factory(g, u_start):
        return _PairMonitor(f_spec.monitor(g, u_start), b_spec.monitor(g, u_start))

    hits, _ = simulate_weighted(factory, n_paths, master_seed, u0=np.zeros((grid.n_x, sigma.d)),
                                grid=grid, sigma=sigma, workers=workers)
    return tuple(estimate_from_weights(hits[:, i], eps=eps, T=T, J=grid.J) for i in range(2))


def _log_p_se(est: SmallBallEstimate) -> float:
    return est.rel_stderr if est.p_hat > 0 else math.inf


@dataclass(frozen=True)
class ExponentFit:
    """Slope of ``log(-log p)`` against ``log(1/eps)``."""

    eps: tuple
    estimates: tuple = field(repr=False)
    fit: LinearFit = None

    @property
    def slope(self) -> float:
        return self.fit.slope


def fit_smallball_exponent(estimates: Sequence[SmallBallEstimate]) -> ExponentFit:
    """Weighted fit of ``log(-log p_hat)`` on ``log(1/eps)``.

    The standard error of ``log(-log p)`` is ``se(log p) / |log p|``.
    """
    eps = np.array([e.eps for e in estimates])
    logp = np.array([e.log_p for e in estimates])
    if np.any(~np.isfinite(logp)) or np.any(logp >= 0):
        raise ValueError("every estimate needs 0 < p_hat < 1")
    se = np.array([_log_p_se(e) for e in estimates]) / np.abs(logp)
    fit = weighted_linear_fit(np.log(1.0 / eps), np.log(-logp), se)
    return ExponentFit(tuple(eps), tuple(estimates), fit)


@dataclass(frozen=True)
class AdditivityFit:
    """``-log p_hat`` against ``T``."""

    T: tuple
    estimates: tuple = field(repr=False)
    fit: LinearFit = None

    @property
    def r2(self) -> float:
        return self.fit.r2


def markov_additivity(eps: float, T_values: Sequence[float], sigma: SigmaSpec | None = None,
                      n_paths: int = 20000, *, master_seed: int = 0, weighted: bool = False,
                      **kwargs) -> AdditivityFit:
    """Estimate ``-log p`` at several horizons and fit it linearly in ``T``.

    Every horizon uses its own block of path indices.  The fit is
    unweighted unless ``weighted`` is set.
    """
    ests = []
    for i, T in enumerate(T_values):
        ests.append(total_smallball_probability(eps, T, None, sigma, n_paths,
                                                master_seed=master_seed + 1000003 * i, **kwargs))
    y = np.array([-e.log_p for e in ests])
    se = np.array([_log_p_se(e) for e in ests]) if weighted else None
    return AdditivityFit(tuple(T_values), tuple(ests), weighted_linear_fit(np.asarray(T_values), y, se))


@dataclass(frozen=True)
class ScalingReport:
    """Direct and rescaled estimates with the pathwise and kernel checks."""

    direct: SmallBallEstimate
    rescaled: SmallBallEstimate
    pathwise_max_error: float
    kernel_max_error: float

    @property
    def joint_z(self) -> float:
        se = math.hypot(self.direct.stderr, self.rescaled.stderr)
        return abs(self.direct.p_hat - self.rescaled.p_hat) / se if se > 0 else 0.0

    @property
    def agree(self) -> bool:
        return self.joint_z <= 1.96


def verify_scaling_reduction(J: float, eps: float, T: float, sigma: SigmaSpec | None = None,
                             n_paths: int = 10000, *, n_x: int = 64, n_t: int = 64,
                             master_seed: int = 0, workers: int = 1) -> ScalingReport:
    """Compare ``P(sup |u| <= eps)`` on ``[0, T] x [0, J)`` with its unit-circle image.

    The image is ``v(t, z) = J^{-1/2} u(J^2 t, J z)`` with radius ``eps J^{-1/2}``,
    horizon ``T / J^2`` and coefficient ``sigma^{(J)}``.  The two estimates
    use disjoint seeds.  On one shared path the rescaled noise must
    reproduce ``v`` to rounding, and the kernel identity
    ``G^{(1)}(t / J^2, x / J) = J G^{(J)}(t, x)`` is checked on a small table.
    """
    sigma = sigma or SigmaSpec.identity()
    d = sigma.d
    sigma_unit = sigma.rescaled(J)
    grid_direct = Grid(J, T, n_x, n_t)
    grid_unit = Grid(1.0, T / J**2, n_x, n_t)
    zeros = np.zeros((n_x, d))
    direct = importance_estimate(EventSpec("ball", eps), None, n_paths, master_seed, u0=zeros,
                                 grid=grid_direct, sigma=sigma, eps=eps, workers=workers)
    rescaled = importance_estimate(EventSpec("ball", eps / math.sqrt(J)), None, n_paths,
                                   master_seed + 1, u0=zeros, grid=grid_unit, sigma=sigma_unit,
                                   eps=eps / math.sqrt(J), workers=workers)

    noise = sample_noise(grid_direct, d, master_seed + 2)
    noise_unit = rescale_noise(noise, J)
    err = 0.0
    for a, b in zip(integrate(zeros, noise, sigma), integrate(zeros, noise_unit, sigma_unit)):
        err = max(err, float(np.abs(a.u / math.sqrt(J) - b.u).max()))
    t = np.array([0.01, 0.1, 0.5])[:, None] * J**2
    x = np.linspace(0.0, J, 7)[None, :]
    kern = float(np.abs(heat_kernel(t / J**2, x / J, 1.0) - J * heat_kernel(t, x, J)).max())
    return ScalingReport(direct, rescaled, err, kern)


@dataclass(frozen=True)
class SupportReport:
    """Tube probability by direct simulation and through the ``w`` reduction."""

    direct: SmallBallEstimate
    reduced: SmallBallEstimate
    identity_max_error: float

    @property
    def joint_z(self) -> float:
        se = math.hypot(self.direct.stderr, self.reduced.stderr)
        return abs(self.direct.p_hat - self.reduced.p_hat) / se if se > 0 else 0.0


def support_theorem_run(u0, h: TargetPath, eps: float, T: float, sigma: SigmaSpec,
                        drift: DriftSpec | None = None, n_paths: int = 10000, *,
                        grid: Grid | None = None, n_x: int = 64, n_t: int = 64,
                        master_seed: int = 0, identity_paths: int = 4,
                        workers: int = 1) -> SupportReport:
    """``P(sup |u - h| <= eps)`` directly and as ``P(sup |w + u0 - h0| <= eps)``.

    Requires ``sup |u0 - h(0)| < eps / 2``.  The two estimates use disjoint
    seeds; ``identity_max_error`` is the largest pointwise gap between
    ``u - h`` and ``w + u0 - h0`` on ``identity_paths`` shared-noise paths.
    """
    grid = grid or Grid(1.0, T, n_x, n_t)
    d = sigma.d
    drift = drift or DriftSpec.zero(d)
    u0v = _zero_start(grid, d, u0)
    x = grid.x
    h0 = h(0.0, x)
    gap = float(sup_norm(u0v - h0))
    if not gap < eps / 2.0:
        raise ValidationError(f"sup |u0 - h(0)| = {gap:.4g} is not below eps/2 = {eps / 2:.4g}")
    red = support_reduction(u0v, h, drift, sigma, grid)
    base = u0v - h0

    direct = importance_estimate(EventSpec("tube", eps, target=h), None, n_paths, master_seed,
                                 u0=u0v, grid=grid, sigma=sigma, drift=drift, eps=eps, workers=workers)
    shifted = TargetPath(lambda t, xx: -np.broadcast_to(base, (np.size(xx), d)), 0.0, d, name="-(u0-h0)")
    reduced = importance_estimate(EventSpec("tube", eps, target=shifted), None, n_paths, master_seed + 1,
                                  u0=red.w0.values, grid=grid, sigma=red.sigma1, drift=red.drift,
                                  eps=eps, workers=workers)
    err = 0.0
    for i in range(identity_paths):
        noise = sample_noise(grid, d, master_seed + 2 + i)
        pairs = zip(integrate(u0v, noise, sigma, drift), integrate(red.w0.values, noise, red.sigma1, red.drift))
        for a, b in pairs:
            err = max(err, float(np.abs((a.u - h(a.t, x)) - (b.u + base)).max()))
    return SupportReport(direct, reduced, err)


@dataclass(frozen=True)
class GReductionReport:
    """Ball probabilities with drift (``Q``) and without (``P``) against ``sqrt(P) exp(M^2 T J / 2)``."""

    with_drift: SmallBallEstimate
    without_drift: SmallBallEstimate
    M: float
    factor: float

    @property
    def bound(self) -> float:
        return math.sqrt(self.without_drift.p_hat) * self.factor

    @property
    def holds(self) -> bool:
        """The inequality with 1.96 standard errors of slack on both estimates."""
        q_lo = self.with_drift.p_hat - 1.96 * self.with_drift.stderr
        p_hi = self.without_drift.p_hat + 1.96 * self.without_drift.stderr
        return q_lo <= math.sqrt(max(p_hi, 0.0)) * self.factor


def g_reduction_check(drift: DriftSpec, sigma: SigmaSpec, eps: float, T: float,
                      n_paths: int = 10000, *, grid: Grid | None = None, n_x: int = 64,
                      n_t: int = 64, master_seed: int = 0, workers: int = 1) -> GReductionReport:
    """Compare ``Q(A)`` (with ``g``) and ``P(A)`` (``g = 0``) for ``A = {sup |u| <= eps}``.

    ``M = sup |g| / C1`` bounds ``|sigma^{-1} g|``.
    """
    grid = grid or Grid(1.0, T, n_x, n_t)
    zeros = np.zeros((grid.n_x, sigma.d))
    ev = EventSpec("ball", eps)
    q = importance_estimate(ev, None, n_paths, master_seed, u0=zeros, grid=grid, sigma=sigma,
                            drift=drift, eps=eps, workers=workers)
    p = importance_estimate(ev, None, n_paths, master_seed + 1, u0=zeros, grid=grid, sigma=sigma,
                            eps=eps, workers=workers)
    M = drift.bound / sigma.C1
    return GReductionReport(q, p, M, math.exp(M * M * grid.T * grid.J / 2.0))
