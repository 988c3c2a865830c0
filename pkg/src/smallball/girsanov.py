"""Girsanov weights, steering tilts and importance-sampling estimators.

Under a tilt ``f`` the simulated masses are ``xi + f dt dx`` where ``xi`` is
white noise under the tilted measure Q.  The likelihood ratio back to the
original measure is ``dP/dQ = exp(-sum f.xi - z2 / 2)`` with
``z2 = sum |f|^2 dt dx``, both sums running over the solver's cells.
"""

from __future__ import annotations

import copy
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import ValidationError
from .heat_kernel import mode_decay
from .solver import DriftSpec, Field, PathRecord, SigmaSpec, clamp_f_eps, integrate, sup_norm
from .white_noise import Grid, NoisePath, sample_noise_batch

__all__ = [
    "GirsanovWeight",
    "SecondMomentReport",
    "SmallBallEstimate",
    "LowerBoundDrift",
    "BoxSteeringTilt",
    "accumulate_weight",
    "check_second_moment",
    "lower_bound_drift",
    "estimate_from_weights",
    "simulate_weighted",
    "importance_estimate",
    "DEGENERATE_ESS",
]

# effective sample size below which an estimate is flagged as degenerate
DEGENERATE_ESS = 10.0
# slack on declared tilt bounds for rounding in sigma^{-1} and the kernel action
_BOUND_RTOL = 1e-9


@dataclass(frozen=True)
class GirsanovWeight:
    """``z1 = sum f.dW``, ``z2 = sum |f|^2 dt dx`` and ``dQ/dP = exp(z1 - z2/2)``.

    Fields may be scalars or arrays over paths.
    """

    z1: np.ndarray
    z2: np.ndarray

    @property
    def log_weight(self) -> np.ndarray:
        return self.z1 - 0.5 * self.z2

    @property
    def weight(self) -> np.ndarray:
        return np.exp(self.log_weight)


def _check_bound(f: np.ndarray, bound: float) -> None:
    peak = float(sup_norm(f).max()) if f.size else 0.0
    if peak > bound * (1 + _BOUND_RTOL) + 1e-12:
        raise ValidationError(f"tilt reaches {peak:.6g}, above its declared bound {bound:.6g}")


def accumulate_weight(f, noise: NoisePath, path: PathRecord | None = None,
                      bound: float | None = None) -> GirsanovWeight:
    """Weight of ``f`` against the masses of ``noise``.

    ``f`` is either an array of shape ``(n_t, n_x, d)`` whose row ``n`` is
    the value used on step ``n``, or a :class:`DriftSpec` evaluated at the
    left endpoint of every step along ``path`` (predictable by construction).
    """
    g = noise.grid
    if isinstance(f, DriftSpec):
        if path is None:
            raise ValueError("a path is required to evaluate a DriftSpec tilt")
        bound = f.bound if bound is None else bound
        vals = np.stack([f.evaluate(n * g.dt, g.x, path.snapshots[n]) for n in range(g.n_t)])
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != noise.increments.shape:
            raise ValueError(f"tilt shape {vals.shape} differs from noise shape {noise.increments.shape}")
    if bound is not None:
        _check_bound(vals, bound)
    z1 = float(np.sum(vals * noise.increments))
    z2 = float(np.sum(vals * vals) * g.dt * g.dx)
    return GirsanovWeight(np.float64(z1), np.float64(z2))


@dataclass(frozen=True)
class SecondMomentReport:
    """Empirical ``E[W^2]`` against the window ``[1, exp(M^2 t J)]``."""

    mean_square: float
    stderr: float
    lower: float
    upper: float
    n: int

    @property
    def below_upper(self) -> bool:
        return self.mean_square <= self.upper * (1.0 + 3.0 * self.stderr / max(self.mean_square, 1e-300))

    @property
    def above_lower(self) -> bool:
        return self.mean_square + 3.0 * self.stderr >= self.lower

    @property
    def ok(self) -> bool:
        return self.below_upper and self.above_lower


def check_second_moment(M: float, t: float, J: float, weights) -> SecondMomentReport:
    """Compare the sample second moment of ``weights`` with ``exp(M^2 t J)``.

    ``stderr`` is the standard error of the mean of ``W^2``; ``below_upper``
    allows a relative slack of three standard errors.
    """
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("empty weight sample")
    sq = w * w
    se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else math.inf
    return SecondMomentReport(float(sq.mean()), se, 1.0, math.exp(M * M * t * J), int(sq.size))


@dataclass(frozen=True)
class SmallBallEstimate:
    """Probability estimate with its standard error and weight diagnostics.

    ``log_p`` is computed in log space and stays meaningful when ``p_hat``
    underflows.  ``n_effective`` is ``(sum w)^2 / sum w^2`` over the paths in
    the event; ``ess_all`` is the same over all paths.
    """

    p_hat: float
    stderr: float
    n_paths: int
    n_effective: float
    eps: float
    T: float
    J: float
    method: str
    log_p: float = -math.inf
    n_hits: int = 0
    ess_all: float = 0.0
    log_weights: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def degenerate(self) -> bool:
        return self.n_effective < DEGENERATE_ESS

    @property
    def rel_stderr(self) -> float:
        return self.stderr / self.p_hat if self.p_hat > 0 else math.inf

    @property
    def log_stderr(self) -> float:
        """Delta-method standard error of ``log p_hat``."""
        return self.rel_stderr

    def ci95(self) -> tuple[float, float]:
        return self.p_hat - 1.96 * self.stderr, self.p_hat + 1.96 * self.stderr


def _ess(lw: np.ndarray) -> float:
    if lw.size == 0:
        return 0.0
    return float(math.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def estimate_from_weights(hits, log_weights=None, *, eps: float = math.nan, T: float = math.nan,
                          J: float = math.nan, method: str | None = None,
                          keep_weights: bool = False) -> SmallBallEstimate:
    """Estimate ``E_Q[1_A dP/dQ]`` from indicators and log likelihood ratios.

    With ``log_weights=None`` every weight is one and the result is the plain
    Monte Carlo frequency.
    """
    hits = np.asarray(hits, dtype=bool).ravel()
    n = hits.size
    if n == 0:
        raise ValueError("no paths")
    lw = np.zeros(n) if log_weights is None else np.asarray(log_weights, dtype=float).ravel()
    if lw.shape != hits.shape:
        raise ValueError("hits and log_weights differ in length")
    if method is None:
        method = "plain" if log_weights is None else "tilted"
    sel = lw[hits]
    if sel.size == 0:
        est = SmallBallEstimate(0.0, 0.0, n, 0.0, eps, T, J, method, -math.inf, 0, _ess(lw),
                                lw if keep_weights else None)
    else:
        shift = float(sel.max())
        scaled = np.where(hits, np.exp(np.where(hits, lw, shift) - shift), 0.0)
        log_p = shift + math.log(scaled.mean())
        sd = float(scaled.std(ddof=1)) if n > 1 else math.inf
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            p_hat = float(np.exp(log_p))
            stderr = float(np.exp(shift + np.log(sd) - 0.5 * math.log(n)))
        est = SmallBallEstimate(min(p_hat, 1.0) if method == "plain" else p_hat, stderr, n,
                                _ess(sel), eps, T, J, method, log_p, int(sel.size), _ess(lw),
                                lw if keep_weights else None)
    if est.degenerate and method != "plain":
        warnings.warn(f"degenerate importance weights: effective sample size {est.n_effective:.1f}",
                      RuntimeWarning, stacklevel=2)
    return est


class LowerBoundDrift:
    """Steering tilt that pulls the heat-flowed profile to zero.

    On a segment starting at step ``n_j`` with anchor profile ``a`` the tilt is
    ``f(s, y) = -sigma^{-1}(s, y, u(s, y)) G_{s - s_j}(a)(y) / tau``.  With
    a frozen ``sigma`` the tilt's contribution to the mean over the segment is
    ``-(s - s_j) / tau G_{s - s_j}(a)``, so for ``tau`` equal to the segment
    length the mean heat-flowed profile reaches zero at the segment end.

    With ``segment_steps=None`` there is a single segment anchored at ``u0``
    (the profile passed to :meth:`start`).  Otherwise the anchor is reset
    every ``segment_steps`` steps to the current state, radially clamped at
    ``anchor_radius`` when given so that ``|f| <= anchor_radius / (C1 tau)``.
    """

    def __init__(self, tau: float, segment_steps: int | None = None,
                 anchor_radius: float | None = None, u0=None):
        if not tau > 0:
            raise ValueError(f"steering time must be positive, got {tau}")
        if segment_steps is not None and segment_steps < 1:
            raise ValueError("segment_steps must be >= 1")
        self.tau = float(tau)
        self.segment_steps = segment_steps
        self.anchor_radius = anchor_radius
        self.u0 = None if u0 is None else np.asarray(u0.values if isinstance(u0, Field) else u0, float)

    def bound_for(self, sigma: SigmaSpec, u0=None, grid: Grid | None = None) -> float:
        """Uniform bound ``M`` on ``|f|`` (``inf`` when anchors are unbounded).

        The grid's spectral heat action is not exactly sup-norm contracting,
        so with a grid the anchor level is multiplied by the largest l1 norm
        of the discrete kernel over a segment.
        """
        start = self.u0 if u0 is None else np.asarray(u0, dtype=float)
        if self.anchor_radius is not None:
            level = self.anchor_radius
        elif self.segment_steps is None and start is not None:
            level = float(np.max(sup_norm(start)))
        else:
            return math.inf
        if grid is not None:
            steps = self.segment_steps or grid.n_t
            level *= _kernel_l1(grid, steps)
        return level / (sigma.C1 * self.tau)

    def start(self, u_start: np.ndarray, grid: Grid, sigma: SigmaSpec) -> Callable:
        x = grid.x
        anchor0 = u_start if self.u0 is None else np.broadcast_to(self.u0.reshape(grid.n_x, -1),
                                                                  u_start.shape)
        if self.anchor_radius is not None:
            anchor0 = clamp_f_eps(anchor0, self.anchor_radius)
        state = {"anchor": np.fft.rfft(anchor0, axis=-2), "n0": 0}
        m = self.segment_steps
        tau = self.tau

        def fn(n: int, t: float, u: np.ndarray) -> np.ndarray:
            if m is not None and n > 0 and n % m == 0:
                a = u if self.anchor_radius is None else clamp_f_eps(u, self.anchor_radius)
                state["anchor"] = np.fft.rfft(a, axis=-2)
                state["n0"] = n
            s = (n - state["n0"]) * grid.dt
            prof = np.fft.irfft(state["anchor"] * mode_decay(grid.n_x, grid.J, s)[:, None],
                                n=grid.n_x, axis=-2)
            return -sigma.solve(t, x, u, prof) / tau

        return fn

    def as_drift(self, grid: Grid, sigma: SigmaSpec, u0) -> DriftSpec:
        """Single-segment tilt as a :class:`DriftSpec` in ``(t, x, u)``."""
        u0v = np.asarray(u0.values if isinstance(u0, Field) else u0, dtype=float).reshape(grid.n_x, -1)
        uh = np.fft.rfft(u0v, axis=0)
        tau = self.tau

        def func(t, x, u):
            prof = np.fft.irfft(uh * mode_decay(grid.n_x, grid.J, t)[:, None], n=grid.n_x, axis=0)
            return -sigma.solve(t, x, u, np.broadcast_to(prof, np.shape(u))) / tau

        bound = float(sup_norm(u0v)) / (sigma.C1 * tau)
        return DriftSpec.from_function(func, bound, u0v.shape[1], name="lower_bound")


class BoxSteeringTilt:
    """Feedback tilt that keeps the field inside a box of radius ``radius``.

    Each grid point is treated as an independent coordinate with a target
    set ``|u| <= radius`` and the tilt is the resulting approximate
    h-transform ``f = sigma (kappa / dx) G_H[psi(G_H u)]``:

    ``mode="terminal"``: ``psi = d/dm log P(|m + s Z| <= radius)``, the
        Gaussian box probability at the end of the current interval of
        ``interval_steps`` steps (``H`` is the time left, ``s^2`` the
        remaining pointwise variance on the grid).  Steers the profile into
        the box at every interval boundary.
    ``mode="strip"``: ``psi = -(pi / 2a) tan(pi m / 2a)``, the log-gradient of
        the principal eigenfunction of Brownian motion killed outside
        ``(-a, a)``; ``H = horizon`` is a fixed look-ahead.  Suited to
        staying in the ball over long horizons.

    The state is clamped at ``anchor_radius`` and ``psi`` at ``psi_max / a``
    so the tilt has a finite declared bound.  For ``d > 1`` the terminal
    mode acts per component and the strip mode radially.
    """

    MODES = ("terminal", "strip")

    def __init__(self, radius: float, kappa: float, mode: str = "terminal", *,
                 interval_steps: int | None = None, horizon: float | None = None,
                 anchor_radius: float | None = None, psi_max: float = 50.0):
        if mode not in self.MODES:
            raise ValueError(f"mode must be one of {self.MODES}, got {mode!r}")
        if not (radius > 0 and kappa >= 0):
            raise ValueError("need radius > 0 and kappa >= 0")
        if mode == "terminal" and (interval_steps is None or interval_steps < 1):
            raise ValueError("terminal mode needs interval_steps >= 1")
        if mode == "strip" and not (horizon is not None and horizon >= 0):
            raise ValueError("strip mode needs a horizon >= 0")
        self.radius = float(radius)
        self.kappa = float(kappa)
        self.mode = mode
        self.interval_steps = interval_steps
        self.horizon = horizon
        self.anchor_radius = anchor_radius if anchor_radius is not None else float(radius)
        self.psi_max = float(psi_max)

    def bound_for(self, sigma: SigmaSpec, u0=None, grid: Grid | None = None) -> float:
        if grid is None:
            return math.inf
        if self.mode == "terminal":
            hs = np.arange(1, self.interval_steps + 1) * grid.dt
        else:
            hs = np.array([float(self.horizon)])
        spread = _kernel_l1_at(grid, hs)
        return sigma.C2 * self.kappa / grid.dx * self.psi_max / self.radius * spread

    def start(self, u_start: np.ndarray, grid: Grid, sigma: SigmaSpec) -> Callable:
        x = grid.x
        k = np.arange(grid.n_x // 2 + 1)
        lam = 0.5 * (2.0 * np.pi * k / grid.J) ** 2
        # all integer frequencies of the grid for the pointwise variance sum
        kf = np.fft.fftfreq(grid.n_x, 1.0 / grid.n_x)
        lam_full = 0.5 * (2.0 * np.pi * kf / grid.J) ** 2
        # pointwise noise level used for the remaining variance
        level2 = sigma.C1 * sigma.C2
        a = self.radius
        cap = self.psi_max / a
        gain = self.kappa / grid.dx

        def remaining_sd(h: float) -> float:
            with np.errstate(divide="ignore", invalid="ignore"):
                rem = np.where(lam_full > 0, -np.expm1(-2.0 * lam_full * h) / (2.0 * lam_full), h)
            return math.sqrt(level2 * rem.sum() / grid.J)

        def smooth(v: np.ndarray, h: float) -> np.ndarray:
            if h == 0:
                return v
            return np.fft.irfft(np.exp(-lam * h)[:, None] * np.fft.rfft(v, axis=-2),
                                n=grid.n_x, axis=-2)

        def fn(n: int, t: float, u: np.ndarray) -> np.ndarray:
            if self.mode == "terminal":
                h = (self.interval_steps - n % self.interval_steps) * grid.dt
            else:
                h = float(self.horizon)
            m = smooth(clamp_f_eps(u, self.anchor_radius), h)
            if self.mode == "terminal":
                sd = remaining_sd(h)
                lo, hi = (-a - m) / sd, (a - m) / sd
                num = np.exp(-0.5 * lo * lo) - np.exp(-0.5 * hi * hi)
                den = np.maximum(ndtr(hi) - ndtr(lo), 1e-300)
                psi = num / (math.sqrt(2.0 * math.pi) * sd * den)
            else:
                r = np.sqrt((m * m).sum(axis=-1, keepdims=True))
                z = np.minimum(r / a, 0.98) * (np.pi / 2.0)
                psi = -(np.pi / (2.0 * a)) * np.tan(z) * m / np.maximum(r, 1e-300)
            psi = np.clip(psi, -cap, cap)
            # f = sigma^T grad log h, with grad log h ~ (1/dx) G_H psi
            return sigma.apply(t, x, u, gain * smooth(psi, h))

        return fn


def _kernel_l1(grid: Grid, steps: int) -> float:
    """Largest l1 norm of the discrete heat kernel over ``s = 0, dt, ..., (steps-1) dt``."""
    return _kernel_l1_at(grid, np.arange(min(steps, grid.n_t)) * grid.dt)


def _kernel_l1_at(grid: Grid, s: np.ndarray) -> float:
    """Largest l1 norm of the grid's spectral heat kernel over the times ``s``."""
    s = np.asarray(s, dtype=float)
    delta = np.zeros(grid.n_x)
    delta[0] = 1.0
    k = np.arange(grid.n_x // 2 + 1)
    mult = np.exp(-0.5 * (2.0 * np.pi * k / grid.J) ** 2 * s[:, None])
    kernels = np.fft.irfft(mult * np.fft.rfft(delta), n=grid.n_x, axis=-1)
    return float(np.abs(kernels).sum(axis=-1).max())


def lower_bound_drift(u0, t1: float, sigma: SigmaSpec, grid: Grid | None = None) -> DriftSpec:
    """``f(s, y) = -sigma^{-1}(s, y, u) G_s(u0)(y) / t1`` as a :class:`DriftSpec`."""
    if isinstance(u0, Field):
        grid = u0.grid
    if grid is None:
        raise ValueError("grid is required when u0 is a raw array")
    return LowerBoundDrift(t1, u0=u0).as_drift(grid, sigma, u0)


def _chunks(n_paths: int, size: int):
    return [(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]


def default_chunk(grid: Grid, d: int, budget: float = 4e6) -> int:
    """Paths per chunk keeping a chunk's noise under ``budget`` floats."""
    return max(1, int(budget // (grid.n_t * grid.n_x * d)))


def simulate_weighted(monitor_factory: Callable, n_paths: int, master_seed: int, *,
                      u0, grid: Grid, sigma: SigmaSpec, drift: DriftSpec | None = None,
                      tilt=None, d: int | None = None, chunk_size: int | None = None,
                      workers: int = 1, noise_filter: str = "exact", first_index: int = 0):
    """Run ``n_paths`` paths in chunks and return ``(outcomes, log_dPdQ)``.

    ``monitor_factory(grid, u_start)`` returns a streaming monitor with
    ``update(n, t, u)`` and ``result()``; the latter gives one value (or a
    row of values) per path.  Path ``i`` always uses the noise keyed by
    ``(master_seed, first_index + i)``, so results do not depend on
    ``chunk_size`` or ``workers``.
    """
    d = sigma.d if d is None else d
    chunk_size = chunk_size or default_chunk(grid, d)
    u0 = np.asarray(u0.values if isinstance(u0, Field) else u0, dtype=float).reshape(grid.n_x, d)
    bound = None if tilt is None else getattr(tilt, "bound", None)
    if tilt is not None and bound is None and hasattr(tilt, "bound_for"):
        bound = tilt.bound_for(sigma, u0, grid)

    def run(span):
        lo, hi = span
        inc = sample_noise_batch(grid, d, master_seed, range(first_index + lo, first_index + hi))
        u_start = np.broadcast_to(u0, inc.shape[:1] + u0.shape)
        mon = monitor_factory(grid, u_start)
        mon.update(0, 0.0, u_start)
        lw = np.zeros(hi - lo)
        for st in integrate(u_start, inc, sigma, drift, tilt, grid=grid, noise_filter=noise_filter):
            if st.f is not None:
                if bound is not None and math.isfinite(bound):
                    _check_bound(st.f, bound)
                lw -= np.sum(st.f * st.xi, axis=(-2, -1))
                lw -= 0.5 * np.sum(st.f * st.f, axis=(-2, -1)) * grid.dt * grid.dx
            mon.update(st.n, st.t, st.u)
        return np.asarray(mon.result()), lw

    spans = _chunks(n_paths, chunk_size)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    outcomes = np.concatenate([p[0] for p in parts], axis=0)
    log_w = np.concatenate([p[1] for p in parts])
    return outcomes, log_w


class _RecordMonitor:
    """Keeps full snapshots so a predicate on :class:`PathRecord` can be applied."""

    def __init__(self, grid: Grid, u_start: np.ndarray, predicate: Callable):
        self.grid = grid
        self.predicate = predicate
        self.snaps = np.empty((u_start.shape[0], grid.n_t + 1) + u_start.shape[1:])

    def update(self, n, t, u):
        self.snaps[:, n] = u

    def result(self):
        return np.array([bool(self.predicate(PathRecord(s, self.grid))) for s in self.snaps])


def importance_estimate(event, tilt, n_paths: int, master_seed: int, *, u0, grid: Grid,
                        sigma: SigmaSpec, drift: DriftSpec | None = None, eps: float = math.nan,
                        workers: int = 1, chunk_size: int | None = None,
                        noise_filter: str = "exact", keep_weights: bool = False) -> SmallBallEstimate:
    """``P(event)`` as the Q-mean of ``1_event dP/dQ`` over tilted paths.

    ``event`` is an object with ``monitor(grid, u_start)`` (streaming) or a
    predicate on :class:`PathRecord`.  ``tilt=None`` gives plain Monte Carlo.
    """
    if hasattr(event, "monitor"):
        factory = event.monitor
    else:
        def factory(g, u_start):
            return _RecordMonitor(g, u_start, event)
    if tilt is not None and hasattr(tilt, "start"):
        tilt = copy.copy(tilt)
    hits, lw = simulate_weighted(factory, n_paths, master_seed, u0=u0, grid=grid, sigma=sigma,
                                 drift=drift, tilt=tilt, chunk_size=chunk_size, workers=workers,
                                 noise_filter=noise_filter)
    return estimate_from_weights(hits, None if tilt is None else lw, eps=eps, T=grid.T, J=grid.J,
                                 keep_weights=keep_weights)
