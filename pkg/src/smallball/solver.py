"""Exponential Euler integration of the stochastic heat equation on a circle.

The equation is ``du = (1/2) u_xx dt + g(t, x, u) dt + sigma(t, x, u) W(dx dt)``
for ``u`` in ``R^d``.  The linear part is diagonal in Fourier modes and is
applied exactly; drift and noise are frozen at the left end of each step.

Arrays follow the layout ``(..., n_x, d)``: leading axes index independent
paths, so the same code integrates one path or a whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
import scipy.fft as sfft

from .errors import BlowUpError, EllipticityError, ValidationError
from .white_noise import Grid, NoisePath

__all__ = [
    "NOISE_FILTERS",
    "SigmaSpec",
    "DriftSpec",
    "Field",
    "PathRecord",
    "StepState",
    "Stepper",
    "check_sigma",
    "clamp_f_eps",
    "sup_norm",
    "step",
    "integrate",
    "solve",
    "solve_frozen_comparison",
    "TargetPath",
    "ReducedProblem",
    "support_reduction",
]

NOISE_FILTERS = ("exact", "semigroup")


def sup_norm(u: np.ndarray) -> np.ndarray:
    """``max_x |u(x)|`` over the spatial axis, Euclidean norm in the components."""
    if u.shape[-1] == 1:
        return np.abs(u[..., 0]).max(axis=-1)
    return np.sqrt((u * u).sum(axis=-1)).max(axis=-1)


def clamp_f_eps(u, eps: float) -> np.ndarray:
    """Radial projection onto the closed ball of radius ``eps`` (last axis)."""
    if not eps > 0:
        raise ValueError(f"radius must be positive, got {eps}")
    u = np.asarray(u, dtype=float)
    norm = np.sqrt((u * u).sum(axis=-1, keepdims=True))
    # only points outside the ball are divided, so tiny norms cannot overflow
    scale = np.divide(eps, norm, out=np.ones_like(norm), where=norm > eps)
    return u * scale


@dataclass(frozen=True)
class SigmaSpec:
    """Symmetric matrix coefficient ``sigma(t, x, u)`` of the noise.

    ``func(t, x, u)`` maps a time, the grid coordinates ``x`` (shape
    ``(n_x,)``) and states ``u`` (shape ``(..., n_x, d)``) to matrices of
    shape ``(..., n_x, d, d)``.  ``C1 <= <y, sigma y> <= C2`` for unit ``y``
    and ``D_lip`` is the Lipschitz constant in ``u``.  When ``scalar`` is
    set the coefficient is ``scalar * I`` and ``func`` is ignored.
    """

    func: Callable | None
    d: int
    C1: float
    C2: float
    D_lip: float = 0.0
    scalar: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not 0 < self.C1 <= self.C2:
            raise EllipticityError(f"need 0 < C1 <= C2, got C1={self.C1}, C2={self.C2}")
        if self.scalar is None and self.func is None:
            raise ValueError("either func or scalar must be given")

    @classmethod
    def identity(cls, d: int = 1) -> "SigmaSpec":
        return cls(None, d, 1.0, 1.0, 0.0, scalar=1.0, name="identity")

    @classmethod
    def diagonal(cls, c: float, d: int = 1) -> "SigmaSpec":
        """``c`` times the identity."""
        if not c > 0:
            raise EllipticityError(f"diagonal level must be positive, got {c}")
        return cls(None, d, c, c, 0.0, scalar=float(c), name=f"diagonal({c})")

    @classmethod
    def constant(cls, matrix) -> "SigmaSpec":
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.allclose(m, m.T):
            raise EllipticityError("constant sigma must be a symmetric square matrix")
        eig = np.linalg.eigvalsh(m)
        if eig[0] <= 0:
            raise EllipticityError(f"constant sigma is not positive definite (min eig {eig[0]})")

        def func(t, x, u):
            return np.broadcast_to(m, np.shape(u) + (m.shape[0],))

        return cls(func, m.shape[0], float(eig[0]), float(eig[-1]), 0.0, name="constant")

    @classmethod
    def state_dependent(
        cls, C1: float, C2: float, D_lip: float, d: int = 1, rotation=None
    ) -> "SigmaSpec":
        """``Q diag(m + r sin(k (Q^T u)_i)) Q^T`` with ``m +- r = C2, C1`` and ``r k = D_lip``.

        ``Q`` is ``rotation`` (orthogonal) or the identity.
        """
        if not 0 < C1 <= C2:
            raise EllipticityError(f"need 0 < C1 <= C2, got C1={C1}, C2={C2}")
        mid, rad = 0.5 * (C1 + C2), 0.5 * (C2 - C1)
        if D_lip > 0 and rad == 0:
            raise ValueError("a state-dependent sigma needs C1 < C2")
        freq = D_lip / rad if rad > 0 else 0.0
        Q = None if rotation is None else np.asarray(rotation, dtype=float)
        if Q is not None and not np.allclose(Q @ Q.T, np.eye(d)):
            raise ValueError("rotation must be orthogonal")

        def func(t, x, u):
            u = np.asarray(u, dtype=float)
            w = u if Q is None else u @ Q
            diag = mid + rad * np.sin(freq * w)
            mats = diag[..., :, None] * np.eye(d)
            if Q is not None:
                mats = Q @ mats @ Q.T
            return mats

        return cls(func, d, C1, C2, D_lip, name=f"state_dependent({C1},{C2},{D_lip})")

    def matrix(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.scalar is not None:
            return np.broadcast_to(self.scalar * np.eye(self.d), u.shape + (self.d,))
        return self.func(t, x, u)

    def apply(self, t: float, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``sigma(t, x, u) v`` pointwise."""
        if self.scalar is not None:
            return self.scalar * v
        m = self.func(t, x, u)
        if self.d == 1:
            return m[..., 0] * v
        return np.einsum("...ij,...j->...i", m, v)

    def solve(self, t: float, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``sigma(t, x, u)^{-1} v`` pointwise."""
        if self.scalar is not None:
            return v / self.scalar
        m = self.func(t, x, u)
        if self.d == 1:
            den = m[..., 0]
            if np.any(np.abs(den) < 1e-300):
                raise EllipticityError("singular sigma evaluation")
            return v / den
        try:
            return np.linalg.solve(m, v[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise EllipticityError("singular sigma evaluation") from exc

    def rescaled(self, J: float) -> "SigmaSpec":
        """``sigma^{(J)}(t, x, u) = sigma(J^2 t, J x, J^{1/2} u)`` for the unit-circle problem."""
        if self.scalar is not None:
            return self
        base = self

        def func(t, x, u):
            return base.func(J**2 * t, J * np.asarray(x), np.sqrt(J) * np.asarray(u))

        return SigmaSpec(func, self.d, self.C1, self.C2, np.sqrt(J) * self.D_lip,
                         name=f"{self.name}^({J})")

    @property
    def is_deterministic(self) -> bool:
        return self.scalar is not None or self.D_lip == 0.0


def check_sigma(sigma: SigmaSpec, n_samples: int = 256, seed: int = 0, scale: float = 3.0,
                J: float = 1.0, T: float = 1.0) -> None:
    """Spot-check symmetry, the ellipticity window and the Lipschitz bound.

    Raises :class:`EllipticityError` or :class:`ValidationError` on the first
    violation found among ``n_samples`` random ``(t, x, u, v)``.
    """
    if sigma.scalar is not None:
        return
    rng = np.random.default_rng(seed)
    d = sigma.d
    t = rng.uniform(0.0, T)
    x = rng.uniform(0.0, J, n_samples)
    u = rng.normal(scale=scale, size=(n_samples, d))
    v = u + rng.normal(scale=0.1 * scale, size=(n_samples, d))
    mu = np.asarray(sigma.matrix(t, x, u))
    mv = np.asarray(sigma.matrix(t, x, v))
    if not np.allclose(mu, np.swapaxes(mu, -1, -2), atol=1e-12):
        raise EllipticityError("sigma is not symmetric")
    eig = np.linalg.eigvalsh(mu)
    tol = 1e-9 * max(1.0, sigma.C2)
    if eig.min() < sigma.C1 - tol or eig.max() > sigma.C2 + tol:
        raise EllipticityError(
            f"eigenvalues [{eig.min():.4g}, {eig.max():.4g}] outside [{sigma.C1}, {sigma.C2}]"
        )
    diff = np.linalg.norm(mu - mv, ord=2, axis=(-2, -1))
    dist = np.linalg.norm(u - v, axis=-1)
    if np.any(diff > sigma.D_lip * dist * (1 + 1e-9) + 1e-12):
        ratio = float((diff / np.maximum(dist, 1e-300)).max())
        raise ValidationError(f"Lipschitz ratio {ratio:.4g} exceeds D_lip={sigma.D_lip}")


@dataclass(frozen=True)
class DriftSpec:
    """Bounded drift ``g(t, x, u)``; ``func=None`` with ``value=None`` means zero.

    Also usable as a Girsanov tilt: a tilt is evaluated once per step from
    the state at the start of the step, which keeps it predictable.
    """

    func: Callable | None
    d: int
    bound: float
    value: np.ndarray | None = None
    name: str = "custom"

    @classmethod
    def zero(cls, d: int = 1) -> "DriftSpec":
        return cls(None, d, 0.0, name="zero")

    @classmethod
    def constant(cls, c) -> "DriftSpec":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(None, c.size, float(np.linalg.norm(c)), value=c, name=f"constant({c.tolist()})")

    @classmethod
    def from_function(cls, func: Callable, bound: float, d: int = 1, name: str = "custom") -> "DriftSpec":
        return cls(func, d, float(bound), name=name)

    @property
    def is_zero(self) -> bool:
        return self.func is None and (self.value is None or not np.any(self.value))

    def evaluate(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.func is None:
            if self.value is None:
                return np.zeros_like(u)
            return np.broadcast_to(self.value, u.shape).copy()
        return np.asarray(self.func(t, x, u), dtype=float)

    def start(self, u0: np.ndarray, grid: Grid, sigma: SigmaSpec) -> Callable:
        """Tilt protocol: the per-step evaluator ``(n, t, u) -> f`` for one run."""
        x = grid.x
        return lambda n, t, u: self.evaluate(t, x, u)


@dataclass(frozen=True)
class Field:
    """A ``d``-component profile sampled on the spatial grid, shape ``(n_x, d)``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n_x:
            raise ValueError(f"field shape {v.shape} does not match n_x={self.grid.n_x}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid, d: int = 1) -> "Field":
        return cls(np.zeros((grid.n_x, d)), grid)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, d: int = 1) -> "Field":
        vals = np.asarray(func(grid.x), dtype=float).reshape(grid.n_x, -1)
        if vals.shape[1] == 1 and d > 1:
            vals = np.repeat(vals, d, axis=1)
        return cls(vals, grid)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def sup(self) -> float:
        return float(sup_norm(self.values))


@dataclass(frozen=True)
class PathRecord:
    """Snapshots ``u(t_n, .)`` for ``n = 0..n_t`` with their sup norms."""

    snapshots: np.ndarray = field(repr=False)
    grid: Grid

    @property
    def sup_norms(self) -> np.ndarray:
        return sup_norm(self.snapshots)

    @property
    def sup_norm_running(self) -> float:
        return float(self.sup_norms.max())

    def field(self, n: int) -> Field:
        return Field(self.snapshots[n], self.grid)


class Stepper:
    """Per-mode factors of one exponential Euler step on ``grid``.

    ``noise_filter="semigroup"`` smooths the injected noise by one heat step
    ``exp(-lam dt)``.  ``"exact"`` uses ``sqrt((1 - exp(-2 lam dt)) / (2 lam dt))``,
    the factor that gives each mode the variance of the exact stochastic
    convolution over the step when ``sigma`` is frozen.  Drift uses
    ``(1 - exp(-lam dt)) / (lam dt)``, exact for a frozen drift.
    """

    def __init__(self, grid: Grid, noise_filter: str = "exact"):
        if noise_filter not in NOISE_FILTERS:
            raise ValueError(f"noise_filter must be one of {NOISE_FILTERS}, got {noise_filter!r}")
        self.grid = grid
        self.noise_filter_name = noise_filter
        k = np.arange(grid.n_x // 2 + 1)
        lam = 0.5 * (2.0 * np.pi * k / grid.J) ** 2
        ldt = lam * grid.dt
        self.lam = lam[:, None]
        self.decay = np.exp(-ldt)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            phi1 = np.where(ldt > 0, -np.expm1(-ldt) / ldt, 1.0)
            exact = np.where(ldt > 0, np.sqrt(-np.expm1(-2.0 * ldt) / (2.0 * ldt)), 1.0)
        self.drift_filter = phi1[:, None]
        self.noise_filter = exact[:, None] if noise_filter == "exact" else self.decay

    def rfft(self, u: np.ndarray) -> np.ndarray:
        return sfft.rfft(u, axis=-2)

    def irfft(self, uh: np.ndarray) -> np.ndarray:
        return sfft.irfft(uh, n=self.grid.n_x, axis=-2)

    def laplacian_half(self, u: np.ndarray) -> np.ndarray:
        """``(1/2) u_xx`` computed spectrally."""
        return self.irfft(-self.lam * self.rfft(u))

    def advance(self, u: np.ndarray, t: float, xi: np.ndarray, sigma: SigmaSpec | None,
                drift: DriftSpec | None = None, f: np.ndarray | None = None) -> np.ndarray:
        """One step from ``u(t)`` with cell masses ``xi`` and optional tilt ``f``.

        The tilt enters as a shift of the noise, ``xi + f dt dx``.
        """
        g = self.grid
        x = g.x
        uh = self.decay * self.rfft(u)
        if drift is not None and not drift.is_zero:
            uh += self.drift_filter * self.rfft(drift.evaluate(t, x, u) * g.dt)
        if sigma is not None:
            forcing = xi / g.dx
            if f is not None:
                forcing = forcing + f * g.dt
            uh += self.noise_filter * self.rfft(sigma.apply(t, x, u, forcing))
        return self.irfft(uh)


def _as_batch(u0, grid: Grid, d: int) -> np.ndarray:
    if isinstance(u0, Field):
        u0 = u0.values
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim == 1:
        u0 = u0[:, None]
    if u0.shape[-2:] != (grid.n_x, d):
        raise ValueError(f"initial profile shape {u0.shape} does not match (n_x={grid.n_x}, d={d})")
    return u0


def step(profile: Field, t: float, noise_slice: np.ndarray, sigma: SigmaSpec,
         drift: DriftSpec | None = None, noise_filter: str = "exact",
         step_index: int = 0) -> Field:
    """Advance one profile by one time step of its grid.

    ``noise_slice`` holds the cell masses of the step, shape ``(n_x, d)``.
    """
    stepper = Stepper(profile.grid, noise_filter)
    xi = np.asarray(noise_slice, dtype=float).reshape(profile.grid.n_x, profile.d)
    out = stepper.advance(profile.values, t, xi, sigma, drift)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step_index)
    return Field(out, profile.grid)


@dataclass
class StepState:
    """State after step ``n``: ``u = u(t_n)``, plus the tilt and masses used to get there."""

    n: int
    t: float
    u: np.ndarray
    f: np.ndarray | None
    xi: np.ndarray


def integrate(
    u0,
    noise,
    sigma: SigmaSpec,
    drift: DriftSpec | None = None,
    tilt=None,
    *,
    grid: Grid | None = None,
    noise_filter: str = "exact",
    t0: float = 0.0,
) -> Iterator[StepState]:
    """Yield the state after every step for one path or a batch of paths.

    ``noise`` is a :class:`NoisePath` or an array of masses shaped
    ``(..., n_t, n_x, d)``; the leading axes are independent paths.  The
    tilt, if any, provides ``start(u0, grid, sigma)`` returning an evaluator
    ``(n, t, u) -> f``; its value shifts the noise of step ``n``.
    """
    if isinstance(noise, NoisePath):
        grid = grid or noise.grid
        inc = noise.increments
    else:
        inc = np.asarray(noise, dtype=float)
        if grid is None:
            raise ValueError("grid is required when noise is a raw array")
    d = inc.shape[-1]
    if inc.shape[-3:-1] != (grid.n_t, grid.n_x):
        raise ValueError(f"noise shape {inc.shape} does not match grid ({grid.n_t}, {grid.n_x})")
    if sigma.d != d:
        raise ValueError(f"sigma dimension {sigma.d} differs from noise dimension {d}")
    stepper = Stepper(grid, noise_filter)
    batch = inc.shape[:-3]
    u = np.broadcast_to(_as_batch(u0, grid, d), batch + (grid.n_x, d)).astype(float, copy=True)
    tilt_fn = tilt.start(u, grid, sigma) if tilt is not None else None
    for n in range(grid.n_t):
        t = t0 + n * grid.dt
        xi = inc[..., n, :, :]
        f = tilt_fn(n, t, u) if tilt_fn is not None else None
        u = stepper.advance(u, t, xi, sigma, drift, f)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(n)
        yield StepState(n + 1, t0 + (n + 1) * grid.dt, u, f, xi)


def solve(u0, noise: NoisePath, sigma: SigmaSpec, drift: DriftSpec | None = None,
          tilt=None, noise_filter: str = "exact") -> PathRecord:
    """Full trajectory of one path."""
    grid = noise.grid
    u_init = _as_batch(u0, grid, noise.d)
    snaps = np.empty((grid.n_t + 1, grid.n_x, noise.d))
    snaps[0] = u_init
    for state in integrate(u_init, noise, sigma, drift, tilt, noise_filter=noise_filter):
        snaps[state.n] = state.u
    return PathRecord(snaps, grid)


def solve_frozen_comparison(u0, noise: NoisePath, sigma: SigmaSpec, eps: float,
                            noise_filter: str = "exact"):
    """Clamped field ``v``, its frozen-coefficient Gaussian twin ``v_g`` and ``D = v - v_g``.

    ``v`` uses ``sigma(t, x, f_eps(v))``, ``v_g`` uses ``sigma(t, x, f_eps(u0))``;
    all three are driven by the same masses and ``D`` is integrated by its
    own linear recursion started from zero.
    """
    grid = noise.grid
    d = noise.d
    stepper = Stepper(grid, noise_filter)
    x = grid.x
    v = _as_batch(u0, grid, d).copy()
    frozen = clamp_f_eps(v, eps)
    vg = v.copy()
    D = np.zeros_like(v)
    out = [np.empty((grid.n_t + 1, grid.n_x, d)) for _ in range(3)]
    out[0][0], out[1][0], out[2][0] = v, vg, D
    for n in range(grid.n_t):
        t = n * grid.dt
        forcing = noise.increments[n] / grid.dx
        s_v = sigma.apply(t, x, clamp_f_eps(v, eps), forcing)
        s_g = sigma.apply(t, x, frozen, forcing)
        v = stepper.irfft(stepper.decay * stepper.rfft(v) + stepper.noise_filter * stepper.rfft(s_v))
        vg = stepper.irfft(stepper.decay * stepper.rfft(vg) + stepper.noise_filter * stepper.rfft(s_g))
        D = stepper.irfft(stepper.decay * stepper.rfft(D)
                          + stepper.noise_filter * stepper.rfft(s_v - s_g))
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(D))):
            raise BlowUpError(n)
        out[0][n + 1], out[1][n + 1], out[2][n + 1] = v, vg, D
    return tuple(PathRecord(o, grid) for o in out)


@dataclass(frozen=True)
class TargetPath:
    """Deterministic target ``h(t, x)`` for tube events.

    ``func(t, x)`` returns shape ``(n_x, d)`` (or ``(n_x,)`` when ``d = 1``)
    and ``H`` bounds ``|h|``, ``|h_t|`` and ``|h_xx|``.
    """

    func: Callable
    H: float
    d: int = 1
    name: str = "custom"

    @classmethod
    def zero(cls, d: int = 1) -> "TargetPath":
        return cls(lambda t, x: np.zeros((np.size(x), d)), 0.0, d, name="zero")

    @classmethod
    def stationary(cls, profile: Callable, H: float, d: int = 1, name: str = "stationary") -> "TargetPath":
        return cls(lambda t, x: profile(x), H, d, name=name)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(t, x), dtype=float).reshape(np.size(x), self.d)

    def validate(self, grid: Grid) -> None:
        """Check the ``H`` bound on ``h``, its time secant and its spectral ``h_xx``."""
        stepper = Stepper(grid)
        x = grid.x
        prev = self(0.0, x)
        worst = (sup_norm(prev), 0.0, sup_norm(2.0 * stepper.laplacian_half(prev)))
        for n in range(1, grid.n_t + 1):
            cur = self(n * grid.dt, x)
            worst = (max(worst[0], sup_norm(cur)),
                     max(worst[1], sup_norm((cur - prev) / grid.dt)),
                     max(worst[2], sup_norm(2.0 * stepper.laplacian_half(cur))))
            prev = cur
        names = ("|h|", "|h_t|", "|h_xx|")
        for name, val in zip(names, worst):
            if val > self.H * (1 + 1e-9) + 1e-12:
                raise ValidationError(f"{name} reaches {float(val):.4g} > H={self.H}")


@dataclass(frozen=True)
class ReducedProblem:
    """Zero-start problem for ``w = u - u0 - h + h0``.

    ``g1`` is the drift named in the reduction (``w`` obeys ``w_t = w_xx / 2 - g1 + ...``);
    ``drift`` is ``-g1`` ready for :func:`integrate`.  ``offset(t)`` returns
    ``u0 + h(t) - h0`` so that ``u = w + offset``.
    """

    g1: DriftSpec
    drift: DriftSpec
    sigma1: SigmaSpec
    w0: Field
    offset: Callable


def support_reduction(u0, h: TargetPath, drift: DriftSpec, sigma: SigmaSpec,
                      grid: Grid, validate: bool = True) -> ReducedProblem:
    """Reduce the tube problem around ``h`` to a ball problem for ``w`` started at 0.

    Spatial derivatives are spectral.  The time derivative of ``h`` enters
    through the step-consistent secant ``phi1^{-1} (h(t+dt) - h(t)) / dt``,
    which makes ``u = w + u0 + h - h0`` hold on the grid to rounding.
    """
    if validate:
        h.validate(grid)
    d = sigma.d
    u0v = _as_batch(u0, grid, d)
    stepper = Stepper(grid)
    x = grid.x
    h0 = h(0.0, x)
    base = u0v - h0

    def offset(t):
        return base + h(t, x)

    def correction(t):
        a = offset(t)
        secant = stepper.irfft(stepper.rfft(h(t + grid.dt, x) - h(t, x)) / stepper.drift_filter) / grid.dt
        return stepper.laplacian_half(a) - secant

    def w_drift(t, xx, w):
        u = w + offset(t)
        return drift.evaluate(t, xx, u) + correction(t)

    def g1_func(t, xx, w):
        return -w_drift(t, xx, w)

    corr_bound = max(sup_norm(correction(n * grid.dt)) for n in range(grid.n_t + 1))
    bound = drift.bound + float(corr_bound)
    base_sigma = sigma

    if sigma.scalar is not None:
        sigma1 = sigma
    else:
        def s1(t, xx, w):
            return base_sigma.func(t, xx, w + offset(t))

        sigma1 = SigmaSpec(s1, d, sigma.C1, sigma.C2, sigma.D_lip, name=f"{sigma.name}|shifted")

    if h.H == 0.0 and not np.any(u0v):
        g1 = DriftSpec(None if drift.func is None else (lambda t, xx, w: -drift.evaluate(t, xx, w)),
                       d, drift.bound, value=None if drift.value is None else -drift.value,
                       name=f"-({drift.name})")
        w_d = drift
    else:
        g1 = DriftSpec.from_function(g1_func, bound, d, name="g1")
        w_d = DriftSpec.from_function(w_drift, bound, d, name="-g1")
    return ReducedProblem(g1, w_d, sigma1, Field.zeros(grid, d), offset)
