"""Heat kernel of ``d/dt = (1/2) d^2/dx^2`` on the circle ``[0, J)``.

Two series representations are provided: the image (wrapped Gaussian) sum,
which converges fastest for small ``t / J**2``, and the Fourier series, which
converges fastest for large ``t / J**2``.  :func:`heat_kernel` picks the
better one automatically and is vectorized over ``t`` and ``x``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

__all__ = [
    "KernelPoint",
    "kernel_image_sum",
    "kernel_fourier_sum",
    "heat_kernel",
    "wrap_star",
    "fit_kernel_constant",
    "kernel_constant",
    "kernel_upper_bound",
    "mode_decay",
    "kernel_convolve",
    "LemmaGIntegrals",
    "lemma_g_integrals",
]

# relative cutoff for the adaptive series
SERIES_RTOL = 1e-15
# image sum is used below this value of t / J**2, Fourier sum above
SERIES_SWITCH = 1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class KernelPoint:
    """A space-time point ``(t, x)`` on the circle of length ``J``."""

    t: float
    x: float
    J: float = 1.0

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"circle length must be positive, got J={self.J}")
        if not np.isfinite(self.t) or not np.isfinite(self.x):
            raise ValueError("t and x must be finite")

    @property
    def reduced_x(self) -> float:
        return float(np.mod(self.x, self.J))


def _check_time(t: float) -> None:
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got t={t}")


def kernel_image_sum(p: KernelPoint, truncation: int | None = None) -> float:
    """Wrapped Gaussian ``sum_n (2 pi t)^{-1/2} exp(-(x + nJ)^2 / 2t)``.

    With ``truncation=None`` the sum over ``|n|`` grows until a new pair of
    images adds less than ``SERIES_RTOL`` of the running total.
    """
    _check_time(p.t)
    t, J = p.t, p.J
    x = p.reduced_x
    norm = 1.0 / math.sqrt(2.0 * math.pi * t)
    total = norm * math.exp(-x * x / (2.0 * t))
    n = 0
    while True:
        n += 1
        if truncation is not None and n > truncation:
            break
        term = norm * (math.exp(-(x + n * J) ** 2 / (2.0 * t))
                       + math.exp(-(x - n * J) ** 2 / (2.0 * t)))
        total += term
        if truncation is None and term <= SERIES_RTOL * total:
            break
    return total


def kernel_fourier_sum(p: KernelPoint, truncation: int | None = None) -> float:
    """Fourier series ``(1/J) sum_k exp(-(2 pi k / J)^2 t / 2) cos(2 pi k x / J)``."""
    _check_time(p.t)
    t, J = p.t, p.J
    x = p.reduced_x
    total = 1.0
    k = 0
    while True:
        k += 1
        if truncation is not None and k > truncation:
            break
        decay = math.exp(-((2.0 * math.pi * k / J) ** 2) * t / 2.0)
        total += 2.0 * decay * math.cos(2.0 * math.pi * k * x / J)
        if truncation is None and decay <= SERIES_RTOL * abs(total):
            break
    return total / J


def heat_kernel(t, x, J: float = 1.0) -> np.ndarray:
    """Vectorized heat kernel ``G^{(J)}(t, x)``.

    ``t`` and ``x`` broadcast against each other; every ``t`` must be
    positive.  Each entry is summed with the series that converges fastest
    at its ``t / J**2``.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("heat kernel needs t > 0")
    t, x = np.broadcast_arrays(t, x)
    x = np.mod(x, J)
    out = np.empty(t.shape)
    tau = t / J**2
    small = tau <= SERIES_SWITCH
    if np.any(small):
        ts, xs = t[small], x[small]
        # images with (nJ - J)^2 / 2t > 75 contribute below 1e-32 relative
        n_max = int(np.ceil(np.sqrt(150.0 * ts.max()) / J)) + 1
        n = np.arange(-n_max, n_max + 1)
        arg = -((xs[..., None] + n * J) ** 2) / (2.0 * ts[..., None])
        out[small] = np.exp(arg).sum(axis=-1) / np.sqrt(2.0 * np.pi * ts)
    if np.any(~small):
        tl, xl = t[~small], x[~small]
        k_max = int(np.ceil(J * np.sqrt(2.0 * 75.0 / tl.min()) / (2.0 * np.pi))) + 1
        k = np.arange(1, k_max + 1)
        decay = np.exp(-((2.0 * np.pi * k / J) ** 2) * tl[..., None] / 2.0)
        series = 1.0 + 2.0 * (decay * np.cos(2.0 * np.pi * k * xl[..., None] / J)).sum(axis=-1)
        out[~small] = series / J
    return out


def wrap_star(x: float, J: float = 1.0) -> float:
    """Signed representative of ``x`` in ``(-J/2, J/2]``."""
    if not 0.0 <= x <= J:
        raise ValueError(f"x must lie in [0, J], got x={x}, J={J}")
    return x if x <= J / 2.0 else x - J


def fit_kernel_constant(
    t_values=None, n_x: int = 401
) -> float:
    """Smallest ``C`` with ``G(t,x) <= C (2 pi t)^{-1/2} exp(-x_*^2 / 2t)`` on a grid.

    The default grid is 81 log-spaced times in ``[1e-4, 1]`` and ``n_x``
    points of ``[0, 1)``.
    """
    if t_values is None:
        t_values = np.logspace(-4, 0, 81)
    t = np.asarray(t_values, dtype=float)[:, None, None]
    x = np.linspace(0.0, 1.0, n_x, endpoint=False)[None, :, None]
    xs = np.where(x <= 0.5, x, x - 1.0)
    # image sum divided by its n = 0 term; stays finite where G itself underflows
    n_max = int(np.ceil(np.sqrt(150.0 * float(t.max())))) + 1
    n = np.arange(-n_max, n_max + 1)[None, None, :]
    ratio = np.exp(-((xs + n) ** 2 - xs**2) / (2.0 * t)).sum(axis=-1)
    return float(ratio.max())


@functools.lru_cache(maxsize=1)
def kernel_constant() -> float:
    """Fitted constant of :func:`kernel_upper_bound` (cached)."""
    return fit_kernel_constant()


def kernel_upper_bound(p: KernelPoint) -> float:
    """Gaussian envelope ``C_G (2 pi t)^{-1/2} exp(-x_*^2 / 2t)`` for ``t <= 1``.

    Works on the unit circle; other circle lengths are mapped there by the
    scaling ``G^{(1)}(t/J^2, x/J) = J G^{(J)}(t, x)``.
    """
    _check_time(p.t)
    tau = p.t / p.J**2
    if tau > 1.0:
        raise ValueError(f"envelope only holds for t <= J^2, got t={p.t}, J={p.J}")
    xs = wrap_star(p.reduced_x / p.J, 1.0)
    unit = kernel_constant() * math.exp(-xs * xs / (2.0 * tau)) / math.sqrt(2.0 * math.pi * tau)
    return unit / p.J


def mode_decay(n_x: int, J: float, t: float) -> np.ndarray:
    """Multipliers ``exp(-(2 pi k / J)^2 t / 2)`` for the ``rfft`` modes of an ``n_x`` grid."""
    k = np.arange(n_x // 2 + 1)
    return np.exp(-((2.0 * np.pi * k / J) ** 2) * t / 2.0)


def kernel_convolve(profile, t: float, J: float = 1.0, axis: int = 0) -> np.ndarray:
    """Apply the heat semigroup ``G_t`` to samples on a uniform circular grid.

    ``profile`` holds values at ``x_m = m J / n_x`` along ``axis`` (any other
    axes, e.g. vector components or paths, are carried along).  The action
    is exact on the grid's Fourier modes, so ``t = 0`` is the identity,
    constants are preserved and ``G_s G_t = G_{s+t}`` to rounding.
    """
    from .solver import Field

    field = None
    if isinstance(profile, Field):
        field = profile
        J = profile.grid.J
        values = profile.values
        axis = 0
    else:
        values = np.asarray(profile, dtype=float)
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        out = values.copy()
    else:
        n_x = values.shape[axis]
        shape = [1] * values.ndim
        shape[axis] = n_x // 2 + 1
        mult = mode_decay(n_x, J, t).reshape(shape)
        out = sfft.irfft(sfft.rfft(values, axis=axis) * mult, n=n_x, axis=axis)
    if field is not None:
        return Field(out, field.grid)
    return out


@dataclass(frozen=True)
class LemmaGIntegrals:
    """Left-hand sides of the three heat-kernel increment integrals."""

    space_increment: float
    tail_square: float
    time_increment: float


def _mode_count(h: float) -> int:
    # terms exp(-(2 pi k)^2 h) below 1e-30 are dropped
    return int(np.ceil(math.sqrt(70.0 / max(h, 1e-300)) / (2.0 * math.pi))) + 2


def lemma_g_integrals(s: float, t: float, x: float, y: float) -> LemmaGIntegrals:
    """Closed-form mode sums of the three squared-kernel integrals on the unit circle.

    ``space_increment``: ``int_0^t int_0^1 [G(r, x-z) - G(r, y-z)]^2 dz dr``
    ``tail_square``: ``int_s^t int_0^1 G(t-r, z)^2 dz dr``
    ``time_increment``: ``int_0^s int_0^1 [G(t-r, z) - G(s-r, z)]^2 dz dr``

    Parseval turns each into a sum over Fourier modes that is integrated in
    time exactly.  The slowly converging part of the first sum is replaced
    by ``sum_k (1 - cos 2 pi k D) / (2 pi k)^2 = D (1 - D) / 4``.
    """
    if not (0.0 <= s < t <= 1.0):
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    delta = abs(x - y) % 1.0
    h = t - s

    k = np.arange(1, _mode_count(t) + 1)
    a = (2.0 * np.pi * k) ** 2
    one_minus_cos = 1.0 - np.cos(2.0 * np.pi * k * delta)
    space = delta * (1.0 - delta) - 4.0 * np.sum(np.exp(-a * t) * one_minus_cos / a)
    space = max(space, 0.0)

    k = np.arange(1, _mode_count(h) + 1)
    a = (2.0 * np.pi * k) ** 2
    # sum_k 1/a = 1/24
    tail = h + 2.0 * (1.0 / 24.0 - np.sum(np.exp(-a * h) / a))

    if s == 0.0:
        time_inc = 0.0
    else:
        k = np.arange(1, _mode_count(min(h / 2.0, s)) + 1)
        a = (2.0 * np.pi * k) ** 2
        # (1 - e^{-as})(1 - e^{-ah/2})^2 expanded; the constant term sums to 1/24
        decaying = (-2.0 * np.exp(-a * h / 2.0) + np.exp(-a * h) - np.exp(-a * s)
                    + 2.0 * np.exp(-a * (s + h / 2.0)) - np.exp(-a * (s + h)))
        time_inc = 2.0 * (1.0 / 24.0 + np.sum(decaying / a))
    return LemmaGIntegrals(float(space), float(tail), float(time_inc))
