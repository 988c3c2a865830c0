"""Discrete space-time white noise on ``[0, T] x [0, J)``.

Every path owns a Philox stream keyed by a 64-bit seed, so the increments of
path ``i`` do not depend on which worker draws them or in which order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "NoisePath",
    "path_seed",
    "sample_noise",
    "sample_noise_batch",
    "rescale_noise",
    "coarsen_noise",
    "dump_noise",
    "load_noise",
]

_HEADER = struct.Struct("<ddqqqQ")


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid; spatial indices wrap modulo ``n_x``."""

    J: float
    T: float
    n_x: int
    n_t: int

    def __post_init__(self):
        if self.n_x < 2 or self.n_t < 1:
            raise ValueError(f"need n_x >= 2 and n_t >= 1, got n_x={self.n_x}, n_t={self.n_t}")
        if not (self.J > 0 and self.T > 0):
            raise ValueError(f"need J > 0 and T > 0, got J={self.J}, T={self.T}")

    @property
    def dx(self) -> float:
        return self.J / self.n_x

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt

    def with_horizon(self, n_t: int) -> "Grid":
        """Same cell size, ``n_t`` steps."""
        return Grid(self.J, self.dt * n_t, self.n_x, n_t)


@dataclass(frozen=True)
class NoisePath:
    """White-noise cell masses ``W(cell)`` of one path, shape ``(n_t, n_x, d)``."""

    grid: Grid
    increments: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 3 or inc.shape[:2] != (self.grid.n_t, self.grid.n_x):
            raise ValueError(
                f"increments shape {inc.shape} does not match grid "
                f"({self.grid.n_t}, {self.grid.n_x}, d)"
            )
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def d(self) -> int:
        return self.increments.shape[2]


def path_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit key of path ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _draw(grid: Grid, d: int, seed: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=seed))
    z = gen.standard_normal((grid.n_t, grid.n_x, d))
    z *= np.sqrt(grid.dt * grid.dx)
    return z


def sample_noise(grid: Grid, d: int, seed: int) -> NoisePath:
    """Cell increments i.i.d. ``Normal(0, dt dx)``, deterministic in ``seed``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got d={d}")
    return NoisePath(grid, _draw(grid, d, seed), seed)


def sample_noise_batch(grid: Grid, d: int, master_seed: int, indices) -> np.ndarray:
    """Stacked increments of paths ``indices``, shape ``(len(indices), n_t, n_x, d)``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got d={d}")
    indices = list(indices)
    out = np.empty((len(indices), grid.n_t, grid.n_x, d))
    for b, i in enumerate(indices):
        out[b] = _draw(grid, d, path_seed(master_seed, i))
    return out


def rescale_noise(path: NoisePath, J: float) -> NoisePath:
    """Map noise on ``[0, J^2 T'] x [0, L)`` to ``[0, T'] x [0, L/J)``.

    Each cell keeps its index and its mass is multiplied by ``J^{-3/2}``, so
    the target cells again carry the white-noise variance of their area.
    """
    if not J > 0:
        raise ValueError(f"scale factor must be positive, got {J}")
    g = path.grid
    target = Grid(g.J / J, g.T / J**2, g.n_x, g.n_t)
    return NoisePath(target, path.increments * J**-1.5, path.seed)


def coarsen_noise(path: NoisePath, factor_t: int = 2, factor_x: int = 2) -> NoisePath:
    """Merge blocks of ``factor_t x factor_x`` cells by summing their masses."""
    g = path.grid
    if g.n_t % factor_t or g.n_x % factor_x:
        raise ValueError(f"grid ({g.n_t}, {g.n_x}) not divisible by ({factor_t}, {factor_x})")
    inc = path.increments.reshape(g.n_t // factor_t, factor_t, g.n_x // factor_x, factor_x, -1)
    coarse = Grid(g.J, g.T, g.n_x // factor_x, g.n_t // factor_t)
    return NoisePath(coarse, inc.sum(axis=(1, 3)), path.seed)


def dump_noise(path: NoisePath, target) -> None:
    """Write ``path`` as a little-endian header plus row-major float64 increments."""
    g = path.grid
    header = _HEADER.pack(g.J, g.T, g.n_x, g.n_t, path.d, path.seed & 0xFFFFFFFFFFFFFFFF)
    body = np.ascontiguousarray(path.increments, dtype="<f8").tobytes()
    Path(target).write_bytes(header + body)


def load_noise(source) -> NoisePath:
    """Inverse of :func:`dump_noise`."""
    raw = Path(source).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("noise file shorter than its header")
    J, T, n_x, n_t, d, seed = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 8 * n_x * n_t * d
    if len(raw) != expected:
        raise ValueError(f"noise file has {len(raw)} bytes, header implies {expected}")
    inc = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n_t, n_x, d)
    return NoisePath(Grid(J, T, n_x, n_t), inc.astype(float), seed)
