"""Periodic-box Fourier machinery.

Fields are stored as real-space samples on a uniform grid over ``(0, L)^d``.
Spectral coefficients use the real-to-complex layout of ``numpy.fft.rfftn``
(forward unnormalized, backward divides by the number of samples), so the last
axis only carries non-negative wavenumbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from nspfc.errors import ConfigError, GridMismatchError


def dealias_cutoff(n: int, fraction: float) -> int:
    """Largest retained mode index per axis for an ``n``-point grid."""
    return int(np.floor(fraction * (n // 2) + 1e-12))


def axis_wavenumbers(n: int, box_length: float = 1.0) -> np.ndarray:
    """DFT wavenumbers along one axis, ``2*pi/L * {0, 1, ..., n/2-1, -n/2, ..., -1}``."""
    return 2 * np.pi / box_length * np.fft.fftfreq(n, d=1.0 / n)


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n: int
    box_length: float = 1.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ConfigError("box_length must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ConfigError("dealias_fraction must lie in (0,1]")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def cell_count(self) -> int:
        return self.n**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def dx(self) -> float:
        return self.box_length / self.n

    @property
    def cutoff(self) -> int:
        return dealias_cutoff(self.n, self.dealias_fraction)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def wavenumbers(self) -> np.ndarray:
        return axis_wavenumbers(self.n, self.box_length)

    def coordinates(self) -> list[np.ndarray]:
        x = np.arange(self.n) * self.dx
        return np.meshgrid(*([x] * self.dim), indexing="ij")


@dataclass(frozen=True, eq=False)
class Tables:
    """Spectral multiplier tables, indexed like ``rfftn`` coefficient arrays.

    ``k`` holds the component wavenumbers with the Nyquist index zeroed (used
    for odd-order derivatives); ``k2``, ``k4``, ``k6`` use the true wavenumbers.
    ``weights`` counts each stored coefficient together with its implicit
    Hermitian partner, for Parseval sums.
    """

    grid: GridSpec
    k: tuple[np.ndarray, ...]
    k2: np.ndarray
    k4: np.ndarray
    k6: np.ndarray
    mask: np.ndarray
    index: tuple[np.ndarray, ...]
    weights: np.ndarray
    solenoidal: np.ndarray


@lru_cache(maxsize=32)
def build_tables(grid: GridSpec) -> Tables:
    n, d = grid.n, grid.dim
    scale = 2 * np.pi / grid.box_length
    full = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    half = np.arange(n // 2 + 1)
    per_axis = [full] * (d - 1) + [half]

    index, k, ktrue = [], [], []
    for ax, j in enumerate(per_axis):
        shape = [1] * d
        shape[ax] = j.size
        j = j.reshape(shape)
        index.append(j)
        ktrue.append(scale * j.astype(float))
        k.append(np.where(np.abs(j) == n // 2, 0.0, scale * j))
    k2 = sum(kk**2 for kk in ktrue)
    k2 = np.broadcast_to(k2, grid.spectral_shape).copy()

    cut = grid.cutoff
    mask = np.ones(grid.spectral_shape, dtype=bool)
    for j in index:
        mask &= np.abs(j) <= cut

    weights = np.full(grid.spectral_shape, 2.0)
    weights[..., 0] = 1.0
    weights[..., n // 2] = 1.0

    # modes the Leray projector keeps: not the mean, not on a Nyquist plane
    solenoidal = k2 > 0
    for j in index:
        solenoidal &= np.abs(j) != n // 2

    for a in (k2, mask, weights, solenoidal):
        a.setflags(write=False)
    return Tables(
        grid=grid,
        k=tuple(k),
        k2=k2,
        k4=k2**2,
        k6=k2**3,
        mask=mask,
        index=tuple(index),
        weights=weights,
        solenoidal=solenoidal,
    )


def forward(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.rfftn(values, axes=grid.axes)


def backward(coef: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.irfftn(coef, s=grid.shape, axes=grid.axes)


class ScalarField:
    """Real samples of a periodic scalar on ``grid``; ``spectral()`` transforms."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatchError(f"values of shape {values.shape} do not fit grid {grid.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def from_spectral(cls, grid: GridSpec, coef: np.ndarray) -> ScalarField:
        return cls(grid, backward(coef, grid))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(c)))

    def spectral(self) -> np.ndarray:
        return forward(self.values, self.grid)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def __repr__(self):
        return f"ScalarField(n={self.grid.n}, dim={self.grid.dim}, mean={self.mean():.6g})"


class VectorField:
    """``dim`` scalar components stacked along a leading axis."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.dim,) + grid.shape:
            raise GridMismatchError(f"values of shape {values.shape} do not fit grid {grid.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def from_spectral(cls, grid: GridSpec, coef: np.ndarray) -> VectorField:
        return cls(grid, backward(coef, grid))

    @classmethod
    def zeros(cls, grid: GridSpec) -> VectorField:
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    @classmethod
    def from_components(cls, comps: Sequence[ScalarField]) -> VectorField:
        grid = comps[0].grid
        _check_same_grid(*comps)
        return cls(grid, np.stack([c.values for c in comps]))

    @property
    def components(self) -> list[ScalarField]:
        return [ScalarField(self.grid, v) for v in self.values]

    def spectral(self) -> np.ndarray:
        return forward(self.values, self.grid)

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=tuple(range(1, self.grid.dim + 1)))


def _check_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


@dataclass(frozen=True, eq=False)
class Multiplier:
    """A diagonal spectral operator bound to a grid."""

    grid: GridSpec
    symbol: np.ndarray
    name: str = ""


def laplacian(grid: GridSpec) -> Multiplier:
    return Multiplier(grid, -build_tables(grid).k2, "laplacian")


def bilaplacian(grid: GridSpec) -> Multiplier:
    return Multiplier(grid, build_tables(grid).k4, "bilaplacian")


def sh_operator(grid: GridSpec) -> Multiplier:
    """``Δ² + 2Δ``; its symbol ``|k|^4 - 2|k|^2`` vanishes on constants."""
    t = build_tables(grid)
    return Multiplier(grid, t.k4 - 2 * t.k2, "sh_operator")


def partial(grid: GridSpec, axis: int) -> Multiplier:
    return Multiplier(grid, 1j * build_tables(grid).k[axis], f"d/dx{axis}")


def apply_multiplier(field: ScalarField, op: Multiplier) -> ScalarField:
    if op.grid != field.grid:
        raise GridMismatchError(f"multiplier built for {op.grid}, field lives on {field.grid}")
    return ScalarField.from_spectral(field.grid, op.symbol * field.spectral())


def dealias(field: ScalarField) -> ScalarField:
    t = build_tables(field.grid)
    return ScalarField.from_spectral(field.grid, np.where(t.mask, field.spectral(), 0))


# Array-level kernels shared by the model and the integrator.


def grad_hat(coef: np.ndarray, tables: Tables) -> np.ndarray:
    return np.stack([1j * k * coef for k in tables.k])


def div_hat(coefs: np.ndarray, tables: Tables) -> np.ndarray:
    return sum(1j * k * c for k, c in zip(tables.k, coefs))


def project_hat(coefs: np.ndarray, tables: Tables) -> np.ndarray:
    """Apply ``I - k k^T/|k|^2`` per mode; the mean mode is zeroed.

    Modes on a Nyquist plane are zeroed as well: the odd-derivative tables
    carry no information there, so no divergence constraint can be imposed.
    """
    keep = tables.solenoidal
    k2 = np.where(keep, tables.k2, 1.0)
    kdotv = sum(k * c for k, c in zip(tables.k, coefs))
    return np.stack([np.where(keep, c - k * kdotv / k2, 0) for k, c in zip(tables.k, coefs)])


def leray_project(v: VectorField) -> VectorField:
    t = build_tables(v.grid)
    return VectorField.from_spectral(v.grid, project_hat(v.spectral(), t))


def divergence(v: VectorField) -> ScalarField:
    t = build_tables(v.grid)
    return ScalarField.from_spectral(v.grid, div_hat(v.spectral(), t))


def gradient(f: ScalarField) -> VectorField:
    t = build_tables(f.grid)
    return VectorField.from_spectral(f.grid, grad_hat(f.spectral(), t))


def velocity_gradient(v: VectorField) -> np.ndarray:
    """``G[i, j] = d v_i / d x_j`` sampled on the grid."""
    t = build_tables(v.grid)
    vh = v.spectral()
    return np.stack([backward(grad_hat(c, t), v.grid) for c in vh])


def strain_rate(v: VectorField) -> np.ndarray:
    g = velocity_gradient(v)
    return 0.5 * (g + np.swapaxes(g, 0, 1))


def inner(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    """Grid quadrature of ``a·b`` summed over any leading component axes."""
    return float(np.sum(a * b) * grid.volume / grid.cell_count)


def l2_norm(values: np.ndarray, grid: GridSpec) -> float:
    return np.sqrt(inner(values, values, grid))


def spectral_l2_norm(coef: np.ndarray, grid: GridSpec) -> float:
    """L2 norm from ``rfftn`` coefficients (Parseval)."""
    t = build_tables(grid)
    s = np.sum(t.weights * np.abs(coef) ** 2, axis=tuple(range(-grid.dim, 0)))
    return float(np.sqrt(np.sum(s) * grid.volume / grid.cell_count**2))


def seminorm_sq(coef: np.ndarray, grid: GridSpec, s: float) -> float:
    """``sum |k|^{2s} |c_k|^2`` scaled to the continuous ``||D^s w||^2``."""
    t = build_tables(grid)
    w = t.weights * t.k2**s if s else t.weights
    tot = np.sum(w * np.abs(coef) ** 2)
    return float(tot * grid.volume / grid.cell_count**2)
