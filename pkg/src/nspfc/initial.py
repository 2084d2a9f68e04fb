"""Seeded, resolution-independent initial data.

Random draws come from the SplitMix64 sequence started at ``seed``: the i-th
draw (i = 0, 1, ...) is ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15 mod 2^64)``
with the standard SplitMix64 finalizer, mapped to ``[0, 1)`` as
``(x >> 11) * 2^-53``.

Noise fields are trigonometric polynomials. Mode index vectors ``j`` are
visited in lexicographic order over ``[-C, C]^d`` (first axis slowest); every
``j`` with ``0 < |j| <= C`` consumes two draws per component ``(a, b)`` and
contributes ``(2a-1) + i(2b-1)`` times ``exp(2πi j·x/L)``; the field is the
real part of the sum. Indices outside the ball still consume their draws, so
the stream layout depends only on ``C`` and ``d``. Amplitudes are
root-mean-square values, which are computed from the coefficients, so the same
seed yields the same function on any grid that resolves the cutoff.
"""

from __future__ import annotations

import itertools

import numpy as np

from nspfc.errors import ConfigError
from nspfc.spectral import GridSpec, ScalarField, VectorField, backward, build_tables, forward, project_hat

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 seeded with ``seed`` (uint64)."""
    i = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + i * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform(seed: int, count: int) -> np.ndarray:
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _noise_coefficients(grid: GridSpec, seed: int, cutoff: float, ncomp: int) -> np.ndarray:
    """Full complex ``fftn`` coefficient arrays (unit-normalized) for ``ncomp`` components."""
    c = int(np.floor(cutoff))
    if 2 * c >= grid.n:
        raise ConfigError(f"noise cutoff {cutoff} not resolved by n={grid.n}")
    span = range(-c, c + 1)
    idx = list(itertools.product(span, repeat=grid.dim))
    draws = uniform(seed, 2 * ncomp * len(idx)).reshape(len(idx), ncomp, 2) * 2.0 - 1.0
    coef = np.zeros((ncomp,) + grid.shape, dtype=complex)
    for p, j in enumerate(idx):
        r2 = sum(x * x for x in j)
        if r2 == 0 or r2 > cutoff * cutoff:
            continue
        pos = tuple(x % grid.n for x in j)
        for q in range(ncomp):
            coef[(q,) + pos] += (draws[p, q, 0] + 1j * draws[p, q, 1]) * grid.cell_count
    return coef


def _real_part(coef: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.ifftn(coef, axes=grid.axes).real


def _rms(values: np.ndarray, grid: GridSpec) -> float:
    """Root-mean-square from coefficients (exact for resolved trigonometric polynomials)."""
    t = build_tables(grid)
    c = forward(values, grid)
    s = np.sum(t.weights * np.abs(c) ** 2)
    return float(np.sqrt(s) / grid.cell_count)


def constant_plus_noise(grid: GridSpec, mean: float, amplitude: float, seed: int, cutoff: float) -> ScalarField:
    vals = _real_part(_noise_coefficients(grid, seed, cutoff, 1)[0], grid)
    rms = _rms(vals, grid)
    if rms > 0:
        vals *= amplitude / rms
    return ScalarField(grid, vals + mean)


def single_mode(grid: GridSpec, k_index, amplitude: float, mean: float = 0.0) -> ScalarField:
    """``mean + amplitude * cos(2π j·x / L)``."""
    j = tuple(int(x) for x in k_index)
    if len(j) != grid.dim:
        raise ConfigError(f"k_index needs {grid.dim} entries")
    xs = grid.coordinates()
    phase = sum(2 * np.pi * ji * x / grid.box_length for ji, x in zip(j, xs))
    return ScalarField(grid, mean + amplitude * np.cos(phase))


def random_solenoidal(grid: GridSpec, amplitude: float, seed: int, cutoff: float) -> VectorField:
    """Divergence-free, zero-mean noise with RMS speed ``amplitude``."""
    t = build_tables(grid)
    comps = _real_part(_noise_coefficients(grid, seed, cutoff, grid.dim), grid)
    vh = project_hat(forward(comps, grid), t)
    vals = backward(vh, grid)
    rms = np.sqrt(sum(_rms(v, grid) ** 2 for v in vals))
    if rms > 0:
        vh *= amplitude / rms
    return VectorField.from_spectral(grid, vh)
