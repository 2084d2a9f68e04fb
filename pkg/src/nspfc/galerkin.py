"""Faedo-Galerkin reference system on a truncated trigonometric basis.

Velocity basis: ``e cos(k·x)``, ``e sin(k·x)`` for each retained wavevector
``k`` (one per ``±k`` pair) and each unit ``e ⊥ k``; these are Stokes
eigenfunctions, divergence-free and mean-free. Scalar basis: ``1``,
``cos(k·x)``, ``sin(k·x)``, eigenfunctions of ``Δ² + 2Δ``. Retained
wavevectors are ``|j_i| <= n_modes`` per axis, ordered by shell ``|j|²`` and
lexicographically within a shell.

Every Galerkin product is assembled by direct quadrature of basis-function
products on a uniform grid with ``4 n_modes + 2`` points per axis, which
integrates all polynomial terms exactly. Nothing here goes through the
pseudo-spectral solver's kernels.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from nspfc.errors import BlowUpError, ConfigError, GridMismatchError
from nspfc.model import PhysParams, State, f_pointwise, potential_F
from nspfc.spectral import GridSpec, ScalarField, VectorField

MAX_MODES = 8


def retained_wavevectors(dim: int, n_modes: int) -> list[tuple[int, ...]]:
    """One representative of each ``±j`` pair with ``0 < max|j_i| <= n_modes``."""
    half = []
    for j in itertools.product(range(-n_modes, n_modes + 1), repeat=dim):
        nz = next((x for x in j if x != 0), 0)
        if nz > 0:
            half.append(j)
    return sorted(half, key=lambda j: (sum(x * x for x in j), j))


def _orthonormal_complement(k: np.ndarray) -> list[np.ndarray]:
    k = k / np.linalg.norm(k)
    if k.size == 2:
        return [np.array([-k[1], k[0]])]
    a = np.eye(3)[int(np.argmin(np.abs(k)))]
    e1 = np.cross(k, a)
    e1 /= np.linalg.norm(e1)
    return [e1, np.cross(k, e1)]


@dataclass
class Basis:
    """Basis functions and derivatives sampled at a set of points."""

    rho: np.ndarray  # (P, nb)
    grad_rho: np.ndarray  # (d, P, nb)
    w: np.ndarray  # (d, P, na)
    grad_w: np.ndarray  # (d, d, P, na), grad_w[i, l] = d_l w_i


def _evaluate_basis(points: np.ndarray, kvecs: list[np.ndarray], dirs: list[list[np.ndarray]]) -> Basis:
    d, P = points.shape
    rho = [np.ones(P)]
    grad_rho = [np.zeros((d, P))]
    w, grad_w = [], []
    for k, es in zip(kvecs, dirs):
        ph = k @ points
        c, s = np.cos(ph), np.sin(ph)
        rho += [c, s]
        grad_rho += [-k[:, None] * s, k[:, None] * c]
        for e in es:
            w += [e[:, None] * c, e[:, None] * s]
            grad_w += [-np.einsum("i,l,p->ilp", e, k, s), np.einsum("i,l,p->ilp", e, k, c)]
    return Basis(
        rho=np.stack(rho, axis=-1),
        grad_rho=np.stack(grad_rho, axis=-1),
        w=np.stack(w, axis=-1) if w else np.zeros((d, P, 0)),
        grad_w=np.stack(grad_w, axis=-1) if grad_w else np.zeros((d, d, P, 0)),
    )


def _grid_points(dim: int, n: int, length: float) -> np.ndarray:
    x = np.arange(n) * (length / n)
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh])


@dataclass
class GalerkinSystem:
    n_modes: int
    params: PhysParams
    grid: GridSpec
    wavevectors: list
    quad_points: int
    basis: Basis
    kvecs: list
    dirs: list
    k2: np.ndarray
    eig_phi: np.ndarray
    mass_phi: np.ndarray
    mass_u: np.ndarray
    a0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    b0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    evolve_velocity: bool = True
    _ops: tuple | None = field(default=None, repr=False)
    _kmat: np.ndarray | None = field(default=None, repr=False)
    _emat: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def na(self) -> int:
        return self.mass_u.size

    @property
    def nb(self) -> int:
        return self.mass_phi.size

    @property
    def weight(self) -> float:
        return self.grid.volume / self.quad_points**self.dim

    def split(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return y[: self.na], y[self.na :]

    # --- fields at quadrature points ---
    #
    # Every basis function is a constant vector times cos(k·x) or sin(k·x), so
    # all fields and first derivatives are ``T @ Z`` with ``T = [C S]`` the
    # cosine/sine table at the quadrature points and ``Z`` columns of
    # coefficients; Galerkin tests are ``T.T @ Q`` followed by the matching
    # linear recombination. The coefficient-to-``Z`` and test-to-coefficient
    # maps are linear and tabulated once as matrices.

    def _coef_columns(self, y):
        """``Z`` with columns ``φ - <φ>``, ``∂_l φ``, ``u_i``, ``∂_l u_i``."""
        a, b = self.split(y)
        K, E = self._kmat, self._emat
        d, nk = self.dim, K.shape[0]
        bc, bs = b[1::2], b[2::2]
        ac = a.reshape(nk, d - 1, 2)
        al = np.einsum("ke,kei->ki", ac[..., 0], E)
        be = np.einsum("ke,kei->ki", ac[..., 1], E)
        cols = [np.concatenate([bc, bs])]
        cols += [np.concatenate([K[:, l] * bs, -K[:, l] * bc]) for l in range(d)]
        cols += [np.concatenate([al[:, i], be[:, i]]) for i in range(d)]
        cols += [np.concatenate([K[:, l] * be[:, i], -K[:, l] * al[:, i]]) for i in range(d) for l in range(d)]
        return np.stack(cols, axis=1)

    def _gradient_columns(self, c):
        K = self._kmat
        cc, cs = c[1::2], c[2::2]
        return np.stack([np.concatenate([K[:, l] * cs, -K[:, l] * cc]) for l in range(self.dim)], axis=1)

    def _tests(self, G):
        """Galerkin tests from ``G = T.T @ [vec, ten, adv, flux]`` (constant mode excluded)."""
        K, E = self._kmat, self._emat
        d, nk = self.dim, K.shape[0]
        Gc, Gs = G[:nk], G[nk:]
        tc = Gc[:, :d] - np.einsum("kl,kil->ki", K, Gs[:, d : d + d * d].reshape(nk, d, d))
        ts = Gs[:, :d] + np.einsum("kl,kil->ki", K, Gc[:, d : d + d * d].reshape(nk, d, d))
        da = np.stack([np.einsum("kei,ki->ke", E, tc), np.einsum("kei,ki->ke", E, ts)], axis=-1).ravel()
        j = d + d * d
        db = np.zeros(self.nb)
        db[1::2] = Gc[:, j] - np.einsum("kl,kl->k", K, Gs[:, j + 1 :])
        db[2::2] = Gs[:, j] + np.einsum("kl,kl->k", K, Gc[:, j + 1 :])
        return np.concatenate([da, db])

    def _tables(self):
        """Tabulate the linear maps once, laid out for row-major field blocks."""
        if self._ops is None:
            B = self.basis
            d = self.dim
            nk = len(self.kvecs)
            self._kmat = np.array(self.kvecs).reshape(nk, d)
            self._emat = np.array(self.dirs).reshape(nk, d - 1, d)
            trig = np.hstack([B.rho[:, 1::2], B.rho[:, 2::2]])
            n = self.na + self.nb
            m = 1 + 2 * d + d * d

            def zcols(y):
                return self._coef_columns(y).T.ravel()

            zmap = np.stack([zcols(e) for e in np.eye(n)], axis=1)
            gmap = np.stack([self._gradient_columns(c).T.ravel() for c in np.eye(self.nb)], axis=1)
            m2 = 2 * d + d * d + 1
            eye = np.eye(m2 * 2 * nk)
            tmap = np.stack([self._tests(eye[j].reshape(m2, 2 * nk).T) for j in range(m2 * 2 * nk)], axis=1)
            scale = np.concatenate([self.weight / self.mass_u, self.weight / self.mass_phi])
            self._ops = (
                np.ascontiguousarray(trig.T),
                sparse.csr_matrix(zmap),
                gmap,
                sparse.csr_matrix(-scale[:, None] * tmap),
                (B.rho * (self.weight / self.mass_phi)).T,
            )
        return self._ops

    def _fields(self, a, b):
        trig_t, zmap, gmap, _, proj = self._tables()
        d = self.dim
        P = trig_t.shape[1]
        FT = (zmap @ np.concatenate([a, b])).reshape(-1, trig_t.shape[0]) @ trig_t
        phi = FT[0] + b[0]
        grad_phi = FT[1 : 1 + d]
        u = FT[1 + d : 1 + 2 * d]
        grad_u = FT[1 + 2 * d :].reshape(d, d, P)
        r1 = self.params.r + 1.0
        c = self.eig_phi * b + proj @ (phi * (phi * phi + r1))
        grad_psi = (gmap @ c).reshape(d, -1) @ trig_t
        return phi, grad_phi, c, grad_psi, u, grad_u

    def rhs(self, y: np.ndarray) -> np.ndarray:
        a, b = self.split(y)
        p = self.params
        trig_t, _, _, tmap, _ = self._tables()
        d = self.dim
        phi, grad_phi, _, grad_psi, u, grad_u = self._fields(a, b)
        Q = np.empty((2 * d + d * d + 1, phi.size))
        # Q rows: momentum vector part, viscous tensor, φ advection, φ flux
        Q[:d] = (u[None, :, :] * grad_u).sum(axis=1) + (p.M * phi) * grad_psi
        ten = Q[d : d + d * d].reshape(d, d, -1)
        np.add(grad_u, grad_u.transpose(1, 0, 2), out=ten)
        ten *= 0.5 * p.eta(phi)
        adv = Q[d + d * d]
        np.sum(u * grad_phi, axis=0, out=adv)
        Q[d + d * d + 1 :] = p.mobility(phi) * grad_psi
        out = tmap @ (Q @ trig_t.T).ravel()
        out[self.na] = -float(np.sum(adv)) * self.weight / self.mass_phi[0]
        if not self.evolve_velocity:
            out[: self.na] = 0.0
        return out

    # --- energy bookkeeping with the same quadrature ---

    def energy(self, y: np.ndarray) -> tuple[float, float]:
        """``(kinetic, sh)`` with kinetic ``|u|²/(2M)``."""
        a, b = self.split(y)
        phi = self.basis.rho @ b
        k2 = self.k2
        quad = float(np.sum(self.mass_phi * (0.5 * k2**2 - k2) * b**2))
        sh = quad + float(np.sum(potential_F(phi, self.params.r))) * self.weight
        kin = float(np.sum(self.mass_u * a**2)) / (2 * self.params.M)
        return kin, sh

    def dissipation(self, y: np.ndarray) -> tuple[float, float]:
        a, b = self.split(y)
        phi, _, _, grad_psi, _, grad_u = self._fields(a, b)
        strain = 0.5 * (grad_u + np.swapaxes(grad_u, 0, 1))
        visc = float(np.sum(self.params.eta(phi) * strain**2)) * self.weight / self.params.M
        mob = float(np.sum(self.params.mobility(phi) * grad_psi**2)) * self.weight
        return visc, mob

    # --- conversion to and from grid fields ---

    def _grid_basis(self, grid: GridSpec) -> Basis:
        pts = _grid_points(grid.dim, grid.n, grid.box_length)
        return _evaluate_basis(pts, self.kvecs, self.dirs)

    def project(self, state: State) -> np.ndarray:
        """Orthogonal projection of grid data onto the retained spans."""
        grid = state.grid
        if grid != self.grid:
            raise GridMismatchError("state grid differs from the oracle's grid")
        B = self._grid_basis(grid)
        h = grid.volume / grid.cell_count
        b = (B.rho.T @ state.phi.values.ravel()) * h / self.mass_phi
        uv = state.u.values.reshape(grid.dim, -1)
        a = np.tensordot(uv, B.w, axes=([0, 1], [0, 1])) * h / self.mass_u
        return np.concatenate([a, b])

    def to_state(self, y: np.ndarray, t: float = 0.0) -> State:
        grid = self.grid
        a, b = self.split(y)
        B = self._grid_basis(grid)
        phi = (B.rho @ b).reshape(grid.shape)
        u = (B.w @ a).reshape((grid.dim,) + grid.shape)
        return State(VectorField(grid, u), ScalarField(grid, phi), t)


def assemble(
    n_modes: int,
    params: PhysParams,
    grid: GridSpec,
    initial: State | None = None,
    evolve_velocity: bool = True,
) -> GalerkinSystem:
    """Build the reference ODE for ``n_modes`` retained indices per axis.

    ``grid`` is where initial data are read from and trajectories are exported
    to; it must resolve the retained modes. ``evolve_velocity=False`` freezes
    the velocity coefficients, as the solver's option of the same name does.
    """
    if not 1 <= n_modes <= MAX_MODES:
        raise ConfigError(f"n_modes must lie in [1, {MAX_MODES}], got {n_modes}")
    if 2 * n_modes >= grid.n:
        raise ConfigError(f"grid n={grid.n} does not resolve {n_modes} modes per axis")
    scale = 2 * np.pi / grid.box_length
    js = retained_wavevectors(grid.dim, n_modes)
    kvecs = [scale * np.array(j, dtype=float) for j in js]
    dirs = [_orthonormal_complement(k) for k in kvecs]
    nq = 4 * n_modes + 2
    pts = _grid_points(grid.dim, nq, grid.box_length)
    basis = _evaluate_basis(pts, kvecs, dirs)
    k2 = np.array([0.0] + [float(k @ k) for k in kvecs for _ in (0, 1)])
    vol = grid.volume
    mass_phi = np.full(k2.size, 0.5 * vol)
    mass_phi[0] = vol
    mass_u = np.full(basis.w.shape[-1], 0.5 * vol)
    sys = GalerkinSystem(
        n_modes=n_modes,
        params=params,
        grid=grid,
        wavevectors=js,
        quad_points=nq,
        basis=basis,
        kvecs=kvecs,
        dirs=dirs,
        k2=k2,
        eig_phi=k2**2 - 2 * k2,
        mass_phi=mass_phi,
        mass_u=mass_u,
        evolve_velocity=evolve_velocity,
    )
    if initial is not None:
        y0 = sys.project(initial)
        sys.a0, sys.b0 = sys.split(y0)
    return sys


@dataclass
class OracleTrajectory:
    times: list
    coefficients: list
    ledger: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.coefficients[-1]


def integrate_rk4(
    sys: GalerkinSystem,
    dt: float,
    t_end: float,
    y0: np.ndarray | None = None,
    sample_every: int = 0,
    ledger: bool = False,
    ledger_every: int = 1,
) -> OracleTrajectory:
    """Classical fourth-order Runge-Kutta from ``y0`` (default: projected initial data).

    With ``ledger=True`` every ``ledger_every`` steps (and at the end) a row
    ``(t, kinetic, sh, visc_diss, mob_diss, residual)`` is appended, the
    dissipation integrals taken by the trapezoidal rule between rows.
    """
    y = np.concatenate([sys.a0, sys.b0]) if y0 is None else np.asarray(y0, dtype=float).copy()
    n = int(math.ceil(t_end / dt - 1e-9))
    out = OracleTrajectory([0.0], [y.copy()])
    f = sys.rhs
    if ledger:
        kin, sh = sys.energy(y)
        e0 = kin + sh
        rates = sys.dissipation(y)
        vd = md = 0.0
        t_prev = 0.0
    t = 0.0
    for i in range(1, n + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = i * dt
        if not np.all(np.isfinite(y)):
            raise BlowUpError(i, "oracle coefficients")
        if ledger and (i % ledger_every == 0 or i == n):
            new = sys.dissipation(y)
            h = t - t_prev
            vd += 0.5 * h * (rates[0] + new[0])
            md += 0.5 * h * (rates[1] + new[1])
            rates, t_prev = new, t
            kin, sh = sys.energy(y)
            out.ledger.append((t, kin, sh, vd, md, kin + sh + vd + md - e0))
        if (sample_every and i % sample_every == 0) or i == n:
            out.times.append(t)
            out.coefficients.append(y.copy())
    return out
