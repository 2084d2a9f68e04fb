"""Free energy, chemical potential, coefficient families and the coupled right-hand sides."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nspfc.errors import ConfigError, GridMismatchError
from nspfc.spectral import (
    GridSpec,
    ScalarField,
    Tables,
    VectorField,
    backward,
    build_tables,
    div_hat,
    forward,
    grad_hat,
    inner,
    project_hat,
)

CONSTANT = "constant"
SMOOTH = "smooth-monotone"


@dataclass(frozen=True)
class CoefficientFamily:
    """Pointwise coefficient ``s -> c(s)`` used for viscosity and mobility.

    ``constant`` returns ``value``; ``smooth-monotone`` follows
    ``c0 + (c1 - c0) * (1 + tanh(s)) / 2`` with slope cap ``c2``.
    """

    kind: str = CONSTANT
    value: float | None = None
    c0: float | None = None
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if self.kind == CONSTANT:
            if self.value is None:
                raise ConfigError("constant coefficient family needs 'value'")
        elif self.kind == SMOOTH:
            if None in (self.c0, self.c1, self.c2):
                raise ConfigError("smooth-monotone coefficient family needs c0, c1 and c2")
        else:
            raise ConfigError(f"unknown coefficient family kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> CoefficientFamily:
        return cls(CONSTANT, value=float(value))

    @classmethod
    def smooth(cls, c0: float, c1: float, c2: float) -> CoefficientFamily:
        return cls(SMOOTH, c0=float(c0), c1=float(c1), c2=float(c2))

    @property
    def lower(self) -> float:
        return self.value if self.kind == CONSTANT else self.c0

    @property
    def upper(self) -> float:
        return self.value if self.kind == CONSTANT else self.c1

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(s, self.value)
        return self.c0 + (self.c1 - self.c0) * 0.5 * (1.0 + np.tanh(s))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == CONSTANT:
            return np.zeros_like(s)
        return 0.5 * (self.c1 - self.c0) / np.cosh(s) ** 2


@dataclass
class A1Report:
    kind: str
    min_value: float
    max_value: float
    min_derivative: float
    max_derivative: float
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_A1(fam: CoefficientFamily, sample_count: int = 2001, name: str = "coefficient") -> A1Report:
    """Sample ``fam`` and a centered difference of it on ``[-10, 10]`` against its bounds.

    Positivity of the derivative is only demanded of the smooth-monotone kind;
    constants are admitted as the usual smoke-test regime.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    s = np.linspace(-10.0, 10.0, sample_count)
    h = 1e-3
    vals = fam(s)
    der = (fam(s + h) - fam(s - h)) / (2 * h)
    rep = A1Report(
        kind=fam.kind,
        min_value=float(vals.min()),
        max_value=float(vals.max()),
        min_derivative=float(der.min()),
        max_derivative=float(der.max()),
    )
    lo, hi = fam.lower, fam.upper
    if not lo > 0:
        rep.violations.append(f"{name}: lower bound must be positive (A1), got {lo}")
    if hi < lo:
        rep.violations.append(f"{name}: upper bound {hi} below lower bound {lo} (A1)")
    if rep.min_value < lo * (1 - 1e-14) or rep.max_value > hi * (1 + 1e-14):
        rep.violations.append(f"{name}: sampled values leave [{lo}, {hi}] (A1)")
    if fam.kind == SMOOTH:
        if not fam.c2 > 0:
            rep.violations.append(f"{name}: slope cap c2 must be positive (A1), got {fam.c2}")
        if not rep.min_derivative > 0:
            rep.violations.append(f"{name}: derivative must be positive (A1), min {rep.min_derivative:.3g}")
        if rep.max_derivative > fam.c2 * (1 + 1e-9):
            rep.violations.append(
                f"{name}: derivative {rep.max_derivative:.6g} exceeds slope cap c2={fam.c2} (A1)"
            )
    return rep


@dataclass(frozen=True)
class PhysParams:
    M: float
    r: float
    eta: CoefficientFamily
    mobility: CoefficientFamily

    def __post_init__(self):
        if not self.M > 0:
            raise ConfigError(f"M must be positive, got {self.M}")
        for name, fam in (("eta", self.eta), ("mobility", self.mobility)):
            rep = validate_A1(fam, name=name)
            if not rep.ok:
                raise ConfigError("; ".join(rep.violations))


@dataclass
class State:
    u: VectorField
    phi: ScalarField
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.phi.grid:
            raise GridMismatchError("u and phi live on different grids")

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    def copy(self) -> State:
        return State(VectorField(self.grid, self.u.values.copy()), ScalarField(self.grid, self.phi.values.copy()), self.t)


def max_divergence(u: VectorField) -> float:
    t = build_tables(u.grid)
    return float(np.max(np.abs(backward(div_hat(u.spectral(), t), u.grid))))


def check_state(state: State, div_tol: float = 1e-12, mean_tol: float = 1e-13) -> None:
    div = max_divergence(state.u)
    if div > div_tol:
        raise ValueError(f"velocity divergence {div:.3e} exceeds {div_tol}")
    m = np.max(np.abs(state.u.mean()))
    if m > mean_tol:
        raise ValueError(f"velocity mean {m:.3e} exceeds {mean_tol}")


def f_pointwise(phi, r: float):
    return phi**3 + (r + 1.0) * phi


def potential_F(c, r: float):
    """Primitive of ``f`` vanishing at 0: ``c^4/4 + (r+1) c^2/2``."""
    return 0.25 * c**4 + 0.5 * (r + 1.0) * c**2


def coercivity_constants(r: float) -> tuple[float, float]:
    """``(c1, c2)`` with ``F(s) >= c1 s^4 - c2`` for all real ``s``."""
    a = r + 1.0
    return 0.125, (0.5 * a * a if a < 0 else 0.0)


def f_eval(phi: ScalarField, r: float) -> ScalarField:
    t = build_tables(phi.grid)
    fh = forward(f_pointwise(phi.values, r), phi.grid) * t.mask
    return ScalarField.from_spectral(phi.grid, fh)


def _psi_hat(phi_hat: np.ndarray, phi_vals: np.ndarray, r: float, t: Tables) -> np.ndarray:
    fh = forward(f_pointwise(phi_vals, r), t.grid)
    return (t.k4 - 2.0 * t.k2) * phi_hat + t.mask * fh


def chemical_potential(phi: ScalarField, r: float) -> ScalarField:
    """``Δ²φ + 2Δφ + f(φ)`` with the spectral linear part and dealiased ``f``."""
    t = build_tables(phi.grid)
    return ScalarField.from_spectral(phi.grid, _psi_hat(phi.spectral(), phi.values, r, t))


def sh_energy(phi: ScalarField, r: float) -> float:
    grid = phi.grid
    t = build_tables(grid)
    ph = phi.spectral() * t.mask
    vals = backward(ph, grid)
    quad = np.sum(t.weights * (0.5 * t.k4 - t.k2) * np.abs(ph) ** 2) * grid.volume / grid.cell_count**2
    return float(quad + np.sum(potential_F(vals, r)) * grid.volume / grid.cell_count)


def _dealiased(values: np.ndarray, t: Tables) -> np.ndarray:
    return forward(values, t.grid) * t.mask


def phi_flux_terms(u_vals, phi_vals, psi_hat, mob_vals, t: Tables):
    """Spectral ``-div(u φ)`` and ``div(m ∇ψ)`` with dealiased products."""
    grid = t.grid
    adv = -div_hat(_dealiased(u_vals * phi_vals, t), t)
    grad_psi = backward(grad_hat(psi_hat, t), grid)
    diff = div_hat(_dealiased(mob_vals * grad_psi, t), t)
    zero = (0,) * grid.dim
    adv[zero] = 0
    diff[zero] = 0
    return adv, diff


def rhs_phi(state: State, params: PhysParams) -> ScalarField:
    grid = state.grid
    t = build_tables(grid)
    phi_vals = state.phi.values
    psi_hat = _psi_hat(state.phi.spectral(), phi_vals, params.r, t)
    adv, diff = phi_flux_terms(state.u.values, phi_vals, psi_hat, params.mobility(phi_vals), t)
    return ScalarField.from_spectral(grid, adv + diff)


def _skew_advection_hat(u_vals: np.ndarray, u_hat: np.ndarray, t: Tables) -> np.ndarray:
    """``½[(u·∇)u + ∇·(u⊗u)]`` per component, dealiased."""
    grid = t.grid
    d = grid.dim
    out = []
    for i in range(d):
        grad_ui = backward(grad_hat(u_hat[i], t), grid)
        conv = _dealiased(sum(u_vals[j] * grad_ui[j] for j in range(d)), t)
        flux = np.stack([_dealiased(u_vals[j] * u_vals[i], t) for j in range(d)])
        out.append(0.5 * (conv + div_hat(flux, t)))
    return np.stack(out)


def _viscous_hat(u_hat: np.ndarray, eta_vals, t: Tables) -> np.ndarray:
    """``∇·(η D u)`` with ``η`` sampled pointwise (scalar or array)."""
    grid = t.grid
    d = grid.dim
    g = np.stack([backward(grad_hat(c, t), grid) for c in u_hat])  # g[i, j] = d_j u_i
    out = []
    for i in range(d):
        stress = np.stack([_dealiased(eta_vals * 0.5 * (g[i, j] + g[j, i]), t) for j in range(d)])
        out.append(div_hat(stress, t))
    return np.stack(out)


def _korteweg_hat(phi_vals, psi_hat, M: float, t: Tables) -> np.ndarray:
    grad_psi = backward(grad_hat(psi_hat, t), t.grid)
    return np.stack([-M * _dealiased(phi_vals * gp, t) for gp in grad_psi])


def momentum_terms(u_vals, u_hat, phi_vals, psi_hat, eta_vals, M, t: Tables):
    """Unprojected spectral advection, viscous and Korteweg contributions."""
    adv = -_skew_advection_hat(u_vals, u_hat, t)
    visc = _viscous_hat(u_hat, eta_vals, t)
    kort = _korteweg_hat(phi_vals, psi_hat, M, t)
    return adv, visc, kort


def rhs_u(state: State, psi: ScalarField, params: PhysParams) -> VectorField:
    grid = state.grid
    t = build_tables(grid)
    phi_vals = state.phi.values
    adv, visc, kort = momentum_terms(
        state.u.values, state.u.spectral(), phi_vals, psi.spectral(), params.eta(phi_vals), params.M, t
    )
    return VectorField.from_spectral(grid, project_hat(adv + visc + kort, t))


def trilinear_b0(u: VectorField, v: VectorField, w: VectorField) -> float:
    """``∫ ((u·∇)v)·w`` by grid quadrature of the dealiased product."""
    grid = u.grid
    if v.grid != grid or w.grid != grid:
        raise GridMismatchError("trilinear form needs a shared grid")
    t = build_tables(grid)
    vh = v.spectral()
    total = 0.0
    for i in range(grid.dim):
        grad_vi = backward(grad_hat(vh[i], t), grid)
        conv = backward(_dealiased(sum(u.values[j] * grad_vi[j] for j in range(grid.dim)), t), grid)
        total += inner(conv, w.values[i], grid)
    return total
