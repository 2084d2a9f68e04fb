"""Measured counterparts of the analytical statements: energy ledger, norms,
continuous dependence, Poincaré constants and the variational-derivative check."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from nspfc.errors import BlowUpError
from nspfc.model import PhysParams, State, chemical_potential, sh_energy
from nspfc.spectral import (
    GridSpec,
    ScalarField,
    VectorField,
    backward,
    build_tables,
    forward,
    grad_hat,
    inner,
    project_hat,
    seminorm_sq,
)

LEDGER_COLUMNS = ("t", "kinetic", "sh", "visc_diss", "mob_diss", "residual", "mass")
NORM_COLUMNS = ("phi_phi2", "phi_phi3", "u_h", "u_v", "psi_phi1")


@dataclass
class LedgerRow:
    t: float
    kinetic: float
    sh: float
    visc_diss: float
    mob_diss: float
    residual: float
    mass: float


@dataclass
class NormRow:
    t: float
    phi_phi2: float
    phi_phi3: float
    u_h: float
    u_v: float
    psi_phi1: float


def kinetic_energy(u: VectorField, M: float) -> float:
    return inner(u.values, u.values, u.grid) / (2.0 * M)


def dissipation_rates(state: State, psi: ScalarField, params: PhysParams) -> tuple[float, float]:
    """``(1/M) ∫ η(φ)|Du|²`` and ``∫ m(φ)|∇ψ|²`` by grid quadrature."""
    grid = state.grid
    t = build_tables(grid)
    phi = state.phi.values
    uh = state.u.spectral()
    g = np.stack([backward(grad_hat(c, t), grid) for c in uh])
    d = 0.5 * (g + np.swapaxes(g, 0, 1))
    visc = inner(params.eta(phi) * d, d, grid) / params.M
    gp = backward(grad_hat(psi.spectral(), t), grid)
    mob = inner(params.mobility(phi) * gp, gp, grid)
    return visc, mob


def ledger_update(state: State, psi: ScalarField, params: PhysParams, acc: LedgerAccumulator) -> LedgerRow:
    """Advance the dissipation integrals to ``state.t`` (trapezoidal rule) and emit a row."""
    visc, mob = dissipation_rates(state, psi, params)
    h = state.t - acc.t
    acc.visc_diss += 0.5 * h * (acc.visc_rate + visc)
    acc.mob_diss += 0.5 * h * (acc.mob_rate + mob)
    acc.t, acc.visc_rate, acc.mob_rate = state.t, visc, mob
    kin = kinetic_energy(state.u, params.M)
    sh = sh_energy(state.phi, params.r)
    return LedgerRow(
        t=state.t,
        kinetic=kin,
        sh=sh,
        visc_diss=acc.visc_diss,
        mob_diss=acc.mob_diss,
        residual=(kin + sh + acc.visc_diss + acc.mob_diss) - acc.initial_energy,
        mass=state.phi.mean(),
    )


class LedgerAccumulator:
    """Running dissipation integrals, seeded from the initial state."""

    def __init__(self, initial: State, params: PhysParams):
        self.params = params
        psi = chemical_potential(initial.phi, params.r)
        self.t = initial.t
        self.visc_rate, self.mob_rate = dissipation_rates(initial, psi, params)
        self.visc_diss = 0.0
        self.mob_diss = 0.0
        self.initial_energy = kinetic_energy(initial.u, params.M) + sh_energy(initial.phi, params.r)
        self.initial_mass = initial.phi.mean()
        self.last_psi = psi

    def update(self, state: State) -> LedgerRow:
        self.last_psi = chemical_potential(state.phi, self.params.r)
        return ledger_update(state, self.last_psi, self.params, self)


def scalar_norm_sq(coef: np.ndarray, grid: GridSpec, s: int) -> float:
    """Seminorm ``||∇^s w||^2`` plus the mean term ``|Q| <w>^2`` (plain L2 for ``s = 0``)."""
    if s == 0:
        return seminorm_sq(coef, grid, 0)
    mean = float(coef[(0,) * grid.dim].real) / grid.cell_count
    return seminorm_sq(coef, grid, s) + grid.volume * mean**2


def norm_monitor(state: State, psi: ScalarField) -> NormRow:
    grid = state.grid
    ph = state.phi.spectral()
    uh = state.u.spectral()
    return NormRow(
        t=state.t,
        phi_phi2=math.sqrt(scalar_norm_sq(ph, grid, 2)),
        phi_phi3=math.sqrt(scalar_norm_sq(ph, grid, 3)),
        u_h=math.sqrt(sum(seminorm_sq(c, grid, 0) for c in uh)),
        u_v=math.sqrt(sum(seminorm_sq(c, grid, 1) for c in uh)),
        psi_phi1=math.sqrt(scalar_norm_sq(psi.spectral(), grid, 1)),
    )


# --- continuous dependence -------------------------------------------------


@dataclass
class ContDepReport:
    delta: float
    input_gap: float
    output_gap: float
    ratio: float | None
    degenerate: bool
    components: dict = field(default_factory=dict)
    times: list = field(default_factory=list)
    gap_series: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def _gap_terms(a: State, b: State) -> tuple[float, float, float, float]:
    """Squared ``H``, ``V`` gaps of ``u`` and ``H²``, ``H⁵`` gaps of ``φ``."""
    grid = a.grid
    du = forward(a.u.values - b.u.values, grid)
    dp = forward(a.phi.values - b.phi.values, grid)
    return (
        sum(seminorm_sq(c, grid, 0) for c in du),
        sum(seminorm_sq(c, grid, 1) for c in du),
        scalar_norm_sq(dp, grid, 2),
        scalar_norm_sq(dp, grid, 5),
    )


def perturbed(initial: State, phi_pert: ScalarField, u_pert: VectorField, delta: float) -> State:
    grid = initial.grid
    t = build_tables(grid)
    uh = project_hat(forward(initial.u.values + delta * u_pert.values, grid), t)
    return State(
        VectorField.from_spectral(grid, uh),
        ScalarField(grid, initial.phi.values + delta * phi_pert.values),
        initial.t,
    )


def cont_dep_experiment(
    initial: State,
    params: PhysParams,
    cfg,
    perturbation: tuple[ScalarField, VectorField],
    deltas,
) -> list[ContDepReport]:
    """Run the base trajectory and one perturbed trajectory per ``delta`` in lockstep.

    The output gap is ``sup_t |Δu|²_H + ∫|Δu|²_V dt + sup_t |Δφ|²_{H²} +
    ∫|Δφ|²_{H⁵} dt`` (trapezoidal in time, endpoints included); the input gap
    is ``|Δu₀|²_H + |Δφ₀|²_{H²}``. A blow-up in any run propagates.
    """
    from nspfc.integrator import step_imex

    phi_pert, u_pert = perturbation
    deltas = list(deltas)
    # the base run goes through the same projection as the perturbed ones, so
    # delta = 0 reproduces it bit for bit
    base = perturbed(initial, phi_pert, u_pert, 0.0)
    runs = [perturbed(initial, phi_pert, u_pert, d) for d in deltas]
    inputs = []
    sup_h = [0.0] * len(deltas)
    sup_h2 = [0.0] * len(deltas)
    int_v = [0.0] * len(deltas)
    int_h5 = [0.0] * len(deltas)
    prev = []
    series = [[] for _ in deltas]
    times = [base.t]
    for q, s in enumerate(runs):
        g = _gap_terms(s, base)
        inputs.append(g[0] + g[2])
        sup_h[q], sup_h2[q] = g[0], g[2]
        prev.append(g)
        series[q].append(g[0] + g[2])
    n = cfg.n_steps
    for i in range(1, n + 1):
        base = step_imex(base, params, cfg, step_index=i)
        times.append(base.t)
        for q in range(len(runs)):
            runs[q] = step_imex(runs[q], params, cfg, step_index=i)
            g = _gap_terms(runs[q], base)
            sup_h[q] = max(sup_h[q], g[0])
            sup_h2[q] = max(sup_h2[q], g[2])
            int_v[q] += 0.5 * cfg.dt * (prev[q][1] + g[1])
            int_h5[q] += 0.5 * cfg.dt * (prev[q][3] + g[3])
            prev[q] = g
            series[q].append(g[0] + g[2])

    reports = []
    for q, d in enumerate(deltas):
        out = sup_h[q] + int_v[q] + sup_h2[q] + int_h5[q]
        if not math.isfinite(out):
            raise BlowUpError(n, "continuous-dependence gap")
        degenerate = inputs[q] == 0.0
        reports.append(
            ContDepReport(
                delta=d,
                input_gap=inputs[q],
                output_gap=out,
                ratio=None if degenerate else out / inputs[q],
                degenerate=degenerate,
                components={"sup_u_H": sup_h[q], "int_u_V": int_v[q], "sup_phi_H2": sup_h2[q], "int_phi_H5": int_h5[q]},
                times=times,
                gap_series=series[q],
            )
        )
    return reports


# --- Poincaré-type inequalities ----------------------------------------------


def hs_weight(grid: GridSpec, s: int) -> np.ndarray:
    """``sum_{|α| <= s} prod_i k_i^{2α_i}`` per mode: the multi-index ``H^s`` weight."""
    t = build_tables(grid)
    scale = 2 * np.pi / grid.box_length
    x = [(scale * j.astype(float)) ** 2 for j in t.index]
    h = [np.ones(grid.spectral_shape)] + [np.zeros(grid.spectral_shape) for _ in range(s)]
    for xi in x:
        new = []
        for j in range(s + 1):
            acc = np.zeros(grid.spectral_shape)
            for i in range(j + 1):
                acc = acc + h[j - i] * xi**i
            new.append(acc)
        h = new
    return sum(h)


def hs_norm(coef: np.ndarray, grid: GridSpec, s: int) -> float:
    t = build_tables(grid)
    w = t.weights * hs_weight(grid, s)
    return float(np.sqrt(np.sum(w * np.abs(coef) ** 2) * grid.volume / grid.cell_count**2))


@dataclass
class PoincareCheck:
    name: str
    lhs: float
    rhs: float
    constant: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def poincare_checks(fields, s_max: int = 1) -> list[PoincareCheck]:
    """Discrete versions of the mean-free Poincaré inequalities.

    * ``||w - <w>||_{L2} <= (L/2π) ||∇w||``;
    * ``||w - <w>||_{H¹} <= sqrt(1 + (L/2π)²) ||∇w||``;
    * ``||w - <w>||_{H^{s+2}} <= c_s ||Δw||_{H^s}`` for ``s <= s_max``, with
      ``c_s`` the best constant over the grid's nonzero modes.

    Each constant is attained by the lowest mode.
    """
    out = []
    for f in fields:
        grid = f.grid
        t = build_tables(grid)
        c = f.spectral().copy()
        c[(0,) * grid.dim] = 0
        a = grid.box_length / (2 * np.pi)
        grad = math.sqrt(seminorm_sq(c, grid, 1))
        out.append(PoincareCheck("L2", math.sqrt(seminorm_sq(c, grid, 0)), a * grad, a))
        c1 = math.sqrt(1 + a * a)
        out.append(PoincareCheck("H1", hs_norm(c, grid, 1), c1 * grad, c1))
        nz = t.k2 > 0
        for s in range(s_max + 1):
            ratio = hs_weight(grid, s + 2)[nz] / (t.k4[nz] * hs_weight(grid, s)[nz])
            cs = math.sqrt(float(ratio.max()))
            lap = -t.k2 * c
            out.append(PoincareCheck(f"H{s + 2}", hs_norm(c, grid, s + 2), cs * hs_norm(lap, grid, s), cs))
    return out


# --- variational derivative ----------------------------------------------------


@dataclass
class GradCheck:
    eps: list
    errors: list
    rel_errors: list
    order: float
    directional: float

    def rel_error_at(self, eps: float) -> float:
        return self.rel_errors[self.eps.index(eps)]


def grad_check(phi: ScalarField, v: ScalarField, r: float, eps=(1e-1, 1e-2, 1e-3, 1e-4)) -> GradCheck:
    """Central differences of ``sh_energy`` along ``v`` against ``<ψ(φ), v>``."""
    grid = phi.grid
    psi = chemical_potential(phi, r)
    exact = inner(psi.values, v.values, grid)
    errs = []
    for e in eps:
        up = sh_energy(ScalarField(grid, phi.values + e * v.values), r)
        dn = sh_energy(ScalarField(grid, phi.values - e * v.values), r)
        errs.append(abs((up - dn) / (2 * e) - exact))
    eps = list(eps)
    order = float(np.polyfit(np.log(eps), np.log(np.maximum(errs, 1e-300)), 1)[0])
    return GradCheck(eps, errs, [x / abs(exact) for x in errs], order, exact)


# --- audits --------------------------------------------------------------------


@dataclass
class EnergyAudit:
    dts: list
    residuals: list
    relative: list
    orders: list
    initial_energy: float
    worst_relative: list = field(default_factory=list)


def energy_audit(initial: State, params: PhysParams, cfg, dts) -> EnergyAudit:
    """Ledger residual at ``cfg.t_end`` for each time step in ``dts``.

    ``worst_relative`` is the largest signed residual over every ledger row of
    each run, in units of the initial energy (the energy-inequality check).
    """
    from dataclasses import replace

    from nspfc.integrator import run

    e0 = LedgerAccumulator(initial, params).initial_energy
    res, worst = [], []
    for dt in dts:
        rec = run(initial, params, replace(cfg, dt=dt, max_steps=10**9))
        res.append(rec.ledger[-1].residual if rec.ledger else 0.0)
        worst.append(max((row.residual for row in rec.ledger), default=0.0) / abs(e0) if e0 else math.nan)
    orders = [
        math.log(abs(res[i]) / abs(res[i + 1])) / math.log(dts[i] / dts[i + 1])
        if res[i] != 0 and res[i + 1] != 0
        else math.nan
        for i in range(len(dts) - 1)
    ]
    return EnergyAudit(list(dts), res, [x / abs(e0) if e0 else math.nan for x in res], orders, e0, worst)
