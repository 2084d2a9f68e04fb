import math

import numpy as np
import pytest

from conftest import random_state

from nspfc import CoefficientFamily, ConfigError, GridSpec, GridMismatchError, PhysParams, ScalarField, State, VectorField
from nspfc.galerkin import assemble, integrate_rk4, retained_wavevectors
from nspfc.io import read_snapshot, write_snapshot
from nspfc.model import sh_energy

BOX = 2 * math.pi


@pytest.fixture
def unit_params():
    one = CoefficientFamily.constant(1.0)
    return PhysParams(1.0, -0.25, one, one)


def small_state(grid, seed=1, phi_amp=0.05, u_amp=0.05):
    return random_state(grid, seed=seed, phi_amp=phi_amp, u_amp=u_amp, cutoff=1.5)


def test_retained_wavevectors_pair_representatives():
    js = retained_wavevectors(2, 1)
    assert js == [(0, 1), (1, 0), (1, -1), (1, 1)]
    assert len(retained_wavevectors(2, 4)) == (9 * 9 - 1) // 2
    assert len(retained_wavevectors(3, 2)) == (5**3 - 1) // 2


@pytest.mark.parametrize("n_modes, n", [(0, 16), (9, 64), (4, 8)])
def test_assemble_rejects_unsupported_sizes(unit_params, n_modes, n):
    with pytest.raises(ConfigError):
        assemble(n_modes, unit_params, GridSpec(2, n, BOX))


def test_projection_of_span_is_identity(unit_params, rng):
    sys = assemble(3, unit_params, GridSpec(2, 16, BOX))
    y = rng.standard_normal(sys.na + sys.nb)
    back = sys.project(sys.to_state(y))
    np.testing.assert_allclose(back, y, atol=1e-13)
    assert np.max(np.abs(sys.project(sys.to_state(back)) - back)) <= 1e-13


def test_projection_rejects_foreign_grid(unit_params):
    sys = assemble(2, unit_params, GridSpec(2, 16, BOX))
    with pytest.raises(GridMismatchError):
        sys.project(small_state(GridSpec(2, 32, BOX)))


def test_velocity_basis_is_solenoidal_and_mean_free(unit_params, rng):
    from nspfc.model import max_divergence

    sys = assemble(3, unit_params, GridSpec(2, 16, BOX))
    y = np.concatenate([rng.standard_normal(sys.na), np.zeros(sys.nb)])
    u = sys.to_state(y).u
    assert max_divergence(u) <= 1e-12
    assert np.max(np.abs(u.mean())) <= 1e-15


def test_single_mode_linear_decay_matches_exponential():
    # r = -1 removes the linear part of f, the tiny amplitude makes φ³
    # negligible, and with u = 0 the Korteweg force of a single mode is a
    # gradient, so the mode obeys b' = -m |k|^2 (|k|^4 - 2|k|^2) b.
    mob = 0.7
    params = PhysParams(1.0, -1.0, CoefficientFamily.constant(1.0), CoefficientFamily.constant(mob))
    grid = GridSpec(2, 16, BOX)
    sys = assemble(2, params, grid)
    for idx in (1, 5):
        y0 = np.zeros(sys.na + sys.nb)
        y0[sys.na + idx] = 1e-6
        k2 = sys.k2[idx]
        gamma = mob * k2 * (k2 * k2 - 2 * k2)
        out = integrate_rk4(sys, 1e-3, 0.1, y0=y0)
        exact = 1e-6 * math.exp(-gamma * 0.1)
        assert out.final[sys.na + idx] == pytest.approx(exact, rel=1e-10)
        assert np.max(np.abs(out.final[: sys.na])) <= 1e-20


def test_constant_phase_is_an_equilibrium(smooth_params):
    sys = assemble(2, smooth_params, GridSpec(2, 16, BOX))
    y0 = np.zeros(sys.na + sys.nb)
    y0[sys.na] = 0.3
    out = integrate_rk4(sys, 1e-4, 0.01, y0=y0)
    assert out.final[sys.na] == 0.3
    assert np.max(np.abs(np.delete(out.final, sys.na))) <= 1e-15


def test_rk4_error_ratio_is_sixteen(smooth_params):
    grid = GridSpec(2, 16, BOX)
    sys = assemble(2, smooth_params, grid, small_state(grid, phi_amp=0.3, u_amp=0.3))
    # the stiffest retained mode has rate ~ 1.5 * 8 * 48; dt <= 4e-4 keeps
    # dt * rate in the asymptotic range of RK4
    ref = integrate_rk4(sys, 2.5e-5, 0.02).final
    errs = [np.max(np.abs(integrate_rk4(sys, dt, 0.02).final - ref)) for dt in (4e-4, 2e-4)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.15)


def test_mean_coefficient_is_conserved(smooth_params):
    grid = GridSpec(2, 16, BOX)
    sys = assemble(3, smooth_params, grid, small_state(grid, phi_amp=0.3, u_amp=0.3))
    out = integrate_rk4(sys, 1e-4, 0.02, sample_every=20)
    means = np.array([y[sys.na] for y in out.coefficients])
    assert np.max(np.abs(means - means[0])) <= 1e-12


def test_energy_matches_solver_energy_on_shared_span(smooth_params):
    grid = GridSpec(2, 32, BOX)
    sys = assemble(3, smooth_params, grid, small_state(grid, phi_amp=0.3))
    y0 = np.concatenate([sys.a0, sys.b0])
    state = sys.to_state(y0)
    kin, sh = sys.energy(y0)
    assert sh == pytest.approx(sh_energy(state.phi, smooth_params.r), rel=1e-12)
    u2 = float(np.sum(state.u.values**2)) * grid.volume / grid.cell_count
    assert kin == pytest.approx(u2 / 2, rel=1e-12)


def test_gradient_flow_ledger_decreases():
    one = CoefficientFamily.constant(1.0)
    params = PhysParams(1.0, -0.25, one, one)
    grid = GridSpec(2, 16, BOX)
    sys = assemble(2, params, grid, small_state(grid, phi_amp=0.3, u_amp=0.0), evolve_velocity=False)
    assert np.all(sys.a0 == 0)
    out = integrate_rk4(sys, 1e-5, 0.02, ledger=True, ledger_every=20)
    energy = [row[1] + row[2] for row in out.ledger]
    assert all(b < a for a, b in zip(energy, energy[1:]))
    assert all(abs(row[1]) == 0.0 for row in out.ledger)


def test_oracle_ledger_residual_is_tiny(smooth_params):
    grid = GridSpec(2, 16, BOX)
    sys = assemble(2, smooth_params, grid, small_state(grid, phi_amp=0.2, u_amp=0.2))
    out = integrate_rk4(sys, 1e-6, 0.01, ledger=True, ledger_every=10)
    kin0, sh0 = sys.energy(out.coefficients[0])
    assert max(abs(row[5]) for row in out.ledger) <= 1e-8 * max(1.0, abs(kin0 + sh0))


def test_oracle_snapshot_loads_in_solver(smooth_params, tmp_path):
    grid = GridSpec(2, 32, BOX)
    sys = assemble(4, smooth_params, grid, small_state(grid))
    out = integrate_rk4(sys, 1e-5, 1e-3)
    state = sys.to_state(out.final, t=1e-3)
    path = tmp_path / "oracle.bin"
    write_snapshot(state, path)
    loaded = read_snapshot(path, grid)
    assert loaded.t == 1e-3
    np.testing.assert_array_equal(loaded.phi.values, state.phi.values)
    np.testing.assert_array_equal(loaded.u.values, state.u.values)
    with pytest.raises(GridMismatchError):
        read_snapshot(path, GridSpec(2, 64, BOX))
