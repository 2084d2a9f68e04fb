"""Acceptance suite: every criterion runs through the ``nspfc`` command line on
the shipped ``configs/acceptance_*.json`` files and is judged from the CSV
evidence at its stated tolerance. Each test prints one PASS/FAIL line, which is
also collected into the ``acceptance criteria`` section of the pytest summary.
"""

import contextlib
import csv
import io
import math
import time

import numpy as np
import pytest

from conftest import CONFIGS, CRITERIA_LINES

from nspfc import GridSpec, VectorField, leray_project, stability_probe
from nspfc.cli import main
from nspfc.io import initial_state, load_config
from nspfc.model import sh_energy, trilinear_b0
from nspfc.spectral import build_tables, inner, l2_norm, strain_rate, velocity_gradient

# (subcommand, config, extra args) for every acceptance run
RUNS = {
    "mass": ("mass-audit", "acceptance_2d.json", []),
    "grad": ("grad-check", "acceptance_grad_check.json", []),
    "energy2d": ("energy-audit", "acceptance_2d.json", []),
    "energy3d": ("energy-audit", "acceptance_3d.json", []),
    "gradflow": ("simulate", "acceptance_gradient_flow.json", []),
    "oracle": ("oracle-compare", "acceptance_oracle.json", []),
    "contdep": ("cont-dep", "acceptance_cont_dep.json", ["--delta", "1e-6"]),
}


class CliRun:
    def __init__(self, code, out, stdout, seconds):
        self.code, self.out, self.stdout, self.seconds = code, out, stdout, seconds

    def rows(self, name):
        with open(self.out / name, newline="") as fh:
            return list(csv.DictReader(fh))


def invoke(key, out):
    cmd, config, extra = RUNS[key]
    buf = io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        code = main([cmd, str(CONFIGS / config), "--out", str(out), *extra])
    return CliRun(code, out, buf.getvalue(), time.perf_counter() - t0)


@pytest.fixture(scope="module")
def cli(tmp_path_factory):
    cache = {}

    def get(key):
        if key not in cache:
            cache[key] = invoke(key, tmp_path_factory.mktemp(key))
        return cache[key]

    return get


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    assert ok, line


def random_solenoidal_field(grid, rng):
    raw = VectorField(grid, rng.standard_normal((grid.dim,) + grid.shape))
    return leray_project(VectorField.from_spectral(grid, raw.spectral() * build_tables(grid).mask))


# --- criteria ----------------------------------------------------------------------


def test_criterion_01_mass_conservation(cli):
    r = cli("mass")
    rows = r.rows("mass_audit.csv")
    drift = max(abs(float(x["mass_drift"])) for x in rows)
    ok = r.code == 0 and len(rows) == 1000 and drift <= 1e-12 and r.seconds <= 60
    report(1, "mass conservation", ok, f"{len(rows)} steps, max |<phi> - 0.07| = {drift:.2e} (tol 1e-12), {r.seconds:.1f} s")


def test_criterion_02_velocity_divergence_and_mean(cli):
    r = cli("mass")
    rows = r.rows("mass_audit.csv")
    div = max(float(x["max_div"]) for x in rows)
    mean = max(float(x["max_mean_u"]) for x in rows)
    ok = r.code == 0 and len(rows) == 1000 and div <= 1e-12 and mean <= 1e-13
    report(2, "divergence and velocity mean", ok, f"max |div u| = {div:.2e} (tol 1e-12), max |<u>| = {mean:.2e} (tol 1e-13)")


def test_criterion_03_variational_derivative(cli):
    r = cli("grad")
    rows = r.rows("grad_check.csv")
    pairs = sorted({int(x["pair"]) for x in rows})
    at_probe = [float(x["rel_error"]) for x in rows if float(x["eps"]) == 1e-4]
    orders = [float(x["order"]) for x in rows]
    worst, low = max(at_probe), min(orders)
    ok = r.code == 0 and len(pairs) == 10 and len(at_probe) == 10 and worst <= 1e-8 and low >= 1.9 and r.seconds <= 30
    report(3, "variational derivative", ok, f"10 pairs, max rel error at eps=1e-4 {worst:.2e} (tol 1e-8), min order {low:.3f} (min 1.9)")


def test_criterion_04_energy_identity_2d(cli):
    r = cli("energy2d")
    rows = r.rows("energy_audit.csv")
    dts = [float(x["dt"]) for x in rows]
    orders = [float(x["order"]) for x in rows[1:]]
    final = abs(float(rows[-1]["relative"]))
    ok = r.code == 0 and dts == [4e-4, 2e-4, 1e-4] and min(orders) >= 0.9 and final <= 1e-4 and r.seconds <= 300
    report(
        4,
        "energy identity 2D",
        ok,
        f"orders {', '.join(f'{o:.3f}' for o in orders)} (min 0.9), |residual|/E0 = {final:.2e} at dt=1e-4 (tol 1e-4), {r.seconds:.1f} s",
    )


def test_criterion_05_energy_inequality_3d(cli):
    r = cli("energy3d")
    rows = r.rows("energy_audit.csv")
    cfg = load_config(CONFIGS / RUNS["energy3d"][1])
    worst = max(float(x["worst_relative"]) for x in rows)
    setup = cfg.grid.dim == 3 and cfg.grid.n == 32 and [float(x["dt"]) for x in rows] == [2e-4] and cfg.step.t_end == 0.05
    ok = r.code == 0 and setup and worst <= 1e-6 and r.seconds <= 600
    report(5, "energy inequality 3D", ok, f"max (E + D - E0)/E0 = {worst:.2e} over all rows (tol 1e-6), {r.seconds:.1f} s")


def test_criterion_06_gradient_flow_monotonicity(cli):
    r = cli("gradflow")
    cfg = load_config(CONFIGS / RUNS["gradflow"][1])
    init = initial_state(cfg)
    probe = stability_probe(cfg.params, cfg.grid, init, S=cfg.step.stabilization_S).suggested
    rows = r.rows("ledger.csv")
    sh = [sh_energy(init.phi, cfg.params.r)] + [float(x["sh"]) for x in rows]
    rise = max(b - a for a, b in zip(sh, sh[1:]))
    kinetic = max(abs(float(x["kinetic"])) for x in rows)
    setup = (
        cfg.step.dt == probe
        and not cfg.step.evolve_velocity
        and cfg.params.mobility.kind == "constant"
        and not np.any(init.u.values)
    )
    ok = r.code == 0 and setup and len(rows) == 1000 and rise <= 1e-10 and sh[-1] < sh[0] and kinetic == 0.0
    report(
        6,
        "gradient-flow monotonicity",
        ok,
        f"dt = probe {probe:.6g}, 1000 steps, max step increase {rise:.2e} (tol 1e-10), energy {sh[0]:.4f} -> {sh[-1]:.4f}",
    )


def test_criterion_07_oracle_equivalence(cli):
    r = cli("oracle")
    cfg = load_config(CONFIGS / RUNS["oracle"][1])
    (row,) = r.rows("oracle_compare.csv")
    gphi, gu = float(row["phi_gap"]), float(row["u_gap"])
    setup = (
        cfg.checks["oracle_modes"] == 4
        and cfg.grid.dim == 2
        and cfg.step.dt == 1e-5
        and cfg.checks["oracle_dt"] == 1e-6
        and cfg.step.t_end == 0.1
        and cfg.grid.cutoff == 4
    )
    ok = r.code == 0 and setup and gphi <= 1e-6 and gu <= 1e-6 and r.seconds <= 120
    report(7, "oracle equivalence", ok, f"L2 gaps phi {gphi:.2e}, u {gu:.2e} at T=0.1 (tol 1e-6), {r.seconds:.1f} s")


def test_criterion_08_continuous_dependence(cli):
    r = cli("contdep")
    rows = r.rows("cont_dep.csv")
    by_n = {}
    for x in rows:
        by_n.setdefault(int(x["n"]), []).append(x)
    scales, ratios = {}, {}
    for n, (a, b) in by_n.items():
        assert float(a["delta"]) == 1e-6 and float(b["delta"]) == 2e-6
        scales[n] = float(b["output_gap"]) / float(a["output_gap"])
        ratios[n] = float(a["ratio"])
    change = abs(ratios[128] - ratios[64]) / abs(ratios[64])
    ok = (
        r.code == 0
        and sorted(by_n) == [64, 128]
        and all(abs(s - 4.0) <= 0.4 for s in scales.values())
        and all(math.isfinite(x) for x in ratios.values())
        and change < 0.05
    )
    report(
        8,
        "continuous dependence",
        ok,
        f"gap(2δ)/gap(δ) = {scales[64]:.4f} (n=64), {scales[128]:.4f} (n=128) (target 4 ± 10%), "
        f"ratio {ratios[64]:.4f}, mesh change {change:.1e} (tol 5%)",
    )


def test_criterion_09_trilinear_identities():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(100):
        grid = GridSpec(2, 32) if i % 2 == 0 else GridSpec(3, 16)
        u, v, w = (random_solenoidal_field(grid, rng) for _ in range(3))
        scale = math.prod(l2_norm(f.values, grid) for f in (u, v, w))
        worst = max(
            worst,
            abs(trilinear_b0(u, v, v)) / scale,
            abs(trilinear_b0(u, v, w) + trilinear_b0(u, w, v)) / scale,
        )
    report(9, "trilinear identities", worst <= 1e-12, f"100 triples, max |b0| / scale = {worst:.2e} (tol 1e-12)")


def test_criterion_10_korn_equality():
    rng = np.random.default_rng(10)
    worst = 0.0
    for i in range(100):
        grid = GridSpec(2, 32) if i % 2 == 0 else GridSpec(3, 16)
        w = leray_project(VectorField(grid, rng.standard_normal((grid.dim,) + grid.shape)))
        grad = inner(velocity_gradient(w), velocity_gradient(w), grid)
        d = strain_rate(w)
        worst = max(worst, abs(grad - 2 * inner(d, d, grid)) / grad)
    report(10, "Korn equality", worst <= 1e-12, f"100 fields, max relative gap {worst:.2e} (tol 1e-12)")


def test_criterion_11_determinism(cli, tmp_path):
    mismatched, compared = [], 0
    for key in RUNS:
        first = cli(key)
        again = invoke(key, tmp_path / key)
        names = sorted(p.name for p in first.out.iterdir())
        if names != sorted(p.name for p in again.out.iterdir()) or again.code != first.code:
            mismatched.append(key)
            continue
        for name in names:
            compared += 1
            if (first.out / name).read_bytes() != (again.out / name).read_bytes():
                mismatched.append(f"{key}/{name}")
    report(
        11,
        "determinism",
        not mismatched,
        f"{compared} files from {len(RUNS)} runs byte-identical" if not mismatched else f"differ: {', '.join(mismatched)}",
    )
