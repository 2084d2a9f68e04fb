"""Command-line driver.

Exit codes: 0 success, 1 invalid configuration or input files, 2 numerical
blow-up, 3 a check ran but missed its threshold. Reports go to standard
output, diagnostics to standard error.

CSV files written (headers fixed per subcommand):

* ``simulate``: ``ledger.csv`` (t, kinetic, sh, visc_diss, mob_diss, residual,
  mass), ``norms.csv`` (t, phi_phi2, phi_phi3, u_h, u_v, psi_phi1), snapshots
  ``snap_<step>.bin``;
* ``mass-audit``: ``mass_audit.csv`` (step, t, mass, mass_drift, max_div, max_mean_u);
* ``grad-check``: ``grad_check.csv`` (pair, eps, abs_error, rel_error, order);
* ``energy-audit``: ``energy_audit.csv`` (dt, residual, relative, worst_relative, order);
* ``oracle-compare``: ``oracle_compare.csv`` (t, phi_gap, u_gap), plus
  ``oracle_final.bin`` and ``solver_final.bin``;
* ``cont-dep``: ``cont_dep.csv`` (n, delta, input_gap, output_gap, ratio,
  sup_u_H, int_u_V, sup_phi_H2, int_phi_H5).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from nspfc.diagnostics import (
    LEDGER_COLUMNS,
    NORM_COLUMNS,
    cont_dep_experiment,
    energy_audit,
    grad_check,
)
from nspfc.errors import BlowUpError, ConfigError, GridMismatchError, SnapshotError
from nspfc.galerkin import assemble, integrate_rk4
from nspfc.initial import constant_plus_noise, random_solenoidal
from nspfc.integrator import run
from nspfc.io import RunConfig, initial_state, load_config, write_csv, write_snapshot
from nspfc.model import max_divergence, validate_A1
from nspfc.spectral import GridSpec, l2_norm

log = logging.getLogger("nspfc")

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP, EXIT_CHECK = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


def _out_dir(cfg: RunConfig, args) -> Path:
    d = Path(args.out) if args.out else Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _verdict(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def _require_all(results):
    if not all(results):
        raise CheckFailed("one or more checks failed")


# --- subcommands -------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, args) -> None:
    for name, fam in (("eta", cfg.params.eta), ("mobility", cfg.params.mobility)):
        rep = validate_A1(fam, name=name)
        print(
            f"{name}: kind={rep.kind} values in [{rep.min_value:.6g}, {rep.max_value:.6g}] "
            f"derivative in [{rep.min_derivative:.6g}, {rep.max_derivative:.6g}] (A1) ok"
        )
    g = cfg.grid
    print(f"grid: dim={g.dim} n={g.n} L={g.box_length!r} cutoff={g.cutoff}")
    print(f"step: dt={cfg.step.dt!r} t_end={cfg.step.t_end!r} steps={cfg.step.n_steps}")


def cmd_simulate(cfg: RunConfig, args) -> None:
    out = _out_dir(cfg, args)
    diags = cfg.output.diagnostics
    initial = initial_state(cfg)
    sinks = []
    if "snapshots" in diags:
        write_snapshot(initial, out / "snap_00000000.bin")
        sinks.append(lambda i, s: write_snapshot(s, out / f"snap_{i:08d}.bin"))
    want_ledger = "ledger" in diags or "norms" in diags

    def flush(record):
        if "ledger" in diags:
            write_csv(out / "ledger.csv", LEDGER_COLUMNS, ([getattr(r, c) for c in LEDGER_COLUMNS] for r in record.ledger))
        if "norms" in diags:
            cols = ("t",) + NORM_COLUMNS
            write_csv(out / "norms.csv", cols, ([getattr(r, c) for c in cols] for r in record.norms))

    try:
        rec = run(initial, cfg.params, cfg.step, sinks=sinks, stride=cfg.output.stride, ledger=want_ledger)
    except BlowUpError as exc:
        if hasattr(exc, "record"):
            flush(exc.record)
        raise
    flush(rec)
    print(f"steps: {rec.steps}  t: {rec.final.t!r}")
    if rec.ledger:
        last = rec.ledger[-1]
        print(f"final energy: {last.kinetic + last.sh!r}  residual: {last.residual!r}  mass: {last.mass!r}")


def cmd_mass_audit(cfg: RunConfig, args) -> None:
    out = _out_dir(cfg, args)
    c = cfg.checks
    initial = initial_state(cfg)
    m0 = initial.phi.mean()
    ic = cfg.initial_condition["phi"]
    target = ic["mean"] if ic["kind"] in ("constant_plus_noise", "single_mode") else m0
    rows = []

    def sink(i, s):
        mean_u = float(np.max(np.abs(s.u.mean())))
        rows.append((i, s.t, s.phi.mean(), s.phi.mean() - target, max_divergence(s.u), mean_u))

    run(initial, cfg.params, cfg.step, sinks=[sink], stride=1, ledger=False)
    write_csv(out / "mass_audit.csv", ("step", "t", "mass", "mass_drift", "max_div", "max_mean_u"), rows)
    drift = max((abs(r[3]) for r in rows), default=abs(m0 - target))
    div = max((r[4] for r in rows), default=0.0)
    mu = max((r[5] for r in rows), default=0.0)
    _require_all(
        [
            _verdict("mass", drift <= c["mass_tol"], f"max |<phi> - {target!r}| = {drift:.3e} (tol {c['mass_tol']:.0e})"),
            _verdict("divergence", div <= c["div_tol"], f"max |div u| = {div:.3e} (tol {c['div_tol']:.0e})"),
            _verdict("velocity mean", mu <= c["mean_u_tol"], f"max |<u>| = {mu:.3e} (tol {c['mean_u_tol']:.0e})"),
        ]
    )


def grad_check_pairs(cfg: RunConfig, grid: GridSpec | None = None):
    """The ``(φ, v)`` pairs probed by ``grad-check``: seeded noise around the configured mean."""
    grid = grid or cfg.grid
    c = cfg.checks
    ic = cfg.initial_condition["phi"]
    if ic["kind"] == "constant_plus_noise":
        mean, amp, cut = ic["mean"], ic["amplitude"], ic["cutoff"]
    else:
        mean, amp, cut = 0.0, 0.1, min(6.0, grid.cutoff)
    for i in range(c["grad_pairs"]):
        seed = c["grad_seed"] + 2 * i
        yield (
            constant_plus_noise(grid, mean, amp, seed, cut),
            constant_plus_noise(grid, 0.0, c["grad_v_amplitude"], seed + 1, cut),
        )


def cmd_grad_check(cfg: RunConfig, args) -> None:
    out = _out_dir(cfg, args)
    c = cfg.checks
    eps = list(c["grad_eps"])
    probe = 1e-4 if 1e-4 in eps else eps[-1]
    rows, results = [], []
    for i, (phi, v) in enumerate(grad_check_pairs(cfg)):
        gc = grad_check(phi, v, cfg.params.r, eps=eps)
        for e, a, rel in zip(gc.eps, gc.errors, gc.rel_errors):
            rows.append((i, e, a, rel, gc.order))
        rel = gc.rel_error_at(probe)
        results.append(
            _verdict(
                f"pair {i}",
                rel <= c["grad_tol"] and gc.order >= c["grad_min_order"],
                f"rel error {rel:.3e} at eps={probe:g}, fitted order {gc.order:.3f}",
            )
        )
    write_csv(out / "grad_check.csv", ("pair", "eps", "abs_error", "rel_error", "order"), rows)
    _require_all(results)


def cmd_energy_audit(cfg: RunConfig, args) -> None:
    out = _out_dir(cfg, args)
    c = cfg.checks
    dts = list(c["audit_dts"])
    audit = energy_audit(initial_state(cfg), cfg.params, cfg.step, dts)
    orders = [math.nan] + audit.orders
    write_csv(
        out / "energy_audit.csv",
        ("dt", "residual", "relative", "worst_relative", "order"),
        zip(audit.dts, audit.residuals, audit.relative, audit.worst_relative, orders),
    )
    print(f"initial energy {audit.initial_energy!r}")
    print(f"{'dt':>10} {'residual':>14} {'relative':>14} {'worst_rel':>14} {'order':>7}")
    for row in zip(audit.dts, audit.residuals, audit.relative, audit.worst_relative, orders):
        print(f"{row[0]:10.3e} {row[1]:14.6e} {row[2]:14.6e} {row[3]:14.6e} {row[4]:7.3f}")
    if cfg.grid.dim == 2:
        min_order = min(audit.orders) if audit.orders else math.nan
        results = [
            _verdict("residual order", min_order >= c["audit_min_order"], f"min observed order {min_order:.3f}"),
            _verdict(
                "residual size",
                abs(audit.relative[-1]) <= c["audit_rel_tol"],
                f"|residual|/E0 = {abs(audit.relative[-1]):.3e} at dt={audit.dts[-1]:g}",
            ),
        ]
    else:
        worst = max(audit.worst_relative)
        results = [
            _verdict(
                "energy inequality",
                worst <= c["audit_inequality_tol"],
                f"max (E + D - E0)/E0 = {worst:.3e} (tol {c['audit_inequality_tol']:.0e})",
            )
        ]
    _require_all(results)


def oracle_compare(cfg: RunConfig):
    """Run solver and Galerkin oracle from the same truncated data; return gaps and finals."""
    c = cfg.checks
    initial = initial_state(cfg)
    system = assemble(c["oracle_modes"], cfg.params, cfg.grid, initial)
    start = system.to_state(np.concatenate([system.a0, system.b0]))
    traj = integrate_rk4(system, c["oracle_dt"], cfg.step.t_end)
    oracle = system.to_state(traj.final, traj.times[-1])
    solver = run(start, cfg.params, cfg.step, ledger=False).final
    grid = cfg.grid
    gaps = (
        l2_norm(solver.phi.values - oracle.phi.values, grid),
        l2_norm(solver.u.values - oracle.u.values, grid),
    )
    return gaps, solver, oracle


def cmd_oracle_compare(cfg: RunConfig, args) -> None:
    out = _out_dir(cfg, args)
    c = cfg.checks
    (gphi, gu), solver, oracle = oracle_compare(cfg)
    write_csv(out / "oracle_compare.csv", ("t", "phi_gap", "u_gap"), [(solver.t, gphi, gu)])
    if "snapshots" in cfg.output.diagnostics:
        write_snapshot(oracle, out / "oracle_final.bin")
        write_snapshot(solver, out / "solver_final.bin")
    _require_all(
        [
            _verdict("phi gap", gphi <= c["oracle_tol"], f"L2 gap {gphi:.3e} at t={solver.t:g} (tol {c['oracle_tol']:.0e})"),
            _verdict("u gap", gu <= c["oracle_tol"], f"L2 gap {gu:.3e} at t={solver.t:g} (tol {c['oracle_tol']:.0e})"),
        ]
    )


def cont_dep_reports(cfg: RunConfig, delta: float, grid: GridSpec | None = None):
    """``δ`` and ``2δ`` reports on ``grid`` (default: the configured one)."""
    grid = grid or cfg.grid
    c = cfg.checks
    initial = initial_state(cfg, grid)
    pert = (
        constant_plus_noise(grid, 0.0, 1.0, c["perturbation_seed"], c["perturbation_cutoff"]),
        random_solenoidal(grid, 1.0, c["perturbation_seed"] + 1, c["perturbation_cutoff"]),
    )
    return cont_dep_experiment(initial, cfg.params, cfg.step, pert, [delta, 2 * delta])


def cmd_cont_dep(cfg: RunConfig, args) -> None:
    out = _out_dir(cfg, args)
    c = cfg.checks
    if cfg.grid.dim != 2:
        log.warning("continuous dependence is only asserted in 2D; running anyway")
    grids = [cfg.grid]
    if c["cont_dep_refine"]:
        g = cfg.grid
        grids.append(GridSpec(g.dim, 2 * g.n, g.box_length, g.dealias_fraction))
    rows, results, ratios = [], [], []
    for grid in grids:
        reps = cont_dep_reports(cfg, args.delta, grid)
        for rep in reps:
            comp = rep.components
            rows.append(
                (grid.n, rep.delta, rep.input_gap, rep.output_gap, rep.ratio if rep.ratio is not None else "degenerate",
                 comp["sup_u_H"], comp["int_u_V"], comp["sup_phi_H2"], comp["int_phi_H5"])
            )
        if reps[0].degenerate:
            print(f"n={grid.n}: zero perturbation, ratio 0/0 (degenerate)")
            results.append(_verdict(f"n={grid.n} ratio", False, "degenerate"))
            continue
        scale = reps[1].output_gap / reps[0].output_gap if reps[0].output_gap else math.nan
        ratios.append(reps[0].ratio)
        results.append(
            _verdict(
                f"n={grid.n} scaling",
                abs(scale - 4.0) <= 4.0 * c["cont_dep_scaling_tol"],
                f"gap(2δ)/gap(δ) = {scale:.6f} (target 4 ± {100 * c['cont_dep_scaling_tol']:g}%)",
            )
        )
        results.append(_verdict(f"n={grid.n} ratio", math.isfinite(reps[0].ratio), f"output/input = {reps[0].ratio:.6e}"))
    if len(ratios) == 2:
        change = abs(ratios[1] - ratios[0]) / abs(ratios[0])
        results.append(
            _verdict("mesh stability", change < c["cont_dep_mesh_tol"], f"relative change {change:.3e} from n={grids[0].n} to n={grids[1].n}")
        )
    write_csv(
        out / "cont_dep.csv",
        ("n", "delta", "input_gap", "output_gap", "ratio", "sup_u_H", "int_u_V", "sup_phi_H2", "int_phi_H5"),
        rows,
    )
    _require_all(results)


COMMANDS = {
    "simulate": (cmd_simulate, "run the solver, writing ledger/norm CSVs and snapshots"),
    "grad-check": (cmd_grad_check, "finite-difference test of the chemical potential"),
    "energy-audit": (cmd_energy_audit, "energy-ledger residual over a dt sweep"),
    "oracle-compare": (cmd_oracle_compare, "solver against the Galerkin reference ODE"),
    "cont-dep": (cmd_cont_dep, "continuous dependence on initial data"),
    "mass-audit": (cmd_mass_audit, "mass, divergence and velocity-mean series"),
    "validate": (cmd_validate, "parse the config and check coefficient bounds"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nspfc", description="Pseudo-spectral NS-PFC solver and audits")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON run configuration")
        if name != "validate":
            p.add_argument("--out", help="output directory (default: the config's output.directory)")
        if name == "cont-dep":
            p.add_argument("--delta", type=float, required=True, help="perturbation scale")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    func = COMMANDS[args.command][0]
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        func(cfg, args)
    except (ConfigError, GridMismatchError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except CheckFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
