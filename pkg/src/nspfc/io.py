"""Run configuration (JSON), binary snapshots and CSV series.

Config layout, with defaults for everything except ``grid.dim``, ``grid.n``,
``step.dt``, ``step.t_end`` and the stochastic seeds::

    {
      "grid": {"dim": 2, "n": 64, "box_length": 1.0, "dealias_fraction": 0.6666666666666666},
      "params": {"M": 1.0, "r": -0.25,
                 "eta": {"kind": "constant", "value": 1.0},
                 "mobility": {"kind": "smooth-monotone", "c0": 0.5, "c1": 1.5, "c2": 0.5}},
      "step": {"dt": 1e-4, "t_end": 0.1, "max_steps": 1000000000,
               "stabilization_S": 2.0, "stabilization_kappa": 0.0,
               "evolve_velocity": true},
      "initial_condition": {
        "phi": {"kind": "constant_plus_noise", "mean": 0.07, "amplitude": 0.1, "seed": 1, "cutoff": 6},
        "u": {"kind": "zero"}
      },
      "output": {"directory": "out", "stride": 1, "diagnostics": ["ledger", "norms", "snapshots"]},
      "checks": {...}
    }

``phi`` kinds: ``constant_plus_noise``, ``single_mode`` (``k_index``,
``amplitude``, ``mean``), ``snapshot`` (``path``). ``u`` kinds: ``zero``,
``random_solenoidal`` (``amplitude``, ``seed``, ``cutoff``), ``snapshot``.
``checks`` holds the parameters and thresholds of the audit subcommands; see
``CHECK_DEFAULTS``.

Snapshot format (little-endian): 16-byte magic ``NSPFCSNAP\\0v1\\0\\0\\0\\0``,
``u32 dim``, ``u32 n``, ``f64 box_length``, ``f64 t``, then ``φ`` samples as
``f64`` in row-major order, then each velocity component likewise.
"""

from __future__ import annotations

import copy
import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nspfc.errors import ConfigError, GridMismatchError, SnapshotError
from nspfc.initial import constant_plus_noise, random_solenoidal, single_mode
from nspfc.integrator import StepConfig
from nspfc.model import CoefficientFamily, PhysParams, State
from nspfc.spectral import GridSpec, ScalarField, VectorField

MAGIC = b"NSPFCSNAP\x00v1\x00\x00\x00\x00"
_HEADER = struct.Struct("<IIdd")

DIAGNOSTICS = ("ledger", "norms", "snapshots")

CHECK_DEFAULTS = {
    "mass_tol": 1e-12,
    "div_tol": 1e-12,
    "mean_u_tol": 1e-13,
    "grad_pairs": 10,
    "grad_seed": 11,
    "grad_eps": [1e-1, 1e-2, 1e-3, 1e-4],
    "grad_v_amplitude": 1.0,
    "grad_tol": 1e-8,
    "grad_min_order": 1.9,
    "audit_dts": [4e-4, 2e-4, 1e-4],
    "audit_min_order": 0.9,
    "audit_rel_tol": 1e-4,
    "audit_inequality_tol": 1e-6,
    "oracle_modes": 4,
    "oracle_dt": 1e-6,
    "oracle_tol": 1e-6,
    "perturbation_seed": 101,
    "perturbation_cutoff": 4.0,
    "cont_dep_scaling_tol": 0.1,
    "cont_dep_refine": False,
    "cont_dep_mesh_tol": 0.05,
}

_SECTIONS = ("grid", "params", "step", "initial_condition", "output", "checks")
_GRID_KEYS = {"dim", "n", "box_length", "dealias_fraction"}
_PARAM_KEYS = {"M", "r", "eta", "mobility"}
_FAMILY_KEYS = {"kind", "value", "c0", "c1", "c2"}
_STEP_KEYS = {"dt", "t_end", "max_steps", "stabilization_S", "stabilization_kappa", "evolve_velocity"}
_OUTPUT_KEYS = {"directory", "stride", "diagnostics"}
_PHI_KINDS = {
    "constant_plus_noise": ({"kind", "mean", "amplitude", "seed", "cutoff"}, {"seed"}),
    "single_mode": ({"kind", "k_index", "amplitude", "mean"}, {"k_index", "amplitude"}),
    "snapshot": ({"kind", "path"}, {"path"}),
}
_U_KINDS = {
    "zero": ({"kind"}, set()),
    "random_solenoidal": ({"kind", "amplitude", "seed", "cutoff"}, {"seed", "amplitude"}),
    "snapshot": ({"kind", "path"}, {"path"}),
}


@dataclass
class OutputSpec:
    directory: str = "out"
    stride: int = 1
    diagnostics: tuple = DIAGNOSTICS


@dataclass
class RunConfig:
    grid: GridSpec
    params: PhysParams
    step: StepConfig
    initial_condition: dict
    output: OutputSpec = field(default_factory=OutputSpec)
    checks: dict = field(default_factory=lambda: dict(CHECK_DEFAULTS))
    base_dir: Path = field(default_factory=Path)


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _require(obj, keys, where):
    for k in keys:
        if k not in obj:
            raise ConfigError(f"{where}.{k}: required")


def _number(obj, key, where, default=None):
    v = obj.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return v


def _integer(obj, key, where, default=None):
    v = obj.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def _boolean(obj, key, where, default=None):
    v = obj.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key}: expected true or false, got {v!r}")
    return v


def _check_value(c, key):
    default = CHECK_DEFAULTS[key]
    where = "checks"
    if isinstance(default, bool):
        _boolean(c, key, where)
    elif isinstance(default, int):
        _integer(c, key, where)
    elif isinstance(default, float):
        _number(c, key, where)
    else:
        v = c[key]
        if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise ConfigError(f"{where}.{key}: expected a non-empty list of numbers, got {v!r}")


def _family(obj, where) -> CoefficientFamily:
    _reject_unknown(obj, _FAMILY_KEYS, where)
    kind = obj.get("kind", "constant")
    try:
        if kind == "constant":
            return CoefficientFamily.constant(_number(obj, "value", where, 1.0))
        if kind == "smooth-monotone":
            _require(obj, ("c0", "c1", "c2"), where)
            return CoefficientFamily.smooth(*(_number(obj, k, where) for k in ("c0", "c1", "c2")))
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.kind: unknown coefficient family {kind!r}")


def _initial_spec(obj, kinds, where, default_kind):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = obj.get("kind", default_kind)
    if kind not in kinds:
        raise ConfigError(f"{where}.kind: expected one of {sorted(kinds)}, got {kind!r}")
    allowed, required = kinds[kind]
    _reject_unknown(obj, allowed, where)
    _require(obj, sorted(required), where)
    out = {"kind": kind}
    if kind == "constant_plus_noise":
        out.update(
            mean=_number(obj, "mean", where, 0.0),
            amplitude=_number(obj, "amplitude", where, 0.1),
            seed=_integer(obj, "seed", where),
            cutoff=_number(obj, "cutoff", where, 6.0),
        )
    elif kind == "single_mode":
        k = obj["k_index"]
        if not isinstance(k, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in k):
            raise ConfigError(f"{where}.k_index: expected a list of integers")
        out.update(k_index=list(k), amplitude=_number(obj, "amplitude", where), mean=_number(obj, "mean", where, 0.0))
    elif kind == "random_solenoidal":
        out.update(
            amplitude=_number(obj, "amplitude", where),
            seed=_integer(obj, "seed", where),
            cutoff=_number(obj, "cutoff", where, 6.0),
        )
    elif kind == "snapshot":
        if not isinstance(obj["path"], str):
            raise ConfigError(f"{where}.path: expected a string")
        out["path"] = obj["path"]
    return out


def parse_config(text: str, base_dir=None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Syntax errors report line and column; semantic errors name the offending
    field. Relative snapshot paths resolve against ``base_dir``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _reject_unknown(raw, _SECTIONS, "config")
    _require(raw, ("grid", "step"), "config")

    g = raw["grid"]
    _reject_unknown(g, _GRID_KEYS, "grid")
    _require(g, ("dim", "n"), "grid")
    try:
        grid = GridSpec(
            dim=_integer(g, "dim", "grid"),
            n=_integer(g, "n", "grid"),
            box_length=float(_number(g, "box_length", "grid", 1.0)),
            dealias_fraction=float(_number(g, "dealias_fraction", "grid", 2.0 / 3.0)),
        )
    except ConfigError as exc:
        raise ConfigError(f"grid: {exc}") from None

    p = raw.get("params", {})
    _reject_unknown(p, _PARAM_KEYS, "params")
    eta = _family(p.get("eta", {"kind": "constant", "value": 1.0}), "params.eta")
    mob = _family(p.get("mobility", {"kind": "constant", "value": 1.0}), "params.mobility")
    try:
        params = PhysParams(
            M=float(_number(p, "M", "params", 1.0)),
            r=float(_number(p, "r", "params", -0.25)),
            eta=eta,
            mobility=mob,
        )
    except ConfigError as exc:
        raise ConfigError(f"params: {exc}") from None

    s = raw["step"]
    _reject_unknown(s, _STEP_KEYS, "step")
    _require(s, ("dt", "t_end"), "step")
    try:
        step = StepConfig(
            dt=float(_number(s, "dt", "step")),
            t_end=float(_number(s, "t_end", "step")),
            max_steps=_integer(s, "max_steps", "step", 10**9),
            stabilization_S=float(_number(s, "stabilization_S", "step", 2.0)),
            stabilization_kappa=float(_number(s, "stabilization_kappa", "step", 0.0)),
            evolve_velocity=_boolean(s, "evolve_velocity", "step", True),
        )
    except ConfigError as exc:
        raise ConfigError(f"step: {exc}") from None

    ic = raw.get("initial_condition", {})
    _reject_unknown(ic, {"phi", "u"}, "initial_condition")
    phi_ic = _initial_spec(
        ic.get("phi", {"kind": "single_mode", "k_index": [1] + [0] * (grid.dim - 1), "amplitude": 0.1}),
        _PHI_KINDS,
        "initial_condition.phi",
        "constant_plus_noise",
    )
    if phi_ic["kind"] == "single_mode" and len(phi_ic["k_index"]) != grid.dim:
        raise ConfigError(f"initial_condition.phi.k_index: needs {grid.dim} entries")
    u_ic = _initial_spec(ic.get("u", {"kind": "zero"}), _U_KINDS, "initial_condition.u", "zero")

    o = raw.get("output", {})
    _reject_unknown(o, _OUTPUT_KEYS, "output")
    stride = _integer(o, "stride", "output", 1)
    if stride < 1:
        raise ConfigError("output.stride: must be at least 1")
    diags = o.get("diagnostics", list(DIAGNOSTICS))
    if not isinstance(diags, list) or any(d not in DIAGNOSTICS for d in diags):
        raise ConfigError(f"output.diagnostics: expected a subset of {list(DIAGNOSTICS)}")
    directory = o.get("directory", "out")
    if not isinstance(directory, str):
        raise ConfigError("output.directory: expected a string")

    c = raw.get("checks", {})
    _reject_unknown(c, CHECK_DEFAULTS, "checks")
    for key in c:
        _check_value(c, key)
    checks = dict(CHECK_DEFAULTS)
    checks.update(c)

    return RunConfig(
        grid=grid,
        params=params,
        step=step,
        initial_condition={"phi": phi_ic, "u": u_ic},
        output=OutputSpec(directory, stride, tuple(diags)),
        checks=checks,
        base_dir=Path(base_dir) if base_dir is not None else Path(),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _family_dict(fam: CoefficientFamily) -> dict:
    if fam.kind == "constant":
        return {"kind": "constant", "value": fam.value}
    return {"kind": fam.kind, "c0": fam.c0, "c1": fam.c1, "c2": fam.c2}


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "grid": {
            "dim": cfg.grid.dim,
            "n": cfg.grid.n,
            "box_length": cfg.grid.box_length,
            "dealias_fraction": cfg.grid.dealias_fraction,
        },
        "params": {
            "M": cfg.params.M,
            "r": cfg.params.r,
            "eta": _family_dict(cfg.params.eta),
            "mobility": _family_dict(cfg.params.mobility),
        },
        "step": {
            "dt": cfg.step.dt,
            "t_end": cfg.step.t_end,
            "max_steps": cfg.step.max_steps,
            "stabilization_S": cfg.step.stabilization_S,
            "stabilization_kappa": cfg.step.stabilization_kappa,
            "evolve_velocity": cfg.step.evolve_velocity,
        },
        "initial_condition": copy.deepcopy(cfg.initial_condition),
        "output": {
            "directory": cfg.output.directory,
            "stride": cfg.output.stride,
            "diagnostics": list(cfg.output.diagnostics),
        },
        "checks": dict(cfg.checks),
    }


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


# --- initial data ----------------------------------------------------------------


def initial_state(cfg: RunConfig, grid: GridSpec | None = None) -> State:
    """Materialize the configured initial data (optionally on another grid)."""
    grid = grid or cfg.grid
    spec_phi = cfg.initial_condition["phi"]
    spec_u = cfg.initial_condition["u"]
    snaps = {}

    def snapshot(path):
        if path not in snaps:
            snaps[path] = read_snapshot(cfg.base_dir / path, grid)
        return snaps[path]

    kind = spec_phi["kind"]
    if kind == "constant_plus_noise":
        phi = constant_plus_noise(grid, spec_phi["mean"], spec_phi["amplitude"], spec_phi["seed"], spec_phi["cutoff"])
    elif kind == "single_mode":
        phi = single_mode(grid, spec_phi["k_index"], spec_phi["amplitude"], spec_phi["mean"])
    else:
        phi = snapshot(spec_phi["path"]).phi

    kind = spec_u["kind"]
    if kind == "zero":
        u = VectorField.zeros(grid)
    elif kind == "random_solenoidal":
        u = random_solenoidal(grid, spec_u["amplitude"], spec_u["seed"], spec_u["cutoff"])
    else:
        u = snapshot(spec_u["path"]).u
    return State(u, phi, 0.0)


# --- snapshots -------------------------------------------------------------------


def snapshot_bytes(state: State) -> bytes:
    grid = state.grid
    head = MAGIC + _HEADER.pack(grid.dim, grid.n, grid.box_length, state.t)
    body = np.ascontiguousarray(state.phi.values, dtype="<f8").tobytes()
    body += np.ascontiguousarray(state.u.values, dtype="<f8").tobytes()
    return head + body


def write_snapshot(state: State, path) -> None:
    Path(path).write_bytes(snapshot_bytes(state))


def parse_snapshot(data: bytes, grid: GridSpec | None = None) -> State:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise SnapshotError("not an NSPFCSNAP v1 snapshot (magic mismatch)")
    off = len(MAGIC)
    if len(data) < off + _HEADER.size:
        raise SnapshotError(f"truncated snapshot: expected at least {off + _HEADER.size} bytes, got {len(data)}")
    dim, n, box, t = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    count = n**dim
    expected = off + 8 * count * (1 + dim)
    if len(data) != expected:
        what = "truncated" if len(data) < expected else "oversized"
        raise SnapshotError(f"{what} snapshot: expected {expected} bytes, got {len(data)}")
    if grid is not None:
        if (grid.dim, grid.n, grid.box_length) != (dim, n, box):
            raise GridMismatchError(
                f"snapshot grid (dim={dim}, n={n}, L={box}) does not match "
                f"(dim={grid.dim}, n={grid.n}, L={grid.box_length})"
            )
    else:
        try:
            grid = GridSpec(dim, n, box)
        except ConfigError as exc:
            raise SnapshotError(f"invalid snapshot header: {exc}") from None
    vals = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    phi = vals[:count].reshape(grid.shape)
    u = vals[count:].reshape((dim,) + grid.shape)
    return State(VectorField(grid, u.copy()), ScalarField(grid, phi.copy()), float(t))


def read_snapshot(path, grid: GridSpec | None = None) -> State:
    """Load a snapshot; with ``grid`` given, its dim, n and box length must match."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from None
    return parse_snapshot(data, grid)


# --- CSV -------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    """Rows are sequences matching ``header``; floats are written with ``repr``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
