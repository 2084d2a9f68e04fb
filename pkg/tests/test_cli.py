import csv
import json

import pytest

from conftest import CONFIGS

from nspfc.cli import main
from nspfc.diagnostics import LEDGER_COLUMNS, NORM_COLUMNS
from nspfc.io import read_snapshot


def write_config(tmp_path, changes=None, name="cfg.json"):
    raw = json.loads((CONFIGS / "example.json").read_text())
    raw["grid"]["n"] = 32
    raw["step"]["t_end"] = 0.002
    raw["step"]["dt"] = 1e-3
    raw["output"]["stride"] = 1
    for section, body in (changes or {}).items():
        raw.setdefault(section, {}).update(body)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate_shipped_example(capsys):
    assert main(["validate", str(CONFIGS / "example.json")]) == 0
    assert "(A1) ok" in capsys.readouterr().out


def test_simulate_writes_series_and_snapshots(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", str(write_config(tmp_path)), "--out", str(out)]) == 0
    ledger = read_rows(out / "ledger.csv")
    assert tuple(ledger[0]) == LEDGER_COLUMNS
    assert len(ledger) == 3
    assert tuple(read_rows(out / "norms.csv")[0]) == ("t",) + NORM_COLUMNS
    snaps = sorted(p.name for p in out.glob("snap_*.bin"))
    assert snaps == ["snap_00000000.bin", "snap_00000001.bin", "snap_00000002.bin"]
    assert read_snapshot(out / "snap_00000002.bin").t == pytest.approx(0.002)


def test_simulate_zero_end_time_gives_empty_ledger(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", str(write_config(tmp_path, {"step": {"t_end": 0}})), "--out", str(out)]) == 0
    assert read_rows(out / "ledger.csv") == [list(LEDGER_COLUMNS)]


@pytest.mark.parametrize(
    "argv",
    [
        ["validate", "does-not-exist.json"],
        ["simulate"],
        ["frobnicate", "x.json"],
        ["cont-dep", str(CONFIGS / "example.json")],
    ],
)
def test_usage_and_missing_files_exit_one(argv, capsys):
    assert main(argv) == 1


def test_invalid_config_exits_one(tmp_path, capsys):
    path = write_config(tmp_path, {"grid": {"dealias_fraction": 1.5}})
    assert main(["validate", str(path)]) == 1
    assert "dealias_fraction must lie in (0,1]" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_exits_two_and_flushes_partial_ledger(tmp_path, capsys):
    changes = {
        "step": {"dt": 5.0, "t_end": 1e4, "stabilization_S": 0.0},
        "grid": {"box_length": 25.132741228718345},
        "initial_condition": {"phi": {"kind": "constant_plus_noise", "mean": 0.0, "amplitude": 5.0, "seed": 1, "cutoff": 4}},
    }
    out = tmp_path / "run"
    assert main(["simulate", str(write_config(tmp_path, changes)), "--out", str(out)]) == 2
    assert "non-finite" in capsys.readouterr().err
    assert read_rows(out / "ledger.csv")[0] == list(LEDGER_COLUMNS)


def test_failed_check_exits_three(tmp_path, capsys):
    path = write_config(tmp_path, {"checks": {"grad_tol": 1e-30, "grad_pairs": 2}})
    assert main(["grad-check", str(path), "--out", str(tmp_path / "gc")]) == 3
    assert "FAIL pair 0" in capsys.readouterr().out
    assert len(read_rows(tmp_path / "gc" / "grad_check.csv")) == 1 + 2 * 4


def test_mass_audit_passes_on_short_run(tmp_path, capsys):
    assert main(["mass-audit", str(write_config(tmp_path)), "--out", str(tmp_path / "ma")]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    rows = read_rows(tmp_path / "ma" / "mass_audit.csv")
    assert rows[0] == ["step", "t", "mass", "mass_drift", "max_div", "max_mean_u"]
    assert [r[0] for r in rows[1:]] == ["1", "2"]
