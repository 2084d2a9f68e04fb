import math
from pathlib import Path

import numpy as np
import pytest

from nspfc import CoefficientFamily, GridSpec, PhysParams, State
from nspfc.initial import constant_plus_noise, random_solenoidal

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# Lines recorded by the acceptance suite, echoed in the terminal summary.
CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def smooth_params():
    fam = CoefficientFamily.smooth(0.5, 1.5, 0.5)
    return PhysParams(M=1.0, r=-0.25, eta=fam, mobility=fam)


@pytest.fixture
def constant_params():
    one = CoefficientFamily.constant(1.0)
    return PhysParams(M=1.0, r=-0.25, eta=one, mobility=one)


def random_state(grid, seed=1, phi_amp=0.1, u_amp=0.1, cutoff=4, mean=0.07):
    return State(
        random_solenoidal(grid, u_amp, seed + 1, cutoff),
        constant_plus_noise(grid, mean, phi_amp, seed, cutoff),
        0.0,
    )


def big_box(dim=2, n=32):
    return GridSpec(dim, n, 8 * math.pi)
