"""Pseudo-spectral simulator for the Navier-Stokes phase-field-crystal system on a periodic box."""

from nspfc.errors import BlowUpError, ConfigError, GridMismatchError, SnapshotError
from nspfc.spectral import GridSpec, ScalarField, VectorField, build_tables, leray_project
from nspfc.model import CoefficientFamily, PhysParams, State, chemical_potential, sh_energy
from nspfc.integrator import StepConfig, run, step_imex, stability_probe

__version__ = "0.1.0"
