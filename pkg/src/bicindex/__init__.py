"""Scattering matrices, ring probes and derivative tests for bound states in periodic dielectric strips."""

from .bicprobe import ProbeConfig, ProbeResult, localize_bic, probe
from .derivs import BicPoint, DerivativeReport, derivative_report
from .geometry import (
    StructureSpec,
    make_circle_array,
    make_perturbed_circle,
    make_scaled_circle,
    make_slab,
)
from .smatrix import ScatteringMatrix, eig_track, scattering_matrix
from .solver import Grid, solve_adjoint, solve_scattering

__version__ = "0.1.0"

__all__ = [
    "BicPoint",
    "DerivativeReport",
    "Grid",
    "ProbeConfig",
    "ProbeResult",
    "ScatteringMatrix",
    "StructureSpec",
    "derivative_report",
    "eig_track",
    "localize_bic",
    "make_circle_array",
    "make_perturbed_circle",
    "make_scaled_circle",
    "make_slab",
    "probe",
    "scattering_matrix",
    "solve_adjoint",
    "solve_scattering",
]
