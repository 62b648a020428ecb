"""Kepler dynamics on a deformed Galilei phase space."""

from .algebra import (
    COORDS, BracketTable, DeformationParams, Observable, PhaseState, constraint_residuals,
    jacobi_residual, make_state, observable_bracket, structure_bracket,
)
from .dynamics import IntegratorConfig, Trajectory, drift_report, flow_rhs, integrate_flow
from .observables import SVars, hamiltonian, r_squared, svars_from_state

__all__ = [
    "COORDS", "BracketTable", "DeformationParams", "Observable", "PhaseState",
    "constraint_residuals", "jacobi_residual", "make_state", "observable_bracket",
    "structure_bracket", "IntegratorConfig", "Trajectory", "drift_report", "flow_rhs",
    "integrate_flow", "SVars", "hamiltonian", "r_squared", "svars_from_state",
]
