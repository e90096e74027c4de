"""Discrete system, Newton solver and time integration."""

from .assembly import CoupledSystem, PoissonProblem, assemble_residual
from .newton import NewtonResult, NonlinearSystem, ResidualSystem, newton_solve
from .solvers import (
    initial_quasi_fermi,
    initial_state,
    solve_equilibrium,
    solve_poisson_given_qfp,
    solve_steady_state,
)
from .state import (
    Densities,
    State,
    UnknownLayout,
    anion_mass_of,
    check_same_mesh,
    compute_densities,
    dirichlet_densities,
    state_densities,
)
from .transient import TransientResult, advance, run_transient

__all__ = [
    "CoupledSystem",
    "Densities",
    "NewtonResult",
    "NonlinearSystem",
    "PoissonProblem",
    "ResidualSystem",
    "State",
    "TransientResult",
    "UnknownLayout",
    "advance",
    "anion_mass_of",
    "assemble_residual",
    "check_same_mesh",
    "compute_densities",
    "dirichlet_densities",
    "initial_quasi_fermi",
    "initial_state",
    "newton_solve",
    "run_transient",
    "solve_equilibrium",
    "solve_poisson_given_qfp",
    "solve_steady_state",
    "state_densities",
]
