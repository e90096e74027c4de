"""psim: finite volume drift-diffusion simulator for perovskite solar cells.

Public API:
    Simulator: facade running a scenario (initial state, equilibrium,
    steady state, transient run and convergence study).
    load_scenario: read and validate a TOML scenario file.

The numerical building blocks live in ``psim.statistics``, ``psim.mesh``,
``psim.physics``, ``psim.flux``, ``psim.system`` and ``psim.diagnostics``.
"""

__version__ = "0.1.0"

from .scenario import build_scenario, load_scenario  # noqa: E402
from .simulator import Simulator  # noqa: E402

__all__ = ["Simulator", "build_scenario", "load_scenario"]
