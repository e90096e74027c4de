"""Simulator facade."""

import logging
import os
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from .convergence import ConvergenceRow, RefinementResult, convergence_study
from .diagnostics import DiagnosticsRecorder, anion_mass
from .mesh import Mesh
from .models.scenario import ScenarioConfig
from .scenario import Scenario, build_scenario, load_scenario
from .system import (
    State,
    TransientResult,
    initial_state,
    run_transient,
    solve_equilibrium,
    solve_steady_state,
)

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "./psim-out"


class Simulator:
    """Entry point for running a scenario."""

    def __init__(
        self,
        config: Union[ScenarioConfig, str, Path],
        *,
        out_dir: Optional[Union[str, Path]] = None,
        threads: Optional[int] = None,
    ):
        """Initialize the Simulator.

        Args:
            config: A validated configuration or the path of a TOML scenario.
            out_dir: Output directory. If not provided, will be read from the
                PSIM_OUT_DIR environment variable, defaulting to ./psim-out.
            threads: Workers of the convergence study. If not provided, will be
                read from the PSIM_THREADS environment variable, defaulting to 1.
        """
        if not isinstance(config, ScenarioConfig):
            config = load_scenario(config)
        self._config = config

        if out_dir is None:
            out_dir = config.outputs.directory or os.getenv("PSIM_OUT_DIR", DEFAULT_OUT_DIR)
        self.out_dir = Path(out_dir)

        if threads is None:
            raw = os.getenv("PSIM_THREADS", "1")
            try:
                threads = int(raw)
            except ValueError:
                raise ValueError(f"Invalid PSIM_THREADS '{raw}'. Must be a positive integer")
        if threads < 1:
            raise ValueError(f"Invalid thread count {threads}. Must be a positive integer")
        self.threads = threads

        self._scenario = build_scenario(config)
        self._initial: Optional[State] = None

    @property
    def config(self) -> ScenarioConfig:
        """The validated configuration."""
        return self._config

    @property
    def scenario(self) -> Scenario:
        """The runtime scenario."""
        return self._scenario

    @property
    def mesh(self) -> Mesh:
        return self._scenario.mesh

    def initial_state(self) -> State:
        """Initial quasi Fermi potentials with their self-consistent potential."""
        if self._initial is None:
            self._initial = initial_state(self._scenario)
        return self._initial

    def equilibrium(self, target: Optional[float] = None) -> State:
        """Thermodynamic equilibrium; the mass defaults to that of the initial state."""
        if target is None and self._config.initial.anion_mass is None:
            target = anion_mass(self.initial_state(), self._scenario)
        return solve_equilibrium(self._scenario, target)

    def steady_state(self, initial_guess: Optional[State] = None) -> State:
        """Steady state with the vacancy mass of the guess (the initial state by default)."""
        return solve_steady_state(self._scenario, initial_guess or self.initial_state())

    def run(
        self,
        steady: Optional[State] = None,
        keep_times: Optional[Sequence[float]] = None,
    ) -> Tuple[TransientResult, Optional[State]]:
        """Integrate the scenario over its time grid.

        Args:
            steady: Steady state for the relative entropy and L2 errors. Solved
                for when ``outputs.steady`` is set and none is given.
            keep_times: Dimensionless times whose states are kept; the
                configured profile times by default.

        Returns:
            The transient result and the steady state used for the diagnostics.
        """
        initial = self.initial_state()
        if steady is None and self._config.outputs.steady:
            steady = self.steady_state(initial)
        dimensional = self._config.outputs.dimensional and steady is not None
        recorder = DiagnosticsRecorder(self._scenario, steady=steady, dimensional=dimensional)
        times = self._scenario.output_times() if keep_times is None else tuple(keep_times)
        result = run_transient(self._scenario, None, initial, hooks=recorder, keep_times=times)
        return result, steady

    def convergence(
        self, nstar_min: int, nstar_max: int, nstar_ref: int
    ) -> Tuple[List[ConvergenceRow], RefinementResult]:
        """Spatial convergence study on refinements of this scenario."""
        return convergence_study(self._config, nstar_min, nstar_max, nstar_ref, threads=self.threads)
