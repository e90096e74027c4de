"""Spatial convergence study against a fine reference solution."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from .exceptions import PsimError
from .mesh import Mesh, Region, project_to_coarser
from .models.scenario import ScenarioConfig
from .scenario import build_scenario, with_mesh
from .system import initial_state, run_transient
from .system.state import State

logger = logging.getLogger(__name__)

CONVERGENCE_FIELDS = ("psi", "phi_n", "phi_p", "phi_a")


def nodes_for_level(nstar: int) -> int:
    """``2^n* + 1`` nodes per region."""
    return 2**nstar + 1


@dataclass(frozen=True)
class RefinementResult:
    """Final state of one refinement, or the reason it failed."""

    nstar: int
    mesh: Optional[Mesh] = None
    state: Optional[State] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.state is None


def run_refinement(config: ScenarioConfig, nstar: int) -> RefinementResult:
    """Run the transient on the ``n*`` mesh and return its final state.

    Solver failures are caught and reported in the result.
    """
    try:
        scenario = build_scenario(with_mesh(config, nodes_for_level(nstar)))
        initial = initial_state(scenario)
        final = run_transient(scenario, None, initial).final
    except PsimError as e:
        logger.warning("refinement n*=%d failed: %s", nstar, e)
        return RefinementResult(nstar=nstar, error=str(e))
    return RefinementResult(nstar=nstar, mesh=scenario.mesh, state=final)


@dataclass
class ConvergenceRow:
    nstar: int
    h: float
    errors: Dict[str, float] = field(default_factory=dict)
    eoc: Dict[str, float] = field(default_factory=dict)
    failed: bool = False


def _errors(result: RefinementResult, reference: RefinementResult) -> Dict[str, float]:
    """Discrete L2 errors of the refinement against the projected reference."""
    mesh, state = result.mesh, result.state
    assert mesh is not None and state is not None
    assert reference.mesh is not None and reference.state is not None
    errors = {}
    for name in CONVERGENCE_FIELDS:
        region = Region.INTRINSIC if name == "phi_a" else None
        projected = project_to_coarser(reference.mesh, mesh, reference.state.field(name), region=region)
        weights = mesh.measures[mesh.intrinsic_cells] if region is not None else mesh.measures
        errors[name] = math.sqrt(float(np.sum(weights * (state.field(name) - projected) ** 2)))
    return errors


def experimental_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    """``log(e_k / e_{k+1}) / log(h_k / h_{k+1})``, ``nan`` when undefined."""
    if not (e_coarse > 0 and e_fine > 0) or h_coarse == h_fine:
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def convergence_study(
    config: ScenarioConfig,
    nstar_min: int,
    nstar_max: int,
    nstar_ref: int,
    threads: int = 1,
) -> Tuple[List[ConvergenceRow], RefinementResult]:
    """Errors and orders of convergence for ``n* = nstar_min..nstar_max``.

    Args:
        config: Scenario configuration; its mesh node count is overridden.
        nstar_min: Coarsest level.
        nstar_max: Finest compared level.
        nstar_ref: Reference level.
        threads: Parallel workers.

    Returns:
        One row per level and the reference result.

    Raises:
        ValueError: If ``nstar_ref > nstar_max >= nstar_min >= 2`` is violated.
        PsimError: If the reference run fails.
    """
    if not nstar_ref > nstar_max >= nstar_min >= 2:
        raise ValueError(
            f"need nstar_ref > nstar_max >= nstar_min >= 2, got {nstar_ref}, {nstar_max}, {nstar_min}"
        )
    levels = list(range(nstar_min, nstar_max + 1)) + [nstar_ref]
    logger.info("convergence: levels %s on %d worker(s)", levels, threads)
    results: List[RefinementResult] = Parallel(n_jobs=threads)(
        delayed(run_refinement)(config, nstar) for nstar in levels
    )
    reference = results[-1]
    if reference.failed:
        raise PsimError(f"reference run n*={nstar_ref} failed: {reference.error}")

    length = config.physical.length_cm if config.physical is not None and config.mode == "physical" else 1.0
    rows: List[ConvergenceRow] = []
    for result in results[:-1]:
        mesh_h = float(np.max(np.diff(config.mesh.breakpoints))) / length / (nodes_for_level(result.nstar) - 1)
        if result.failed:
            rows.append(
                ConvergenceRow(result.nstar, mesh_h, {n: float("nan") for n in CONVERGENCE_FIELDS}, failed=True)
            )
            continue
        rows.append(ConvergenceRow(result.nstar, result.mesh.h, _errors(result, reference)))  # type: ignore[union-attr]

    for coarse, fine in zip(rows[:-1], rows[1:]):
        fine.eoc = {
            name: experimental_order(coarse.errors[name], fine.errors[name], coarse.h, fine.h)
            for name in CONVERGENCE_FIELDS
        }
    return rows, reference


def convergence_columns() -> List[str]:
    return (
        ["nstar", "h"]
        + [f"error_{name}" for name in CONVERGENCE_FIELDS]
        + [f"eoc_{name}" for name in CONVERGENCE_FIELDS]
        + ["failed"]
    )


def convergence_table(rows: List[ConvergenceRow]) -> np.ndarray:
    """Numeric table matching :func:`convergence_columns`; missing orders are ``nan``."""
    table = []
    for row in rows:
        table.append(
            [float(row.nstar), row.h]
            + [row.errors.get(name, float("nan")) for name in CONVERGENCE_FIELDS]
            + [row.eoc.get(name, float("nan")) for name in CONVERGENCE_FIELDS]
            + [1.0 if row.failed else 0.0]
        )
    return np.asarray(table, dtype=float).reshape(len(rows), len(convergence_columns()))
