"""Backward Euler time loop."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import NoConvergence, StepFailure
from ..models.diagnostics import DiagnosticsRecord
from ..models.scenario import TimeGrid
from ..scenario import Scenario
from .assembly import CoupledSystem
from .newton import newton_solve
from .state import State, UnknownLayout

logger = logging.getLogger(__name__)

DiagnosticsSink = Callable[[State], Optional[DiagnosticsRecord]]

_PROGRESS_STEPS = 10


@dataclass
class TransientResult:
    """Records emitted at the time nodes, kept states and the final state."""

    records: List[DiagnosticsRecord] = field(default_factory=list)
    states: Dict[float, State] = field(default_factory=dict)
    final: Optional[State] = None


def _nearest_nodes(nodes: Sequence[float], times: Sequence[float]) -> Dict[int, float]:
    """Map grid indices to the requested times they stand for."""
    grid = np.asarray(nodes)
    picked: Dict[int, float] = {}
    for t in times:
        picked[int(np.argmin(np.abs(grid - t)))] = t
    return picked


def advance(scenario: Scenario, state: State, t_next: float, layout: Optional[UnknownLayout] = None) -> State:
    """Advance ``state`` to ``t_next``, halving the step on Newton failure.

    Sub-steps accumulate back onto ``t_next`` exactly.

    Raises:
        StepFailure: If the step fails after ``max_halvings`` halvings.
    """
    layout = layout or UnknownLayout(scenario.mesh)
    max_halvings = scenario.solver.max_halvings
    t = state.time
    span = t_next - t
    sub = span
    halvings = 0
    while t < t_next:
        last = t + sub >= t_next - 1e-12 * max(1.0, abs(t_next))
        target = t_next if last else t + sub
        tau = target - t
        system = CoupledSystem(scenario, old=state, tau=tau, time=target)
        try:
            result = newton_solve(layout.pack(state), system, scenario.solver, label=f"step t={target:.6g}")
        except NoConvergence as e:
            halvings += 1
            if halvings > max_halvings:
                raise StepFailure(t, tau) from e
            sub = 0.5 * sub
            logger.warning("step at t=%.6g failed (%s); halving to tau=%.3e", t, e.message, sub)
            continue
        state = system.unpack(result.x)
        t = target
    return state


def run_transient(
    scenario: Scenario,
    grid: Optional[TimeGrid],
    initial: State,
    hooks: Optional[DiagnosticsSink] = None,
    keep_times: Sequence[float] = (),
) -> TransientResult:
    """Integrate from ``initial`` over ``grid`` by backward Euler.

    Args:
        scenario: The runtime scenario.
        grid: Dimensionless time grid, the scenario's when ``None``.
        initial: Consistent initial state.
        hooks: Called with the initial state and every accepted node state;
            a returned record is collected.
        keep_times: Times whose nearest node states are kept.

    Returns:
        The collected records, kept states and the final state.

    Raises:
        StepFailure: If a step fails after all halvings.
    """
    grid = grid or scenario.time
    nodes = grid.nodes()
    keep = _nearest_nodes(nodes, keep_times)
    layout = UnknownLayout(scenario.mesh)
    result = TransientResult()

    state = initial.with_time(nodes[0])

    def emit(index: int, current: State) -> None:
        if hooks is not None:
            record = hooks(current)
            if record is not None:
                result.records.append(record)
        if index in keep:
            result.states[keep[index]] = current

    emit(0, state)
    total = len(nodes) - 1
    report_every = max(1, total // _PROGRESS_STEPS)
    for index in range(1, len(nodes)):
        state = advance(scenario, state, nodes[index], layout)
        emit(index, state)
        if index % report_every == 0 or index == total:
            logger.info("%s: step %d/%d, t=%.6g", scenario.name, index, total, nodes[index])
    result.final = state
    return result
