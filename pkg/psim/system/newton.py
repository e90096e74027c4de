"""Damped Newton iteration with a sparse direct linear solve."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..exceptions import NoConvergence
from ..models.scenario import NewtonOptions

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
BACKTRACK_FACTOR = 0.5


@dataclass(frozen=True)
class ResidualSystem:
    """Residual vector and, optionally, its sparse Jacobian."""

    residual: NDArray[np.float64]
    jacobian: Optional[sparse.csr_matrix] = None

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


class NonlinearSystem(ABC):
    """A square nonlinear system ``F(x) = 0`` for :func:`newton_solve`."""

    @abstractmethod
    def evaluate(self, x: NDArray[np.float64], with_jacobian: bool = True) -> ResidualSystem:
        """Residual (and Jacobian) at ``x``."""

    def max_step(self, x: NDArray[np.float64], dx: NDArray[np.float64]) -> float:
        """Largest admissible fraction of the Newton step ``dx``."""
        return 1.0

    def accepts(
        self,
        x: NDArray[np.float64],
        current: ResidualSystem,
        trial: ResidualSystem,
        step: float,
        dx: NDArray[np.float64],
    ) -> bool:
        """Armijo decrease of the residual maximum norm."""
        if not np.all(np.isfinite(trial.residual)):
            return False
        return trial.norm <= (1.0 - ARMIJO * step) * current.norm


@dataclass(frozen=True)
class NewtonResult:
    """Outcome of a converged Newton solve."""

    x: NDArray[np.float64]
    iterations: int
    residual_norm: float
    converged_by: str


def newton_solve(
    x0: NDArray[np.float64],
    system: NonlinearSystem,
    options: NewtonOptions,
    label: str = "newton",
) -> NewtonResult:
    """Solve ``system`` from ``x0`` by damped Newton.

    The iteration stops when the residual maximum norm drops below
    ``abs_tol`` or ``rel_tol`` times its initial value, or when a full Newton
    step is smaller than ``step_tol (1 + |x|)``. A stalled line search is
    accepted as converged if the residual is already below ``stagnation_tol``.

    Args:
        x0: Initial iterate.
        system: The nonlinear system.
        options: Tolerances and damping parameters.
        label: Name used in log messages.

    Returns:
        The converged iterate with its iteration count.

    Raises:
        NoConvergence: If the iteration fails to converge.
    """
    x = np.array(x0, dtype=float)
    current = system.evaluate(x)
    norm0 = norm = current.norm
    if not np.isfinite(norm):
        raise NoConvergence(0, norm, f"{label}: non-finite initial residual")
    if norm <= options.abs_tol:
        logger.debug("%s: initial residual %.3e already converged", label, norm)
        return NewtonResult(x, 0, norm, "residual")

    damping = options.damping_initial
    for iteration in range(1, options.max_iters + 1):
        dx = spsolve(current.jacobian.tocsc(), -current.residual)
        if not np.all(np.isfinite(dx)):
            raise NoConvergence(iteration, norm, f"{label}: singular Newton system")

        limit = system.max_step(x, dx)
        if limit >= 1.0 and np.max(np.abs(dx)) <= options.step_tol * (1.0 + np.max(np.abs(x))):
            x = x + dx
            final = system.evaluate(x, with_jacobian=False)
            logger.debug("%s: iteration %d: step below tolerance, |F|=%.3e", label, iteration, final.norm)
            return NewtonResult(x, iteration, final.norm, "step")

        step = min(damping, limit)
        accepted = False
        for _ in range(options.max_backtracks + 1):
            trial_x = x + step * dx
            trial = system.evaluate(trial_x)
            if system.accepts(x, current, trial, step, dx):
                accepted = True
                break
            step *= BACKTRACK_FACTOR
        if not accepted:
            if norm <= options.stagnation_tol:
                logger.debug("%s: line search stalled at |F|=%.3e, accepted", label, norm)
                return NewtonResult(x, iteration - 1, norm, "stagnation")
            raise NoConvergence(iteration, norm, f"{label}: line search failed at |F| = {norm:.3e}")

        x, current, norm = trial_x, trial, trial.norm
        logger.debug("%s: iteration %d: |F|=%.3e, damping=%.3g", label, iteration, norm, step)
        if norm <= options.abs_tol or norm <= options.rel_tol * norm0:
            return NewtonResult(x, iteration, norm, "residual")
        damping = min(1.0, step * options.damping_growth)

    raise NoConvergence(options.max_iters, norm, f"{label}: no convergence in {options.max_iters} iterations (|F| = {norm:.3e})")
