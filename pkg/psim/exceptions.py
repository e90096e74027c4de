"""Custom exceptions for psim."""

from typing import Optional


class PsimError(Exception):
    """Base exception for all simulator-level errors."""

    def __init__(
        self,
        message: str,
        original_exception: Optional[Exception] = None,
    ):
        """Initialize the simulator error."""
        super().__init__(message)
        self.message = message
        self.original_exception = original_exception

    def __str__(self) -> str:
        """Return string representation of the error."""
        return f"{self.__class__.__name__}: {self.message}"


class ConfigError(PsimError):
    """Scenario configuration is malformed or violates a model invariant."""


class DomainError(PsimError):
    """Argument lies outside the image or domain of a statistics function."""


class MeshError(PsimError):
    """Mesh construction failed or two meshes are not nested."""


class MeshMismatch(PsimError):
    """Two states that must share a mesh do not."""


class DegenerateFace(PsimError):
    """Interface density requested on a face with vanishing potential jump."""


class NoConvergence(PsimError):
    """A Newton iteration did not reach its tolerance."""

    def __init__(self, iterations: int, final_norm: float, message: str = ""):
        """Initialize with the iteration count and last residual norm."""
        self.iterations = iterations
        self.final_norm = final_norm
        super().__init__(
            message
            or f"Newton did not converge after {iterations} iterations "
            f"(|F| = {final_norm:.3e})"
        )


class StepFailure(PsimError):
    """A time step failed after exhausting step bisection."""

    def __init__(self, time: float, step: float):
        """Initialize with the time node and the smallest step attempted."""
        self.time = time
        self.step = step
        super().__init__(
            f"time step from t = {time:.6g} failed down to tau = {step:.3e}"
        )


class MassOutOfRange(PsimError):
    """Requested anion mass is outside the open image (0, |Omega_intr|)."""

    def __init__(self, target: float, upper: float):
        """Initialize with the offending target and the admissible upper bound."""
        self.target = target
        self.upper = upper
        super().__init__(
            f"anion mass target {target:.6g} not in the open interval (0, {upper:.6g})"
        )
