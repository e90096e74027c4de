"""Diagnostics record model."""

from typing import Dict, List, Optional

from pydantic import Field

from .base import PsimModel

L2_FIELDS = ("psi", "phi_n", "phi_p", "phi_a", "n_n", "n_p", "n_a")


class DiagnosticsRecord(PsimModel):
    """Entropy bookkeeping of one accepted time node."""

    time: float
    entropy_E_T: float = Field(..., description="Relative entropy to the Dirichlet data")
    dissipation_D_T: float
    entropy_vs_steady_E_inf: Optional[float] = None
    l2_errors: Dict[str, float] = Field(default_factory=dict)
    anion_mass: float
    free_energy_dimensional: Optional[float] = Field(
        None, description="Relative free energy to the steady state in J/cm^2"
    )


class RunManifest(PsimModel):
    """Header written next to every set of result files."""

    format_version: int = 1
    psim_version: str
    command: str
    scenario: str
    config_hash: str
    files: List[str] = Field(default_factory=list)
