"""CSV and manifest writers.

Tables are written with :func:`numpy.savetxt` as comma separated values with a
header row and 17 significant digits, which round-trips doubles exactly.
Missing values are written as ``nan``.
"""

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from ..models.diagnostics import L2_FIELDS, DiagnosticsRecord, RunManifest

if TYPE_CHECKING:
    from ..scenario import Scenario
    from ..system.state import State

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PROFILE_COLUMNS = ("x", "region", "psi", "phi_n", "phi_p", "phi_a", "n_n", "n_p", "n_a")
DIAGNOSTICS_COLUMNS = (
    "time",
    "entropy_E_T",
    "dissipation_D_T",
    "entropy_vs_steady_E_inf",
    *(f"l2_{name}" for name in L2_FIELDS),
    "anion_mass",
    "free_energy_dimensional",
)

PathLike = Union[str, Path]


def write_table(path: PathLike, columns: Sequence[str], rows: NDArray[np.float64]) -> Path:
    """Write a numeric table with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.atleast_2d(np.asarray(rows, dtype=float))
    if data.size == 0:
        data = np.zeros((0, len(columns)))
    np.savetxt(path, data, delimiter=",", header=",".join(columns), comments="", fmt=FLOAT_FORMAT)
    logger.debug("wrote %d rows to %s", data.shape[0], path)
    return path


def read_table(path: PathLike) -> Dict[str, NDArray[np.float64]]:
    """Read a table written by :func:`write_table` into named columns."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    data = np.atleast_1d(data)
    return {name: np.asarray(data[name], dtype=float) for name in data.dtype.names}


def profile_table(state: "State", scenario: "Scenario") -> NDArray[np.float64]:
    """Cell-wise profile rows; vacancy columns are ``nan`` outside the intrinsic layer."""
    from ..system.state import state_densities

    mesh = scenario.mesh
    dens = state_densities(state, scenario)
    intr = mesh.intrinsic_cells
    phi_a = np.full(mesh.n_cells, np.nan)
    n_a = np.full(mesh.n_cells, np.nan)
    phi_a[intr] = state.phi_a
    n_a[intr] = dens.n_a
    return np.column_stack(
        (mesh.centers, mesh.regions, state.psi, state.phi_n, state.phi_p, phi_a, dens.n_n, dens.n_p, n_a)
    )


def write_profile(path: PathLike, state: "State", scenario: "Scenario") -> Path:
    return write_table(path, PROFILE_COLUMNS, profile_table(state, scenario))


def read_profile(path: PathLike) -> Dict[str, NDArray[np.float64]]:
    """Columns of a profile file, for example to start a run from it."""
    return read_table(path)


def profile_name(time: float) -> str:
    """File name of the profile at ``time``."""
    return f"profiles_{time:.6g}.csv"


def _optional(value) -> float:
    return float("nan") if value is None else float(value)


def diagnostics_rows(records: Iterable[DiagnosticsRecord]) -> NDArray[np.float64]:
    rows: List[List[float]] = []
    for r in records:
        rows.append(
            [
                r.time,
                r.entropy_E_T,
                r.dissipation_D_T,
                _optional(r.entropy_vs_steady_E_inf),
                *(_optional(r.l2_errors.get(name)) for name in L2_FIELDS),
                r.anion_mass,
                _optional(r.free_energy_dimensional),
            ]
        )
    return np.asarray(rows, dtype=float).reshape(len(rows), len(DIAGNOSTICS_COLUMNS))


def write_diagnostics(path: PathLike, records: Sequence[DiagnosticsRecord]) -> Path:
    """One row per record."""
    return write_table(path, DIAGNOSTICS_COLUMNS, diagnostics_rows(records))


def write_manifest(directory: PathLike, manifest: RunManifest) -> Path:
    """Write ``manifest.json`` into ``directory``."""
    path = Path(directory) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path
