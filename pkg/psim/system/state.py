"""Discrete states, densities and the unknown-vector layout."""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from ..exceptions import MeshMismatch
from ..mesh import Mesh
from ..scenario import Scenario
from ..statistics import Statistics

logger = logging.getLogger(__name__)

ETA_CARRIER_BOUNDS = (-700.0, 700.0)
# keeps n_a strictly below one in double precision
ETA_ANION_BOUNDS = (-700.0, 36.0)


@dataclass(frozen=True, eq=False)
class State:
    """Cell vectors of one time level.

    ``psi``, ``phi_n`` and ``phi_p`` live on every cell, ``phi_a`` on the
    intrinsic cells only.
    """

    psi: NDArray[np.float64]
    phi_n: NDArray[np.float64]
    phi_p: NDArray[np.float64]
    phi_a: NDArray[np.float64]
    time: float = 0.0
    mesh: Optional[Mesh] = None

    def with_time(self, time: float) -> "State":
        return replace(self, time=time)

    def copy(self) -> "State":
        return State(
            psi=self.psi.copy(),
            phi_n=self.phi_n.copy(),
            phi_p=self.phi_p.copy(),
            phi_a=self.phi_a.copy(),
            time=self.time,
            mesh=self.mesh,
        )

    def field(self, name: str) -> NDArray[np.float64]:
        return getattr(self, name)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in (self.psi, self.phi_n, self.phi_p, self.phi_a))


def check_same_mesh(first: State, second: State) -> None:
    """Raise :class:`MeshMismatch` unless both states share a mesh layout."""
    if first.psi.shape != second.psi.shape or first.phi_a.shape != second.phi_a.shape:
        raise MeshMismatch(
            f"states have {first.psi.size} and {second.psi.size} cells"
        )
    if first.mesh is not None and second.mesh is not None and first.mesh != second.mesh:
        raise MeshMismatch("states live on different meshes")


@dataclass(frozen=True)
class Densities:
    """Chemical potentials, densities and their derivatives.

    ``d_*`` hold ``N F'(eta)``, the derivative of the density with respect to
    its chemical potential; ``log_*`` hold ``log N + log F(eta)``.
    """

    eta_n: NDArray[np.float64]
    eta_p: NDArray[np.float64]
    eta_a: NDArray[np.float64]
    n_n: NDArray[np.float64]
    n_p: NDArray[np.float64]
    n_a: NDArray[np.float64]
    d_n: NDArray[np.float64]
    d_p: NDArray[np.float64]
    d_a: NDArray[np.float64]
    log_n: NDArray[np.float64]
    log_p: NDArray[np.float64]
    log_a: NDArray[np.float64]

    def density(self, carrier: str) -> NDArray[np.float64]:
        return getattr(self, f"n_{carrier}")


def _evaluate(stat: Statistics, eta, N):
    eta = np.asarray(eta, dtype=float)
    n = N * np.asarray(stat.eval(eta))
    d = N * np.asarray(stat.deriv(eta))
    log = np.log(N) + np.asarray(stat.log_eval(eta))
    return n, d, log


def chemical_potentials(
    scenario: Scenario,
    psi: NDArray[np.float64],
    phi_n: NDArray[np.float64],
    phi_p: NDArray[np.float64],
    phi_a: NDArray[np.float64],
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """``eta = z (phi - psi + E)`` for the three carriers."""
    m = scenario.materials
    intr = scenario.mesh.intrinsic_cells
    eta_n = scenario.z_n * (phi_n - psi + m.E_n)
    eta_p = scenario.z_p * (phi_p - psi + m.E_p)
    eta_a = scenario.z_a * (phi_a - psi[intr] + m.E_a)
    return eta_n, eta_p, eta_a


def compute_densities(
    scenario: Scenario,
    psi: NDArray[np.float64],
    phi_n: NDArray[np.float64],
    phi_p: NDArray[np.float64],
    phi_a: NDArray[np.float64],
) -> Densities:
    """Densities from the discrete state equation."""
    m = scenario.materials
    eta_n, eta_p, eta_a = chemical_potentials(scenario, psi, phi_n, phi_p, phi_a)
    n_n, d_n, log_n = _evaluate(scenario.stat_n, eta_n, m.N_n)
    n_p, d_p, log_p = _evaluate(scenario.stat_p, eta_p, m.N_p)
    n_a, d_a, log_a = _evaluate(scenario.stat_a, eta_a, m.N_a)
    return Densities(
        eta_n=eta_n,
        eta_p=eta_p,
        eta_a=eta_a,
        n_n=n_n,
        n_p=n_p,
        n_a=n_a,
        d_n=d_n,
        d_p=d_p,
        d_a=d_a,
        log_n=log_n,
        log_p=log_p,
        log_a=log_a,
    )


def state_densities(state: State, scenario: Scenario) -> Densities:
    return compute_densities(scenario, state.psi, state.phi_n, state.phi_p, state.phi_a)


@dataclass(frozen=True)
class BoundaryTraces:
    """Dirichlet densities ``n^D`` and potentials on the two boundary faces."""

    phi: NDArray[np.float64]
    psi: NDArray[np.float64]
    n_n: NDArray[np.float64]
    n_p: NDArray[np.float64]
    log_n: NDArray[np.float64]
    log_p: NDArray[np.float64]


def boundary_traces(scenario: Scenario) -> BoundaryTraces:
    """Densities from the Dirichlet state equation at ``x0`` and ``x3``.

    Material data come from the cell adjacent to each contact.
    """
    b = scenario.boundary
    cells = scenario.mesh.face_K[scenario.mesh.dirichlet_faces]
    m = scenario.materials
    phi, psi = b.phi_faces, b.psi_faces
    n_n, _, log_n = _evaluate(
        scenario.stat_n, scenario.z_n * (phi - psi + m.E_n[cells]), m.N_n[cells]
    )
    n_p, _, log_p = _evaluate(
        scenario.stat_p, scenario.z_p * (phi - psi + m.E_p[cells]), m.N_p[cells]
    )
    return BoundaryTraces(phi=phi, psi=psi, n_n=n_n, n_p=n_p, log_n=log_n, log_p=log_p)


def dirichlet_densities(scenario: Scenario) -> Dict[str, NDArray[np.float64]]:
    """``n^D`` of electrons and holes on every cell."""
    b = scenario.boundary
    m = scenario.materials
    n_n, _, _ = _evaluate(scenario.stat_n, scenario.z_n * (b.phi_cells - b.psi_cells + m.E_n), m.N_n)
    n_p, _, _ = _evaluate(scenario.stat_p, scenario.z_p * (b.phi_cells - b.psi_cells + m.E_p), m.N_p)
    return {"n": n_n, "p": n_p}


class UnknownLayout:
    """Interleaved ordering ``(phi_n, phi_p, [phi_a], psi)`` per cell.

    ``phi_a`` appears on intrinsic cells only, which keeps the coupled
    Jacobian block banded.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        per_cell = 3 + mesh.intrinsic_mask.astype(int)
        offsets = np.concatenate(([0], np.cumsum(per_cell)[:-1]))
        self.idx_n = offsets
        self.idx_p = offsets + 1
        self.idx_psi = offsets + per_cell - 1
        self.idx_a = offsets[mesh.intrinsic_cells] + 2
        self.size = int(per_cell.sum())

    def pack(self, state: State) -> NDArray[np.float64]:
        x = np.empty(self.size)
        x[self.idx_n] = state.phi_n
        x[self.idx_p] = state.phi_p
        x[self.idx_a] = state.phi_a
        x[self.idx_psi] = state.psi
        return x

    def unpack(self, x: NDArray[np.float64], time: float = 0.0) -> State:
        return State(
            psi=x[self.idx_psi].copy(),
            phi_n=x[self.idx_n].copy(),
            phi_p=x[self.idx_p].copy(),
            phi_a=x[self.idx_a].copy(),
            time=time,
            mesh=self.mesh,
        )


def step_limit(
    eta: NDArray[np.float64], d_eta: NDArray[np.float64], bounds: Tuple[float, float]
) -> float:
    """Largest ``s <= 1`` keeping ``eta + s d_eta`` inside ``bounds``."""
    lower, upper = bounds
    s = 1.0
    rising = d_eta > 0
    falling = d_eta < 0
    if rising.any():
        s = min(s, float(np.min((upper - eta[rising]) / d_eta[rising])))
    if falling.any():
        s = min(s, float(np.min((lower - eta[falling]) / d_eta[falling])))
    return max(s, 0.0)


def anion_mass_of(state: State, scenario: Scenario) -> float:
    """``sum m_K n_a,K`` over the intrinsic cells."""
    mesh = scenario.mesh
    intr = mesh.intrinsic_cells
    eta_a = scenario.z_a * (state.phi_a - state.psi[intr] + scenario.materials.E_a)
    n_a = scenario.materials.N_a * np.asarray(scenario.stat_a.eval(eta_a))
    return float(np.sum(mesh.measures[intr] * n_a))
