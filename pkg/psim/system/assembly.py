"""Residuals and analytic Jacobians of the discrete system.

Rows of the coupled system, per cell ``K`` (``m_K`` its measure):

* carriers ``alpha = n, p``:
  ``nu z m (n - n_old) / tau + sum_sigma J - z m (gamma G - R)``
* vacancies, intrinsic cells only:
  ``z_a m (n_a - n_a_old) / tau + sum_sigma J_a``
* Poisson:
  ``-lambda^2 sum_sigma eps tau D psi - delta m (z_n n_n + z_p n_p + C) - m z_a n_a``

Without a time step the time differences are dropped and the first vacancy
row is replaced by the mass constraint ``sum m n_a - M``.
"""

import logging
from typing import Dict, List, Optional

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from ..flux import FaceFluxInputs, sedan_flux_with_derivatives
from ..physics import recombination_terms
from ..scenario import Scenario
from .newton import ARMIJO, NonlinearSystem, ResidualSystem
from .state import (
    ETA_ANION_BOUNDS,
    ETA_CARRIER_BOUNDS,
    Densities,
    State,
    UnknownLayout,
    boundary_traces,
    chemical_potentials,
    compute_densities,
    state_densities,
    step_limit,
)

logger = logging.getLogger(__name__)

STEP_SAFETY = 0.95
FUNCTIONAL_SLACK = 1e-13


class _Triplets:
    """COO accumulator; duplicate entries are summed."""

    def __init__(self) -> None:
        self.rows: List[NDArray[np.int_]] = []
        self.cols: List[NDArray[np.int_]] = []
        self.vals: List[NDArray[np.float64]] = []

    def add(self, rows, cols, vals) -> None:
        rows, cols, vals = np.broadcast_arrays(
            np.asarray(rows), np.asarray(cols), np.asarray(vals, dtype=float)
        )
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())

    def matrix(self, size: int, drop_row: Optional[int] = None) -> sparse.csr_matrix:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, dtype=int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, dtype=int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        if drop_row is not None:
            keep = rows != drop_row
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


class _Carrier:
    """Per-carrier view used by the face loop."""

    def __init__(self, z, phi, n, d, log, rows, psi_cols, coefficient):
        self.z = z
        self.phi = phi
        self.n = n
        self.d = d
        self.log = log
        self.rows = rows
        self.psi_cols = psi_cols
        self.coefficient = coefficient


def _add_interior_fluxes(
    residual: NDArray[np.float64],
    triplets: Optional[_Triplets],
    carrier: _Carrier,
    K: NDArray[np.int_],
    L: NDArray[np.int_],
    tau: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Add ``J_{K,sigma}`` to row ``K`` and its negative to row ``L``."""
    c = carrier
    z = c.z
    inputs = FaceFluxInputs(
        z=z,
        tau=tau,
        n_K=c.n[K],
        n_L=c.n[L],
        phi_K=c.phi[K],
        phi_L=c.phi[L],
        log_n_K=c.log[K],
        log_n_L=c.log[L],
    )
    flux, _, der = sedan_flux_with_derivatives(inputs)
    np.add.at(residual, c.rows[K], flux)
    np.add.at(residual, c.rows[L], -flux)
    if triplets is not None:
        r_K = c.d[K] / c.n[K]
        r_L = c.d[L] / c.n[L]
        d_phi_K = -der.d_Q * z * (1.0 - r_K) + der.d_n_K * z * c.d[K]
        d_psi_K = -der.d_Q * z * r_K - der.d_n_K * z * c.d[K]
        d_phi_L = der.d_Q * z * (1.0 - r_L) + der.d_n_L * z * c.d[L]
        d_psi_L = der.d_Q * z * r_L - der.d_n_L * z * c.d[L]
        cols = (c.rows[K], c.psi_cols[K], c.rows[L], c.psi_cols[L])
        values = (d_phi_K, d_psi_K, d_phi_L, d_psi_L)
        for row, sign in ((c.rows[K], 1.0), (c.rows[L], -1.0)):
            for col, value in zip(cols, values):
                triplets.add(row, col, sign * value)
    return flux


def _add_boundary_fluxes(
    residual: NDArray[np.float64],
    triplets: Optional[_Triplets],
    carrier: _Carrier,
    K: NDArray[np.int_],
    tau: NDArray[np.float64],
    n_D: NDArray[np.float64],
    log_D: NDArray[np.float64],
    phi_D: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Fluxes through Dirichlet faces, whose outer values are fixed."""
    c = carrier
    z = c.z
    inputs = FaceFluxInputs(
        z=z, tau=tau, n_K=c.n[K], n_L=n_D, phi_K=c.phi[K], phi_L=phi_D, log_n_K=c.log[K], log_n_L=log_D
    )
    flux, _, der = sedan_flux_with_derivatives(inputs)
    np.add.at(residual, c.rows[K], flux)
    if triplets is not None:
        r_K = c.d[K] / c.n[K]
        triplets.add(c.rows[K], c.rows[K], -der.d_Q * z * (1.0 - r_K) + der.d_n_K * z * c.d[K])
        triplets.add(c.rows[K], c.psi_cols[K], -der.d_Q * z * r_K - der.d_n_K * z * c.d[K])
    return flux


class CoupledSystem(NonlinearSystem):
    """The fully coupled system in ``(phi_n, phi_p, phi_a, psi)``.

    Args:
        scenario: The runtime scenario.
        old: State of the previous time level (transient mode).
        tau: Time step; ``None`` selects the stationary system.
        anion_mass: Conserved vacancy mass, required when ``tau`` is ``None``.
        time: Time stamp given to unpacked states.
    """

    def __init__(
        self,
        scenario: Scenario,
        old: Optional[State] = None,
        tau: Optional[float] = None,
        anion_mass: Optional[float] = None,
        time: float = 0.0,
    ):
        if tau is None and anion_mass is None:
            raise ValueError("the stationary system needs the conserved anion mass")
        if tau is not None and (old is None or tau <= 0):
            raise ValueError("a transient step needs the previous state and tau > 0")
        self.scenario = scenario
        self.layout = UnknownLayout(scenario.mesh)
        self.tau = tau
        self.anion_mass = anion_mass
        self.time = time
        self.traces = boundary_traces(scenario)
        self.old = state_densities(old, scenario) if old is not None and tau is not None else None

        mesh = scenario.mesh
        inner = mesh.interior_faces
        self._K = mesh.face_K[inner]
        self._L = mesh.face_L[inner]
        self._bK = mesh.face_K[mesh.dirichlet_faces]
        tau_faces = mesh.transmissibilities
        self._tau_n = tau_faces * scenario.mu_n_face
        self._tau_p = tau_faces * scenario.mu_p_face
        self._tau_eps = scenario.params.lambda_**2 * tau_faces * scenario.eps_face
        intr_faces = mesh.intrinsic_interior_faces
        first = mesh.intrinsic_cells[0] if mesh.intrinsic_cells.size else 0
        self._aK = mesh.face_K[intr_faces] - first
        self._aL = mesh.face_L[intr_faces] - first
        self._tau_a = tau_faces[intr_faces]

    def unpack(self, x: NDArray[np.float64]) -> State:
        return self.layout.unpack(x, time=self.time)

    def _carriers(self, state: State, dens: Densities) -> Dict[str, _Carrier]:
        L = self.layout
        s = self.scenario
        intr = s.mesh.intrinsic_cells
        return {
            "n": _Carrier(s.z_n, state.phi_n, dens.n_n, dens.d_n, dens.log_n, L.idx_n, L.idx_psi, self._tau_n),
            "p": _Carrier(s.z_p, state.phi_p, dens.n_p, dens.d_p, dens.log_p, L.idx_p, L.idx_psi, self._tau_p),
            "a": _Carrier(s.z_a, state.phi_a, dens.n_a, dens.d_a, dens.log_a, L.idx_a, L.idx_psi[intr], self._tau_a),
        }

    def face_fluxes(self, state: State) -> Dict[str, NDArray[np.float64]]:
        """``J_{K,sigma}`` per carrier: interior faces then the two boundary faces.

        Vacancy fluxes are listed on intrinsic interior faces only.
        """
        dens = state_densities(state, self.scenario)
        carriers = self._carriers(state, dens)
        scratch = np.zeros(self.layout.size)
        t = self.traces
        out = {}
        for name, n_D, log_D in (("n", t.n_n, t.log_n), ("p", t.n_p, t.log_p)):
            c = carriers[name]
            interior = _add_interior_fluxes(scratch, None, c, self._K, self._L, c.coefficient[self.scenario.mesh.interior_faces])
            boundary = _add_boundary_fluxes(
                scratch, None, c, self._bK, c.coefficient[self.scenario.mesh.dirichlet_faces], n_D, log_D, t.phi
            )
            out[name] = np.concatenate((interior, boundary))
        out["a"] = _add_interior_fluxes(scratch, None, carriers["a"], self._aK, self._aL, self._tau_a)
        return out

    def evaluate(self, x: NDArray[np.float64], with_jacobian: bool = True) -> ResidualSystem:  # noqa: C901
        s = self.scenario
        mesh = s.mesh
        p = s.params
        lay = self.layout
        state = self.unpack(x)
        dens = state_densities(state, s)
        residual = np.zeros(lay.size)
        trip = _Triplets() if with_jacobian else None
        carriers = self._carriers(state, dens)
        m = mesh.measures
        intr = mesh.intrinsic_cells
        inner = mesh.interior_faces
        bfaces = mesh.dirichlet_faces
        t = self.traces

        # carrier fluxes
        for name, n_D, log_D in (("n", t.n_n, t.log_n), ("p", t.n_p, t.log_p)):
            c = carriers[name]
            _add_interior_fluxes(residual, trip, c, self._K, self._L, c.coefficient[inner])
            _add_boundary_fluxes(residual, trip, c, self._bK, c.coefficient[bfaces], n_D, log_D, t.phi)
        _add_interior_fluxes(residual, trip, carriers["a"], self._aK, self._aL, self._tau_a)

        # time differences
        if self.tau is not None:
            old = self.old
            for name, weight in (("n", p.nu), ("p", p.nu), ("a", 1.0)):
                c = carriers[name]
                cell_m = m[intr] if name == "a" else m
                scale = weight * c.z * cell_m / self.tau
                residual[c.rows] += scale * (c.n - old.density(name))
                if trip is not None:
                    trip.add(c.rows, c.rows, scale * c.z * c.d)
                    trip.add(c.rows, c.psi_cols, -scale * c.z * c.d)

        # generation and recombination
        rec = recombination_terms(s.fields.recombination, dens.n_n, dens.n_p, state.phi_n, state.phi_p)
        source = p.gamma * s.fields.generation_G - rec.rate
        for name in ("n", "p"):
            c = carriers[name]
            residual[c.rows] -= c.z * m * source
            if trip is not None and s.fields.recombination.enabled:
                cn, cp = carriers["n"], carriers["p"]
                d_phi_n = rec.d_phi_n + rec.d_n_n * cn.z * cn.d
                d_phi_p = rec.d_phi_p + rec.d_n_p * cp.z * cp.d
                d_psi = -rec.d_n_n * cn.z * cn.d - rec.d_n_p * cp.z * cp.d
                trip.add(c.rows, cn.rows, c.z * m * d_phi_n)
                trip.add(c.rows, cp.rows, c.z * m * d_phi_p)
                trip.add(c.rows, lay.idx_psi, c.z * m * d_psi)

        # Poisson
        psi = state.psi
        K, L = self._K, self._L
        e_inner = self._tau_eps[inner] * (psi[L] - psi[K])
        np.add.at(residual, lay.idx_psi[K], -e_inner)
        np.add.at(residual, lay.idx_psi[L], e_inner)
        e_bound = self._tau_eps[bfaces] * (t.psi - psi[self._bK])
        np.add.at(residual, lay.idx_psi[self._bK], -e_bound)
        charge = p.delta * m * (s.z_n * dens.n_n + s.z_p * dens.n_p + s.fields.doping_C)
        residual[lay.idx_psi] -= charge
        residual[lay.idx_psi[intr]] -= m[intr] * s.z_a * dens.n_a
        if trip is not None:
            w = self._tau_eps[inner]
            trip.add(lay.idx_psi[K], lay.idx_psi[K], w)
            trip.add(lay.idx_psi[K], lay.idx_psi[L], -w)
            trip.add(lay.idx_psi[L], lay.idx_psi[L], w)
            trip.add(lay.idx_psi[L], lay.idx_psi[K], -w)
            trip.add(lay.idx_psi[self._bK], lay.idx_psi[self._bK], self._tau_eps[bfaces])
            trip.add(lay.idx_psi, lay.idx_n, -p.delta * m * dens.d_n)
            trip.add(lay.idx_psi, lay.idx_p, -p.delta * m * dens.d_p)
            trip.add(lay.idx_psi, lay.idx_psi, p.delta * m * (dens.d_n + dens.d_p))
            za2 = s.z_a**2
            trip.add(lay.idx_psi[intr], lay.idx_a, -za2 * m[intr] * dens.d_a)
            trip.add(lay.idx_psi[intr], lay.idx_psi[intr], za2 * m[intr] * dens.d_a)

        # stationary mass constraint
        drop = None
        if self.tau is None and intr.size:
            drop = int(lay.idx_a[0])
            residual[drop] = float(np.sum(m[intr] * dens.n_a)) - self.anion_mass
            if trip is not None:
                trip_rows = np.full(intr.size, drop)
                constraint = _Triplets()
                constraint.add(trip_rows, lay.idx_a, m[intr] * s.z_a * dens.d_a)
                constraint.add(trip_rows, lay.idx_psi[intr], -m[intr] * s.z_a * dens.d_a)

        jacobian = None
        if trip is not None:
            jacobian = trip.matrix(lay.size, drop_row=drop)
            if drop is not None:
                jacobian = jacobian + constraint.matrix(lay.size)
                jacobian = jacobian.tocsr()
        return ResidualSystem(residual, jacobian)

    def max_step(self, x: NDArray[np.float64], dx: NDArray[np.float64]) -> float:
        """Step fraction keeping every chemical potential inside its bounds."""
        s = self.scenario
        lay = self.layout
        state = self.unpack(x)
        eta_n, eta_p, eta_a = chemical_potentials(s, state.psi, state.phi_n, state.phi_p, state.phi_a)
        d_psi = dx[lay.idx_psi]
        limit = min(
            step_limit(eta_n, s.z_n * (dx[lay.idx_n] - d_psi), ETA_CARRIER_BOUNDS),
            step_limit(eta_p, s.z_p * (dx[lay.idx_p] - d_psi), ETA_CARRIER_BOUNDS),
            step_limit(eta_a, s.z_a * (dx[lay.idx_a] - d_psi[s.mesh.intrinsic_cells]), ETA_ANION_BOUNDS),
        )
        return 1.0 if limit >= 1.0 else STEP_SAFETY * limit


def assemble_residual(state_new: State, state_old: State, tau_m: float, scenario: Scenario) -> ResidualSystem:
    """Residual and Jacobian of one backward Euler step at ``state_new``."""
    system = CoupledSystem(scenario, old=state_old, tau=tau_m, time=state_new.time)
    return system.evaluate(system.layout.pack(state_new))


class PoissonProblem(NonlinearSystem):
    """Nonlinear Poisson equation for ``psi`` with frozen quasi Fermi potentials.

    The residual is the gradient of the strictly convex functional
    :meth:`functional`, and the line search enforces its decrease.
    """

    def __init__(
        self,
        scenario: Scenario,
        phi_n: NDArray[np.float64],
        phi_p: NDArray[np.float64],
        phi_a: NDArray[np.float64],
    ):
        self.scenario = scenario
        self.phi_n = np.asarray(phi_n, dtype=float)
        self.phi_p = np.asarray(phi_p, dtype=float)
        self.phi_a = np.asarray(phi_a, dtype=float)
        mesh = scenario.mesh
        self._K = mesh.face_K[mesh.interior_faces]
        self._L = mesh.face_L[mesh.interior_faces]
        self._bK = mesh.face_K[mesh.dirichlet_faces]
        weights = scenario.params.lambda_**2 * mesh.transmissibilities * scenario.eps_face
        self._w_inner = weights[mesh.interior_faces]
        self._w_bound = weights[mesh.dirichlet_faces]
        self.history: List[float] = []

    def _densities(self, psi: NDArray[np.float64]) -> Densities:
        return compute_densities(self.scenario, psi, self.phi_n, self.phi_p, self.phi_a)

    def functional(self, psi: NDArray[np.float64]) -> float:
        """``lambda^2/2 sum eps tau (D psi)^2 + sum m (delta N G(eta)) - sum m delta C psi``."""
        s = self.scenario
        mesh = s.mesh
        mat = s.materials
        m = mesh.measures
        intr = mesh.intrinsic_cells
        eta_n, eta_p, eta_a = chemical_potentials(s, psi, self.phi_n, self.phi_p, self.phi_a)
        D_inner = psi[self._L] - psi[self._K]
        D_bound = s.boundary.psi_faces - psi[self._bK]
        electric = 0.5 * (np.sum(self._w_inner * D_inner**2) + np.sum(self._w_bound * D_bound**2))
        carriers = s.params.delta * np.sum(
            m * (mat.N_n * np.asarray(s.stat_n.antiderivative(eta_n)) + mat.N_p * np.asarray(s.stat_p.antiderivative(eta_p)))
        )
        anions = np.sum(m[intr] * mat.N_a * np.asarray(s.stat_a.antiderivative(eta_a)))
        doping = s.params.delta * np.sum(m * s.fields.doping_C * psi)
        return float(electric + carriers + anions - doping)

    def evaluate(self, x: NDArray[np.float64], with_jacobian: bool = True) -> ResidualSystem:
        s = self.scenario
        mesh = s.mesh
        m = mesh.measures
        intr = mesh.intrinsic_cells
        psi = x
        dens = self._densities(psi)
        K, L, bK = self._K, self._L, self._bK
        residual = np.zeros(mesh.n_cells)
        e_inner = self._w_inner * (psi[L] - psi[K])
        np.add.at(residual, K, -e_inner)
        np.add.at(residual, L, e_inner)
        np.add.at(residual, bK, -self._w_bound * (s.boundary.psi_faces - psi[bK]))
        residual -= s.params.delta * m * (s.z_n * dens.n_n + s.z_p * dens.n_p + s.fields.doping_C)
        residual[intr] -= m[intr] * s.z_a * dens.n_a
        jacobian = None
        if with_jacobian:
            diagonal = s.params.delta * m * (dens.d_n + dens.d_p)
            diagonal[intr] += s.z_a**2 * m[intr] * dens.d_a
            np.add.at(diagonal, K, self._w_inner)
            np.add.at(diagonal, L, self._w_inner)
            np.add.at(diagonal, bK, self._w_bound)
            off = -self._w_inner
            jacobian = sparse.csr_matrix(
                (
                    np.concatenate((diagonal, off, off)),
                    (
                        np.concatenate((np.arange(mesh.n_cells), K, L)),
                        np.concatenate((np.arange(mesh.n_cells), L, K)),
                    ),
                ),
                shape=(mesh.n_cells, mesh.n_cells),
            )
        return ResidualSystem(residual, jacobian)

    def max_step(self, x: NDArray[np.float64], dx: NDArray[np.float64]) -> float:
        s = self.scenario
        eta_n, eta_p, eta_a = chemical_potentials(s, x, self.phi_n, self.phi_p, self.phi_a)
        limit = min(
            step_limit(eta_n, -s.z_n * dx, ETA_CARRIER_BOUNDS),
            step_limit(eta_p, -s.z_p * dx, ETA_CARRIER_BOUNDS),
            step_limit(eta_a, -s.z_a * dx[s.mesh.intrinsic_cells], ETA_ANION_BOUNDS),
        )
        return 1.0 if limit >= 1.0 else STEP_SAFETY * limit

    def accepts(self, x, current, trial, step, dx) -> bool:
        """Armijo decrease of the functional along ``dx``."""
        if not np.all(np.isfinite(trial.residual)):
            return False
        value = self.functional(x)
        if not self.history:
            self.history.append(value)
        trial_value = self.functional(x + step * dx)
        slope = float(np.dot(current.residual, dx))
        if trial_value <= value + ARMIJO * step * slope + FUNCTIONAL_SLACK * abs(value):
            self.history.append(trial_value)
            return True
        return False
