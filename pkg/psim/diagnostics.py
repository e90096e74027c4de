"""Entropy, dissipation and error diagnostics of discrete states.

All functions are pure reductions over cell and face vectors. Densities with
non-unit densities of states enter the entropies through ``N Phi(n / N)``,
which reduces to ``Phi(n)`` in dimensionless scenarios.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import ConfigError
from .flux import FaceFluxInputs, interface_density
from .models.diagnostics import L2_FIELDS, DiagnosticsRecord
from .physics import recombination_rate
from .scenario import Scenario
from .statistics import Statistics
from .system.state import (
    Densities,
    State,
    anion_mass_of,
    boundary_traces,
    check_same_mesh,
    dirichlet_densities,
    state_densities,
)

logger = logging.getLogger(__name__)

FIT_WINDOW = (1e-12, 0.1)


def _scaled_relative_entropy(stat: Statistics, x, y, N) -> NDArray[np.float64]:
    return N * np.asarray(stat.relative_entropy(x / N, y / N))


def _electric_energy(scenario: Scenario, psi: NDArray[np.float64], psi_ref: NDArray[np.float64]) -> float:
    """``lambda^2/2 sum_sigma eps tau (D(psi - psi_ref))^2`` including the contacts.

    Both potentials share the Dirichlet trace on the contact faces.
    """
    mesh = scenario.mesh
    u = psi - psi_ref
    weights = scenario.params.lambda_**2 * mesh.transmissibilities * scenario.eps_face
    inner = mesh.interior_faces
    jumps = np.zeros(mesh.n_faces)
    jumps[inner] = u[mesh.face_L[inner]] - u[mesh.face_K[inner]]
    bound = mesh.dirichlet_faces
    jumps[bound] = -u[mesh.face_K[bound]]
    return 0.5 * float(np.sum(weights * jumps**2))


def discrete_entropy(state: State, scenario: Scenario) -> float:
    """Relative entropy of ``state`` with respect to the Dirichlet data.

    Dirichlet densities are evaluated on every cell from the linear
    interpolants of ``phi^D`` and ``psi^D``.
    """
    mesh = scenario.mesh
    mat = scenario.materials
    m = mesh.measures
    intr = mesh.intrinsic_cells
    b = scenario.boundary
    dens = state_densities(state, scenario)
    reference = dirichlet_densities(scenario)
    electric = _electric_energy(scenario, state.psi, b.psi_cells)
    anions = float(np.sum(m[intr] * mat.N_a * np.asarray(scenario.stat_a.phi(dens.n_a / mat.N_a))))
    carriers = float(
        np.sum(m * _scaled_relative_entropy(scenario.stat_n, dens.n_n, reference["n"], mat.N_n))
        + np.sum(m * _scaled_relative_entropy(scenario.stat_p, dens.n_p, reference["p"], mat.N_p))
    )
    return electric + anions + scenario.params.delta * carriers


def _face_dissipation(
    z: int,
    coefficient: NDArray[np.float64],
    n_K,
    n_L,
    log_K,
    log_L,
    phi_K,
    phi_L,
) -> float:
    if np.size(coefficient) == 0:
        return 0.0
    inputs = FaceFluxInputs(
        z=z, tau=coefficient, n_K=n_K, n_L=n_L, phi_K=phi_K, phi_L=phi_L, log_n_K=log_K, log_n_L=log_L
    )
    n_bar = interface_density(inputs, allow_degenerate=True)
    return float(np.sum(coefficient * n_bar * (np.asarray(phi_L) - np.asarray(phi_K)) ** 2))


def discrete_dissipation(state: State, scenario: Scenario) -> float:
    """Entropy dissipation of ``state``.

    Sums the vacancy face term over intrinsic interior faces, the carrier face
    terms over all faces (contacts use the Dirichlet traces) and the
    recombination term ``R (phi_p - phi_n)``.
    """
    mesh = scenario.mesh
    p = scenario.params
    dens = state_densities(state, scenario)
    traces = boundary_traces(scenario)
    tau = mesh.transmissibilities
    inner = mesh.interior_faces
    bound = mesh.dirichlet_faces
    K, L, bK = mesh.face_K[inner], mesh.face_L[inner], mesh.face_K[bound]

    first = mesh.intrinsic_cells[0] if mesh.intrinsic_cells.size else 0
    afaces = mesh.intrinsic_interior_faces
    aK, aL = mesh.face_K[afaces] - first, mesh.face_L[afaces] - first
    anions = _face_dissipation(
        scenario.z_a,
        tau[afaces],
        dens.n_a[aK],
        dens.n_a[aL],
        dens.log_a[aK],
        dens.log_a[aL],
        state.phi_a[aK],
        state.phi_a[aL],
    )

    carriers = 0.0
    for z, phi, n, log, mu, n_D, log_D in (
        (scenario.z_n, state.phi_n, dens.n_n, dens.log_n, scenario.mu_n_face, traces.n_n, traces.log_n),
        (scenario.z_p, state.phi_p, dens.n_p, dens.log_p, scenario.mu_p_face, traces.n_p, traces.log_p),
    ):
        carriers += _face_dissipation(z, tau[inner] * mu[inner], n[K], n[L], log[K], log[L], phi[K], phi[L])
        carriers += _face_dissipation(z, tau[bound] * mu[bound], n[bK], n_D, log[bK], log_D, phi[bK], traces.phi)

    rate = recombination_rate(scenario.fields.recombination, dens.n_n, dens.n_p, state.phi_n, state.phi_p)
    recombination = float(np.sum(mesh.measures * rate * (state.phi_p - state.phi_n)))
    return (
        0.5 * scenario.z_a**2 * anions
        + p.delta / (2.0 * p.nu) * carriers
        + p.delta / p.nu * recombination
    )


def _relative_to(state_dens: Densities, ref_dens: Densities, scenario: Scenario, state: State, ref: State) -> float:
    mesh = scenario.mesh
    mat = scenario.materials
    m = mesh.measures
    intr = mesh.intrinsic_cells
    electric = _electric_energy(scenario, state.psi, ref.psi)
    anions = float(np.sum(m[intr] * _scaled_relative_entropy(scenario.stat_a, state_dens.n_a, ref_dens.n_a, mat.N_a)))
    carriers = float(
        np.sum(m * _scaled_relative_entropy(scenario.stat_n, state_dens.n_n, ref_dens.n_n, mat.N_n))
        + np.sum(m * _scaled_relative_entropy(scenario.stat_p, state_dens.n_p, ref_dens.n_p, mat.N_p))
    )
    return electric + anions + scenario.params.delta * carriers


def entropy_vs_steady(state: State, steady: State, scenario: Scenario, dimensional: bool = False) -> float:
    """Relative entropy of ``state`` with respect to ``steady``.

    With ``dimensional`` the value is the relative free energy in J/cm^2;
    band-edge terms are linear in the densities and cancel inside the
    Bregman distance.

    Raises:
        MeshMismatch: If the states live on different meshes.
        ConfigError: If ``dimensional`` is requested for a dimensionless scenario.
    """
    check_same_mesh(state, steady)
    value = _relative_to(state_densities(state, scenario), state_densities(steady, scenario), scenario, state, steady)
    if not dimensional:
        return value
    if scenario.scaling is None:
        raise ConfigError("dimensional free energy needs a physical scenario")
    return scenario.scaling.energy_scale * value


def free_energy_dimensional(state: State, steady: State, scenario: Scenario) -> float:
    """Relative free energy to ``steady`` in J/cm^2."""
    return entropy_vs_steady(state, steady, scenario, dimensional=True)


def band_edge_relative_entropy(
    stat: Statistics, x: ArrayLike, y: ArrayLike, N: float, E: float, z: int
) -> NDArray[np.float64]:
    """Bregman distance of ``N Phi(x / N) - z E x`` evaluated term by term."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def energy(u):
        return N * np.asarray(stat.phi(u / N)) - z * E * u

    slope = np.asarray(stat.phi_prime(y / N)) - z * E
    return energy(x) - energy(y) - slope * (x - y)


def l2_error_sq(state: State, steady: State, field: str, scenario: Scenario) -> float:
    """``sum m_K (u_K - u_K^inf)^2`` over the support of ``field``.

    Raises:
        MeshMismatch: If the states live on different meshes.
        ValueError: If ``field`` is unknown.
    """
    check_same_mesh(state, steady)
    if field not in L2_FIELDS:
        raise ValueError(f"Invalid field: {field}. Must be one of: {list(L2_FIELDS)}")
    mesh = scenario.mesh
    if field.startswith("n_"):
        u = state_densities(state, scenario).density(field[2:])
        v = state_densities(steady, scenario).density(field[2:])
    else:
        u, v = state.field(field), steady.field(field)
    m = mesh.measures[mesh.intrinsic_cells] if field.endswith("_a") else mesh.measures
    return float(np.sum(m * (u - v) ** 2))


def anion_mass(state: State, scenario: Scenario) -> float:
    """Total vacancy mass ``sum m_K n_a,K`` over the intrinsic cells."""
    return anion_mass_of(state, scenario)


class DiagnosticsRecorder:
    """Builds one :class:`DiagnosticsRecord` per accepted time node.

    Args:
        scenario: The runtime scenario.
        steady: Steady state for the relative entropy and L2 errors.
        dimensional: Also record the relative free energy in J/cm^2.
    """

    def __init__(self, scenario: Scenario, steady: Optional[State] = None, dimensional: bool = False):
        if dimensional and (steady is None or scenario.scaling is None):
            raise ConfigError("the free energy needs a physical scenario and a steady state")
        self.scenario = scenario
        self.steady = steady
        self.dimensional = dimensional

    def __call__(self, state: State) -> DiagnosticsRecord:
        s = self.scenario
        e_inf = None
        errors: Dict[str, float] = {}
        energy = None
        if self.steady is not None:
            e_inf = entropy_vs_steady(state, self.steady, s)
            errors = {name: l2_error_sq(state, self.steady, name, s) for name in L2_FIELDS}
            if self.dimensional:
                energy = s.scaling.energy_scale * e_inf  # type: ignore[union-attr]
        return DiagnosticsRecord(
            time=state.time * s.time_scale,
            entropy_E_T=discrete_entropy(state, s),
            dissipation_D_T=discrete_dissipation(state, s),
            entropy_vs_steady_E_inf=e_inf,
            l2_errors=errors,
            anion_mass=anion_mass(state, s),
            free_energy_dimensional=energy,
        )


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log q = slope t + intercept``."""

    slope: float
    intercept: float
    r_squared: float
    count: int


def fit_exponential_decay(times: Sequence[float], values: Sequence[float]) -> DecayFit:
    """Fit an exponential decay on the window ``[1e-12, 0.1]`` times the peak.

    Raises:
        ValueError: If fewer than three samples fall inside the window.
    """
    t = np.asarray(times, dtype=float)
    q = np.asarray(values, dtype=float)
    if t.shape != q.shape:
        raise ValueError("times and values must have the same length")
    peak = float(np.max(q)) if q.size else 0.0
    low, high = FIT_WINDOW
    window = (q > 0) & (q >= low * peak) & (q <= high * peak)
    if np.count_nonzero(window) < 3:
        raise ValueError(
            f"need at least 3 samples in the fit window, got {int(np.count_nonzero(window))}"
        )
    tw, yw = t[window], np.log(q[window])
    slope, intercept = np.polyfit(tw, yw, 1)
    residual = yw - (slope * tw + intercept)
    total = float(np.sum((yw - yw.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r_squared, int(tw.size))
