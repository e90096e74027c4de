"""Model data: scaling, material arrays, photogeneration and recombination.

Dimensionless variables use the thermal voltage ``U_T`` for potentials, the
device length ``l`` for positions, ``N_tilde`` (``N_a_tilde`` for vacancies) for
densities and the vacancy time scale ``l^2 / (mu_a_tilde U_T)`` for time.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import constants

from .mesh import Mesh
from .models.scenario import (
    REGION_KEYS,
    DimensionlessParams,
    GenerationConfig,
    PhysicalParams,
    RecombinationParams,
)

logger = logging.getLogger(__name__)

Z_N = -1
Z_P = 1

_SRH_GUARD = 1e-300


def thermal_voltage(temperature_K: float) -> float:
    """``U_T = k_B T / q`` in volts."""
    return constants.k * temperature_K / constants.e


@dataclass(frozen=True)
class Scaling:
    """Reference scales of a physical scenario."""

    length_cm: float
    temperature_K: float
    eps_s: float
    N_tilde: float
    N_a_tilde: float
    mu_tilde: float
    mu_a_tilde: float

    @property
    def U_T(self) -> float:
        return thermal_voltage(self.temperature_K)

    @property
    def time_scale(self) -> float:
        """Seconds per dimensionless time unit, ``l^2 / (mu_a_tilde U_T)``."""
        return self.length_cm**2 / (self.mu_a_tilde * self.U_T)

    @property
    def energy_scale(self) -> float:
        """J/cm^2 per dimensionless entropy unit, ``k_B T N_a_tilde l``."""
        return constants.k * self.temperature_K * self.N_a_tilde * self.length_cm

    @classmethod
    def from_params(cls, p: PhysicalParams) -> "Scaling":
        return cls(
            length_cm=p.length_cm,
            temperature_K=p.temperature_K,
            eps_s=p.eps_s,
            N_tilde=p.N_tilde,
            N_a_tilde=p.N_a_tilde,
            mu_tilde=p.mu_tilde,
            mu_a_tilde=p.mu_a_tilde,
        )


def nondimensionalize(p: PhysicalParams) -> DimensionlessParams:
    """Map a physical parameter set onto ``(lambda, nu, delta, gamma)``.

    Args:
        p: Physical parameters in cm, K, F/cm, cm^-3 and cm^2/(V s).

    Returns:
        The dimensionless parameters. ``nu`` and ``delta`` are exact ratios.
    """
    U_T = thermal_voltage(p.temperature_K)
    lam = math.sqrt(p.eps_s * U_T / (p.length_cm**2 * constants.e * p.N_a_tilde))
    params = DimensionlessParams(
        lambda_=lam,
        nu=p.mu_a_tilde / p.mu_tilde,
        delta=p.N_tilde / p.N_a_tilde,
        gamma=p.F_ph * p.alpha_g * p.length_cm**2 / (p.mu_tilde * U_T * p.N_tilde),
        z_a=p.z_a,
    )
    logger.debug(
        "nondimensionalized: lambda=%.3e nu=%.3e delta=%.3e gamma=%.3e",
        params.lambda_,
        params.nu,
        params.delta,
        params.gamma,
    )
    return params


def generation_profile(F_ph: float, alpha_g: float, depth: NDArray[np.float64]) -> NDArray[np.float64]:
    """Beer-Lambert rate ``F_ph alpha_g exp(-alpha_g z)`` at each depth ``z``."""
    depth = np.asarray(depth, dtype=float)
    return F_ph * alpha_g * np.exp(-alpha_g * depth)


def illumination_depth(mesh: Mesh, side: str) -> NDArray[np.float64]:
    """Distance of every cell centre from the illuminated contact."""
    if side == "left":
        return mesh.centers - mesh.breakpoints[0]
    return mesh.breakpoints[3] - mesh.centers


def dimensionless_generation(
    config: GenerationConfig, mesh: Mesh, length_cm: Optional[float] = None, alpha_g: float = 0.0
) -> NDArray[np.float64]:
    """Per-cell generation ``G`` entering the balance as ``gamma G``.

    In physical scenarios ``G`` is the Beer-Lambert profile divided by
    ``F_ph alpha_g``, with the absorption length taken from ``alpha_g``.
    """
    if config.kind == "zero":
        values = np.zeros(mesh.n_cells)
    elif config.kind == "constant":
        values = np.full(mesh.n_cells, config.value)
    else:
        alpha = alpha_g * length_cm if length_cm is not None else config.alpha
        values = generation_profile(1.0, 1.0, alpha * illumination_depth(mesh, config.side))
    active = np.isin(mesh.regions, [REGION_KEYS.index(r) for r in config.regions])
    return np.where(active, values, 0.0)


def harmonic_face_mean(mesh: Mesh, values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Distance-weighted harmonic mean of a cell coefficient on every face.

    Boundary faces take the value of their only cell; faces inside one region
    get the region value back exactly.
    """
    values = np.asarray(values, dtype=float)
    out = values[mesh.face_K].copy()
    inner = mesh.interior_faces
    K, L = mesh.face_K[inner], mesh.face_L[inner]
    same = values[K] == values[L]
    dK = mesh.face_positions[inner] - mesh.centers[K]
    dL = mesh.centers[L] - mesh.face_positions[inner]
    mixed = mesh.distances[inner] / (dK / values[K] + dL / values[L])
    out[inner] = np.where(same, values[K], mixed)
    return out


@dataclass(frozen=True)
class CellMaterials:
    """Dimensionless material coefficients per cell.

    ``N_*`` are densities of states over their scale, ``E_*`` band edges over
    ``U_T`` (eV / U_T), ``mu_*`` mobilities over ``mu_tilde`` and ``eps``
    permittivities over the reference value. Vacancy data are stored per
    intrinsic cell.
    """

    N_n: NDArray[np.float64]
    N_p: NDArray[np.float64]
    E_n: NDArray[np.float64]
    E_p: NDArray[np.float64]
    mu_n: NDArray[np.float64]
    mu_p: NDArray[np.float64]
    eps: NDArray[np.float64]
    N_a: NDArray[np.float64]
    E_a: NDArray[np.float64]

    @classmethod
    def uniform(cls, mesh: Mesh) -> "CellMaterials":
        """Unit densities of states, zero band edges."""
        ones = np.ones(mesh.n_cells)
        zeros = np.zeros(mesh.n_cells)
        n_intr = mesh.intrinsic_cells.size
        return cls(
            N_n=ones,
            N_p=ones,
            E_n=zeros,
            E_p=zeros,
            mu_n=ones,
            mu_p=ones,
            eps=ones,
            N_a=np.ones(n_intr),
            E_a=np.zeros(n_intr),
        )

    @classmethod
    def from_physical(cls, p: PhysicalParams, mesh: Mesh) -> "CellMaterials":
        """Scale the region-wise materials of ``p`` onto the mesh cells."""
        U_T = thermal_voltage(p.temperature_K)
        ordered = [p.materials[key] for key in REGION_KEYS]

        def per_cell(values: Sequence[float]) -> NDArray[np.float64]:
            return np.asarray(values, dtype=float)[mesh.regions]

        intrinsic = p.materials["intrinsic"]
        n_intr = mesh.intrinsic_cells.size
        return cls(
            N_n=per_cell([m.N_n / p.N_tilde for m in ordered]),
            N_p=per_cell([m.N_p / p.N_tilde for m in ordered]),
            E_n=per_cell([m.E_n / U_T for m in ordered]),
            E_p=per_cell([m.E_p / U_T for m in ordered]),
            mu_n=per_cell([m.mu_n / p.mu_tilde for m in ordered]),
            mu_p=per_cell([m.mu_p / p.mu_tilde for m in ordered]),
            eps=per_cell([(m.eps_s or p.eps_s) / p.eps_s for m in ordered]),
            N_a=np.full(n_intr, intrinsic.N_a / p.N_a_tilde),
            E_a=np.full(n_intr, intrinsic.E_a / U_T),
        )


@dataclass(frozen=True)
class FieldData:
    """Doping, generation and recombination data of a scenario."""

    doping_C: NDArray[np.float64]
    generation_G: NDArray[np.float64]
    recombination: RecombinationParams

    def __post_init__(self) -> None:
        if np.any(self.generation_G < 0):
            raise ValueError("generation must be non-negative")


def region_doping(values: Sequence[float], mesh: Mesh) -> NDArray[np.float64]:
    """Piecewise constant doping, one value per region."""
    return np.asarray(values, dtype=float)[mesh.regions]


def scale_recombination(params: RecombinationParams, p: PhysicalParams) -> RecombinationParams:
    """Recombination coefficients in the units of the dimensionless balance."""
    U_T = thermal_voltage(p.temperature_K)
    rate_scale = p.mu_tilde * U_T / p.length_cm**2
    return params.model_copy(
        update={
            "r0": params.r0 * p.N_tilde / rate_scale,
            "tau_n": params.tau_n * rate_scale,
            "tau_p": params.tau_p * rate_scale,
            "n_n_tau": params.n_n_tau / p.N_tilde,
            "n_p_tau": params.n_p_tau / p.N_tilde,
        }
    )


class RecombinationTerms(NamedTuple):
    """Recombination rate and its partial derivatives."""

    rate: NDArray[np.float64]
    d_n_n: NDArray[np.float64]
    d_n_p: NDArray[np.float64]
    d_phi_n: NDArray[np.float64]
    d_phi_p: NDArray[np.float64]


def _srh(params: RecombinationParams, n_n, n_p):
    tau_x = params.tau_n if params.srh_standard_lifetimes else params.tau_p
    denominator = params.tau_p * (n_n + params.n_n_tau) + tau_x * (n_p + params.n_p_tau)
    active = denominator >= _SRH_GUARD
    safe = np.where(active, denominator, 1.0)
    inverse = np.where(active, 1.0 / safe, 0.0)
    # derivative of 1/denominator with respect to n_n and n_p
    d_n = np.where(active, -params.tau_p / safe**2, 0.0)
    d_p = np.where(active, -tau_x / safe**2, 0.0)
    return inverse, d_n, d_p


def recombination_terms(
    params: RecombinationParams,
    n_n: NDArray[np.float64],
    n_p: NDArray[np.float64],
    phi_n: NDArray[np.float64],
    phi_p: NDArray[np.float64],
) -> RecombinationTerms:
    """Rate ``R = r n_n n_p (1 - exp(phi_n - phi_p))`` with its derivatives.

    ``r = r0 + 1 / (tau_p (n_n + n_n_tau) + tau_x (n_p + n_p_tau))`` where
    ``tau_x`` is ``tau_p`` unless ``srh_standard_lifetimes`` is set.
    """
    n_n = np.asarray(n_n, dtype=float)
    n_p = np.asarray(n_p, dtype=float)
    if not params.enabled:
        zeros = np.zeros(np.broadcast(n_n, n_p).shape)
        return RecombinationTerms(zeros, zeros, zeros, zeros, zeros)
    srh, d_srh_n, d_srh_p = _srh(params, n_n, n_p)
    r = params.r0 + srh
    product = n_n * n_p
    split = np.asarray(phi_n, dtype=float) - np.asarray(phi_p, dtype=float)
    factor = -np.expm1(split)
    dfactor = -np.exp(split)
    return RecombinationTerms(
        rate=r * product * factor,
        d_n_n=(d_srh_n * product + r * n_p) * factor,
        d_n_p=(d_srh_p * product + r * n_n) * factor,
        d_phi_n=r * product * dfactor,
        d_phi_p=-r * product * dfactor,
    )


def recombination_rate(
    params: RecombinationParams,
    n_n: NDArray[np.float64],
    n_p: NDArray[np.float64],
    phi_n: NDArray[np.float64],
    phi_p: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Recombination rate per cell, zero when recombination is disabled."""
    return recombination_terms(params, n_n, n_p, phi_n, phi_p).rate
