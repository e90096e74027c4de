"""Runtime scenario: validated configuration turned into dimensionless arrays.

:func:`load_scenario` reads and validates a TOML file; :func:`build_scenario`
builds the mesh, scales a physical parameter set, evaluates the boundary
formulas and returns the immutable :class:`Scenario` every solver consumes.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError
from scipy import optimize

from .exceptions import ConfigError
from .mesh import Mesh, build_three_layer_mesh
from .models.scenario import (
    FORMULA_PATTERN,
    BoundaryValue,
    DimensionlessParams,
    NewtonOptions,
    ScenarioConfig,
    TimeGrid,
)
from .physics import (
    Z_N,
    Z_P,
    CellMaterials,
    FieldData,
    Scaling,
    dimensionless_generation,
    harmonic_face_mean,
    nondimensionalize,
    region_doping,
    scale_recombination,
)
from .statistics import Statistics, make_statistics

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

logger = logging.getLogger(__name__)

_NEUTRALITY_BRACKET_LIMIT = 1024.0


@dataclass(frozen=True)
class BoundaryData:
    """Dimensionless contact values and their linear interpolants.

    Interior values ``phi^D``, ``psi^D`` are the straight lines between the
    two contact values, evaluated at the cell centres.
    """

    phi_left: float
    phi_right: float
    psi_left: float
    psi_right: float
    mesh: Mesh

    def _line(self, left: float, right: float) -> NDArray[np.float64]:
        x0, x3 = self.mesh.breakpoints[0], self.mesh.breakpoints[3]
        return np.interp(self.mesh.centers, [x0, x3], [left, right])

    @cached_property
    def phi_cells(self) -> NDArray[np.float64]:
        return self._line(self.phi_left, self.phi_right)

    @cached_property
    def psi_cells(self) -> NDArray[np.float64]:
        return self._line(self.psi_left, self.psi_right)

    @property
    def phi_faces(self) -> NDArray[np.float64]:
        """Dirichlet quasi Fermi potential on the two boundary faces."""
        return np.array([self.phi_left, self.phi_right])

    @property
    def psi_faces(self) -> NDArray[np.float64]:
        return np.array([self.psi_left, self.psi_right])

    @property
    def is_constant(self) -> bool:
        """True if ``phi^D`` and ``psi^D`` are both constant."""
        return self.phi_left == self.phi_right and self.psi_left == self.psi_right


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a solve needs, in dimensionless form.

    Attributes:
        config: The validated configuration this scenario was built from.
        mesh: The three-layer mesh.
        params: ``lambda``, ``nu``, ``delta``, ``gamma`` and ``z_a``.
        stat_n, stat_p, stat_a: Statistics of electrons, holes and vacancies.
        materials: Per-cell densities of states, band edges and coefficients.
        fields: Doping, generation and scaled recombination data.
        boundary: Dirichlet data.
        time: Dimensionless time grid.
        solver: Newton options.
        scaling: Reference scales, ``None`` for dimensionless scenarios.
    """

    config: ScenarioConfig
    mesh: Mesh
    params: DimensionlessParams
    stat_n: Statistics
    stat_p: Statistics
    stat_a: Statistics
    materials: CellMaterials
    fields: FieldData
    boundary: BoundaryData
    time: TimeGrid
    solver: NewtonOptions
    scaling: Optional[Scaling] = None

    @property
    def z_n(self) -> int:
        return Z_N

    @property
    def z_p(self) -> int:
        return Z_P

    @property
    def z_a(self) -> int:
        return self.params.z_a

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def time_scale(self) -> float:
        """Seconds per dimensionless time unit (1 in dimensionless mode)."""
        return 1.0 if self.scaling is None else self.scaling.time_scale

    @property
    def potential_scale(self) -> float:
        return 1.0 if self.scaling is None else self.scaling.U_T

    @cached_property
    def eps_face(self) -> NDArray[np.float64]:
        """Relative permittivity on every face."""
        return harmonic_face_mean(self.mesh, self.materials.eps)

    @cached_property
    def mu_n_face(self) -> NDArray[np.float64]:
        return harmonic_face_mean(self.mesh, self.materials.mu_n)

    @cached_property
    def mu_p_face(self) -> NDArray[np.float64]:
        return harmonic_face_mean(self.mesh, self.materials.mu_p)

    @property
    def anion_capacity(self) -> float:
        """Largest anion mass, ``sum m_K N_a`` over the intrinsic cells."""
        intr = self.mesh.intrinsic_cells
        return float(np.sum(self.mesh.measures[intr] * self.materials.N_a))

    def output_times(self) -> Tuple[float, ...]:
        """Requested profile times on the dimensionless clock."""
        return tuple(t / self.time_scale for t in self.config.outputs.profile_times)


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Read and validate a TOML scenario file.

    Raises:
        ConfigError: If the file is missing, not TOML, or fails validation.
    """
    path = Path(path)
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"Scenario file not found: {path}", original_exception=e)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {path}: {e}", original_exception=e)
    try:
        config = ScenarioConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid scenario {path}: {e}", original_exception=e)
    if config.initial.profile == "from_file":
        profile = Path(config.initial.path)  # type: ignore[arg-type]
        if not profile.is_absolute():
            profile = path.parent / profile
        if not profile.exists():
            raise ConfigError(f"Initial profile file not found: {profile}")
        config = config.model_copy(
            update={"initial": config.initial.model_copy(update={"path": str(profile)})}
        )
    logger.debug("loaded scenario %r from %s", config.name, path)
    return config


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    canonical = json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _charge_neutral_shift(
    stat_n: Statistics,
    stat_p: Statistics,
    N_n: float,
    N_p: float,
    E_n: float,
    E_p: float,
    doping: float,
) -> float:
    """``s = psi - phi`` with ``-N_n F_n(s - E_n) + N_p F_p(E_p - s) + C = 0``."""

    def charge(s: float) -> float:
        return -N_n * float(stat_n.eval(s - E_n)) + N_p * float(stat_p.eval(E_p - s)) + doping

    centre = 0.5 * (E_n + E_p)
    width = 1.0
    while charge(centre - width) * charge(centre + width) > 0:
        width *= 2.0
        if width > _NEUTRALITY_BRACKET_LIMIT:
            raise ConfigError("charge neutrality has no root within the bracket")
    return optimize.brentq(charge, centre - width, centre + width, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def _boundary_value(
    value: BoundaryValue,
    potential_scale: float,
    neutral_shift: float,
    boltzmann_shift: float,
) -> float:
    """Evaluate a constant or a whitelisted formula for one contact."""
    if not isinstance(value, str):
        return float(value) / potential_scale
    match = FORMULA_PATTERN.match(value)
    if match is None:
        raise ConfigError(f"malformed boundary formula {value!r}")
    name = match.group("name")
    argument = float(match.group("arg")) / potential_scale
    if name == "const":
        return argument
    if name == "arcsinh_half_doping_plus":
        return boltzmann_shift + argument
    if name == "charge_neutral_plus":
        return neutral_shift + argument
    raise ConfigError(f"unknown boundary formula {name!r}")


def _resolve_boundary(
    config: ScenarioConfig,
    mesh: Mesh,
    materials: CellMaterials,
    doping: NDArray[np.float64],
    stat_n: Statistics,
    stat_p: Statistics,
    potential_scale: float,
) -> BoundaryData:
    resolved: Dict[str, float] = {}
    dirichlet = config.dirichlet
    for side, cell in (("left", 0), ("right", mesh.n_cells - 1)):
        phi = _boundary_value(getattr(dirichlet, f"phi_{side}"), potential_scale, 0.0, 0.0)
        resolved[f"phi_{side}"] = phi
        psi_value = getattr(dirichlet, f"psi_{side}")
        neutral = boltzmann = 0.0
        if isinstance(psi_value, str):
            boltzmann = math.asinh(doping[cell] / 2.0)
            if "charge_neutral_plus" in psi_value:
                neutral = _charge_neutral_shift(
                    stat_n,
                    stat_p,
                    materials.N_n[cell],
                    materials.N_p[cell],
                    materials.E_n[cell],
                    materials.E_p[cell],
                    doping[cell],
                )
        resolved[f"psi_{side}"] = _boundary_value(psi_value, potential_scale, neutral, boltzmann)
    return BoundaryData(mesh=mesh, **resolved)


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Turn a validated configuration into a runtime :class:`Scenario`.

    Raises:
        ConfigError: If the mesh or boundary data cannot be built.
    """
    breakpoints = config.mesh.breakpoints
    if config.mode == "physical":
        assert config.physical is not None
        breakpoints = tuple(b / config.physical.length_cm for b in breakpoints)
    mesh = build_three_layer_mesh(breakpoints, config.mesh.nodes_per_region)
    stat_n = make_statistics(config.statistics.n)
    stat_p = make_statistics(config.statistics.p)
    stat_a = make_statistics(config.statistics.a)
    doping_values = (config.doping.htl, config.doping.intrinsic, config.doping.etl)

    if config.mode == "physical":
        physical = config.physical
        assert physical is not None
        scaling = Scaling.from_params(physical)
        params = nondimensionalize(physical)
        materials = CellMaterials.from_physical(physical, mesh)
        doping = region_doping([c / physical.N_tilde for c in doping_values], mesh)
        generation = dimensionless_generation(
            config.generation, mesh, length_cm=physical.length_cm, alpha_g=physical.alpha_g
        )
        recombination = scale_recombination(config.recombination, physical)
        time = config.time.scaled(scaling.time_scale)
        potential_scale = scaling.U_T
    else:
        assert config.params is not None
        scaling = None
        params = config.params
        materials = CellMaterials.uniform(mesh)
        doping = region_doping(doping_values, mesh)
        generation = dimensionless_generation(config.generation, mesh)
        recombination = config.recombination
        time = config.time
        potential_scale = 1.0

    boundary = _resolve_boundary(config, mesh, materials, doping, stat_n, stat_p, potential_scale)
    scenario = Scenario(
        config=config,
        mesh=mesh,
        params=params,
        stat_n=stat_n,
        stat_p=stat_p,
        stat_a=stat_a,
        materials=materials,
        fields=FieldData(doping_C=doping, generation_G=generation, recombination=recombination),
        boundary=boundary,
        time=time,
        solver=config.solver,
        scaling=scaling,
    )
    logger.info(
        "scenario %r: %d cells, lambda=%.3g nu=%.3g delta=%.3g gamma=%.3g",
        config.name,
        mesh.n_cells,
        params.lambda_,
        params.nu,
        params.delta,
        params.gamma,
    )
    return scenario


def with_mesh(config: ScenarioConfig, nodes_per_region: int) -> ScenarioConfig:
    """Copy of ``config`` on a mesh with a different node count."""
    return config.model_copy(
        update={"mesh": config.mesh.model_copy(update={"nodes_per_region": nodes_per_region})}
    )
