"""Scenario configuration models for psim.

A scenario file is a TOML document whose tables map one-to-one onto the models
below. Potentials, lengths and times are dimensionless in ``dimensionless``
mode; in ``physical`` mode they are volts, centimetres and seconds and get
scaled by :mod:`psim.physics` when the runtime scenario is built.
"""

import math
import re
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import Field, field_validator, model_validator

from ..statistics import StatisticsKind
from .base import PsimModel

BoundaryValue = Union[float, str]

FORMULA_PATTERN = re.compile(
    r"^\s*(?P<name>[a-z_]+)\(\s*(?P<arg>[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)\s*\)\s*$"
)
FORMULA_WHITELIST = ("const", "arcsinh_half_doping_plus", "charge_neutral_plus")
REGION_KEYS = ("htl", "intrinsic", "etl")


class MeshConfig(PsimModel):
    """Three-layer mesh layout."""

    breakpoints: Tuple[float, float, float, float] = Field(
        ..., description="Region boundaries x0 < x1 < x2 < x3"
    )
    nodes_per_region: int = Field(..., ge=2, description="Collocation nodes per region")

    @field_validator("breakpoints")
    @classmethod
    def _monotone(cls, value: Tuple[float, float, float, float]):
        if not all(math.isfinite(v) for v in value):
            raise ValueError("breakpoints must be finite")
        if any(b <= a for a, b in zip(value[:-1], value[1:])):
            raise ValueError(f"breakpoints must be strictly increasing, got {value}")
        return value


class DimensionlessParams(PsimModel):
    """Dimensionless model parameters."""

    lambda_: float = Field(..., alias="lambda", gt=0, description="Rescaled Debye length")
    nu: float = Field(..., gt=0, description="Anion to carrier mobility ratio")
    delta: float = Field(..., gt=0, description="Carrier to anion density ratio")
    gamma: float = Field(0.0, ge=0, description="Rescaled photogeneration rate")
    z_a: int = Field(1, gt=0, description="Anion vacancy charge number")


class RegionMaterial(PsimModel):
    """Material constants of one layer (physical units)."""

    eps_s: Optional[float] = Field(
        None, gt=0, description="Permittivity in F/cm, defaults to the reference value"
    )
    mu_n: float = Field(..., gt=0, description="Electron mobility in cm^2/(V s)")
    mu_p: float = Field(..., gt=0, description="Hole mobility in cm^2/(V s)")
    N_n: float = Field(..., gt=0, description="Conduction band density of states, cm^-3")
    N_p: float = Field(..., gt=0, description="Valence band density of states, cm^-3")
    E_n: float = Field(..., description="Conduction band edge in eV")
    E_p: float = Field(..., description="Valence band edge in eV")
    N_a: Optional[float] = Field(None, gt=0, description="Maximal vacancy density, cm^-3")
    E_a: Optional[float] = Field(None, description="Vacancy energy level in eV")


class PhysicalParams(PsimModel):
    """Physical parameter set and scaling factors."""

    length_cm: float = Field(..., gt=0, description="Length scale l in cm")
    temperature_K: float = Field(..., gt=0)
    eps_s: float = Field(..., gt=0, description="Reference permittivity in F/cm")
    N_tilde: float = Field(..., gt=0, description="Carrier density scale, cm^-3")
    N_a_tilde: float = Field(..., gt=0, description="Vacancy density scale, cm^-3")
    mu_tilde: float = Field(..., gt=0, description="Carrier mobility scale")
    mu_a_tilde: float = Field(..., gt=0, description="Vacancy mobility scale")
    F_ph: float = Field(0.0, ge=0, description="Incident photon flux, cm^-2 s^-1")
    alpha_g: float = Field(0.0, ge=0, description="Absorption coefficient, cm^-1")
    z_a: int = Field(1, gt=0)
    materials: Dict[str, RegionMaterial]
    provenance: Optional[str] = None

    @field_validator("materials")
    @classmethod
    def _three_layers(cls, value: Dict[str, RegionMaterial]):
        missing = [key for key in REGION_KEYS if key not in value]
        extra = [key for key in value if key not in REGION_KEYS]
        if missing or extra:
            raise ValueError(
                f"materials must define exactly {list(REGION_KEYS)}; "
                f"missing {missing}, unexpected {extra}"
            )
        intrinsic = value["intrinsic"]
        if intrinsic.N_a is None or intrinsic.E_a is None:
            raise ValueError("the intrinsic material must define N_a and E_a")
        return value


class StatisticsConfig(PsimModel):
    """Statistics function per carrier."""

    n: StatisticsKind = StatisticsKind.BOLTZMANN
    p: StatisticsKind = StatisticsKind.BOLTZMANN
    a: StatisticsKind = StatisticsKind.FERMI_DIRAC_MINUS_ONE

    @model_validator(mode="after")
    def _admissible(self):
        for carrier in ("n", "p"):
            if getattr(self, carrier).for_ions:
                raise ValueError(
                    f"carrier {carrier} requires boltzmann or fermi_dirac_half statistics"
                )
        if not self.a.for_ions:
            raise ValueError("anion vacancies require fermi_dirac_minus_one statistics")
        return self


class DopingConfig(PsimModel):
    """Piecewise constant doping, dimensionless or in cm^-3 (physical mode)."""

    htl: float = 0.0
    intrinsic: float = 0.0
    etl: float = 0.0


class GenerationConfig(PsimModel):
    """Photogeneration profile."""

    kind: Literal["zero", "constant", "beer_lambert"] = "zero"
    value: float = Field(0.0, ge=0, description="Constant dimensionless rate")
    alpha: float = Field(
        0.0, ge=0, description="Dimensionless absorption (dimensionless beer_lambert)"
    )
    side: Literal["left", "right"] = "left"
    regions: List[Literal["htl", "intrinsic", "etl"]] = Field(
        default_factory=lambda: list(REGION_KEYS)
    )


class RecombinationParams(PsimModel):
    """Radiative plus trap-assisted recombination coefficients."""

    enabled: bool = False
    r0: float = Field(0.0, ge=0, description="Radiative coefficient")
    tau_n: float = Field(0.0, ge=0)
    tau_p: float = Field(0.0, ge=0)
    n_n_tau: float = Field(0.0, ge=0)
    n_p_tau: float = Field(0.0, ge=0)
    srh_standard_lifetimes: bool = Field(
        False, description="Use tau_n on the hole term of the trap-assisted denominator"
    )


class DirichletConfig(PsimModel):
    """Contact values: numbers or whitelisted formulas."""

    phi_left: BoundaryValue
    phi_right: BoundaryValue
    psi_left: BoundaryValue
    psi_right: BoundaryValue

    @field_validator("phi_left", "phi_right", "psi_left", "psi_right")
    @classmethod
    def _whitelisted(cls, value: BoundaryValue):
        if isinstance(value, str):
            match = FORMULA_PATTERN.match(value)
            if match is None or match.group("name") not in FORMULA_WHITELIST:
                raise ValueError(
                    f"boundary formula {value!r} is not one of {list(FORMULA_WHITELIST)}"
                )
        elif not math.isfinite(value):
            raise ValueError("boundary values must be finite")
        return value


class InitialConfig(PsimModel):
    """Initial quasi Fermi potentials."""

    profile: Literal["sinusoidal", "quadratic", "constant", "from_file"] = "sinusoidal"
    amplitude: Optional[float] = None
    value: float = 0.0
    path: Optional[str] = None
    phi_a: float = Field(0.5, description="Constant initial anion quasi Fermi potential")
    anion_mass: Optional[float] = Field(
        None, description="Anion mass target of the equilibrium solve"
    )

    @model_validator(mode="after")
    def _file_given(self):
        if self.profile == "from_file" and not self.path:
            raise ValueError("profile 'from_file' requires a path")
        return self

    @property
    def resolved_amplitude(self) -> float:
        """Amplitude with the per-profile default applied."""
        if self.amplitude is not None:
            return self.amplitude
        return 0.5 if self.profile == "sinusoidal" else 1.0


class TimeGrid(PsimModel):
    """Uniform or explicit time steps."""

    t_start: float = 0.0
    t_end: float
    step: Optional[float] = Field(None, gt=0)
    steps: Optional[List[float]] = None

    @model_validator(mode="after")
    def _consistent(self):
        span = self.t_end - self.t_start
        if span <= 0:
            raise ValueError("t_end must exceed t_start")
        if (self.step is None) == (self.steps is None):
            raise ValueError("give exactly one of 'step' or 'steps'")
        if self.steps is not None:
            if not self.steps or any(s <= 0 for s in self.steps):
                raise ValueError("explicit steps must be positive")
            if abs(math.fsum(self.steps) - span) > 1e-9 * span:
                raise ValueError("explicit steps must sum to t_end - t_start")
        else:
            count = round(span / self.step)
            if count < 1 or abs(count * self.step - span) > 1e-9 * span:
                raise ValueError("t_end - t_start must be a multiple of step")
        return self

    def nodes(self) -> List[float]:
        """Time nodes including both ends."""
        if self.steps is not None:
            nodes = [self.t_start]
            for s in self.steps:
                nodes.append(nodes[-1] + s)
        else:
            count = round((self.t_end - self.t_start) / self.step)
            nodes = [self.t_start + k * self.step for k in range(count + 1)]
        nodes[-1] = self.t_end
        return nodes

    def scaled(self, factor: float) -> "TimeGrid":
        """Return the same grid with every time divided by ``factor``."""
        return TimeGrid(
            t_start=self.t_start / factor,
            t_end=self.t_end / factor,
            step=None if self.step is None else self.step / factor,
            steps=None if self.steps is None else [s / factor for s in self.steps],
        )


class NewtonOptions(PsimModel):
    """Newton tolerances and globalization."""

    abs_tol: float = Field(1e-13, gt=0)
    rel_tol: float = Field(1e-14, gt=0)
    step_tol: float = Field(1e-11, gt=0, description="Relative size of a final full step")
    stagnation_tol: float = Field(
        1e-9, gt=0, description="Residual accepted when the line search stalls"
    )
    max_iters: int = Field(50, ge=1)
    damping_initial: float = Field(1.0, gt=0, le=1)
    damping_growth: float = Field(2.0, ge=1)
    max_backtracks: int = Field(12, ge=0)
    max_halvings: int = Field(10, ge=0)


class OutputConfig(PsimModel):
    """What a run writes."""

    directory: Optional[str] = None
    profile_times: List[float] = Field(default_factory=list)
    plots: bool = True
    steady: bool = True
    dimensional: bool = False


class ScenarioConfig(PsimModel):
    """Complete scenario description."""

    name: str = "scenario"
    mode: Literal["dimensionless", "physical"] = "dimensionless"
    mesh: MeshConfig
    params: Optional[DimensionlessParams] = None
    physical: Optional[PhysicalParams] = None
    statistics: StatisticsConfig = Field(default_factory=StatisticsConfig)
    doping: DopingConfig = Field(default_factory=DopingConfig)
    generation: GenerationConfig = Field(default_factory=GenerationConfig)
    recombination: RecombinationParams = Field(default_factory=RecombinationParams)
    dirichlet: DirichletConfig
    initial: InitialConfig = Field(default_factory=InitialConfig)
    time: TimeGrid
    solver: NewtonOptions = Field(default_factory=NewtonOptions)
    outputs: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _mode_parameters(self):
        if self.mode == "dimensionless" and self.params is None:
            raise ValueError("dimensionless scenarios need a [params] table")
        if self.mode == "physical" and self.physical is None:
            raise ValueError("physical scenarios need a [physical] table")
        if self.outputs.dimensional and self.mode != "physical":
            raise ValueError("dimensional free energy needs a physical scenario")
        return self
