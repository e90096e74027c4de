"""Pydantic models for scenarios and diagnostics."""

from .base import PsimModel
from .diagnostics import L2_FIELDS, DiagnosticsRecord, RunManifest
from .scenario import (
    DimensionlessParams,
    DirichletConfig,
    DopingConfig,
    GenerationConfig,
    InitialConfig,
    MeshConfig,
    NewtonOptions,
    OutputConfig,
    PhysicalParams,
    RecombinationParams,
    RegionMaterial,
    ScenarioConfig,
    StatisticsConfig,
    TimeGrid,
)

__all__ = [
    "DiagnosticsRecord",
    "DimensionlessParams",
    "DirichletConfig",
    "DopingConfig",
    "GenerationConfig",
    "InitialConfig",
    "L2_FIELDS",
    "MeshConfig",
    "NewtonOptions",
    "OutputConfig",
    "PhysicalParams",
    "PsimModel",
    "RecombinationParams",
    "RegionMaterial",
    "RunManifest",
    "ScenarioConfig",
    "StatisticsConfig",
    "TimeGrid",
]
