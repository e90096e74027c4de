"""Configuration and fixtures for the test suite."""

import os
import sys
from pathlib import Path

import pytest

# Ensure the 'psim' package in the parent directory can be imported:
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from psim.models.scenario import ScenarioConfig
from psim.scenario import build_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def constant_data_config(nodes: int = 9, t_end: float = 1.0, step: float = 0.25, **overrides) -> ScenarioConfig:
    """Small dimensionless scenario with constant boundary data and doping 0.1."""
    raw = {
        "name": "constant-data",
        "mesh": {"breakpoints": [0.0, 2.0, 4.0, 6.0], "nodes_per_region": nodes},
        "params": {"lambda": 1.0, "nu": 1.0, "delta": 1.0, "gamma": 1.0},
        "doping": {"htl": 0.1, "intrinsic": 0.1, "etl": 0.1},
        "dirichlet": {
            "phi_left": 0.5,
            "phi_right": 0.5,
            "psi_left": "arcsinh_half_doping_plus(0.5)",
            "psi_right": "arcsinh_half_doping_plus(0.5)",
        },
        "initial": {"profile": "sinusoidal", "phi_a": 0.5},
        "time": {"t_end": t_end, "step": step},
        "outputs": {"plots": False, "steady": True},
    }
    raw.update(overrides)
    return ScenarioConfig.model_validate(raw)


def biased_config(nodes: int = 9, t_end: float = 1.0, step: float = 0.25, **overrides) -> ScenarioConfig:
    """Small dimensionless scenario with a pn-like doping and a bias across the device."""
    raw = {
        "doping": {"htl": -0.5, "intrinsic": -0.5, "etl": 0.5},
        "dirichlet": {
            "phi_left": 1.0,
            "phi_right": 0.0,
            "psi_left": "arcsinh_half_doping_plus(1.0)",
            "psi_right": "arcsinh_half_doping_plus(0.0)",
        },
        "initial": {"profile": "quadratic", "phi_a": 0.5},
    }
    raw.update(overrides)
    config = constant_data_config(nodes, t_end, step, **raw)
    return config.model_copy(update={"name": "biased"})


@pytest.fixture
def constant_config():
    """Constant Dirichlet data on a 27-cell mesh."""
    return constant_data_config()


@pytest.fixture
def constant_scenario(constant_config):
    """Runtime scenario of :func:`constant_config`."""
    return build_scenario(constant_config)


@pytest.fixture
def biased_scenario():
    """Runtime scenario with non-constant Dirichlet data."""
    return build_scenario(biased_config())


@pytest.fixture
def scenario_dir():
    """Directory of the shipped scenario files."""
    return SCENARIO_DIR


@pytest.fixture
def make_constant_config():
    """Factory for constant-data configurations of any size."""
    return constant_data_config


@pytest.fixture
def make_biased_config():
    """Factory for biased configurations of any size."""
    return biased_config
