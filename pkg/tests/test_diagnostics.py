"""Tests for the entropy, dissipation and error diagnostics."""

import math

import numpy as np
import pytest

from psim.diagnostics import (
    DiagnosticsRecorder,
    anion_mass,
    band_edge_relative_entropy,
    discrete_dissipation,
    discrete_entropy,
    entropy_vs_steady,
    fit_exponential_decay,
    free_energy_dimensional,
    l2_error_sq,
)
from psim.exceptions import ConfigError, MeshMismatch
from psim.models.diagnostics import L2_FIELDS
from psim.scenario import build_scenario, load_scenario, with_mesh
from psim.statistics import make_statistics
from psim.system import State, initial_state, solve_equilibrium


def _shifted(state: State, **shifts: float) -> State:
    fields = {name: state.field(name) + shifts.get(name, 0.0) for name in ("psi", "phi_n", "phi_p", "phi_a")}
    return State(**fields, time=state.time, mesh=state.mesh)


def _wavy(state: State) -> State:
    x = state.mesh.centers
    wave = 0.2 * np.cos(0.8 * x)
    intr = state.mesh.intrinsic_cells
    return State(
        psi=state.psi + wave,
        phi_n=state.phi_n + 0.5 * wave,
        phi_p=state.phi_p - wave,
        phi_a=state.phi_a + wave[intr],
        time=state.time,
        mesh=state.mesh,
    )


class TestDiscreteEntropy:
    """Tests for :func:`discrete_entropy`."""

    def test_vanishes_at_dirichlet_state(self, constant_scenario):
        """The Dirichlet data with half-filled vacancy sites carry no entropy."""
        b = constant_scenario.boundary
        intr = constant_scenario.mesh.intrinsic_cells
        state = State(
            psi=b.psi_cells.copy(),
            phi_n=b.phi_cells.copy(),
            phi_p=b.phi_cells.copy(),
            phi_a=b.psi_cells[intr].copy(),
            mesh=constant_scenario.mesh,
        )
        assert discrete_entropy(state, constant_scenario) == pytest.approx(0.0, abs=1e-13)

    @pytest.mark.parametrize("fixture", ["constant_scenario", "biased_scenario"])
    def test_non_negative(self, fixture, request):
        """E_T >= 0 away from the Dirichlet data."""
        scenario = request.getfixturevalue(fixture)
        state = _wavy(initial_state(scenario))
        assert discrete_entropy(state, scenario) > 0.0


class TestDiscreteDissipation:
    """Tests for :func:`discrete_dissipation`."""

    def test_non_negative_with_sources(self, make_biased_config):
        """Face terms and recombination all dissipate."""
        scenario = build_scenario(
            make_biased_config(
                nodes=5,
                generation={"kind": "constant", "value": 0.2},
                recombination={"enabled": True, "r0": 0.5, "tau_n": 1.0, "tau_p": 2.0},
            )
        )
        state = _wavy(initial_state(scenario))
        assert discrete_dissipation(state, scenario) > 0.0

    @pytest.mark.parametrize("name", ["test1b_smoke.toml", "psc.toml"])
    def test_entropy_and_dissipation_on_random_states(self, name, scenario_dir):
        """E_T and D_T stay non-negative for random potentials."""
        scenario = build_scenario(with_mesh(load_scenario(scenario_dir / name), 5))
        base = initial_state(scenario)
        n, n_a = base.mesh.n_cells, base.mesh.intrinsic_cells.size
        rng = np.random.default_rng(99)
        for _ in range(5_000):
            psi, phi_n, phi_p = rng.uniform(-1.0, 1.0, (3, n))
            state = State(
                psi=base.psi + psi,
                phi_n=base.phi_n + phi_n,
                phi_p=base.phi_p + phi_p,
                phi_a=base.phi_a + rng.uniform(-1.0, 1.0, n_a),
                time=base.time,
                mesh=base.mesh,
            )
            assert discrete_entropy(state, scenario) >= 0.0
            assert discrete_dissipation(state, scenario) >= 0.0

    def test_zero_at_equilibrium(self, constant_scenario):
        """Constant quasi Fermi potentials dissipate nothing."""
        state = solve_equilibrium(constant_scenario, 1.0)
        assert discrete_dissipation(state, constant_scenario) == pytest.approx(0.0, abs=1e-12)


class TestEntropyVsSteady:
    """Tests for the relative entropy to a steady state."""

    @pytest.fixture(autouse=True)
    def _steady(self, constant_scenario):
        """Use the initial state of the constant-data scenario as reference."""
        self.scenario = constant_scenario
        self.steady = initial_state(constant_scenario)

    def test_zero_for_identical_states(self):
        """E_inf(u, u) = 0."""
        assert entropy_vs_steady(self.steady, self.steady, self.scenario) == pytest.approx(0.0, abs=1e-14)

    def test_positive_for_distinct_states(self):
        """Any perturbation is seen."""
        state = _wavy(self.steady)
        assert entropy_vs_steady(state, self.steady, self.scenario) > 0.0

    def test_mesh_mismatch(self, make_constant_config):
        """States on different meshes cannot be compared."""
        coarse = build_scenario(make_constant_config(nodes=5))
        with pytest.raises(MeshMismatch):
            entropy_vs_steady(initial_state(coarse), self.steady, self.scenario)

    def test_dimensional_needs_physical_scales(self):
        """J/cm^2 values are undefined without a length and energy scale."""
        with pytest.raises(ConfigError):
            entropy_vs_steady(self.steady, self.steady, self.scenario, dimensional=True)
        with pytest.raises(ConfigError):
            free_energy_dimensional(self.steady, self.steady, self.scenario)


class TestBandEdgeRelativeEntropy:
    """Tests for :func:`band_edge_relative_entropy`."""

    def test_reduces_to_scaled_relative_entropy(self):
        """Without a band edge the value is N H(x/N, y/N)."""
        stat = make_statistics("boltzmann")
        x = np.array([0.5, 2.0, 7.0])
        y = np.array([1.0, 1.5, 3.0])
        N = 4.0
        expected = N * np.asarray(stat.relative_entropy(x / N, y / N))
        np.testing.assert_allclose(band_edge_relative_entropy(stat, x, y, N, 0.0, -1), expected, rtol=1e-12)

    def test_band_edge_cancels(self):
        """The linear band-edge energy drops out of the Bregman distance."""
        stat = make_statistics("fermi_dirac_half")
        x = np.array([0.3, 1.2])
        y = np.array([0.8, 0.9])
        without = band_edge_relative_entropy(stat, x, y, 2.0, 0.0, 1)
        with_edge = band_edge_relative_entropy(stat, x, y, 2.0, -4.2, 1)
        np.testing.assert_allclose(with_edge, without, rtol=1e-9, atol=1e-12)
        assert np.all(without > 0)


class TestL2Errors:
    """Tests for :func:`l2_error_sq`."""

    @pytest.fixture(autouse=True)
    def _steady(self, constant_scenario):
        """Use the initial state of the constant-data scenario as reference."""
        self.scenario = constant_scenario
        self.steady = initial_state(constant_scenario)

    def test_constant_shift(self):
        """A shift of 0.1 gives 0.01 times the measure of the support."""
        state = _shifted(self.steady, phi_n=0.1, phi_a=0.1)
        assert l2_error_sq(state, self.steady, "phi_n", self.scenario) == pytest.approx(0.06)
        assert l2_error_sq(state, self.steady, "phi_a", self.scenario) == pytest.approx(0.02)
        assert l2_error_sq(state, self.steady, "psi", self.scenario) == 0.0

    def test_density_fields(self):
        """Density errors are computed from the state equation."""
        state = _shifted(self.steady, phi_p=0.1)
        assert l2_error_sq(state, self.steady, "n_p", self.scenario) > 0.0
        assert l2_error_sq(state, self.steady, "n_n", self.scenario) == 0.0

    def test_invalid_field(self):
        """Unknown fields list the valid choices."""
        with pytest.raises(ValueError) as exc_info:
            l2_error_sq(self.steady, self.steady, "temperature", self.scenario)
        assert "Invalid field: temperature. Must be one of" in str(exc_info.value)


class TestDiagnosticsRecorder:
    """Tests for :class:`DiagnosticsRecorder`."""

    def test_without_steady_state(self, constant_scenario):
        """Only the Dirichlet entropy, dissipation and mass are recorded."""
        state = initial_state(constant_scenario)
        record = DiagnosticsRecorder(constant_scenario)(state)
        assert record.entropy_vs_steady_E_inf is None
        assert record.l2_errors == {}
        assert record.free_energy_dimensional is None
        assert record.anion_mass == pytest.approx(anion_mass(state, constant_scenario))
        assert record.entropy_E_T == pytest.approx(discrete_entropy(state, constant_scenario))

    def test_with_steady_state(self, constant_scenario):
        """Every L2 field is recorded."""
        steady = initial_state(constant_scenario)
        record = DiagnosticsRecorder(constant_scenario, steady=steady)(steady.with_time(0.5))
        assert record.time == 0.5
        assert record.entropy_vs_steady_E_inf == pytest.approx(0.0, abs=1e-14)
        assert set(record.l2_errors) == set(L2_FIELDS)
        assert all(v == 0.0 for v in record.l2_errors.values())

    def test_dimensional_needs_physical_scenario(self, constant_scenario):
        """Requesting the free energy without scales fails early."""
        steady = initial_state(constant_scenario)
        with pytest.raises(ConfigError):
            DiagnosticsRecorder(constant_scenario, steady=steady, dimensional=True)


class TestDecayFit:
    """Tests for :func:`fit_exponential_decay`."""

    def test_recovers_rate(self):
        """A pure exponential is fitted exactly."""
        t = np.arange(0.0, 21.0)
        fit = fit_exponential_decay(t, 3.0 * np.exp(-0.7 * t))
        assert fit.slope == pytest.approx(-0.7, rel=1e-10)
        assert fit.intercept == pytest.approx(math.log(3.0), rel=1e-8)
        assert fit.r_squared == pytest.approx(1.0)
        # samples above a tenth of the peak are left out
        assert fit.count == 17

    def test_floor_values_are_ignored(self):
        """Values below 1e-12 times the peak do not bend the fit."""
        t = np.arange(0.0, 60.0)
        q = np.maximum(np.exp(-t), 1e-30)
        fit = fit_exponential_decay(t, q)
        assert fit.slope == pytest.approx(-1.0, rel=1e-8)

    def test_too_few_samples(self):
        """At least three samples must fall inside the window."""
        with pytest.raises(ValueError) as exc_info:
            fit_exponential_decay([0.0, 1.0, 2.0], [1.0, 0.5, 0.2])
        assert "at least 3" in str(exc_info.value)

    def test_length_mismatch(self):
        """Times and values pair up."""
        with pytest.raises(ValueError):
            fit_exponential_decay([0.0, 1.0], [1.0])
