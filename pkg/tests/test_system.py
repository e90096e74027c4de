"""Tests for the discrete system, the Newton solver and the solves built on it."""

from unittest.mock import patch

import numpy as np
import pytest

from psim.exceptions import ConfigError, MassOutOfRange, NoConvergence, StepFailure
from psim.models.scenario import NewtonOptions
from psim.scenario import build_scenario, load_scenario, with_mesh
from psim.system import (
    CoupledSystem,
    NonlinearSystem,
    PoissonProblem,
    ResidualSystem,
    State,
    UnknownLayout,
    advance,
    anion_mass_of,
    assemble_residual,
    compute_densities,
    initial_quasi_fermi,
    initial_state,
    newton_solve,
    run_transient,
    solve_equilibrium,
    solve_poisson_given_qfp,
    solve_steady_state,
)
from psim.system import solvers


def _perturbed(state: State, amplitude: float = 0.05) -> State:
    """Smoothly perturb every potential."""
    x = state.mesh.centers
    wave = amplitude * np.sin(1.3 * x + 0.2)
    intr = state.mesh.intrinsic_cells
    return State(
        psi=state.psi + wave,
        phi_n=state.phi_n - 0.5 * wave,
        phi_p=state.phi_p + 0.7 * wave,
        phi_a=state.phi_a + 0.3 * wave[intr],
        time=state.time,
        mesh=state.mesh,
    )


def _random_state(state: State, rng: np.random.Generator, amplitude: float = 0.2) -> State:
    """Independent uniform perturbations of every potential."""
    n = state.mesh.n_cells
    n_a = state.mesh.intrinsic_cells.size
    return State(
        psi=state.psi + rng.uniform(-amplitude, amplitude, n),
        phi_n=state.phi_n + rng.uniform(-amplitude, amplitude, n),
        phi_p=state.phi_p + rng.uniform(-amplitude, amplitude, n),
        phi_a=state.phi_a + rng.uniform(-amplitude, amplitude, n_a),
        time=state.time,
        mesh=state.mesh,
    )


def _scaled_jacobian_error(system: NonlinearSystem, x: np.ndarray) -> float:
    """Largest entrywise gap to central differences, relative to the row size."""
    analytic = system.evaluate(x).jacobian.toarray()
    numeric = _fd_jacobian(system, x)
    scale = np.maximum(1.0, np.max(np.abs(analytic), axis=1, keepdims=True))
    return float(np.max(np.abs(analytic - numeric) / scale))


def _fd_jacobian(system: NonlinearSystem, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    columns = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        plus = system.evaluate(x + e, with_jacobian=False).residual
        minus = system.evaluate(x - e, with_jacobian=False).residual
        columns.append((plus - minus) / (2 * h))
    return np.column_stack(columns)


@pytest.fixture
def source_scenario(make_biased_config):
    """Biased scenario with generation and recombination switched on."""
    config = make_biased_config(
        nodes=5,
        generation={"kind": "constant", "value": 0.2},
        recombination={"enabled": True, "r0": 0.5, "tau_n": 1.0, "tau_p": 2.0, "n_n_tau": 0.1, "n_p_tau": 0.2},
    )
    return build_scenario(config)


class TestStateLayout:
    """Tests for the unknown layout and the state equation."""

    def test_pack_unpack(self, constant_scenario):
        """Packing then unpacking recovers the state."""
        state = _perturbed(initial_state(constant_scenario))
        layout = UnknownLayout(constant_scenario.mesh)
        assert layout.size == 3 * 27 + 9
        restored = layout.unpack(layout.pack(state))
        for name in ("psi", "phi_n", "phi_p", "phi_a"):
            np.testing.assert_array_equal(restored.field(name), state.field(name))

    def test_boltzmann_state_equation(self, constant_scenario):
        """n_n = exp(psi - phi_n) and n_p = exp(phi_p - psi) without band edges."""
        n = constant_scenario.mesh.n_cells
        psi = np.linspace(-0.5, 0.5, n)
        phi = np.zeros(n)
        dens = compute_densities(constant_scenario, psi, phi, phi, np.zeros(9))
        np.testing.assert_allclose(dens.n_n, np.exp(psi))
        np.testing.assert_allclose(dens.n_p, np.exp(-psi))
        np.testing.assert_allclose(dens.log_n, psi)
        assert np.all((dens.n_a > 0) & (dens.n_a < 1))


class TestCoupledSystem:
    """Tests for residual and Jacobian assembly."""

    def test_transient_jacobian_matches_differences(self, source_scenario):
        """The analytic Jacobian of a backward Euler step is exact."""
        old = initial_state(source_scenario)
        system = CoupledSystem(source_scenario, old=old, tau=0.1)
        x = system.layout.pack(_perturbed(old))
        analytic = system.evaluate(x).jacobian.toarray()
        np.testing.assert_allclose(analytic, _fd_jacobian(system, x), rtol=1e-5, atol=1e-6)

    def test_stationary_jacobian_matches_differences(self, source_scenario):
        """The mass constraint row is differentiated too."""
        guess = _perturbed(initial_state(source_scenario))
        system = CoupledSystem(source_scenario, anion_mass=1.0)
        x = system.layout.pack(guess)
        analytic = system.evaluate(x).jacobian.toarray()
        np.testing.assert_allclose(analytic, _fd_jacobian(system, x), rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("name", ["test1a_smoke.toml", "test1b_smoke.toml", "psc.toml"])
    def test_jacobian_on_random_states(self, name, scenario_dir):
        """Transient and stationary Jacobians hold on 20 random states per scenario."""
        scenario = build_scenario(with_mesh(load_scenario(scenario_dir / name), 5))
        old = initial_state(scenario)
        mass = anion_mass_of(old, scenario)
        rng = np.random.default_rng(2024)
        for _ in range(20):
            state = _random_state(old, rng)
            transient = CoupledSystem(scenario, old=old, tau=0.1)
            assert _scaled_jacobian_error(transient, transient.layout.pack(state)) <= 1e-6
            stationary = CoupledSystem(scenario, anion_mass=mass)
            assert _scaled_jacobian_error(stationary, stationary.layout.pack(state)) <= 1e-6

    def test_constraint_row(self, constant_scenario):
        """The first vacancy row holds the mass defect."""
        state = initial_state(constant_scenario)
        mass = anion_mass_of(state, constant_scenario)
        system = CoupledSystem(constant_scenario, anion_mass=mass + 0.25)
        residual = system.evaluate(system.layout.pack(state), with_jacobian=False).residual
        assert residual[system.layout.idx_a[0]] == pytest.approx(-0.25)

    def test_fluxes_are_conservative(self, biased_scenario):
        """Interior fluxes cancel: row sums only see contacts and time differences."""
        old = initial_state(biased_scenario)
        new = _perturbed(old).with_time(0.1)
        tau = 0.1
        system = CoupledSystem(biased_scenario, old=old, tau=tau, time=0.1)
        residual = system.evaluate(system.layout.pack(new), with_jacobian=False).residual
        fluxes = system.face_fluxes(new)
        m = biased_scenario.mesh.measures
        intr = biased_scenario.mesh.intrinsic_cells
        new_d = compute_densities(biased_scenario, new.psi, new.phi_n, new.phi_p, new.phi_a)
        old_d = compute_densities(biased_scenario, old.psi, old.phi_n, old.phi_p, old.phi_a)

        lay = system.layout
        electrons = -np.sum(m * (new_d.n_n - old_d.n_n)) / tau + np.sum(fluxes["n"][-2:])
        assert np.sum(residual[lay.idx_n]) == pytest.approx(electrons, rel=1e-10, abs=1e-12)
        vacancies = np.sum(m[intr] * (new_d.n_a - old_d.n_a)) / tau
        assert np.sum(residual[lay.idx_a]) == pytest.approx(vacancies, rel=1e-10, abs=1e-12)

    def test_assemble_residual(self, biased_scenario):
        """The functional form matches the class."""
        old = initial_state(biased_scenario)
        new = _perturbed(old)
        system = CoupledSystem(biased_scenario, old=old, tau=0.2, time=new.time)
        expected = system.evaluate(system.layout.pack(new)).residual
        np.testing.assert_allclose(assemble_residual(new, old, 0.2, biased_scenario).residual, expected)

    def test_argument_checks(self, constant_scenario):
        """Each mode needs its own data."""
        with pytest.raises(ValueError):
            CoupledSystem(constant_scenario)
        with pytest.raises(ValueError):
            CoupledSystem(constant_scenario, tau=0.1)

    def test_step_limit_keeps_vacancies_below_saturation(self, constant_scenario):
        """A step pushing eta_a past its bound is cut back."""
        state = initial_state(constant_scenario)
        system = CoupledSystem(constant_scenario, anion_mass=1.0)
        x = system.layout.pack(state)
        dx = np.zeros_like(x)
        dx[system.layout.idx_a] = 100.0
        assert 0.0 < system.max_step(x, dx) < 1.0
        assert system.max_step(x, 1e-3 * np.ones_like(x)) == 1.0


class TestPoisson:
    """Tests for the nonlinear Poisson problem."""

    def test_residual_is_functional_gradient(self, biased_scenario):
        """F(psi) = grad J(psi)."""
        phi_n, phi_p, phi_a = initial_quasi_fermi(biased_scenario)
        problem = PoissonProblem(biased_scenario, phi_n, phi_p, phi_a)
        psi = biased_scenario.boundary.psi_cells + 0.1 * np.cos(biased_scenario.mesh.centers)
        h = 1e-6
        gradient = []
        for k in range(psi.size):
            e = np.zeros_like(psi)
            e[k] = h
            gradient.append((problem.functional(psi + e) - problem.functional(psi - e)) / (2 * h))
        np.testing.assert_allclose(problem.evaluate(psi).residual, gradient, rtol=1e-6, atol=1e-7)

    def test_solve_and_functional_decrease(self, biased_scenario):
        """Newton converges and every accepted step lowers the functional."""
        phi_n, phi_p, phi_a = initial_quasi_fermi(biased_scenario)
        problem = PoissonProblem(biased_scenario, phi_n, phi_p, phi_a)
        result = newton_solve(biased_scenario.boundary.psi_cells, problem, biased_scenario.solver)
        assert result.residual_norm <= 1e-10
        history = np.asarray(problem.history)
        assert np.all(np.diff(history) <= 1e-13 * np.abs(history[:-1]))

    def test_solve_poisson_given_qfp(self, constant_scenario):
        """The returned potential solves the Poisson equation."""
        phi_n, phi_p, phi_a = initial_quasi_fermi(constant_scenario)
        psi = solve_poisson_given_qfp(constant_scenario, phi_n, phi_p, phi_a)
        problem = PoissonProblem(constant_scenario, phi_n, phi_p, phi_a)
        assert problem.evaluate(psi, with_jacobian=False).norm <= 1e-10

    def test_non_finite_input(self, constant_scenario):
        """Non-finite quasi Fermi potentials are rejected up front."""
        phi_n, phi_p, phi_a = initial_quasi_fermi(constant_scenario)
        phi_n = phi_n.copy()
        phi_n[3] = np.nan
        with pytest.raises(ValueError) as exc_info:
            solve_poisson_given_qfp(constant_scenario, phi_n, phi_p, phi_a)
        assert "phi_n" in str(exc_info.value)


class _Quadratic(NonlinearSystem):
    """Componentwise x^2 - c."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def evaluate(self, x, with_jacobian=True):
        from scipy import sparse

        return ResidualSystem(x * x - self.c, sparse.diags(2.0 * x).tocsr() if with_jacobian else None)


class TestNewton:
    """Tests for :func:`newton_solve`."""

    def test_converges_quadratically(self):
        """Square roots are found in a handful of iterations."""
        result = newton_solve(np.array([1.0, 3.0]), _Quadratic([2.0, 5.0]), NewtonOptions())
        np.testing.assert_allclose(result.x, np.sqrt([2.0, 5.0]), rtol=1e-14)
        assert result.iterations < 10

    def test_already_converged(self):
        """A root as initial guess needs no iteration."""
        result = newton_solve(np.array([2.0]), _Quadratic([4.0]), NewtonOptions())
        assert result.iterations == 0
        assert result.converged_by == "residual"

    def test_iteration_limit(self):
        """Exhausting the iterations raises NoConvergence with the last norm."""
        options = NewtonOptions(max_iters=1)
        with pytest.raises(NoConvergence) as exc_info:
            newton_solve(np.array([100.0]), _Quadratic([2.0]), options, label="sqrt")
        assert exc_info.value.iterations == 1
        assert exc_info.value.final_norm > 0
        assert "sqrt" in str(exc_info.value)

    def test_non_finite_start(self):
        """A non-finite initial residual is reported at once."""
        with pytest.raises(NoConvergence):
            newton_solve(np.array([np.inf]), _Quadratic([2.0]), NewtonOptions())


class TestInitialState:
    """Tests for the initial data."""

    def test_sinusoidal_profile(self, constant_scenario):
        """phi^D plus half a sine of amplitude 0.5."""
        phi_n, phi_p, phi_a = initial_quasi_fermi(constant_scenario)
        x = constant_scenario.mesh.centers
        np.testing.assert_allclose(phi_n, 0.5 + 0.5 * np.sin(np.pi * x / 6.0))
        np.testing.assert_array_equal(phi_n, phi_p)
        np.testing.assert_allclose(phi_a, 0.5)

    def test_quadratic_profile(self, biased_scenario):
        """phi^D plus x (L - x) / L^2."""
        phi_n, _, _ = initial_quasi_fermi(biased_scenario)
        x = biased_scenario.mesh.centers
        np.testing.assert_allclose(phi_n, 1.0 - x / 6.0 + x * (6.0 - x) / 36.0)

    def test_from_file(self, tmp_path, make_constant_config):
        """A profile file is interpolated onto the mesh."""
        path = tmp_path / "start.csv"
        path.write_text("x,phi_n,phi_p,phi_a\n0,0.1,0.2,nan\n3,0.1,0.2,0.3\n6,0.1,0.2,nan\n")
        scenario = build_scenario(make_constant_config(initial={"profile": "from_file", "path": str(path)}))
        phi_n, phi_p, phi_a = initial_quasi_fermi(scenario)
        np.testing.assert_allclose(phi_n, 0.1)
        np.testing.assert_allclose(phi_p, 0.2)
        np.testing.assert_allclose(phi_a, 0.3)

    def test_from_file_missing_column(self, tmp_path, make_constant_config):
        """A profile without phi_a is rejected."""
        path = tmp_path / "start.csv"
        path.write_text("x,phi_n,phi_p\n0,0.1,0.2\n6,0.1,0.2\n")
        scenario = build_scenario(make_constant_config(initial={"profile": "from_file", "path": str(path)}))
        with pytest.raises(ConfigError) as exc_info:
            initial_quasi_fermi(scenario)
        assert "phi_a" in str(exc_info.value)

    def test_initial_state_is_consistent(self, constant_scenario):
        """The initial potential solves Poisson for the initial quasi Fermi levels."""
        state = initial_state(constant_scenario)
        problem = PoissonProblem(constant_scenario, state.phi_n, state.phi_p, state.phi_a)
        assert problem.evaluate(state.psi, with_jacobian=False).norm <= 1e-10
        assert state.time == 0.0
        assert state.mesh == constant_scenario.mesh


class TestEquilibrium:
    """Tests for :func:`solve_equilibrium`."""

    def test_constant_potentials_and_mass(self, constant_scenario):
        """phi_n = phi_p = phi^D, constant phi_a and the requested mass."""
        state = solve_equilibrium(constant_scenario, 1.0)
        np.testing.assert_allclose(state.phi_n, 0.5)
        np.testing.assert_allclose(state.phi_p, 0.5)
        assert np.ptp(state.phi_a) == 0.0
        assert anion_mass_of(state, constant_scenario) == pytest.approx(1.0, rel=1e-10)

    def test_default_mass_is_initial_mass(self, constant_scenario):
        """Without a target the mass of the initial state is kept."""
        mass = anion_mass_of(initial_state(constant_scenario), constant_scenario)
        state = solve_equilibrium(constant_scenario)
        assert anion_mass_of(state, constant_scenario) == pytest.approx(mass, rel=1e-10)

    def test_stationary_residual_vanishes(self, constant_scenario):
        """Equilibrium solves the stationary coupled system."""
        state = solve_equilibrium(constant_scenario, 0.8)
        system = CoupledSystem(constant_scenario, anion_mass=0.8)
        assert system.evaluate(system.layout.pack(state), with_jacobian=False).norm <= 1e-9

    @pytest.mark.parametrize("target", [0.0, 2.5, -1.0])
    def test_mass_out_of_range(self, constant_scenario, target):
        """Targets outside (0, |Omega_intr|) are rejected."""
        with pytest.raises(MassOutOfRange) as exc_info:
            solve_equilibrium(constant_scenario, target)
        assert exc_info.value.upper == pytest.approx(2.0)

    def test_needs_constant_data(self, biased_scenario):
        """Non-constant Dirichlet data have no thermodynamic equilibrium."""
        with pytest.raises(ConfigError):
            solve_equilibrium(biased_scenario, 1.0)

    def test_needs_zero_generation(self, make_constant_config):
        """Photogeneration drives the system out of equilibrium."""
        scenario = build_scenario(make_constant_config(generation={"kind": "constant", "value": 0.1}))
        with pytest.raises(ConfigError):
            solve_equilibrium(scenario, 1.0)


class TestSteadyState:
    """Tests for :func:`solve_steady_state`."""

    def test_matches_equilibrium(self, constant_scenario):
        """With constant data the steady state is the equilibrium."""
        guess = initial_state(constant_scenario)
        mass = anion_mass_of(guess, constant_scenario)
        steady = solve_steady_state(constant_scenario, guess)
        equilibrium = solve_equilibrium(constant_scenario, mass)
        for name in ("psi", "phi_n", "phi_p", "phi_a"):
            np.testing.assert_allclose(steady.field(name), equilibrium.field(name), atol=1e-10)

    def test_biased_steady_state(self, biased_scenario):
        """Constant currents and vanishing vacancy flux."""
        guess = initial_state(biased_scenario)
        steady = solve_steady_state(biased_scenario, guess)
        mass = anion_mass_of(guess, biased_scenario)
        system = CoupledSystem(biased_scenario, anion_mass=mass)
        assert system.evaluate(system.layout.pack(steady), with_jacobian=False).norm <= 1e-9
        fluxes = system.face_fluxes(steady)
        interior = fluxes["n"][:-2]
        assert np.ptp(interior) <= 1e-7 * max(1.0, np.max(np.abs(interior)))
        np.testing.assert_allclose(fluxes["a"], 0.0, atol=1e-8)
        assert anion_mass_of(steady, biased_scenario) == pytest.approx(mass, rel=1e-9)

    def test_continuation_fallback(self, biased_scenario):
        """A failing direct Newton hands over to pseudo-transient continuation."""
        real = solvers._stationary_newton
        calls = {"count": 0}

        def flaky(scenario, guess, mass):
            calls["count"] += 1
            if calls["count"] == 1:
                raise NoConvergence(1, 1.0)
            return real(scenario, guess, mass)

        with patch.object(solvers, "_stationary_newton", side_effect=flaky):
            steady = solve_steady_state(biased_scenario)
        assert calls["count"] >= 2
        direct = solve_steady_state(biased_scenario)
        np.testing.assert_allclose(steady.psi, direct.psi, atol=1e-9)


class TestTransient:
    """Tests for the backward Euler loop."""

    def test_mass_conservation_and_records(self, constant_scenario):
        """Every node is reported and the vacancy mass is conserved."""
        initial = initial_state(constant_scenario)
        mass = anion_mass_of(initial, constant_scenario)
        masses = []

        def hook(state):
            masses.append(anion_mass_of(state, constant_scenario))

        result = run_transient(constant_scenario, None, initial, hooks=hook, keep_times=(0.5,))
        assert len(masses) == 5
        np.testing.assert_allclose(masses, mass, rtol=1e-10)
        assert result.final.time == 1.0
        assert list(result.states) == [0.5]
        assert result.states[0.5].time == 0.5

    def test_step_halving_then_failure(self, constant_scenario):
        """Persistent Newton failures exhaust the halvings."""
        initial = initial_state(constant_scenario)
        with patch("psim.system.transient.newton_solve", side_effect=NoConvergence(3, 1.0)) as solve:
            with pytest.raises(StepFailure) as exc_info:
                advance(constant_scenario, initial, 0.25)
        max_halvings = constant_scenario.solver.max_halvings
        assert solve.call_count == max_halvings + 1
        assert exc_info.value.step == pytest.approx(0.25 / 2**max_halvings)

    def test_halved_steps_land_on_node(self, constant_scenario):
        """Sub-steps after a failure still end exactly on the requested time."""
        from psim.system import transient

        real = transient.newton_solve
        calls = {"count": 0}

        def flaky(*args, **kwargs):
            calls["count"] += 1
            if calls["count"] == 1:
                raise NoConvergence(1, 1.0)
            return real(*args, **kwargs)

        initial = initial_state(constant_scenario)
        with patch.object(transient, "newton_solve", side_effect=flaky):
            state = advance(constant_scenario, initial, 0.25)
        assert state.time == 0.25
        assert calls["count"] == 3
