"""Initial data, decoupled Poisson, equilibrium and steady-state solves."""

import logging
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy import optimize

from ..exceptions import ConfigError, MassOutOfRange, NoConvergence
from ..models.scenario import NewtonOptions
from ..scenario import Scenario
from .assembly import CoupledSystem, PoissonProblem
from .newton import newton_solve
from .state import State, UnknownLayout, anion_mass_of

logger = logging.getLogger(__name__)

_BRACKET_LIMIT = 1024.0
_CONTINUATION_MAX_STEPS = 200
_CONTINUATION_MIN_FACTOR = 1e-12
_CONTINUATION_RESIDUAL = 1e-6
_CONTINUATION_MAX_TAU = 1e12


def initial_quasi_fermi(scenario: Scenario):
    """Initial ``(phi_n, phi_p, phi_a)`` from the configured profile.

    ``sinusoidal`` adds ``A sin(pi (x - x0) / L)`` and ``quadratic`` adds
    ``A (x - x0)(L - (x - x0)) / L^2`` to the linear Dirichlet interpolant,
    ``constant`` uses ``value`` everywhere. Amplitudes and values are volts in
    physical scenarios.

    Raises:
        ConfigError: If a profile file lacks a required column.
    """
    cfg = scenario.config.initial
    mesh = scenario.mesh
    scale = scenario.potential_scale
    x0 = mesh.breakpoints[0]
    length = mesh.length
    s = mesh.centers - x0
    base = scenario.boundary.phi_cells
    amplitude = cfg.resolved_amplitude / scale
    intr = mesh.intrinsic_cells

    if cfg.profile == "sinusoidal":
        phi = base + amplitude * np.sin(np.pi * s / length)
        return phi, phi.copy(), np.full(intr.size, cfg.phi_a / scale)
    if cfg.profile == "quadratic":
        phi = base + amplitude * s * (length - s) / length**2
        return phi, phi.copy(), np.full(intr.size, cfg.phi_a / scale)
    if cfg.profile == "constant":
        phi = np.full(mesh.n_cells, cfg.value / scale)
        return phi, phi.copy(), np.full(intr.size, cfg.phi_a / scale)

    from ..output.writers import read_profile

    columns = read_profile(cfg.path)  # type: ignore[arg-type]
    missing = [c for c in ("x", "phi_n", "phi_p", "phi_a") if c not in columns]
    if missing:
        raise ConfigError(f"initial profile {cfg.path} lacks columns {missing}")
    x = columns["x"]
    phi_n = np.interp(mesh.centers, x, columns["phi_n"])
    phi_p = np.interp(mesh.centers, x, columns["phi_p"])
    known = np.isfinite(columns["phi_a"])
    phi_a = np.interp(mesh.centers[intr], x[known], columns["phi_a"][known])
    return phi_n, phi_p, phi_a


def solve_poisson_given_qfp(
    scenario: Scenario,
    phi_n: NDArray[np.float64],
    phi_p: NDArray[np.float64],
    phi_a: NDArray[np.float64],
    guess: Optional[NDArray[np.float64]] = None,
    options: Optional[NewtonOptions] = None,
) -> NDArray[np.float64]:
    """Minimise the convex Poisson functional for frozen quasi Fermi potentials.

    Args:
        scenario: The runtime scenario.
        phi_n, phi_p: Cell quasi Fermi potentials of electrons and holes.
        phi_a: Vacancy quasi Fermi potential on the intrinsic cells.
        guess: Starting potential, ``psi^D`` by default.
        options: Newton options, the scenario's by default.

    Returns:
        The electric potential on every cell.

    Raises:
        NoConvergence: If damped Newton fails.
    """
    for name, values in (("phi_n", phi_n), ("phi_p", phi_p), ("phi_a", phi_a)):
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{name} must be finite")
    problem = PoissonProblem(scenario, phi_n, phi_p, phi_a)
    start = scenario.boundary.psi_cells if guess is None else guess
    result = newton_solve(start, problem, options or scenario.solver, label="poisson")
    logger.debug("poisson: converged in %d iterations (|F|=%.3e)", result.iterations, result.residual_norm)
    return result.x


def initial_state(scenario: Scenario) -> State:
    """Initial quasi Fermi potentials with the self-consistent potential."""
    phi_n, phi_p, phi_a = initial_quasi_fermi(scenario)
    psi = solve_poisson_given_qfp(scenario, phi_n, phi_p, phi_a)
    return State(
        psi=psi,
        phi_n=phi_n,
        phi_p=phi_p,
        phi_a=phi_a,
        time=scenario.time.t_start,
        mesh=scenario.mesh,
    )


def _check_equilibrium_data(scenario: Scenario) -> None:
    if not scenario.boundary.is_constant:
        raise ConfigError("equilibrium needs constant Dirichlet data")
    if np.any(scenario.params.gamma * scenario.fields.generation_G != 0.0):
        raise ConfigError("equilibrium needs zero photogeneration")


def solve_equilibrium(scenario: Scenario, anion_mass_target: Optional[float] = None) -> State:
    """Thermodynamic equilibrium with a prescribed vacancy mass.

    ``phi_n = phi_p = phi^D`` everywhere; the constant ``phi_a`` is found by a
    bracketed scalar root-find on the vacancy mass, each evaluation solving the
    nonlinear Poisson equation warm-started from the previous one.

    Args:
        scenario: Scenario with constant Dirichlet data and no generation.
        anion_mass_target: Vacancy mass; defaults to ``initial.anion_mass``,
            then to the mass of :func:`initial_state`.

    Raises:
        ConfigError: If the Dirichlet data are not constant or ``G != 0``.
        MassOutOfRange: If the target is not in ``(0, anion_capacity)``.
        NoConvergence: If the Poisson solve or the root-find fails.
    """
    _check_equilibrium_data(scenario)
    if anion_mass_target is None:
        anion_mass_target = scenario.config.initial.anion_mass
    if anion_mass_target is None:
        anion_mass_target = anion_mass_of(initial_state(scenario), scenario)
    upper = scenario.anion_capacity
    if not 0.0 < anion_mass_target < upper:
        raise MassOutOfRange(anion_mass_target, upper)

    mesh = scenario.mesh
    intr = mesh.intrinsic_cells
    phi = np.full(mesh.n_cells, scenario.boundary.phi_left)
    warm = {"psi": scenario.boundary.psi_cells.copy()}

    def potential(c: float) -> NDArray[np.float64]:
        psi = solve_poisson_given_qfp(scenario, phi, phi, np.full(intr.size, c), guess=warm["psi"])
        warm["psi"] = psi
        return psi

    def excess(c: float) -> float:
        psi = potential(c)
        state = State(psi=psi, phi_n=phi, phi_p=phi, phi_a=np.full(intr.size, c), mesh=mesh)
        return anion_mass_of(state, scenario) - anion_mass_target

    fraction = float(scenario.stat_a.inverse(anion_mass_target / upper))
    centre = float(np.mean(scenario.boundary.psi_cells) - np.mean(scenario.materials.E_a) + fraction / scenario.z_a)
    width = 1.0
    low, high = centre - width, centre + width
    f_low, f_high = excess(low), excess(high)
    while f_low * f_high > 0:
        width *= 2.0
        if width > _BRACKET_LIMIT:
            raise NoConvergence(0, min(abs(f_low), abs(f_high)), "equilibrium: no bracket for the vacancy potential")
        if f_low > 0:
            low = centre - width
            f_low = excess(low)
        else:
            high = centre + width
            f_high = excess(high)
    try:
        c_eq = optimize.brentq(excess, low, high, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    except (RuntimeError, ValueError) as e:
        raise NoConvergence(0, float("nan"), f"equilibrium: root-find failed: {e}")
    psi = potential(c_eq)
    logger.info("equilibrium: phi_a = %.12g, mass target %.12g", c_eq, anion_mass_target)
    return State(
        psi=psi,
        phi_n=phi.copy(),
        phi_p=phi.copy(),
        phi_a=np.full(intr.size, c_eq),
        time=scenario.time.t_start,
        mesh=mesh,
    )


def _stationary_newton(scenario: Scenario, guess: State, mass: float) -> State:
    system = CoupledSystem(scenario, anion_mass=mass, time=guess.time)
    result = newton_solve(system.layout.pack(guess), system, scenario.solver, label="steady")
    logger.info("steady: converged in %d iterations (%s)", result.iterations, result.converged_by)
    return system.unpack(result.x)


def _pseudo_transient(scenario: Scenario, guess: State, mass: float) -> State:
    """Backward Euler steps with a growing step until the stationary residual is small."""
    time = scenario.time
    tau0 = time.step if time.step is not None else time.steps[0]  # type: ignore[index]
    tau = tau0
    state = guess
    stationary = CoupledSystem(scenario, anion_mass=mass)
    layout = UnknownLayout(scenario.mesh)
    for _ in range(_CONTINUATION_MAX_STEPS):
        system = CoupledSystem(scenario, old=state, tau=tau, time=state.time)
        try:
            result = newton_solve(layout.pack(state), system, scenario.solver, label="continuation")
        except NoConvergence:
            tau /= 2.0
            logger.warning("continuation: step failed, tau reduced to %.3e", tau)
            if tau < _CONTINUATION_MIN_FACTOR * tau0:
                break
            continue
        state = system.unpack(result.x)
        norm = stationary.evaluate(layout.pack(state), with_jacobian=False).norm
        logger.debug("continuation: tau=%.3e, stationary |F|=%.3e", tau, norm)
        if norm <= _CONTINUATION_RESIDUAL or tau >= _CONTINUATION_MAX_TAU:
            try:
                return _stationary_newton(scenario, state, mass)
            except NoConvergence:
                logger.debug("continuation: final Newton not yet converging")
        tau *= 10.0
    raise NoConvergence(_CONTINUATION_MAX_STEPS, float("nan"), "steady: pseudo-transient continuation failed")


def solve_steady_state(
    scenario: Scenario,
    initial_guess: Optional[State] = None,
    anion_mass: Optional[float] = None,
) -> State:
    """Solve the stationary coupled system.

    Stationary Newton is tried first; if it fails, pseudo-transient
    continuation (step times 10 on success, halved on failure, starting from
    the scenario step) brings the state close enough for a final stationary
    Newton.

    Args:
        scenario: The runtime scenario.
        initial_guess: Starting state, :func:`initial_state` by default.
        anion_mass: Conserved vacancy mass, that of the guess by default.

    Raises:
        NoConvergence: If both paths fail.
    """
    guess = initial_state(scenario) if initial_guess is None else initial_guess
    mass = anion_mass_of(guess, scenario) if anion_mass is None else anion_mass
    try:
        return _stationary_newton(scenario, guess, mass)
    except NoConvergence as e:
        logger.info("steady: direct Newton failed (%s), switching to continuation", e.message)
    return _pseudo_transient(scenario, guess, mass)
