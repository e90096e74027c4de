"""Command-line front end.

``psim run``, ``psim convergence``, ``psim equilibrium`` and ``psim steady``
each take a scenario file and write their results plus a ``manifest.json``
into the output directory.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .convergence import convergence_columns, convergence_table
from .diagnostics import DiagnosticsRecorder, discrete_dissipation
from .exceptions import ConfigError, MassOutOfRange, NoConvergence, PsimError, StepFailure
from .models.diagnostics import L2_FIELDS, RunManifest
from .output import plot_series, profile_name, write_diagnostics, write_manifest, write_profile, write_table
from .scenario import config_hash
from .simulator import Simulator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2

EQUILIBRIUM_DISSIPATION_TOL = 1e-12
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psim",
        description="Drift-diffusion simulator for three-layer perovskite solar cells",
    )
    parser.add_argument("--version", action="version", version=f"psim {__version__}")
    parser.add_argument("--out-dir", type=Path, default=None, help="Output directory (env PSIM_OUT_DIR)")
    parser.add_argument("--threads", type=int, default=None, help="Parallel workers (env PSIM_THREADS)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Only warnings and errors")
    verbosity.add_argument("--verbose", action="store_true", help="Debug output and tracebacks")

    commands = parser.add_subparsers(dest="command", required=True)
    run = commands.add_parser("run", help="Transient run with diagnostics")
    run.add_argument("config", type=Path)
    run.add_argument("--no-plots", action="store_true", help="Skip the SVG plots")

    conv = commands.add_parser("convergence", help="Spatial convergence study")
    conv.add_argument("config", type=Path)
    conv.add_argument("--min", dest="nstar_min", type=int, default=2, help="Coarsest level n*")
    conv.add_argument("--max", dest="nstar_max", type=int, default=8, help="Finest compared level n*")
    conv.add_argument("--ref", dest="nstar_ref", type=int, default=9, help="Reference level n*")

    eq = commands.add_parser("equilibrium", help="Thermodynamic equilibrium")
    eq.add_argument("config", type=Path)
    eq.add_argument("--anion-mass", type=float, default=None, help="Vacancy mass target")

    steady = commands.add_parser("steady", help="Steady state")
    steady.add_argument("config", type=Path)
    return parser


def configure_logging(quiet: bool = False, verbose: bool = False) -> None:
    """Configure the root logger from the flags, falling back to PSIM_LOG_LEVEL."""
    if verbose:
        level = "DEBUG"
    elif quiet:
        level = "WARNING"
    else:
        level = os.getenv("PSIM_LOG_LEVEL", "INFO").upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"Invalid PSIM_LOG_LEVEL '{level}'. Must be one of: {list(LOG_LEVELS)}")
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, force=True)


def _finish(sim: Simulator, command: str, files: List[Path]) -> None:
    manifest = RunManifest(
        psim_version=__version__,
        command=command,
        scenario=sim.config.name,
        config_hash=config_hash(sim.config),
        files=sorted(p.name for p in files),
    )
    write_manifest(sim.out_dir, manifest)
    logger.info("wrote %d file(s) to %s", len(files), sim.out_dir)


def cmd_run(sim: Simulator, plots: bool = True) -> int:
    """Initial state, optional steady state, transient run and its outputs."""
    result, steady = sim.run()
    scenario = sim.scenario
    out = sim.out_dir
    files = [write_diagnostics(out / "diagnostics.csv", result.records)]
    for time, state in sorted(result.states.items()):
        files.append(write_profile(out / profile_name(time * scenario.time_scale), state, scenario))
    if steady is not None:
        files.append(write_profile(out / "steady.csv", steady, scenario))

    if plots and sim.config.outputs.plots and result.records:
        times = [r.time for r in result.records]
        entropy = {"E_T": [r.entropy_E_T for r in result.records]}
        if steady is not None:
            entropy["E_inf"] = [r.entropy_vs_steady_E_inf for r in result.records]
            errors = {name: [r.l2_errors[name] for r in result.records] for name in L2_FIELDS}
            files.append(plot_series(out / "l2.svg", times, errors, "squared L2 error", sim.config.name))
        files.append(plot_series(out / "entropy.svg", times, entropy, "relative entropy", sim.config.name))
    _finish(sim, "run", files)
    return EXIT_OK


def cmd_convergence(sim: Simulator, nstar_min: int, nstar_max: int, nstar_ref: int) -> int:
    """Refinement study; failed levels are marked in the table."""
    rows, _ = sim.convergence(nstar_min, nstar_max, nstar_ref)
    path = write_table(sim.out_dir / "convergence.csv", convergence_columns(), convergence_table(rows))
    for row in rows:
        logger.info("n*=%d h=%.3e errors=%s eoc=%s", row.nstar, row.h, row.errors, row.eoc)
    _finish(sim, "convergence", [path])
    return EXIT_OK


def cmd_equilibrium(sim: Simulator, anion_mass: Optional[float] = None) -> int:
    """Equilibrium profiles with a dissipation check.

    The profiles are written either way; a dissipation above
    :data:`EQUILIBRIUM_DISSIPATION_TOL` exits with :data:`EXIT_SOLVER`.
    """
    state = sim.equilibrium(anion_mass)
    dissipation = discrete_dissipation(state, sim.scenario)
    path = write_profile(sim.out_dir / "equilibrium.csv", state, sim.scenario)
    _finish(sim, "equilibrium", [path])
    if dissipation > EQUILIBRIUM_DISSIPATION_TOL:
        logger.error("equilibrium dissipation %.3e exceeds %.0e", dissipation, EQUILIBRIUM_DISSIPATION_TOL)
        return EXIT_SOLVER
    logger.info("equilibrium dissipation %.3e", dissipation)
    return EXIT_OK


def cmd_steady(sim: Simulator) -> int:
    """Steady state and its diagnostics row."""
    steady = sim.steady_state()
    record = DiagnosticsRecorder(sim.scenario)(steady)
    files = [
        write_profile(sim.out_dir / "steady.csv", steady, sim.scenario),
        write_diagnostics(sim.out_dir / "steady_diagnostics.csv", [record]),
    ]
    _finish(sim, "steady", files)
    return EXIT_OK


def _dispatch(args: argparse.Namespace) -> int:
    sim = Simulator(args.config, out_dir=args.out_dir, threads=args.threads)
    if args.command == "run":
        return cmd_run(sim, plots=not args.no_plots)
    if args.command == "convergence":
        return cmd_convergence(sim, args.nstar_min, args.nstar_max, args.nstar_ref)
    if args.command == "equilibrium":
        return cmd_equilibrium(sim, args.anion_mass)
    return cmd_steady(sim)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(quiet=args.quiet, verbose=args.verbose)
        return _dispatch(args)
    except (ConfigError, MassOutOfRange, ValueError) as e:
        code = EXIT_CONFIG
        error: Exception = e
    except (NoConvergence, StepFailure, PsimError) as e:
        code = EXIT_SOLVER
        error = e
    if args.verbose:
        logger.exception("psim %s failed", args.command, exc_info=error)
    print(str(error), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
