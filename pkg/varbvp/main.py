"""
Main entrypoint for the variational boundary value solver.
Parses a problem from a YAML file and command-line flags, runs one
subcommand and writes CSV output.

Exit codes: 0 success, 2 convergence failure, 3 invalid configuration,
4 non-regular Lagrangian.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from varbvp.action import (
    action,
    convergence_study,
    directional_gradient_check,
    el_residual,
    energy_drift,
    generating_function,
)
from varbvp.config import (
    SHOOTING_STEPS,
    SHOOTING_TOLERANCE,
    SolverConfig,
    load_problem_file,
    setup_logging,
)
from varbvp.errors import (
    DomainError,
    GridMismatch,
    InvalidConfig,
    NewtonDiverged,
    NonRegularLagrangian,
    VarBvpError,
)
from varbvp.flow import integrate_ivp
from varbvp.grid import Curve, make_grid
from varbvp.lagrangians import BUILTIN_CATALOG, LagrangianModel, energy, make_builtin
from varbvp.shooting import shoot_bvp
from varbvp.solver import RegularizedProblem, solve_bvp
from varbvp.utils import as_vector, csv_text, format_summary_log, write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_INVALID = 3
EXIT_NON_REGULAR = 4


def exit_code_for(error: VarBvpError) -> int:
    """Map a library error onto the CLI exit code."""
    if isinstance(error, NewtonDiverged):
        return EXIT_DIVERGED
    if isinstance(error, NonRegularLagrangian):
        return EXIT_NON_REGULAR
    if isinstance(error, (InvalidConfig, DomainError, GridMismatch)):
        return EXIT_INVALID
    return EXIT_DIVERGED


# ============================================================================
# PROBLEM RESOLUTION (command line > problem file > defaults)
# ============================================================================

@dataclass(frozen=True, eq=False)
class RunSettings:
    model: LagrangianModel
    config: SolverConfig
    q1: Optional[np.ndarray]
    q2: Optional[np.ndarray]
    h: Optional[float]
    v0: Optional[np.ndarray]
    steps: Optional[int]

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise InvalidConfig(f"missing required settings: {', '.join(missing)}")


def _parse_parameter(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise InvalidConfig(f"--param expects KEY=VALUE, got '{text}'")
    return key.strip(), value.strip()


def _pick(cli_value, file_value):
    return cli_value if cli_value is not None else file_value


def resolve_settings(args: argparse.Namespace) -> RunSettings:
    """Merge the problem file (if any) with command-line flags and build the model."""
    problem = load_problem_file(args.problem) if args.problem else {}

    name = _pick(args.model, problem.get("model"))
    if name is None:
        raise InvalidConfig("no model given (use --model or a problem file)")
    parameters: Dict[str, object] = dict(problem.get("parameters") or {})
    for text in args.param or []:
        key, value = _parse_parameter(text)
        parameters[key] = value
    if args.omega is not None:
        parameters["omega"] = args.omega
    model = make_builtin(name, parameters, _pick(args.dim, problem.get("dim")))

    config = SolverConfig.from_mapping(problem.get("solver")).with_overrides(
        N=args.n, tol=args.tol, max_iter=args.max_iter
    )

    def vector(key):
        value = _pick(getattr(args, key, None), problem.get(key))
        return None if value is None else as_vector(value, model.dim, key)

    h = _pick(args.h, problem.get("h"))
    steps = _pick(getattr(args, "steps", None), problem.get("steps"))
    try:
        h = None if h is None else float(h)
        steps = None if steps is None else int(steps)
    except (TypeError, ValueError) as e:
        raise InvalidConfig(f"bad scalar setting: {e}") from e

    return RunSettings(
        model=model,
        config=config,
        q1=vector("q1"),
        q2=vector("q2"),
        h=h,
        v0=vector("v0"),
        steps=steps,
    )


def _emit(header: List[str], rows: np.ndarray, out: Optional[str]) -> None:
    if out:
        write_csv(out, header, rows)
    else:
        sys.stdout.write(csv_text(header, rows))


def _labels(prefix: str, n: int) -> List[str]:
    return [f"{prefix}_{i}" for i in range(n)]


def closed_form(model: LagrangianModel, q1, q2, h: float) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Exact boundary solution for the free particle and the oscillator, else None."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if model.name in ("free", "euclidean_metric"):
        return lambda t: q1 + np.outer(t / h, q2 - q1)
    if model.name == "harmonic":
        w = model.parameters["omega"]
        if abs(np.sin(w * h)) < 1e-12:
            return None
        return lambda t: (
            np.outer(np.sin(w * (h - t)), q1) + np.outer(np.sin(w * t), q2)
        ) / np.sin(w * h)
    return None


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_solve(args, settings: RunSettings) -> Dict[str, object]:
    settings.require("q1", "q2", "h")
    model = settings.model
    solution, traj = solve_bvp(model, settings.q1, settings.q2, settings.h, settings.config)
    E = energy(model, traj.positions, traj.velocities)
    rows = np.column_stack([traj.times, traj.positions, traj.velocities, E])
    header = ["t"] + _labels("q", model.dim) + _labels("v", model.dim) + ["E"]
    _emit(header, rows, args.out)
    return {
        "action": action(model, solution),
        "residual": solution.residual_norm,
        "newton_iterations": solution.iterations,
        "condition_estimate": solution.condition_estimate,
        "el_residual": el_residual(model, traj),
        "energy_drift": energy_drift(model, traj),
    }


def _genfun_pairs(args, settings: RunSettings):
    def axis(grid_spec, fixed, label):
        if grid_spec is None:
            if fixed is None:
                raise InvalidConfig(f"missing required settings: {label}")
            return [fixed]
        start, stop, count = grid_spec
        if int(count) != count or count < 1:
            raise InvalidConfig(f"grid count must be a positive integer, got {count}")
        return [as_vector(value, settings.model.dim, label) for value in np.linspace(start, stop, int(count))]

    first = axis(args.q1_grid, settings.q1, "q1")
    second = axis(args.q2_grid, settings.q2, "q2")
    return [(a, b) for a in first for b in second]


def cmd_genfun(args, settings: RunSettings) -> Dict[str, object]:
    settings.require("h")
    model, h, config = settings.model, settings.h, settings.config
    pairs = _genfun_pairs(args, settings)

    def evaluate_pair(pair):
        return generating_function(model, pair[0], pair[1], h, config)

    if args.jobs > 1 and len(pairs) > 1:
        # map() yields in submission order
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            triples = list(pool.map(evaluate_pair, pairs))
    else:
        triples = [evaluate_pair(pair) for pair in pairs]

    rows = np.array(
        [np.concatenate([a, b, [t.S], t.D1S, t.D2S]) for (a, b), t in zip(pairs, triples)]
    )
    n = model.dim
    header = _labels("q1", n) + _labels("q2", n) + ["S"] + _labels("D1S", n) + _labels("D2S", n)
    _emit(header, rows, args.out)
    return {"pairs": len(pairs), "max_residual": max(t.solution.residual_norm for t in triples)}


def cmd_integrate(args, settings: RunSettings) -> Dict[str, object]:
    settings.require("q1", "v0", "h", "steps")
    model = settings.model
    flow = integrate_ivp(model, settings.q1, settings.v0, settings.h, settings.steps, settings.config)
    E = flow.energies(model)
    rows = np.column_stack([np.arange(len(flow.points)), flow.times, flow.positions, flow.momenta, E])
    header = ["step", "t"] + _labels("q", model.dim) + _labels("p", model.dim) + ["E"]
    _emit(header, rows, args.out)
    if flow.error is not None:
        raise flow.error
    return {
        "steps": flow.completed_steps,
        "energy_drift": float(np.max(np.abs(E - E[0]))),
        "max_outer_iterations": max((r.outer_iterations for r in flow.records), default=0),
        "max_inner_residual": max((r.inner_residual for r in flow.records), default=0.0),
        "max_condition_estimate": max((r.condition_estimate for r in flow.records), default=0.0),
    }


def cmd_shoot(args, settings: RunSettings) -> Dict[str, object]:
    settings.require("q1", "q2", "h")
    steps = args.rk4_steps or SHOOTING_STEPS
    v0 = shoot_bvp(settings.model, settings.q1, settings.q2, settings.h, tol=args.shoot_tol, steps=steps)
    _emit(_labels("v0", settings.model.dim), v0[None, :], args.out)
    return {"rk4_steps": steps}


def cmd_check_gradient(args, settings: RunSettings) -> Dict[str, object]:
    """Compare finite-difference and assembled directional derivatives at random curves."""
    settings.require("q1", "q2", "h")
    model, h = settings.model, settings.h
    grid = make_grid(settings.config.N)
    problem = RegularizedProblem(settings.q1, (settings.q2 - settings.q1) / h, h)
    rng = np.random.default_rng(args.seed)

    rows = []
    for sample in range(args.samples):
        bump = np.sin(np.pi * np.outer(grid.nodes, rng.uniform(1.0, 3.0, model.dim)))
        V = Curve(grid, problem.z + args.amplitude * bump * rng.uniform(-1.0, 1.0, model.dim))
        dV = Curve(grid, rng.standard_normal((grid.size, model.dim)))
        fd, assembled, rel_err = directional_gradient_check(model, problem, V, dV)
        rows.append([sample, fd, assembled, rel_err])

    rows = np.array(rows)
    _emit(["sample", "finite_difference", "assembled", "relative_error"], rows, args.out)
    return {"samples": args.samples, "max_relative_error": float(np.max(rows[:, 3]))}


def cmd_convergence(args, settings: RunSettings) -> Dict[str, object]:
    settings.require("q1", "q2", "h")
    model = settings.model
    exact = closed_form(model, settings.q1, settings.q2, settings.h)
    table = convergence_study(
        model, settings.q1, settings.q2, settings.h, args.ns, settings.config, exact=exact
    )
    rows = np.array([[r.N, r.error, np.nan if r.ratio is None else r.ratio] for r in table])
    _emit(["N", "error", "ratio"], rows, args.out)
    return {"reference": "closed form" if exact is not None else "shooting", "finest_error": table[-1].error}


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="YAML problem file")
    common.add_argument("--model", help=f"built-in model ({', '.join(sorted(BUILTIN_CATALOG))})")
    common.add_argument("--dim", type=int, help="configuration dimension n")
    common.add_argument("--omega", type=float, help="shortcut for --param omega=VALUE")
    common.add_argument("--param", action="append", metavar="KEY=VALUE", help="model parameter")
    common.add_argument("--q1", type=float, nargs="+", help="start position")
    common.add_argument("--q2", type=float, nargs="+", help="end position")
    common.add_argument("--h", type=float, help="time span of each boundary problem")
    common.add_argument("--n", type=int, help="grid subintervals N")
    common.add_argument("--tol", type=float, help="Newton residual tolerance")
    common.add_argument("--max-iter", type=int, help="Newton iterations per solve")
    common.add_argument("--out", help="CSV output path (default: standard output)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="varbvp", description="Variational two-point boundary value solver"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("solve", parents=[common], help="solve a BVP, write the trajectory")
    p.set_defaults(func=cmd_solve)

    p = subparsers.add_parser("genfun", parents=[common], help="generating function S and its partials")
    p.add_argument("--q1-grid", type=float, nargs=3, metavar=("START", "STOP", "COUNT"))
    p.add_argument("--q2-grid", type=float, nargs=3, metavar=("START", "STOP", "COUNT"))
    p.add_argument("--jobs", type=int, default=1, help="parallel solves for grids (default: %(default)s)")
    p.set_defaults(func=cmd_genfun)

    p = subparsers.add_parser("integrate", parents=[common], help="initial value flow by BVP steps")
    p.add_argument("--v0", type=float, nargs="+", help="initial velocity (q1 is the start)")
    p.add_argument("--steps", type=int, help="number of steps")
    p.set_defaults(func=cmd_integrate)

    p = subparsers.add_parser("shoot", parents=[common], help="RK4 single-shooting oracle")
    p.add_argument("--rk4-steps", type=int, help=f"RK4 steps (default: {SHOOTING_STEPS})")
    p.add_argument("--shoot-tol", type=float, default=SHOOTING_TOLERANCE)
    p.set_defaults(func=cmd_shoot)

    p = subparsers.add_parser("check-gradient", parents=[common], help="finite-difference gradient report")
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=0.3, help="size of the random curves about z")
    p.set_defaults(func=cmd_check_gradient)

    p = subparsers.add_parser("convergence", parents=[common], help="error-vs-N table")
    p.add_argument("--ns", type=int, nargs="+", default=[32, 64, 128, 256])
    p.set_defaults(func=cmd_convergence)

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID

    logger.info("=" * 60)
    logger.info(f"Variational BVP solver - {args.command}")
    logger.info("=" * 60)

    try:
        settings = resolve_settings(args)
        if getattr(args, "jobs", 1) < 1:
            raise InvalidConfig(f"--jobs must be at least 1, got {args.jobs}")
        if getattr(args, "samples", 1) < 1:
            raise InvalidConfig(f"--samples must be at least 1, got {args.samples}")
        logger.info(f"Model {settings.model.name} (n={settings.model.dim}), N={settings.config.N}")
        summary = args.func(args, settings)
    except VarBvpError as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        return code

    logger.info(format_summary_log(f"{args.command} summary", summary))
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
