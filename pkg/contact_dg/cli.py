"""
cli.py - Command line front end: one solve, or an adaptive study.

Numerical modules are imported inside the commands so that --threads can
set OMP_NUM_THREADS before numpy loads its BLAS.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import Optional

logger = logging.getLogger(__name__)

OUTPUT_ENV = "CONTACT_DG_OUT"
DEFAULT_OUTPUT = "results"


@dataclass(frozen=True)
class RunConfig:
    command: str
    problem: str = "mp1"
    config: Optional[str] = None
    method: str = "sipg"
    penalty: float = 40.0
    theta_mark: float = 0.5
    max_dofs: int = 200_000
    levels: int = 12
    uniform: bool = False
    out: str = DEFAULT_OUTPUT
    export_vtk: bool = False
    export_matrix: bool = False
    threads: Optional[int] = None
    levels_uniform: int = 0
    verbose: bool = False

    def __post_init__(self):
        if self.levels_uniform < 0:
            raise ValueError(f"--levels-uniform must be >= 0, got {self.levels_uniform}")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"--threads must be >= 1, got {self.threads}")

    @classmethod
    def from_args(cls, args):
        out = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
        return cls(
            command=args.command,
            problem=args.problem,
            config=args.config,
            method=args.method,
            penalty=args.penalty,
            theta_mark=args.theta_mark,
            max_dofs=args.max_dofs,
            levels=args.levels,
            uniform=args.uniform,
            out=out,
            export_vtk=args.export_vtk,
            export_matrix=getattr(args, "export_matrix", False),
            threads=args.threads,
            levels_uniform=args.levels_uniform,
            verbose=args.verbose,
        )


def _count(minimum):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {value}")
        return value

    return parse


def build_parser():
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Adaptive quadratic DG solver for Signorini contact in linear elasticity",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", default="mp1", help="Built-in problem: mp1, mp2 or patch")
    common.add_argument("--config", default=None, help="JSON file with a custom problem (overrides --problem)")
    common.add_argument("--method", default="sipg", choices=["sipg", "nipg", "iipg"], help="Interior penalty variant")
    common.add_argument("--penalty", type=float, default=40.0, help="Penalty parameter eta")
    common.add_argument("--out", default=None, help=f"Output directory (default: ${OUTPUT_ENV} or '{DEFAULT_OUTPUT}')")
    common.add_argument("--export-vtk", action="store_true", help="Write VTK files of the meshes and solutions")
    common.add_argument("--threads", type=_count(1), default=None, help="Threads for the linear algebra backend")
    common.add_argument("--levels-uniform", type=_count(0), default=0,
                        help="Uniform refinements of the initial mesh before solving")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", parents=[common], help="Solve once and write the solution and estimator tables")
    solve.add_argument("--export-matrix", action="store_true", help="Also write the DG matrix in Matrix Market format")
    solve.set_defaults(theta_mark=0.5, max_dofs=200_000, levels=1, uniform=False)

    study = sub.add_parser("study", parents=[common], help="Run the adaptive loop and write convergence.csv")
    study.add_argument("--theta-mark", type=float, default=0.5, help="Maximum-criterion marking fraction in (0, 1]")
    study.add_argument("--max-dofs", type=_count(1), default=200_000, help="Stop before a level exceeds this many dofs")
    study.add_argument("--levels", type=_count(1), default=12, help="Maximum number of levels")
    study.add_argument("--uniform", action="store_true", help="Refine every triangle instead of marking")
    return parser


def apply_threads(argv):
    """Set OMP_NUM_THREADS from --threads before numpy is imported."""
    argv = list(argv)
    for i, arg in enumerate(argv):
        value = None
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
        if value is not None:
            os.environ["OMP_NUM_THREADS"] = value
            return value
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    return None


def _load_problem(cfg):
    from contact_dg.problems import get_problem, load_problem_config

    if cfg.config:
        return load_problem_config(cfg.config)
    return get_problem(cfg.problem)


def cmd_solve(cfg):
    import csv

    from contact_dg.afem import solve_level
    from contact_dg.assembly import DGMethod
    from contact_dg.contact import PdasConfig, complementarity_report, print_contact_summary
    from contact_dg.estimator import write_estimator_tables
    from contact_dg.export import export_matrix, write_solution_vtk
    from contact_dg.mesh import uniform_refine

    problem = _load_problem(cfg)
    method = DGMethod(cfg.method, cfg.penalty)
    mesh = uniform_refine(problem.initial_mesh(), cfg.levels_uniform)
    print(f"[Solve] {problem.name}: {mesh.n_triangles} triangles, {12 * mesh.n_triangles} dofs, {method.name}")

    result = solve_level(mesh, problem, method, PdasConfig())
    os.makedirs(cfg.out, exist_ok=True)

    write_solution_vtk(os.path.join(cfg.out, "solution.vtk"), mesh, result.solution.coefficients,
                       cell_data={"indicator": result.report.indicators})
    with open(os.path.join(cfg.out, "sigma.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge", "mid_x", "mid_y", "sigma_n", "sigma_t", "active"])
        mids = mesh.edge_midpoints[result.sigma.edge_ids]
        for i, e in enumerate(result.sigma.edge_ids):
            writer.writerow([int(e), f"{mids[i, 0]:.17e}", f"{mids[i, 1]:.17e}",
                             f"{result.sigma.sigma_n[i]:.17e}", f"{result.sigma.sigma_t[i]:.17e}",
                             int(result.solution.active[i])])
    write_estimator_tables(result.report, mesh, os.path.join(cfg.out, "estimator_elements.csv"),
                           os.path.join(cfg.out, "estimator_edges.csv"))
    if cfg.export_matrix:
        export_matrix(os.path.join(cfg.out, "matrix.mtx"), result.system.matrix,
                      comment=f"{problem.name} {method.name} penalty={method.penalty}")

    print_contact_summary(result.solution, result.sigma, result.constraints,
                          complementarity_report(result.solution, result.constraints))
    record = result.record
    print("\n--- ESTIMATOR ---")
    for i, value in enumerate(record.eta, start=1):
        print(f"  eta{i}:               {value:>14.6e}")
    print(f"  Total:              {record.total:>14.6e}")
    if record.error is not None:
        print(f"  L-inf error:        {record.error:>14.6e}")
    print(f"\n[Solve] Results written to {cfg.out}")
    return 0


def cmd_study(cfg):
    from contact_dg.afem import AfemAbort, AfemConfig, print_level_table, run_afem, write_history_csv
    from contact_dg.assembly import DGMethod
    from contact_dg.export import write_mesh_vtk
    from contact_dg.mesh import uniform_refine

    problem = _load_problem(cfg)
    afem_cfg = AfemConfig(
        method=DGMethod(cfg.method, cfg.penalty),
        theta_mark=cfg.theta_mark,
        max_dofs=cfg.max_dofs,
        max_levels=cfg.levels,
        uniform=cfg.uniform,
        export_dir=os.path.join(cfg.out, "levels") if cfg.export_vtk else None,
    )
    mesh = uniform_refine(problem.initial_mesh(), cfg.levels_uniform)
    csv_path = os.path.join(cfg.out, "convergence.csv")
    mode = "uniform" if cfg.uniform else f"adaptive, theta={cfg.theta_mark}"
    print(f"[Study] {problem.name} with {afem_cfg.method.name} ({mode}), up to {cfg.levels} levels")
    completed = []

    def report(result):
        r = result.record
        completed.append(r)
        print(f"[Study] Level {r.level}: {r.ndof} dofs, total {r.total:.4e}, {r.pdas_iters} PDAS iterations")
        if cfg.export_vtk:
            write_mesh_vtk(os.path.join(cfg.out, "levels", f"mesh_{r.level:02d}.vtk"), result.mesh,
                           cell_data={"indicator": result.report.indicators})

    # the levels that finished are written whatever stops the run
    try:
        run_afem(problem, afem_cfg, mesh=mesh, on_level=report)
    except AfemAbort as e:
        print(f"ERROR: {e}")
        print(f"[Study] Partial history ({len(completed)} levels) written to {csv_path}")
        return 1
    finally:
        write_history_csv(csv_path, completed)

    print_level_table(completed, title=f"{problem.name.upper()} {afem_cfg.method.name.upper()}")
    print(f"\n[Study] Convergence history written to {csv_path}")
    return 0


COMMANDS = {"solve": cmd_solve, "study": cmd_study}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        from contact_dg.problems import PROBLEMS

        if args.problem not in PROBLEMS:
            parser.error(f"unknown problem '{args.problem}' (known: {', '.join(sorted(PROBLEMS))})")
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(name)s] %(message)s",
    )
    try:
        cfg = RunConfig.from_args(args)
        logger.debug("run config: %s", cfg)
        return COMMANDS[cfg.command](cfg)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"ERROR: {e}")
        return 1
