"""
afem.py - Adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE.

Each level assembles the DG system, solves the contact problem by PDAS
(warm started from the previous level's active set), evaluates the
estimator and marks by the maximum criterion before bisecting.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from contact_dg.assembly import DGMethod, assemble_system, check_coercivity, constraint_system
from contact_dg.contact import (
    ContactSolveError,
    PdasConfig,
    pdas_solve,
    sigma_from_definition,
    transfer_active_set,
)
from contact_dg.estimator import enrich, estimate, oscillations, smoothing_gap
from contact_dg.export import write_solution_vtk
from contact_dg.mesh import BISECTION_MODES, RefinementError, refine_nvb
from contact_dg.space import TRIANGLE_SAMPLES, DofMap, field_values, physical_points

logger = logging.getLogger(__name__)

DEFAULT_THETA_MARK = 0.5
DEFAULT_MAX_DOFS = 200_000
DEFAULT_MAX_LEVELS = 12
DEFAULT_BISECTIONS = 3

HISTORY_COLUMNS = (
    "level", "ndof", "h_min",
    "eta1", "eta2", "eta3", "eta4", "eta5", "eta6", "eta7",
    "total", "error", "eff_index", "pdas_iters",
)


class AfemAbort(RuntimeError):
    """A level failed; `history` holds the records of the completed levels."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class AfemConfig:
    method: DGMethod = field(default_factory=DGMethod)
    theta_mark: float = DEFAULT_THETA_MARK
    max_dofs: int = DEFAULT_MAX_DOFS
    max_levels: int = DEFAULT_MAX_LEVELS
    uniform: bool = False
    bisections: int = DEFAULT_BISECTIONS
    pdas: PdasConfig = field(default_factory=PdasConfig)
    warm_start: bool = True
    export_dir: Optional[str] = None

    def __post_init__(self):
        if not 0 < self.theta_mark <= 1:
            raise ValueError(f"theta_mark must lie in (0, 1], got {self.theta_mark}")
        if self.max_levels < 1:
            raise ValueError(f"max_levels must be >= 1, got {self.max_levels}")
        if self.max_dofs < 1:
            raise ValueError(f"max_dofs must be >= 1, got {self.max_dofs}")
        if self.bisections not in BISECTION_MODES:
            raise ValueError(f"bisections must be one of {BISECTION_MODES}, got {self.bisections}")


@dataclass(frozen=True)
class ConvergenceRecord:
    level: int
    ndof: int
    n_triangles: int
    h_min: float
    eta: tuple
    total: float
    pdas_iters: int
    n_active: int
    error: Optional[float] = None
    eff_index: Optional[float] = None
    osc_f: float = 0.0
    osc_pi: float = 0.0
    smoothing_ratio: float = 0.0


@dataclass(frozen=True, eq=False)
class LevelResult:
    """Everything computed on one mesh, for callers that need more than the record."""

    mesh: object
    dofmap: DofMap
    system: object
    constraints: object
    solution: object
    sigma: object
    report: object
    record: ConvergenceRecord


def mark_max(indicators, theta):
    """Indices T with eta(T) >= theta * max eta; all of them when every eta is zero."""
    indicators = np.asarray(indicators, dtype=float)
    if indicators.size == 0:
        raise ValueError("cannot mark from an empty indicator list")
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    top = indicators.max()
    if top <= 0:
        return np.arange(indicators.size)
    return np.flatnonzero(indicators >= theta * top)


def linf_error(mesh, coefficients, exact):
    """max |u - u_h| over the triangle sampling grid and both components."""
    x = physical_points(mesh, TRIANGLE_SAMPLES)
    u = np.asarray(exact(x[..., 0], x[..., 1]), dtype=float)
    return float(np.abs(u - field_values(mesh, coefficients, TRIANGLE_SAMPLES)).max())


def solve_level(mesh, problem, method, pdas, level=0, previous=None):
    """SOLVE and ESTIMATE on one mesh.

    previous is the LevelResult of the parent mesh; its final active set
    seeds PDAS.
    """
    dofmap = DofMap.for_mesh(mesh)
    system = assemble_system(mesh, dofmap, method, problem)
    constraints = constraint_system(mesh, dofmap, problem)
    warm = None
    if previous is not None:
        warm = transfer_active_set(previous.mesh, previous.constraints, previous.solution.active,
                                   mesh, constraints)
    solution = pdas_solve(system, constraints, pdas, warm)
    sigma = sigma_from_definition(mesh, dofmap, system, solution.coefficients, constraints)

    enriched = enrich(mesh, dofmap, solution.coefficients, problem)
    report = estimate(mesh, dofmap, solution.coefficients, sigma, problem, enriched)
    osc = oscillations(mesh, problem)
    _, _, ratio = smoothing_gap(mesh, solution.coefficients, enriched)

    error = eff = None
    if problem.has_exact:
        error = linf_error(mesh, solution.coefficients, problem.exact)
        eff = report.total / error if error > 0 else None

    record = ConvergenceRecord(
        level=level,
        ndof=dofmap.n_dofs,
        n_triangles=mesh.n_triangles,
        h_min=report.h_min,
        eta=tuple(float(v) for v in report.eta),
        total=report.total,
        pdas_iters=solution.iterations,
        n_active=solution.n_active,
        error=error,
        eff_index=eff,
        osc_f=osc.max_f,
        osc_pi=osc.max_pi,
        smoothing_ratio=ratio,
    )
    return LevelResult(mesh, dofmap, system, constraints, solution, sigma, report, record)


def run_afem(problem, cfg=None, mesh=None, on_level=None):
    """Adaptive (or uniform) refinement until max_levels or max_dofs.

    Marked triangles are refined with cfg.bisections cuts (3 by default, so
    a marked triangle is split into four children of half its diameter).

    Args:
        problem: ProblemSpec to solve.
        cfg: AfemConfig; the defaults when None.
        mesh: Starting mesh, `problem.initial_mesh()` when None.
        on_level: Optional callback receiving the LevelResult of each
            completed level, before refinement.

    Returns:
        List of ConvergenceRecord, one per solved level.

    Raises:
        AfemAbort: a level failed to solve or refine. The records gathered
            so far travel on the exception.
    """
    cfg = cfg or AfemConfig()
    mesh = mesh if mesh is not None else problem.initial_mesh()
    if cfg.method.symmetric:
        check_coercivity(cfg.method, problem.mu, problem.kappa)

    history = []
    previous = None
    for level in range(cfg.max_levels):
        ndof = DofMap.for_mesh(mesh).n_dofs
        if level > 0 and ndof > cfg.max_dofs:
            logger.info("stopping before level %d: %d dofs exceed the limit of %d", level, ndof, cfg.max_dofs)
            break

        try:
            result = solve_level(mesh, problem, cfg.method, cfg.pdas, level,
                                 previous if cfg.warm_start else None)
        except (ContactSolveError, ValueError) as e:
            raise AfemAbort(f"level {level} failed: {e}", history) from e

        record = result.record
        history.append(record)
        err = f"{record.error:.3e}" if record.error is not None else "-"
        logger.info("level %2d: %7d dofs  h_min %.3e  total %.4e  error %s  pdas %d",
                    level, record.ndof, record.h_min, record.total, err, record.pdas_iters)

        if cfg.export_dir:
            write_solution_vtk(
                os.path.join(cfg.export_dir, f"level_{level:02d}.vtk"), mesh, result.solution.coefficients,
                cell_data={"indicator": result.report.indicators, "eta1": result.report.element_eta1},
            )
        if on_level is not None:
            on_level(result)

        if level == cfg.max_levels - 1:
            break
        marked = np.arange(mesh.n_triangles) if cfg.uniform else mark_max(result.report.indicators, cfg.theta_mark)
        try:
            refined = refine_nvb(mesh, marked, cfg.bisections)
        except RefinementError as e:
            raise AfemAbort(f"refinement after level {level} failed: {e}", history) from e
        logger.debug("marked %d of %d triangles", len(marked), mesh.n_triangles)
        previous, mesh = result, refined

    return history


# ═══════════════════════════════════════════════════════════════════════════════
# Reporting
# ═══════════════════════════════════════════════════════════════════════════════


def _num(value):
    return "" if value is None else f"{value:.17e}"


def write_history_csv(path, history):
    """One row per level, floats in full precision, blanks where no exact solution exists."""
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for r in history:
            writer.writerow([
                r.level, r.ndof, _num(r.h_min),
                *(_num(v) for v in r.eta),
                _num(r.total), _num(r.error), _num(r.eff_index), r.pdas_iters,
            ])


def print_level_table(history, title="ADAPTIVE RUN"):
    print("\n" + "=" * 96)
    print(f"  {title}")
    print(f"  Levels: {len(history)}")
    print("=" * 96)
    print(f"  {'lvl':>3s} {'ndof':>8s} {'h_min':>10s} {'total':>12s} {'error':>12s} "
          f"{'eff':>8s} {'pdas':>4s} {'active':>6s} {'osc_f':>10s}")
    for r in history:
        err = f"{r.error:>12.4e}" if r.error is not None else f"{'-':>12s}"
        eff = f"{r.eff_index:>8.2f}" if r.eff_index is not None else f"{'-':>8s}"
        print(f"  {r.level:>3d} {r.ndof:>8d} {r.h_min:>10.3e} {r.total:>12.4e} {err} "
              f"{eff} {r.pdas_iters:>4d} {r.n_active:>6d} {r.osc_f:>10.3e}")
    effs = [r.eff_index for r in history if r.eff_index is not None]
    if len(effs) > 1:
        print(f"\n  Efficiency index range: {min(effs):.3f} .. {max(effs):.3f}"
              f"  (max/min {max(effs) / min(effs):.3f})")
