"""
contact.py - Discrete Signorini problem by the primal-dual active set method.

Contains:
- pdas_solve: bordered saddle solves with an edge-wise active set
- sigma_from_definition: contact force density from the DG residual
- complementarity_report / vi_residual / force_identity_residual: KKT diagnostics
- project_feasible / transfer_active_set: feasible fields and warm starts
- print_contact_summary: console summary of one solve
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

logger = logging.getLogger(__name__)

INITIAL_ACTIVE_CHOICES = ("all", "none")


class ContactSolveError(RuntimeError):
    """PDAS did not settle, or a saddle system was singular.

    active_sets holds the last two active masks when iterating stopped;
    edge_rows the active constraint rows of a singular system.
    """

    def __init__(self, message, active_sets=(), edge_rows=()):
        super().__init__(message)
        self.active_sets = tuple(active_sets)
        self.edge_rows = tuple(int(r) for r in edge_rows)


@dataclass(frozen=True)
class PdasConfig:
    c: float = 1.0
    max_iterations: int = 30
    tol: float = 1e-9
    initial_active: str = "all"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"PDAS scaling c must be positive, got {self.c}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.initial_active not in INITIAL_ACTIVE_CHOICES:
            raise ValueError(f"initial_active must be one of {INITIAL_ACTIVE_CHOICES}, got '{self.initial_active}'")


@dataclass(frozen=True, eq=False)
class VISolution:
    """Solution of the discrete variational inequality."""

    coefficients: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray
    iterations: int
    history: tuple = field(default=())
    scale: float = 1.0

    @property
    def n_active(self):
        return int(self.active.sum())


@dataclass(frozen=True, eq=False)
class ContactForceDensity:
    """Constant force density per contact edge, in the edge frame and Cartesian."""

    edge_ids: np.ndarray
    normals: np.ndarray
    sigma_n: np.ndarray
    sigma_t: np.ndarray

    @property
    def tangents(self):
        return np.stack([-self.normals[:, 1], self.normals[:, 0]], axis=1)

    @property
    def vectors(self):
        """(m, 2) sigma_n n + sigma_t t."""
        return self.sigma_n[:, None] * self.normals + self.sigma_t[:, None] * self.tangents

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros(0), np.zeros(0))


@dataclass(frozen=True)
class ComplementarityReport:
    feasibility: float
    negative_multiplier: float
    complementarity: float
    inactive_multiplier: float

    def within(self, tol):
        return max(self.feasibility, self.negative_multiplier, self.complementarity, self.inactive_multiplier) <= tol


# ═══════════════════════════════════════════════════════════════════════════════
# Solvers
# ═══════════════════════════════════════════════════════════════════════════════


def solve_linear(matrix, rhs):
    """Sparse LU solve; raises ContactSolveError on a singular matrix."""
    try:
        return spla.splu(sparse.csc_matrix(matrix)).solve(np.asarray(rhs, dtype=float))
    except RuntimeError as e:
        raise ContactSolveError(f"singular system: {e}") from e


def _solve_bordered(matrix, rhs, constraints, rows):
    n = matrix.shape[0]
    if len(rows) == 0:
        return solve_linear(matrix, rhs), np.zeros(0)
    c_active = constraints.matrix[rows]
    saddle = sparse.bmat([[matrix, c_active.T], [c_active, None]], format="csc")
    full_rhs = np.concatenate([rhs, constraints.bounds[rows]])
    try:
        sol = spla.splu(saddle).solve(full_rhs)
    except RuntimeError as e:
        raise ContactSolveError(
            f"singular saddle system with {len(rows)} active contact rows: {e}",
            edge_rows=constraints.edge_ids[rows],
        ) from e
    if not np.all(np.isfinite(sol)):
        raise ContactSolveError("saddle solve produced non-finite values", edge_rows=constraints.edge_ids[rows])
    return sol[:n], sol[n:]


def _initial_active(constraints, cfg, warm_start):
    m = constraints.n_constraints
    finite = np.isfinite(constraints.bounds)
    if warm_start is not None:
        active = np.asarray(warm_start, dtype=bool)
        if active.shape != (m,):
            raise ValueError(f"warm start has {active.shape[0]} entries, expected {m}")
    elif cfg.initial_active == "all":
        active = np.ones(m, dtype=bool)
    else:
        active = np.zeros(m, dtype=bool)
    return active & finite


def pdas_solve(system, constraints, cfg=PdasConfig(), warm_start=None):
    """Solve A u + C^T lam = b, C u <= g, lam >= 0, lam (C u - g) = 0.

    Each iteration solves the bordered system with the current active rows
    as equalities, then activates {e : lam_e + c (C_e u - g_e) > 0}. Stops
    when the active set repeats.

    Args:
        system: LinearSystem with the DG matrix and load.
        constraints: ConstraintSystem, one row per contact edge. Rows with an
            infinite bound never become active.
        cfg: PdasConfig (scaling c, iteration cap, tolerance, start set).
        warm_start: Optional boolean mask over the rows, used instead of
            cfg.initial_active.

    Returns:
        VISolution with the coefficients, one multiplier per row, the final
        active mask and the per-iteration active counts.

    Raises:
        ContactSolveError: no settled active set within cfg.max_iterations,
            or a singular saddle system.
    """
    matrix, rhs = system.matrix, system.rhs
    scale = 1.0 + float(np.max(np.abs(rhs), initial=0.0))
    threshold = cfg.tol * scale
    m = constraints.n_constraints

    if m == 0:
        u = solve_linear(matrix, rhs)
        return VISolution(u, np.zeros(0), np.zeros(0, dtype=bool), 1, (0,), scale)

    active = _initial_active(constraints, cfg, warm_start)
    history = []
    previous = None
    for iteration in range(1, cfg.max_iterations + 1):
        rows = np.flatnonzero(active)
        u, lam_active = _solve_bordered(matrix, rhs, constraints, rows)
        lam = np.zeros(m)
        lam[rows] = lam_active
        slack = constraints.matrix @ u - constraints.bounds
        updated = lam + cfg.c * slack > threshold
        history.append(int(active.sum()))
        logger.debug("PDAS iteration %d: %d active, %d next", iteration, active.sum(), updated.sum())
        if np.array_equal(updated, active):
            logger.info("PDAS settled after %d iterations with %d/%d active edges", iteration, active.sum(), m)
            return VISolution(u, lam, active.copy(), iteration, tuple(history), scale)
        previous, active = active, updated

    raise ContactSolveError(
        f"PDAS active set did not settle within {cfg.max_iterations} iterations",
        active_sets=(previous, active),
    )


# ═══════════════════════════════════════════════════════════════════════════════
# Force density and diagnostics
# ═══════════════════════════════════════════════════════════════════════════════


def sigma_from_definition(mesh, dofmap, system, coefficients, constraints):
    """sigma_h per contact edge from B(v*) - M_DG(u_h, v*), v* constant on T^e.

    Only triangles owning a contact edge are tested, so each component is
    the residual summed over the matching component dofs of that triangle,
    divided by h_e.
    """
    if constraints.n_constraints == 0:
        return ContactForceDensity.empty()
    residual = system.rhs - system.matrix @ np.asarray(coefficients, dtype=float)
    local = residual.reshape(dofmap.n_triangles, -1, 2)[constraints.triangles]
    cartesian = local.sum(axis=1) / constraints.lengths[:, None]
    normals = constraints.normals
    tangents = np.stack([-normals[:, 1], normals[:, 0]], axis=1)
    sigma_n = np.einsum("ej,ej->e", cartesian, normals)
    sigma_t = np.einsum("ej,ej->e", cartesian, tangents)
    return ContactForceDensity(constraints.edge_ids, normals, sigma_n, sigma_t)


def complementarity_report(solution, constraints):
    if constraints.n_constraints == 0:
        return ComplementarityReport(0.0, 0.0, 0.0, 0.0)
    slack = constraints.matrix @ solution.coefficients - constraints.bounds
    finite = np.isfinite(slack)
    lam = solution.multipliers
    inactive = ~solution.active
    return ComplementarityReport(
        feasibility=float(max(0.0, np.max(slack[finite], initial=0.0))),
        negative_multiplier=float(max(0.0, np.max(-lam, initial=0.0))),
        complementarity=float(np.max(np.abs(lam[finite] * slack[finite]), initial=0.0)),
        inactive_multiplier=float(np.max(np.abs(lam[inactive]), initial=0.0)),
    )


def project_feasible(constraints, v):
    """Push v into C v <= g along each violated row.

    Rows touch disjoint triangles, so one pass is the exact projection.
    """
    v = np.array(v, dtype=float)
    if constraints.n_constraints == 0:
        return v
    C = constraints.matrix
    excess = np.maximum(C @ v - constraints.bounds, 0.0)
    norms = np.asarray(C.multiply(C).sum(axis=1)).ravel()
    return v - C.T @ (excess / norms)


def random_feasible(constraints, n_dofs, rng, amplitude=1.0):
    return project_feasible(constraints, amplitude * rng.standard_normal(n_dofs))


def vi_residual(system, solution, v):
    """M_DG(u_h, v - u_h) - B(v - u_h); nonnegative for feasible v."""
    w = np.asarray(v, dtype=float) - solution.coefficients
    return float(w @ (system.matrix @ solution.coefficients) - system.rhs @ w)


def edge_means(mesh, coefficients, constraints):
    """int_e v ds per contact edge (Simpson on the trace from T^e), shape (m, 2)."""
    from contact_dg.space import EDGE_NODES

    local = np.asarray(coefficients, dtype=float).reshape(-1, 6, 2)[constraints.triangles]
    nodes = EDGE_NODES[mesh.edge_local_index[constraints.edge_ids, 0]]
    trace = np.take_along_axis(local, nodes[:, :, None], axis=1)
    return constraints.lengths[:, None] * (trace[:, 0] + 4.0 * trace[:, 1] + trace[:, 2]) / 6.0


def force_identity_residual(mesh, system, solution, sigma, constraints, v):
    """(sigma_h, Pi_h v)_{Gamma_C} - [B(v) - M_DG(u_h, v)]; zero for every v."""
    pairing = float(np.sum(sigma.vectors * edge_means(mesh, v, constraints))) if len(sigma.edge_ids) else 0.0
    v = np.asarray(v, dtype=float)
    return pairing - float(system.rhs @ v - v @ (system.matrix @ solution.coefficients))


def transfer_active_set(old_mesh, old_constraints, old_active, new_mesh, new_constraints):
    """Active mask on the refined mesh: each contact edge inherits its parent's state.

    A child contact edge lies on the contact edge of its triangle's parent.
    """
    if new_mesh.parent is None:
        raise ValueError("refined mesh carries no parent map")
    if new_constraints.n_constraints == 0 or old_constraints.n_constraints == 0:
        return np.zeros(new_constraints.n_constraints, dtype=bool)
    parents = new_mesh.parent[new_constraints.triangles]
    old_edges = old_mesh.contact_edge_of_triangle()[parents]
    rows = np.searchsorted(old_constraints.edge_ids, old_edges)
    rows = np.clip(rows, 0, old_constraints.n_constraints - 1)
    hit = (old_edges >= 0) & (old_constraints.edge_ids[rows] == old_edges)
    return hit & np.asarray(old_active, dtype=bool)[rows]


def print_contact_summary(solution, sigma, constraints, report=None):
    """Print one solve's contact state."""
    print("\n" + "=" * 72)
    print("  CONTACT SOLUTION")
    print(f"  PDAS iterations: {solution.iterations}   active edges: {solution.n_active}"
          f" / {constraints.n_constraints}")
    print("=" * 72)
    if constraints.n_constraints:
        slack = constraints.bounds - constraints.matrix @ solution.coefficients
        print("\n--- CONTACT EDGES ---")
        print(f"  {'edge':>6s} {'sigma_n':>14s} {'sigma_t':>14s} {'slack':>14s}  state")
        for i, e in enumerate(constraints.edge_ids):
            state = "active" if solution.active[i] else "free"
            print(f"  {int(e):>6d} {sigma.sigma_n[i]:>14.6e} {sigma.sigma_t[i]:>14.6e} {slack[i]:>14.6e}  {state}")
    if report is not None:
        print("\n--- KKT RESIDUALS ---")
        print(f"  Feasibility:          {report.feasibility:>12.3e}")
        print(f"  Negative multiplier:  {report.negative_multiplier:>12.3e}")
        print(f"  Complementarity:      {report.complementarity:>12.3e}")
