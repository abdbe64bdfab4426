"""
assembly.py - Interior penalty DG forms for linear elasticity.

M_DG(u, v) = sum_T int_T Xi(u) : eps(v)
             - sum_e int_e {{Xi(u)}} : [[v]]
             + theta sum_e int_e [[u]] : {{Xi(v)}}
             + sum_e eta mu / h_e int_e [[u]] : [[v]]

over e in F0 = interior and Dirichlet edges, with theta = -1 (SIPG),
+1 (NIPG) or 0 (IIPG). On Dirichlet edges jumps are taken against the
datum, [[u]] = (u - g_D) x n, which moves the datum parts of the theta and
penalty terms to the right-hand side.

The penalty eta is dimensionless; the weight on the jump term is eta mu / h_e.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from contact_dg.mesh import BoundaryTag, Mesh
from contact_dg.space import (
    DOFS_PER_TRIANGLE,
    EDGE_NODES,
    DofMap,
    basis_on,
    edge_points,
    edge_traces,
    physical_points,
    quadrature_edge,
    quadrature_triangle,
    to_reference,
)

logger = logging.getLogger(__name__)

DEFAULT_PENALTY = 40.0
METHOD_THETA = {"sipg": -1.0, "nipg": 1.0, "iipg": 0.0}
ALL_PARTS = ("volume", "consistency", "symmetry", "penalty")
LOAD_DEGREE = 6
EDGE_DEGREE = 5


@dataclass(frozen=True)
class DGMethod:
    """Interior penalty variant and penalty parameter eta > 0."""

    name: str = "sipg"
    penalty: float = DEFAULT_PENALTY

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.lower())
        if self.name not in METHOD_THETA:
            raise ValueError(f"unknown DG method '{self.name}' (known: {', '.join(METHOD_THETA)})")
        if not self.penalty > 0:
            raise ValueError(f"penalty must be positive, got {self.penalty}")

    @property
    def theta(self):
        return METHOD_THETA[self.name]

    @property
    def symmetric(self):
        return self.name == "sipg"


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """A u = b with A = M_DG and b = B plus Dirichlet lifting."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    method: DGMethod
    signature: tuple

    @property
    def n_dofs(self):
        return len(self.rhs)


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Rows C_e v = int_e v . n_e ds and bounds g_e = int_e chi ds, one per contact edge."""

    matrix: sparse.csr_matrix
    bounds: np.ndarray
    edge_ids: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray

    @property
    def n_constraints(self):
        return len(self.bounds)


class _MatrixBuilder:
    """Collects dense element blocks and sums them into a sparse matrix."""

    def __init__(self, shape):
        self.shape = shape
        self.rows, self.cols, self.vals = [], [], []

    def add(self, row_dofs, col_dofs, blocks):
        rows = np.broadcast_to(row_dofs[:, :, None], blocks.shape)
        cols = np.broadcast_to(col_dofs[:, None, :], blocks.shape)
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(blocks.ravel())

    def tocsr(self):
        if not self.vals:
            return sparse.csr_matrix(self.shape)
        return sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=self.shape,
        ).tocsr()


# ═══════════════════════════════════════════════════════════════════════════════
# Pointwise kernels
# ═══════════════════════════════════════════════════════════════════════════════


def hooke_stress(grad, mu, kappa):
    """Xi = 2 mu sym(grad) + kappa tr(grad) I, for gradients (..., 2, 2)."""
    grad = np.asarray(grad, dtype=float)
    trace = grad[..., 0, 0] + grad[..., 1, 1]
    return mu * (grad + np.swapaxes(grad, -1, -2)) + kappa * trace[..., None, None] * np.eye(2)


def _vector_basis(values, grads):
    """Vector basis N_i e_c at dof 2i + c: values (n, nq, 12, 2), gradients (n, nq, 12, 2, 2)."""
    n, nq, _ = values.shape
    eye = np.eye(2)
    phi = np.einsum("tqi,cd->tqicd", values, eye).reshape(n, nq, DOFS_PER_TRIANGLE, 2)
    dphi = np.einsum("tqij,cd->tqicdj", grads, eye).reshape(n, nq, DOFS_PER_TRIANGLE, 2, 2)
    return phi, dphi


def _side_basis(mesh, triangles, points, mu, kappa, normals):
    """Vector basis values and tractions Xi(phi) n on one side of a batch of edges."""
    ref = to_reference(mesh, triangles, points)
    values, grads = basis_on(mesh, ref, triangles)
    phi, dphi = _vector_basis(values, grads)
    traction = np.einsum("eqadj,ej->eqad", hooke_stress(dphi, mu, kappa), normals)
    return phi, traction


def _finite(name, values):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} evaluates to non-finite values")
    return values


# ═══════════════════════════════════════════════════════════════════════════════
# Matrix
# ═══════════════════════════════════════════════════════════════════════════════


def assemble_matrix(mesh, dofmap, method, mu, kappa, parts=ALL_PARTS):
    """Sparse M_DG restricted to the requested parts.

    parts is any subset of ("volume", "consistency", "symmetry", "penalty");
    the symmetry part is the theta-weighted term.
    """
    unknown = set(parts) - set(ALL_PARTS)
    if unknown:
        raise ValueError(f"unknown form parts {sorted(unknown)}")
    n = dofmap.n_dofs
    builder = _MatrixBuilder((n, n))
    dofs = dofmap.cell_dofs

    if "volume" in parts:
        rule = quadrature_triangle(2)
        values, grads = basis_on(mesh, rule.points)
        _, dphi = _vector_basis(values, grads)
        stress = hooke_stress(dphi, mu, kappa)
        weights = rule.weights[None, :] * (2.0 * mesh.areas)[:, None]
        blocks = np.einsum("tq,tqadj,tqbdj->tab", weights, dphi, stress)
        builder.add(dofs, dofs, blocks)

    edge_parts = [p for p in ("consistency", "symmetry", "penalty") if p in parts]
    if edge_parts:
        edge_ids = mesh.edges_with_tag(BoundaryTag.INTERIOR, BoundaryTag.DIRICHLET)
        _assemble_edges(mesh, dofs, method, mu, kappa, edge_ids, edge_parts, builder)

    return builder.tocsr()


def _assemble_edges(mesh, dofs, method, mu, kappa, edge_ids, edge_parts, builder):
    if len(edge_ids) == 0:
        return
    rule = quadrature_edge(EDGE_DEGREE)
    points = edge_points(mesh, edge_ids, rule.points)
    normals = mesh.edge_normals[edge_ids]
    h = mesh.edge_lengths[edge_ids]
    w = rule.weights[None, :] * h[:, None]
    interior = mesh.e2t[edge_ids, 1] >= 0

    sides = [(mesh.e2t[edge_ids, 0], np.arange(len(edge_ids)))]
    inner = np.flatnonzero(interior)
    sides.append((mesh.e2t[edge_ids[inner], 1], inner))

    basis = []
    for tri, rows in sides:
        phi, traction = _side_basis(mesh, tri, points[rows], mu, kappa, normals[rows])
        basis.append((tri, rows, phi, traction))

    omega = np.where(interior, 0.5, 1.0)
    sign = (1.0, -1.0)
    theta = method.theta

    for p in range(2):
        for q in range(2):
            # both sides exist only on interior edges
            rows = sides[0][1] if p == q == 0 else inner
            if len(rows) == 0:
                continue
            tri_p, rows_p, phi_p, trac_p = basis[p]
            tri_q, rows_q, phi_q, trac_q = basis[q]
            sel_p = _select(rows_p, rows)
            sel_q = _select(rows_q, rows)
            wr = w[rows]
            om = omega[rows][:, None, None]
            block = np.zeros((len(rows), DOFS_PER_TRIANGLE, DOFS_PER_TRIANGLE))
            if "consistency" in edge_parts:
                c_pq = np.einsum("eq,eqad,eqbd->eab", wr, phi_p[sel_p], trac_q[sel_q])
                block -= om * sign[p] * c_pq
            if "symmetry" in edge_parts and theta != 0.0:
                c_qp = np.einsum("eq,eqbd,eqad->eab", wr, phi_q[sel_q], trac_p[sel_p])
                block += theta * om * sign[q] * c_qp
            if "penalty" in edge_parts:
                m_pq = np.einsum("eq,eqad,eqbd->eab", wr, phi_p[sel_p], phi_q[sel_q])
                block += (method.penalty * mu / h[rows])[:, None, None] * sign[p] * sign[q] * m_pq
            builder.add(dofs[tri_p[sel_p]], dofs[tri_q[sel_q]], block)


def _select(available_rows, wanted_rows):
    """Positions of wanted_rows inside available_rows (both sorted)."""
    return np.searchsorted(available_rows, wanted_rows)


# ═══════════════════════════════════════════════════════════════════════════════
# Load
# ═══════════════════════════════════════════════════════════════════════════════


def assemble_load(mesh, dofmap, method, problem):
    """B(v) = int f.v + int_N pi.v plus the Dirichlet lifting terms."""
    local = np.zeros((mesh.n_triangles, DOFS_PER_TRIANGLE))

    rule = quadrature_triangle(LOAD_DEGREE)
    x = physical_points(mesh, rule.points)
    f = _finite("body force", np.asarray(problem.body_force(x[..., 0], x[..., 1]), dtype=float))
    values, grads = basis_on(mesh, rule.points)
    phi, _ = _vector_basis(values, grads)
    weights = rule.weights[None, :] * (2.0 * mesh.areas)[:, None]
    local += np.einsum("tq,tqad,tqd->ta", weights, phi, f)

    edge_rule = quadrature_edge(EDGE_DEGREE)

    neumann = mesh.edges_with_tag(BoundaryTag.NEUMANN)
    if len(neumann):
        pts = edge_points(mesh, neumann, edge_rule.points)
        nrm = np.broadcast_to(mesh.edge_normals[neumann][:, None, :], pts.shape)
        pi = _finite("traction", np.asarray(
            problem.traction(pts[..., 0], pts[..., 1], nrm[..., 0], nrm[..., 1]), dtype=float))
        tri = mesh.e2t[neumann, 0]
        phi, _ = _side_basis(mesh, tri, pts, problem.mu, problem.kappa, mesh.edge_normals[neumann])
        w = edge_rule.weights[None, :] * mesh.edge_lengths[neumann][:, None]
        np.add.at(local, tri, np.einsum("eq,eqad,eqd->ea", w, phi, pi))

    dirichlet = mesh.edges_with_tag(BoundaryTag.DIRICHLET)
    if len(dirichlet):
        pts = edge_points(mesh, dirichlet, edge_rule.points)
        g = _finite("Dirichlet datum", np.asarray(problem.dirichlet_value(pts[..., 0], pts[..., 1]), dtype=float))
        tri = mesh.e2t[dirichlet, 0]
        h = mesh.edge_lengths[dirichlet]
        phi, traction = _side_basis(mesh, tri, pts, problem.mu, problem.kappa, mesh.edge_normals[dirichlet])
        w = edge_rule.weights[None, :] * h[:, None]
        lift = method.theta * np.einsum("eq,eqad,eqd->ea", w, traction, g)
        lift += (method.penalty * problem.mu / h)[:, None] * np.einsum("eq,eqad,eqd->ea", w, phi, g)
        np.add.at(local, tri, lift)

    return np.bincount(dofmap.cell_dofs.ravel(), weights=local.ravel(), minlength=dofmap.n_dofs)


def assemble_system(mesh, dofmap, method, problem):
    if dofmap.n_triangles != mesh.n_triangles:
        raise ValueError(f"dof map built for {dofmap.n_triangles} triangles, mesh has {mesh.n_triangles}")
    matrix = assemble_matrix(mesh, dofmap, method, problem.mu, problem.kappa)
    rhs = assemble_load(mesh, dofmap, method, problem)
    logger.debug("assembled %s system: %d dofs, %d nonzeros", method.name, len(rhs), matrix.nnz)
    return LinearSystem(matrix, rhs, method, mesh.signature)


# ═══════════════════════════════════════════════════════════════════════════════
# Traces
# ═══════════════════════════════════════════════════════════════════════════════


def trace_jump(mesh, coefficients, edge, s):
    """[[v]] at parameter s of one edge: v1 x n1 + v2 x n2, or v x n on the boundary."""
    n = mesh.edge_normals[edge]
    v1, _ = edge_traces(mesh, coefficients, [edge], [s], side=0)
    jump = v1[0, 0]
    if mesh.e2t[edge, 1] >= 0:
        v2, _ = edge_traces(mesh, coefficients, [edge], [s], side=1)
        jump = jump - v2[0, 0]
    return np.outer(jump, n)


def trace_mean(mesh, coefficients, edge, s, mu, kappa):
    """{{Xi(v)}} at parameter s of one edge; the one-sided stress on the boundary."""
    _, g1 = edge_traces(mesh, coefficients, [edge], [s], side=0)
    stress = hooke_stress(g1[0, 0], mu, kappa)
    if mesh.e2t[edge, 1] >= 0:
        _, g2 = edge_traces(mesh, coefficients, [edge], [s], side=1)
        stress = 0.5 * (stress + hooke_stress(g2[0, 0], mu, kappa))
    return stress


def stress_jump(mesh, coefficients, edge_ids, s, mu, kappa):
    """[[Xi(v)]] = (Xi1 - Xi2) n on interior edges, shape (n, ns, 2)."""
    _, g1 = edge_traces(mesh, coefficients, edge_ids, s, side=0)
    _, g2 = edge_traces(mesh, coefficients, edge_ids, s, side=1)
    diff = hooke_stress(g1, mu, kappa) - hooke_stress(g2, mu, kappa)
    return np.einsum("eqij,ej->eqi", diff, mesh.edge_normals[edge_ids])


def bilinear_form_direct(mesh, method, mu, kappa, w, v):
    """M_DG(w, v) by pointwise quadrature, triangle by triangle and edge by edge.

    Slow; used to cross-check the vectorized assembly on small meshes.
    """
    from contact_dg.space import field_gradients

    total = 0.0
    rule = quadrature_triangle(2)
    gw = field_gradients(mesh, w, rule.points)
    gv = field_gradients(mesh, v, rule.points)
    for t in range(mesh.n_triangles):
        for q, weight in enumerate(rule.weights):
            eps_v = 0.5 * (gv[t, q] + gv[t, q].T)
            total += weight * 2.0 * mesh.areas[t] * np.sum(hooke_stress(gw[t, q], mu, kappa) * eps_v)

    edge_rule = quadrature_edge(EDGE_DEGREE)
    for e in mesh.edges_with_tag(BoundaryTag.INTERIOR, BoundaryTag.DIRICHLET):
        h = mesh.edge_lengths[e]
        for s, weight in zip(edge_rule.points, edge_rule.weights):
            jw = trace_jump(mesh, w, e, s)
            jv = trace_jump(mesh, v, e, s)
            term = -np.sum(trace_mean(mesh, w, e, s, mu, kappa) * jv)
            term += method.theta * np.sum(jw * trace_mean(mesh, v, e, s, mu, kappa))
            term += method.penalty * mu / h * np.sum(jw * jv)
            total += weight * h * term
    return total


# ═══════════════════════════════════════════════════════════════════════════════
# Contact constraints
# ═══════════════════════════════════════════════════════════════════════════════


def constraint_system(mesh, dofmap, problem):
    """Edge-integral non-penetration rows on the dofs of the triangle owning each contact edge.

    C_e uses Simpson's rule, exact for quadratic traces. g_e integrates the
    gap with the degree-5 Gauss rule, split at the gap's kink points.
    """
    mesh.contact_edge_of_triangle()
    edge_ids = mesh.edges_with_tag(BoundaryTag.CONTACT)
    m = len(edge_ids)
    tri = mesh.e2t[edge_ids, 0]
    normals = mesh.edge_normals[edge_ids]
    h = mesh.edge_lengths[edge_ids]
    if m == 0:
        empty = sparse.csr_matrix((0, dofmap.n_dofs))
        return ConstraintSystem(empty, np.zeros(0), edge_ids, tri, normals.reshape(0, 2), h)

    nodes = EDGE_NODES[mesh.edge_local_index[edge_ids, 0]]
    simpson = np.array([1.0, 4.0, 1.0]) / 6.0
    rows, cols, vals = [], [], []
    for j in range(3):
        for c in range(2):
            rows.append(np.arange(m))
            cols.append(DOFS_PER_TRIANGLE * tri + 2 * nodes[:, j] + c)
            vals.append(simpson[j] * h * normals[:, c])
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, dofmap.n_dofs),
    ).tocsr()

    bounds = _gap_integrals(mesh, edge_ids, problem)
    return ConstraintSystem(matrix, bounds, edge_ids, tri, normals, h)


def _gap_integrals(mesh, edge_ids, problem):
    rule = quadrature_edge(EDGE_DEGREE)
    pts = edge_points(mesh, edge_ids, rule.points)
    h = mesh.edge_lengths[edge_ids]
    bounds = h * np.einsum("q,eq->e", rule.weights, np.asarray(problem.gap(pts[..., 0], pts[..., 1]), dtype=float))

    a = mesh.vertices[mesh.edges[edge_ids, 0]]
    b = mesh.vertices[mesh.edges[edge_ids, 1]]
    for kink in problem.gap_kinks:
        kink = np.asarray(kink, dtype=float)
        d = b - a
        s = np.einsum("ej,ej->e", kink - a, d) / h**2
        dist = np.abs(d[:, 0] * (kink - a)[:, 1] - d[:, 1] * (kink - a)[:, 0]) / h
        inside = (dist < 1e-12) & (s > 1e-12) & (s < 1 - 1e-12)
        for i in np.flatnonzero(inside):
            total = 0.0
            for lo, hi in ((0.0, s[i]), (s[i], 1.0)):
                sub = lo + (hi - lo) * rule.points
                x = a[i] + sub[:, None] * d[i]
                total += (hi - lo) * h[i] * rule.weights @ np.asarray(problem.gap(x[:, 0], x[:, 1]), dtype=float)
            bounds[i] = total
    return bounds


def smallest_form_eigenvalue(method, mu, kappa):
    """Smallest eigenvalue of the symmetric part of M_DG on a two-triangle clamped square."""
    square = Mesh.from_arrays([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    square = square.with_boundary_tags(lambda mids: np.full(len(mids), int(BoundaryTag.DIRICHLET)))
    matrix = assemble_matrix(square, DofMap.for_mesh(square), method, mu, kappa).toarray()
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T)).min())


def check_coercivity(method, mu, kappa):
    """True when that symmetric part is positive definite; logs a warning otherwise."""
    smallest = smallest_form_eigenvalue(method, mu, kappa)
    if smallest <= 0:
        logger.warning("%s with penalty %g is not coercive on the clamped square (min eigenvalue %.3e)",
                       method.name, method.penalty, smallest)
    return smallest > 0
