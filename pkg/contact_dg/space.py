"""
space.py - Vector-valued piecewise quadratic discontinuous space.

Reference triangle (0,0), (1,0), (0,1). Local nodes are the three vertices
followed by the midpoints of (v0,v1), (v1,v2), (v2,v0). Global dof of
(triangle T, node i, component c) is 12*T + 2*i + c, so the coefficient
vector reshapes to (nt, 6, 2) without copying.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

MAX_QUADRATURE_DEGREE = 10
NODES_PER_TRIANGLE = 6
DOFS_PER_TRIANGLE = 12

REFERENCE_NODES = np.array(
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
)

# (start vertex, midpoint, end vertex) local nodes of local edge k (opposite vertex k)
EDGE_NODES = np.array([[1, 4, 2], [2, 5, 0], [0, 3, 1]])

# barycentric lattice with denominator 6: 28 points per triangle
TRIANGLE_SAMPLES = np.array(
    [[i / 6.0, j / 6.0] for j in range(7) for i in range(7 - j)]
)
EDGE_SAMPLES = np.linspace(0.0, 1.0, 7)


# ═══════════════════════════════════════════════════════════════════════════════
# Reference basis
# ═══════════════════════════════════════════════════════════════════════════════


def shape_eval(points):
    """Values of the six P2 shape functions, shape (..., 6)."""
    p = np.asarray(points, dtype=float)
    x, y = p[..., 0], p[..., 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )


def shape_grad(points):
    """Reference gradients, shape (..., 6, 2)."""
    p = np.asarray(points, dtype=float)
    x, y = p[..., 0], p[..., 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    d0 = np.stack([-one, -one], axis=-1)
    d1 = np.stack([one, zero], axis=-1)
    d2 = np.stack([zero, one], axis=-1)
    grads = [
        (4 * l0 - 1)[..., None] * d0,
        (4 * l1 - 1)[..., None] * d1,
        (4 * l2 - 1)[..., None] * d2,
        4 * (l0[..., None] * d1 + l1[..., None] * d0),
        4 * (l1[..., None] * d2 + l2[..., None] * d1),
        4 * (l2[..., None] * d0 + l0[..., None] * d2),
    ]
    return np.stack(grads, axis=-2)


def shape_hessian():
    """Reference Hessians (6, 2, 2); constant for quadratics."""
    return 4.0 * np.array(
        [
            [[1, 1], [1, 1]],
            [[1, 0], [0, 0]],
            [[0, 0], [0, 1]],
            [[-2, -1], [-1, 0]],
            [[0, 1], [1, 0]],
            [[0, -1], [-1, -2]],
        ],
        dtype=float,
    )


# ═══════════════════════════════════════════════════════════════════════════════
# Dof map and fields
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class DofMap:
    """Element-contiguous numbering, no sharing between triangles."""

    n_triangles: int

    @property
    def n_dofs(self):
        return DOFS_PER_TRIANGLE * self.n_triangles

    @property
    def cell_dofs(self):
        """(nt, 12) global dofs of each triangle."""
        return DOFS_PER_TRIANGLE * np.arange(self.n_triangles)[:, None] + np.arange(DOFS_PER_TRIANGLE)

    def index(self, triangle, node, component):
        return DOFS_PER_TRIANGLE * triangle + 2 * node + component

    @classmethod
    def for_mesh(cls, mesh):
        return cls(mesh.n_triangles)


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Coefficient vector of a field in the DG space of one mesh."""

    coefficients: np.ndarray
    signature: tuple

    def __post_init__(self):
        n_triangles = self.signature[1]
        if len(self.coefficients) != DOFS_PER_TRIANGLE * n_triangles:
            raise ValueError(
                f"field has {len(self.coefficients)} coefficients, mesh needs {DOFS_PER_TRIANGLE * n_triangles}"
            )

    @classmethod
    def on(cls, mesh, coefficients):
        return cls(np.asarray(coefficients, dtype=float), mesh.signature)

    def local(self):
        return self.coefficients.reshape(-1, NODES_PER_TRIANGLE, 2)


def _check_field(mesh, field):
    if field.signature != mesh.signature:
        raise ValueError(f"field built on mesh {field.signature}, evaluated on {mesh.signature}")


def _local_coefficients(mesh, coefficients):
    if isinstance(coefficients, DiscreteField):
        _check_field(mesh, coefficients)
        coefficients = coefficients.coefficients
    return np.asarray(coefficients, dtype=float).reshape(mesh.n_triangles, NODES_PER_TRIANGLE, 2)


# ═══════════════════════════════════════════════════════════════════════════════
# Geometry helpers
# ═══════════════════════════════════════════════════════════════════════════════


def physical_points(mesh, ref_points, triangles=None):
    """Map reference points to physical coordinates, shape (n, nq, 2)."""
    tri = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    ref = np.asarray(ref_points, dtype=float)
    origin = mesh.vertices[mesh.triangles[tri, 0]]
    if ref.ndim == 2:
        return origin[:, None, :] + np.einsum("tij,qj->tqi", mesh.jacobians[tri], ref)
    return origin[:, None, :] + np.einsum("tij,tqj->tqi", mesh.jacobians[tri], ref)


def to_reference(mesh, triangles, points):
    """Pull physical points (n, nq, 2) back to the reference triangle of each triangle."""
    tri = np.asarray(triangles)
    origin = mesh.vertices[mesh.triangles[tri, 0]]
    return np.einsum("tij,tqj->tqi", mesh.inverse_jacobians[tri], points - origin[:, None, :])


def basis_on(mesh, ref_points, triangles=None):
    """Scalar basis values (n, nq, 6) and physical gradients (n, nq, 6, 2)."""
    tri = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    ref = np.asarray(ref_points, dtype=float)
    if ref.ndim == 2:
        ref = np.broadcast_to(ref, (len(tri),) + ref.shape)
    values = shape_eval(ref)
    grads = np.einsum("tkj,tqik->tqij", mesh.inverse_jacobians[tri], shape_grad(ref))
    return values, grads


def basis_hessians(mesh, triangles=None):
    """Physical Hessians of the scalar basis, (n, 6, 2, 2)."""
    tri = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    jinv = mesh.inverse_jacobians[tri]
    return np.einsum("tki,nkm,tmj->tnij", jinv, shape_hessian(), jinv)


# ═══════════════════════════════════════════════════════════════════════════════
# Field evaluation
# ═══════════════════════════════════════════════════════════════════════════════


def field_values(mesh, coefficients, ref_points, triangles=None):
    """u_h at reference points of each triangle, shape (n, nq, 2)."""
    tri = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    u = _local_coefficients(mesh, coefficients)[tri]
    values, _ = basis_on(mesh, ref_points, tri)
    return np.einsum("tqi,tic->tqc", values, u)


def field_gradients(mesh, coefficients, ref_points, triangles=None):
    """Physical gradients (n, nq, 2, 2); entry [c, j] is d u_c / d x_j."""
    tri = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    u = _local_coefficients(mesh, coefficients)[tri]
    _, grads = basis_on(mesh, ref_points, tri)
    return np.einsum("tic,tqij->tqcj", u, grads)


def field_hessians(mesh, coefficients, triangles=None):
    """Second derivatives (n, 2, 2, 2); entry [c, j, k] is d2 u_c / dx_j dx_k."""
    tri = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    u = _local_coefficients(mesh, coefficients)[tri]
    return np.einsum("tic,tijk->tcjk", u, basis_hessians(mesh, tri))


def eval_field(mesh, field, triangle, point):
    """Displacement of `field` at a reference point of one triangle."""
    _check_field(mesh, field)
    return field_values(mesh, field, np.asarray(point, dtype=float)[None, :], [triangle])[0, 0]


def eval_grad(mesh, field, triangle, point):
    """2x2 physical gradient of `field` at a reference point of one triangle."""
    _check_field(mesh, field)
    return field_gradients(mesh, field, np.asarray(point, dtype=float)[None, :], [triangle])[0, 0]


def interpolate(mesh, func):
    """Nodal P2 interpolant of func(x, y) -> (..., 2), as a coefficient vector."""
    nodes = physical_points(mesh, REFERENCE_NODES)
    values = np.asarray(func(nodes[..., 0], nodes[..., 1]), dtype=float)
    return values.reshape(-1)


def edge_traces(mesh, coefficients, edge_ids, s, side=0):
    """Values (n, ns, 2) and gradients (n, ns, 2, 2) of the trace from one side.

    s are parameters in [0, 1] from edges[:, 0] to edges[:, 1].
    """
    edge_ids = np.asarray(edge_ids)
    tri = mesh.e2t[edge_ids, side]
    points = edge_points(mesh, edge_ids, s)
    ref = to_reference(mesh, tri, points)
    return (
        field_values(mesh, coefficients, ref, tri),
        field_gradients(mesh, coefficients, ref, tri),
    )


def edge_points(mesh, edge_ids, s):
    """Physical points (n, ns, 2) at parameters s along each edge."""
    a = mesh.vertices[mesh.edges[edge_ids, 0]]
    b = mesh.vertices[mesh.edges[edge_ids, 1]]
    s = np.asarray(s, dtype=float)
    return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]


# ═══════════════════════════════════════════════════════════════════════════════
# Quadrature
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


def _points_for(degree):
    if degree < 0 or degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree {degree} not supported (0..{MAX_QUADRATURE_DEGREE})")
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def quadrature_triangle(degree):
    """Collapsed Gauss rule on the reference triangle, exact for `degree`.

    Gauss-Jacobi (weight 1 - u) in u times Gauss-Legendre in v, mapped by
    x = u, y = v (1 - u). Weights are positive and sum to 1/2.
    """
    n = _points_for(degree)
    t, wt = special.roots_jacobi(n, 1.0, 0.0)
    s, ws = special.roots_legendre(n)
    u, wu = 0.5 * (1.0 + t), 0.25 * wt
    v, wv = 0.5 * (1.0 + s), 0.5 * ws
    uu, vv = np.meshgrid(u, v, indexing="ij")
    points = np.stack([uu.ravel(), (vv * (1.0 - uu)).ravel()], axis=1)
    weights = np.outer(wu, wv).ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


@lru_cache(maxsize=None)
def quadrature_edge(degree):
    """Gauss-Legendre rule on [0, 1], exact for `degree`; weights sum to 1."""
    n = _points_for(degree)
    s, w = special.roots_legendre(n)
    points = 0.5 * (1.0 + s)
    weights = 0.5 * w
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)
