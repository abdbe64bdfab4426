"""
mesh.py - Conforming triangulations with boundary tags and newest vertex bisection.

Contains:
- Mesh: immutable triangulation with a derived edge table
- unit_square_initial_mesh: the four-triangle criss-cross square
- refine_nvb: newest vertex bisection with conforming closure
- mesh_metrics / check_mesh: mesh sizes and integrity checks

Triangles are stored so that local vertex 0 is the newest vertex and the
refinement edge is (t[1], t[2]). Local edge k is the edge opposite local
vertex k, so the refinement edge is always local edge 0.
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)

ON_BOUNDARY_TOL = 1e-12
CLOSURE_FACTOR = 64


class BoundaryTag(IntEnum):
    """Edge classification. UNASSIGNED only appears on untagged meshes."""

    UNASSIGNED = -1
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2
    CONTACT = 3


class RefinementError(RuntimeError):
    """Raised when the NVB closure does not terminate."""


# ═══════════════════════════════════════════════════════════════════════════════
# Mesh
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation.

    vertices:      (nv, 2) coordinates
    triangles:     (nt, 3) vertex indices, counter-clockwise, refinement edge (t1, t2)
    boundary:      (nb, 2) sorted vertex pairs of boundary segments
    boundary_tags: (nb,) BoundaryTag values of those segments
    generation:    refinement level this mesh was produced on
    parent:        (nt,) index of the parent triangle in the previous mesh, or None
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray = None
    boundary_tags: np.ndarray = None
    generation: int = 0
    parent: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if self.boundary is None:
            boundary = np.zeros((0, 2), dtype=np.int64)
            tags = np.zeros(0, dtype=np.int64)
        else:
            boundary = np.sort(np.asarray(self.boundary, dtype=np.int64).reshape(-1, 2), axis=1)
            tags = np.asarray(self.boundary_tags, dtype=np.int64).reshape(-1)
            if tags.shape[0] != boundary.shape[0]:
                raise ValueError("boundary and boundary_tags differ in length")
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "boundary_tags", tags)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle refers to a missing vertex")

    # ── Construction ─────────────────────────────────────────────────────

    @classmethod
    def from_arrays(cls, vertices, triangles):
        """Build an initial mesh, seeding refinement edges with the longest edge.

        Triangles are reoriented counter-clockwise. Ties between equally long
        edges go to the edge whose opposite vertex has the smallest index.
        """
        p = np.asarray(vertices, dtype=float).reshape(-1, 2)
        t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3).copy()
        area = _signed_areas(p, t)
        flip = area < 0
        t[flip] = t[flip][:, [0, 2, 1]]

        seeded = np.empty_like(t)
        for i, tri in enumerate(t):
            lengths = [np.linalg.norm(p[tri[(k + 2) % 3]] - p[tri[(k + 1) % 3]]) for k in range(3)]
            longest = max(lengths)
            candidates = [k for k in range(3) if lengths[k] >= longest * (1 - 1e-12)]
            k = min(candidates, key=lambda k: tri[k])
            seeded[i] = np.roll(tri, -k)
        return cls(p, seeded)

    def with_boundary_tags(self, classify):
        """Return a copy whose boundary edges carry tags from `classify`.

        classify(midpoints) -> array of BoundaryTag values, one per midpoint.
        """
        boundary = self.edges[self.boundary_edge_ids]
        tags = np.asarray(classify(self.edge_midpoints[self.boundary_edge_ids]), dtype=np.int64)
        return Mesh(self.vertices, self.triangles, boundary, tags, self.generation, self.parent)

    # ── Sizes ────────────────────────────────────────────────────────────

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def signature(self):
        """Identifies the mesh a field was built on."""
        return (self.generation, self.n_triangles, self.n_vertices)

    # ── Derived edge table ───────────────────────────────────────────────

    @cached_property
    def _edge_data(self):
        t = self.triangles
        nt = len(t)
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        t2e = inverse.reshape(nt, 3)

        e2t = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        e2t[sorted_edges[first], 0] = order[first] // 3
        e2t[sorted_edges[~first], 1] = order[~first] // 3
        incidence = np.bincount(inverse, minlength=len(edges))
        return edges, t2e, e2t, incidence

    @property
    def edges(self):
        """(ne, 2) sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def t2e(self):
        """(nt, 3) edge ids; column k is the edge opposite local vertex k."""
        return self._edge_data[1]

    @property
    def e2t(self):
        """(ne, 2) incident triangles; column 1 is -1 on boundary edges."""
        return self._edge_data[2]

    @cached_property
    def boundary_edge_ids(self):
        return np.flatnonzero(self.e2t[:, 1] < 0)

    @cached_property
    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def edge_local_index(self):
        """(ne, 2) local edge number of the edge in each incident triangle (-1 if none)."""
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        for side in range(2):
            tri = self.e2t[:, side]
            has = tri >= 0
            rows = self.t2e[tri[has]]
            out[has, side] = np.argmax(rows == np.flatnonzero(has)[:, None], axis=1)
        return out

    @cached_property
    def edge_normals(self):
        """(ne, 2) unit normals, outward with respect to the first incident triangle."""
        tri = self.e2t[:, 0]
        k = self.edge_local_index[:, 0]
        t = self.triangles[tri]
        a = t[np.arange(len(tri)), (k + 1) % 3]
        b = t[np.arange(len(tri)), (k + 2) % 3]
        d = self.vertices[b] - self.vertices[a]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def edge_tangents(self):
        n = self.edge_normals
        return np.stack([-n[:, 1], n[:, 0]], axis=1)

    @cached_property
    def edge_tags(self):
        """(ne,) BoundaryTag per edge; boundary edges without a segment are UNASSIGNED."""
        tags = np.full(self.n_edges, int(BoundaryTag.INTERIOR), dtype=np.int64)
        bnd = self.boundary_edge_ids
        tags[bnd] = int(BoundaryTag.UNASSIGNED)
        if len(self.boundary):
            nv = self.n_vertices
            keys = self.boundary[:, 0] * nv + self.boundary[:, 1]
            order = np.argsort(keys)
            edge_keys = self.edges[bnd, 0] * nv + self.edges[bnd, 1]
            pos = np.clip(np.searchsorted(keys[order], edge_keys), 0, len(keys) - 1)
            found = keys[order][pos] == edge_keys
            tags[bnd[found]] = self.boundary_tags[order][pos[found]]
        return tags

    def edges_with_tag(self, *tags):
        return np.flatnonzero(np.isin(self.edge_tags, [int(t) for t in tags]))

    # ── Element geometry ─────────────────────────────────────────────────

    @cached_property
    def jacobians(self):
        """(nt, 2, 2) columns P1 - P0 and P2 - P0."""
        p = self.vertices[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def inverse_jacobians(self):
        return np.linalg.inv(self.jacobians)

    @cached_property
    def areas(self):
        return _signed_areas(self.vertices, self.triangles)

    @cached_property
    def diameters(self):
        """h_T: longest edge of each triangle."""
        return self.edge_lengths[self.t2e].max(axis=1)

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def contact_edge_of_triangle(self):
        """(nt,) contact edge id of each triangle, -1 where there is none.

        Raises ValueError when a triangle owns more than one contact edge.
        """
        is_contact = self.edge_tags[self.t2e] == BoundaryTag.CONTACT
        counts = is_contact.sum(axis=1)
        if np.any(counts > 1):
            bad = np.flatnonzero(counts > 1)
            raise ValueError(f"triangles {bad.tolist()} have more than one contact edge")
        out = -np.ones(self.n_triangles, dtype=np.int64)
        rows = np.flatnonzero(counts == 1)
        out[rows] = self.t2e[rows, np.argmax(is_contact[rows], axis=1)]
        return out

    def angles(self):
        """(nt, 3) interior angles in degrees, angle k at local vertex k."""
        p = self.vertices[self.triangles]
        out = np.empty((self.n_triangles, 3))
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cos = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        return out

    def min_angle(self):
        return float(self.angles().min())


def _signed_areas(p, t):
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


# ═══════════════════════════════════════════════════════════════════════════════
# Initial meshes
# ═══════════════════════════════════════════════════════════════════════════════


def unit_square_initial_mesh():
    """Unit square split by both diagonals: 5 vertices, 4 right isoceles triangles."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    # center first: the boundary edge opposite it is the refinement edge
    triangles = np.array([[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]])
    return Mesh(vertices, triangles)


# ═══════════════════════════════════════════════════════════════════════════════
# Newest vertex bisection
# ═══════════════════════════════════════════════════════════════════════════════


BISECTION_MODES = (1, 3)


def refine_nvb(mesh, marked, bisections=1):
    """Bisect the marked triangles and close the mesh to conformity.

    Each marked triangle is bisected through its refinement edge. Any triangle
    with a bisected edge also gets its refinement edge bisected, until no
    hanging vertex remains. The midpoint becomes the newest vertex of both
    children, whose refinement edges are the two remaining parent edges.

    With bisections=3 every marked triangle has all three of its edges
    bisected (four children of half the diameter), the closure following as
    before.

    Args:
        mesh: Mesh to refine.
        marked: Iterable of triangle indices, at least one.
        bisections: 1 (refinement edge only) or 3 (all edges).

    Returns:
        The refined Mesh. Its `parent` array maps each new triangle to the
        index of the triangle of `mesh` it was cut from.

    Raises:
        ValueError: empty or out-of-range marking, or an unknown mode.
        RefinementError: the closure did not terminate.
    """
    if bisections not in BISECTION_MODES:
        raise ValueError(f"bisections must be one of {BISECTION_MODES}, got {bisections}")
    marked = np.unique(np.asarray(sorted(marked), dtype=np.int64))
    if marked.size == 0:
        raise ValueError("refine_nvb needs at least one marked triangle")
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise ValueError(f"marked triangle index out of range 0..{mesh.n_triangles - 1}")

    refined = _bisect(mesh, marked)
    if bisections == 3:
        # children still at half the parent area saw only one cut
        from_marked = np.isin(refined.parent, marked)
        once = from_marked & (refined.areas > 0.375 * mesh.areas[refined.parent])
        if once.any():
            second = _bisect(refined, np.flatnonzero(once))
            refined = Mesh(second.vertices, second.triangles, second.boundary, second.boundary_tags,
                           mesh.generation + 1, refined.parent[second.parent])
    logger.debug(
        "refined %d marked of %d triangles -> %d triangles (bisec%d)",
        len(marked), mesh.n_triangles, refined.n_triangles, bisections,
    )
    return refined


def _bisect(mesh, marked):
    t2e = mesh.t2e
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[t2e[marked, 0]] = True

    limit = CLOSURE_FACTOR * mesh.n_triangles
    bisections = int(edge_marked.sum())
    while True:
        pending = edge_marked[t2e].any(axis=1) & ~edge_marked[t2e[:, 0]]
        if not pending.any():
            break
        new = np.unique(t2e[pending, 0])
        edge_marked[new] = True
        bisections += len(new)
        if bisections > limit:
            raise RefinementError(
                f"closure exceeded {limit} bisections; refinement edges are corrupted"
            )

    split = np.flatnonzero(edge_marked)
    nv = mesh.n_vertices
    new_ids = nv + np.arange(len(split))
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints[split]])

    n_total = len(vertices)
    split_keys = mesh.edges[split, 0] * n_total + mesh.edges[split, 1]

    def midpoint_of(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * n_total + hi
        pos = np.clip(np.searchsorted(split_keys, keys), 0, len(split_keys) - 1)
        hit = split_keys[pos] == keys
        return np.where(hit, new_ids[pos], -1)

    tris = mesh.triangles.copy()
    parent = np.arange(mesh.n_triangles)
    # at most three generations: children of the second one only see half edges
    for _ in range(3):
        mid = midpoint_of(tris[:, 1], tris[:, 2])
        cut = mid >= 0
        if not cut.any():
            break
        t = tris[cut]
        m = mid[cut]
        first = np.stack([m, t[:, 0], t[:, 1]], axis=1)
        second = np.stack([m, t[:, 2], t[:, 0]], axis=1)
        tris = np.vstack([tris[~cut], first, second])
        parent = np.concatenate([parent[~cut], parent[cut], parent[cut]])

    # keep children next to each other in parent order
    order = np.argsort(parent, kind="stable")
    tris, parent = tris[order], parent[order]

    boundary, tags = mesh.boundary, mesh.boundary_tags
    if len(boundary):
        bmid = midpoint_of(boundary[:, 0], boundary[:, 1])
        cut = bmid >= 0
        halves_a = np.stack([boundary[cut, 0], bmid[cut]], axis=1)
        halves_b = np.stack([bmid[cut], boundary[cut, 1]], axis=1)
        boundary = np.vstack([boundary[~cut], halves_a, halves_b])
        tags = np.concatenate([tags[~cut], tags[cut], tags[cut]])

    logger.debug("bisected %d edges", len(split))
    return Mesh(vertices, tris, boundary, tags, mesh.generation + 1, parent)


def uniform_refine(mesh, times=1, bisections=1):
    for _ in range(times):
        mesh = refine_nvb(mesh, range(mesh.n_triangles), bisections)
    return mesh


# ═══════════════════════════════════════════════════════════════════════════════
# Metrics and integrity
# ═══════════════════════════════════════════════════════════════════════════════


def mesh_metrics(mesh):
    """Return (h_min, h_T per triangle, h_e per edge)."""
    if mesh.n_triangles == 0:
        raise ValueError("mesh has no triangles")
    h_t = mesh.diameters
    return float(h_t.min()), h_t, mesh.edge_lengths


def check_mesh(mesh, min_angle=None):
    """Scan the mesh for integrity problems.

    Returns a list of human-readable issue strings; an empty list means the
    mesh is conforming, positively oriented, satisfies the Euler relation of
    a simply connected domain, has every boundary edge tagged, and (if
    min_angle is given, in degrees) no angle below the bound.
    """
    issues = []
    _, _, _, incidence = mesh._edge_data
    if np.any(incidence > 2):
        issues.append(f"{int((incidence > 2).sum())} edges shared by more than two triangles")

    bnd = mesh.boundary_edge_ids
    if len(mesh.boundary):
        tags = mesh.edge_tags[bnd]
        if np.any(tags == BoundaryTag.UNASSIGNED):
            # a boundary-like edge that is no boundary segment is a hanging edge
            issues.append(f"{int((tags == BoundaryTag.UNASSIGNED).sum())} boundary edges without a tag "
                          "(hanging vertex or untagged boundary)")
        if len(mesh.boundary) != len(bnd):
            issues.append(f"{len(mesh.boundary)} boundary segments but {len(bnd)} boundary edges")

    if np.any(mesh.areas <= 0):
        issues.append(f"{int((mesh.areas <= 0).sum())} triangles with non-positive signed area")

    euler = mesh.n_vertices - mesh.n_edges + mesh.n_triangles
    if euler != 1:
        issues.append(f"Euler characteristic {euler} != 1")

    if min_angle is not None:
        worst = mesh.min_angle()
        if worst < min_angle:
            issues.append(f"minimum angle {worst:.6f} deg below {min_angle:.6f} deg")
    return issues
