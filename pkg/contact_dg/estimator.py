"""
estimator.py - Maximum-norm residual estimator for the DG contact solution.

Global terms (each a maximum over its entity set, sampled on the fixed
grids of the space module):

    eta1  h_T^2 |f + div Xi(u_h)|               triangles
    eta2  h_e |[[Xi(u_h)]]|                     interior edges
    eta3  h_e |pi - Xi(u_h) n|                  Neumann edges
    eta4  h_e |Xi(u_h) n + sigma_h|             contact edges
    eta5  |[[u_h]]|, |u_h - g_D| on Dirichlet   interior and Dirichlet edges
    eta6  (E_h u_h . n - chi)^+                 contact edges
    eta7  (chi - E_h u_h . n)^+                 contact edges carrying force

total = (1 + ln^2 h_min) (eta1 + ... + eta5) + eta6 + eta7.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from contact_dg.assembly import hooke_stress, stress_jump
from contact_dg.mesh import BoundaryTag, mesh_metrics
from contact_dg.space import (
    EDGE_SAMPLES,
    TRIANGLE_SAMPLES,
    edge_points,
    edge_traces,
    field_hessians,
    field_values,
    physical_points,
)

logger = logging.getLogger(__name__)

N_ETA = 7
FORCE_THRESHOLD = 1e-9
EDGE_COLUMNS = ("eta2", "eta3", "eta4", "eta5", "eta6", "eta7")


@dataclass(frozen=True, eq=False)
class EnrichedSolution:
    """Continuous P2 field E_h u_h.

    node_values holds one value per global node (vertices, then edge
    midpoints); coefficients is the same field in the DG layout.
    """

    node_values: np.ndarray
    coefficients: np.ndarray


@dataclass(frozen=True, eq=False)
class EstimatorReport:
    eta: np.ndarray
    element_eta1: np.ndarray
    edge_terms: np.ndarray
    indicators: np.ndarray
    h_min: float
    total: float

    def as_dict(self):
        return {f"eta{i + 1}": float(v) for i, v in enumerate(self.eta)}


@dataclass(frozen=True, eq=False)
class OscillationReport:
    element: np.ndarray
    edge: np.ndarray

    @property
    def max_f(self):
        return float(self.element.max(initial=0.0))

    @property
    def max_pi(self):
        return float(self.edge.max(initial=0.0))


def _sup(values):
    """Max over trailing sample and component axes, per entity."""
    values = np.abs(values)
    return values.reshape(values.shape[0], -1).max(axis=1) if values.size else np.zeros(values.shape[0])


# ═══════════════════════════════════════════════════════════════════════════════
# Smoothing
# ═══════════════════════════════════════════════════════════════════════════════


def global_nodes(mesh):
    """(nt, 6) global node of each local P2 node: vertex ids, then n_vertices + edge id."""
    nv = mesh.n_vertices
    t2e = mesh.t2e
    # local midpoints 3, 4, 5 sit on the edges opposite vertices 2, 0, 1
    return np.hstack([mesh.triangles, nv + t2e[:, [2, 0, 1]]])


def enrich(mesh, dofmap, coefficients, problem):
    """Average one-sided nodal values; Dirichlet vertices and midpoints take g_D."""
    nodes = global_nodes(mesh)
    n_nodes = mesh.n_vertices + mesh.n_edges
    local = np.asarray(coefficients, dtype=float).reshape(dofmap.n_triangles, 6, 2)
    counts = np.bincount(nodes.ravel(), minlength=n_nodes)
    values = np.stack(
        [np.bincount(nodes.ravel(), weights=local[..., c].ravel(), minlength=n_nodes) for c in range(2)],
        axis=1,
    ) / np.maximum(counts, 1)[:, None]

    dirichlet = mesh.edges_with_tag(BoundaryTag.DIRICHLET)
    if len(dirichlet):
        vertex_ids = np.unique(mesh.edges[dirichlet])
        ids = np.concatenate([vertex_ids, mesh.n_vertices + dirichlet])
        coords = np.vstack([mesh.vertices[vertex_ids], mesh.edge_midpoints[dirichlet]])
        values[ids] = np.asarray(problem.dirichlet_value(coords[:, 0], coords[:, 1]), dtype=float)

    return EnrichedSolution(values, values[nodes].reshape(-1))


def smoothing_gap(mesh, coefficients, enriched):
    """(max_T |E_h u_h - u_h|, max interior jump, ratio) on the sampling grids."""
    diff = field_values(mesh, np.asarray(coefficients) - enriched.coefficients, TRIANGLE_SAMPLES)
    gap = float(np.abs(diff).max(initial=0.0))
    interior = mesh.edges_with_tag(BoundaryTag.INTERIOR)
    jump = 0.0
    if len(interior):
        u1, _ = edge_traces(mesh, coefficients, interior, EDGE_SAMPLES, side=0)
        u2, _ = edge_traces(mesh, coefficients, interior, EDGE_SAMPLES, side=1)
        jump = float(np.abs(u1 - u2).max())
    ratio = gap / jump if jump > 0 else 0.0
    logger.debug("smoothing gap %.3e, max jump %.3e, ratio %.3f", gap, jump, ratio)
    return gap, jump, ratio


# ═══════════════════════════════════════════════════════════════════════════════
# Estimators
# ═══════════════════════════════════════════════════════════════════════════════


def stress_divergence(mesh, coefficients, mu, kappa):
    """div Xi(u_h) per triangle (constant for quadratics), shape (nt, 2)."""
    hess = field_hessians(mesh, coefficients)
    laplace = hess[:, :, 0, 0] + hess[:, :, 1, 1]
    grad_div = hess[:, 0, 0, :] + hess[:, 1, 1, :]
    return mu * (laplace + grad_div) + kappa * grad_div


def estimate(mesh, dofmap, coefficients, sigma, problem, enriched=None):
    """Evaluate eta1..eta7, per-element indicators and the total.

    Args:
        mesh: Tagged Mesh the solution lives on.
        dofmap: DofMap of the DG space.
        coefficients: DG coefficient vector u_h.
        sigma: ContactForceDensity on every contact edge; may be None when
            the mesh has no contact boundary.
        problem: ProblemSpec supplying f, pi, g_D and chi.
        enriched: E_h u_h from `enrich`, recomputed when None.

    Returns:
        EstimatorReport. `indicators[T]` is eta1 on T plus the edge terms of
        its three edges, interior edges counting half on each side.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    contact = mesh.edges_with_tag(BoundaryTag.CONTACT)
    if len(contact) and (sigma is None or len(sigma.edge_ids) != len(contact)):
        raise ValueError("contact force density is required on every contact edge")
    if enriched is None:
        enriched = enrich(mesh, dofmap, coefficients, problem)
    mu, kappa = problem.mu, problem.kappa
    h_min, h_t, h_e = mesh_metrics(mesh)

    x = physical_points(mesh, TRIANGLE_SAMPLES)
    f = np.asarray(problem.body_force(x[..., 0], x[..., 1]), dtype=float)
    residual = f + stress_divergence(mesh, coefficients, mu, kappa)[:, None, :]
    eta1 = h_t**2 * _sup(residual)

    edge_terms = np.zeros((mesh.n_edges, len(EDGE_COLUMNS)))

    interior = mesh.edges_with_tag(BoundaryTag.INTERIOR)
    if len(interior):
        edge_terms[interior, 0] = h_e[interior] * _sup(stress_jump(mesh, coefficients, interior, EDGE_SAMPLES, mu, kappa))
        u1, _ = edge_traces(mesh, coefficients, interior, EDGE_SAMPLES, side=0)
        u2, _ = edge_traces(mesh, coefficients, interior, EDGE_SAMPLES, side=1)
        edge_terms[interior, 3] = _sup(u1 - u2)

    neumann = mesh.edges_with_tag(BoundaryTag.NEUMANN)
    if len(neumann):
        pts = edge_points(mesh, neumann, EDGE_SAMPLES)
        normals = mesh.edge_normals[neumann]
        nrm = np.broadcast_to(normals[:, None, :], pts.shape)
        pi = np.asarray(problem.traction(pts[..., 0], pts[..., 1], nrm[..., 0], nrm[..., 1]), dtype=float)
        _, grads = edge_traces(mesh, coefficients, neumann, EDGE_SAMPLES)
        traction = np.einsum("eqij,ej->eqi", hooke_stress(grads, mu, kappa), normals)
        edge_terms[neumann, 1] = h_e[neumann] * _sup(pi - traction)

    dirichlet = mesh.edges_with_tag(BoundaryTag.DIRICHLET)
    if len(dirichlet):
        pts = edge_points(mesh, dirichlet, EDGE_SAMPLES)
        g = np.asarray(problem.dirichlet_value(pts[..., 0], pts[..., 1]), dtype=float)
        u, _ = edge_traces(mesh, coefficients, dirichlet, EDGE_SAMPLES)
        edge_terms[dirichlet, 3] = _sup(u - g)

    if len(contact):
        normals = mesh.edge_normals[contact]
        _, grads = edge_traces(mesh, coefficients, contact, EDGE_SAMPLES)
        traction = np.einsum("eqij,ej->eqi", hooke_stress(grads, mu, kappa), normals)
        edge_terms[contact, 2] = h_e[contact] * _sup(traction + sigma.vectors[:, None, :])

        pts = edge_points(mesh, contact, EDGE_SAMPLES)
        chi = np.asarray(problem.gap(pts[..., 0], pts[..., 1]), dtype=float)
        smooth, _ = edge_traces(mesh, enriched.coefficients, contact, EDGE_SAMPLES)
        normal_trace = np.einsum("eqi,ei->eq", smooth, normals)
        edge_terms[contact, 4] = np.maximum(normal_trace - chi, 0.0).max(axis=1)
        scale = max(1.0, float(np.abs(sigma.sigma_n).max()))
        pressed = sigma.sigma_n > FORCE_THRESHOLD * scale
        edge_terms[contact[pressed], 5] = np.maximum(chi[pressed] - normal_trace[pressed], 0.0).max(axis=1)

    eta = np.zeros(N_ETA)
    eta[0] = eta1.max(initial=0.0)
    eta[1:] = edge_terms.max(axis=0, initial=0.0)

    # interior edge terms are shared by both neighbours
    weight = np.where(mesh.e2t[:, 1] >= 0, 0.5, 1.0)
    per_edge = weight * edge_terms.sum(axis=1)
    indicators = eta1 + per_edge[mesh.t2e].sum(axis=1)

    total = total_estimator(eta, h_min)
    logger.debug("estimator: %s total %.6e", " ".join(f"{v:.3e}" for v in eta), total)
    return EstimatorReport(eta, eta1, edge_terms, indicators, h_min, total)


def total_estimator(eta, h_min):
    """(1 + |ln h_min|^2) (eta1 + ... + eta5) + eta6 + eta7."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (N_ETA,):
        raise ValueError(f"expected {N_ETA} estimator contributions, got {eta.shape}")
    if not h_min > 0:
        raise ValueError(f"h_min must be positive, got {h_min}")
    return float((1.0 + np.log(h_min) ** 2) * eta[:5].sum() + eta[5] + eta[6])


def oscillations(mesh, problem):
    """Data oscillation against centroid values of f and midpoint values of pi."""
    x = physical_points(mesh, TRIANGLE_SAMPLES)
    f = np.asarray(problem.body_force(x[..., 0], x[..., 1]), dtype=float)
    c = mesh.centroids
    f_bar = np.asarray(problem.body_force(c[:, 0], c[:, 1]), dtype=float)
    element = mesh.diameters**2 * _sup(f - f_bar[:, None, :])

    edge = np.zeros(mesh.n_edges)
    neumann = mesh.edges_with_tag(BoundaryTag.NEUMANN)
    if len(neumann):
        pts = edge_points(mesh, neumann, EDGE_SAMPLES)
        normals = mesh.edge_normals[neumann]
        nrm = np.broadcast_to(normals[:, None, :], pts.shape)
        pi = np.asarray(problem.traction(pts[..., 0], pts[..., 1], nrm[..., 0], nrm[..., 1]), dtype=float)
        mid = mesh.edge_midpoints[neumann]
        pi_bar = np.asarray(problem.traction(mid[:, 0], mid[:, 1], normals[:, 0], normals[:, 1]), dtype=float)
        edge[neumann] = mesh.edge_lengths[neumann] * _sup(pi - pi_bar[:, None, :])
    return OscillationReport(element, edge)


# ═══════════════════════════════════════════════════════════════════════════════
# Export
# ═══════════════════════════════════════════════════════════════════════════════


def write_estimator_tables(report, mesh, element_path, edge_path):
    """Per-triangle and per-edge breakdowns as CSV."""
    with open(element_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "type", "eta1", "indicator"])
        for t in range(mesh.n_triangles):
            writer.writerow([t, "triangle", f"{report.element_eta1[t]:.17e}", f"{report.indicators[t]:.17e}"])

    with open(edge_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "type", *EDGE_COLUMNS])
        tags = mesh.edge_tags
        for e in range(mesh.n_edges):
            kind = BoundaryTag(int(tags[e])).name.lower()
            writer.writerow([e, kind, *(f"{v:.17e}" for v in report.edge_terms[e])])
