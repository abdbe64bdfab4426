"""
export.py - File output: legacy VTK grids, a plain-text mesh format and Matrix Market.

DG fields are discontinuous, so solution files give every triangle its own
three points; the displacement is the one-sided value at each vertex.
"""

import logging
import os

import numpy as np
from scipy import io as sio

from contact_dg.mesh import Mesh
from contact_dg.space import REFERENCE_NODES, field_values

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5
MESH_TEXT_HEADER = "# contact-dg mesh v1"


def _ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


def _write_cell_data(f, n_cells, cell_data):
    if not cell_data:
        return
    f.write(f"CELL_DATA {n_cells}\n")
    for name, values in cell_data.items():
        values = np.asarray(values, dtype=float)
        if len(values) != n_cells:
            raise ValueError(f"cell field '{name}' has {len(values)} values, mesh has {n_cells} cells")
        f.write(f"SCALARS {name} double 1\n")
        f.write("LOOKUP_TABLE default\n")
        for v in values:
            f.write(f"{v:.10e}\n")


def write_mesh_vtk(path, mesh, cell_data=None, title="contact-dg mesh"):
    """Conforming mesh as a legacy ASCII unstructured grid of triangles."""
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17e} {y:.17e} 0.0\n")
        nt = mesh.n_triangles
        f.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {nt}\n")
        f.write(f"{VTK_TRIANGLE}\n" * nt)
        _write_cell_data(f, nt, cell_data)
    logger.debug("wrote mesh %s (%d triangles)", path, mesh.n_triangles)


def write_solution_vtk(path, mesh, coefficients, cell_data=None, title="contact-dg solution"):
    """Broken mesh with point displacements taken from each triangle's own trace."""
    _ensure_parent(path)
    nt = mesh.n_triangles
    points = mesh.vertices[mesh.triangles].reshape(-1, 2)
    values = field_values(mesh, coefficients, REFERENCE_NODES[:3]).reshape(-1, 2)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {3 * nt} double\n")
        for x, y in points:
            f.write(f"{x:.17e} {y:.17e} 0.0\n")
        f.write(f"CELLS {nt} {4 * nt}\n")
        for t in range(nt):
            f.write(f"3 {3 * t} {3 * t + 1} {3 * t + 2}\n")
        f.write(f"CELL_TYPES {nt}\n")
        f.write(f"{VTK_TRIANGLE}\n" * nt)
        f.write(f"POINT_DATA {3 * nt}\n")
        f.write("VECTORS displacement double\n")
        for ux, uy in values:
            f.write(f"{ux:.17e} {uy:.17e} 0.0\n")
        _write_cell_data(f, nt, cell_data)
    logger.debug("wrote solution %s", path)


# ═══════════════════════════════════════════════════════════════════════════════
# Mesh text format
# ═══════════════════════════════════════════════════════════════════════════════


def write_mesh_text(path, mesh):
    """Vertices, triangles in refinement order (newest vertex first), tagged boundary."""
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(f"{MESH_TEXT_HEADER}\n")
        f.write(f"generation {mesh.generation}\n")
        f.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17e} {y:.17e}\n")
        f.write(f"triangles {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a} {b} {c}\n")
        f.write(f"boundary {len(mesh.boundary)}\n")
        for (a, b), tag in zip(mesh.boundary, mesh.boundary_tags):
            f.write(f"{a} {b} {tag}\n")


def read_mesh_text(path):
    with open(path) as f:
        lines = [line.strip() for line in f if line.strip() and not line.startswith("#")]

    pos = 0

    def section(name):
        nonlocal pos
        key, _, count = lines[pos].partition(" ")
        if key != name:
            raise ValueError(f"{path}: expected section '{name}', found '{lines[pos]}'")
        n = int(count)
        rows = [line.split() for line in lines[pos + 1:pos + 1 + n]]
        if len(rows) != n:
            raise ValueError(f"{path}: section '{name}' is truncated")
        pos += 1 + n
        return rows

    generation = int(lines[pos].split()[1]) if lines[pos].startswith("generation") else 0
    if lines[pos].startswith("generation"):
        pos += 1
    vertices = np.array(section("vertices"), dtype=float).reshape(-1, 2)
    triangles = np.array(section("triangles"), dtype=np.int64).reshape(-1, 3)
    boundary = np.array(section("boundary"), dtype=np.int64).reshape(-1, 3)
    return Mesh(vertices, triangles, boundary[:, :2], boundary[:, 2], generation)


def export_matrix(path, matrix, comment=""):
    """Sparse matrix in Matrix Market coordinate format."""
    _ensure_parent(path)
    sio.mmwrite(path, matrix, comment=comment)
    logger.info("wrote %dx%d matrix (%d nonzeros) to %s", *matrix.shape, matrix.nnz, path)
