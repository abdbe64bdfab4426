import numpy as np
import pytest
from scipy import io as sio

from contact_dg.assembly import DGMethod, assemble_matrix
from contact_dg.export import export_matrix, read_mesh_text, write_mesh_text, write_mesh_vtk, write_solution_vtk
from contact_dg.mesh import refine_nvb
from contact_dg.space import DofMap, interpolate


def test_mesh_vtk_layout(tmp_path, mp1_mesh):
    path = tmp_path / "mesh.vtk"
    write_mesh_vtk(path, mp1_mesh, cell_data={"area": mp1_mesh.areas})
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert "DATASET UNSTRUCTURED_GRID" in lines
    assert f"POINTS {mp1_mesh.n_vertices} double" in lines
    start = lines.index(f"CELL_TYPES {mp1_mesh.n_triangles}")
    assert lines[start + 1:start + 1 + mp1_mesh.n_triangles] == ["5"] * mp1_mesh.n_triangles
    assert f"CELL_DATA {mp1_mesh.n_triangles}" in lines


def test_cell_data_length_checked(tmp_path, mp1_mesh):
    with pytest.raises(ValueError):
        write_mesh_vtk(tmp_path / "bad.vtk", mp1_mesh, cell_data={"x": np.zeros(3)})


def test_solution_vtk_has_broken_points(tmp_path, mp1_mesh):
    u = interpolate(mp1_mesh, lambda x, y: np.stack([x, -y], axis=-1))
    path = tmp_path / "nested" / "solution.vtk"
    write_solution_vtk(path, mp1_mesh, u)
    lines = path.read_text().splitlines()
    n_points = 3 * mp1_mesh.n_triangles
    assert f"POINTS {n_points} double" in lines
    start = lines.index("VECTORS displacement double")
    first = np.array(lines[start + 1].split(), dtype=float)
    x, y = mp1_mesh.vertices[mp1_mesh.triangles[0, 0]]
    assert np.allclose(first, [x, -y, 0.0])


def test_mesh_text_round_trip(tmp_path, mp2):
    mesh = refine_nvb(mp2.initial_mesh(), [0, 3])
    path = tmp_path / "mesh.txt"
    write_mesh_text(path, mesh)
    loaded = read_mesh_text(path)
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.triangles, mesh.triangles)
    assert np.array_equal(loaded.edge_tags, mesh.edge_tags)
    assert loaded.generation == mesh.generation


def test_mesh_text_rejects_missing_section(tmp_path):
    path = tmp_path / "broken.txt"
    path.write_text("vertices 1\n0 0\nfaces 0\n")
    with pytest.raises(ValueError):
        read_mesh_text(path)


def test_matrix_market_export(tmp_path, mp1_mesh):
    matrix = assemble_matrix(mp1_mesh, DofMap.for_mesh(mp1_mesh), DGMethod("nipg"), 1.0, 1.0)
    path = tmp_path / "a.mtx"
    export_matrix(path, matrix, comment="nipg")
    loaded = sio.mmread(str(path)).tocsr()
    assert abs(loaded - matrix).max() <= 1e-12 * abs(matrix).max()
