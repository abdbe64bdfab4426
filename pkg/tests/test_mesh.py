import numpy as np
import pytest

from contact_dg.mesh import (
    BoundaryTag,
    Mesh,
    check_mesh,
    mesh_metrics,
    refine_nvb,
    uniform_refine,
    unit_square_initial_mesh,
)


def test_initial_mesh_counts():
    mesh = unit_square_initial_mesh()
    assert mesh.n_vertices == 5
    assert mesh.n_triangles == 4
    assert mesh.n_edges == 8
    assert np.allclose(mesh.areas, 0.25)


def test_initial_refinement_edges_are_boundary_edges():
    mesh = unit_square_initial_mesh()
    assert set(mesh.t2e[:, 0]) == set(mesh.boundary_edge_ids)
    # refinement edge is the longest edge
    assert np.allclose(mesh.edge_lengths[mesh.t2e[:, 0]], 1.0)


def test_from_arrays_seeds_longest_edge_and_orientation():
    mesh = Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert mesh.triangles.tolist() == [[0, 1, 2]]
    assert mesh.areas[0] == pytest.approx(0.5)


def test_local_edge_is_opposite_vertex(mp1_mesh):
    for t in range(mp1_mesh.n_triangles):
        for k in range(3):
            edge = set(mp1_mesh.edges[mp1_mesh.t2e[t, k]])
            assert mp1_mesh.triangles[t, k] not in edge


def test_boundary_normals_point_outward(mp1_mesh):
    bnd = mp1_mesh.boundary_edge_ids
    mids = mp1_mesh.edge_midpoints[bnd]
    outward = mids + 1e-3 * mp1_mesh.edge_normals[bnd]
    outside = (outward < 0).any(axis=1) | (outward > 1).any(axis=1)
    assert outside.all()


def test_parent_area_is_sum_of_children(mp1):
    mesh = mp1.initial_mesh()
    refined = refine_nvb(mesh, [0])
    sums = np.bincount(refined.parent, weights=refined.areas, minlength=mesh.n_triangles)
    assert np.allclose(sums, mesh.areas)


def test_refine_single_triangle_closure_is_conforming(mp1):
    mesh = mp1.initial_mesh()
    for _ in range(6):
        mesh = refine_nvb(mesh, [0])
        assert check_mesh(mesh, min_angle=22.5) == []
    assert mesh.generation == 6


def test_adaptive_refinement_keeps_invariants(mp1, rng):
    mesh = mp1.initial_mesh()
    for _ in range(8):
        marked = rng.choice(mesh.n_triangles, size=max(1, mesh.n_triangles // 5), replace=False)
        mesh = refine_nvb(mesh, marked)
        assert check_mesh(mesh, min_angle=22.5) == []
        assert mesh.n_vertices - mesh.n_edges + mesh.n_triangles == 1
        assert np.all(mesh.areas > 0)
    assert mesh.areas.sum() == pytest.approx(1.0)


def test_boundary_tags_are_inherited(mp1):
    mesh = uniform_refine(mp1.initial_mesh(), 3)
    tags = mesh.edge_tags[mesh.boundary_edge_ids]
    assert not np.any(tags == BoundaryTag.UNASSIGNED)
    contact = mesh.edges_with_tag(BoundaryTag.CONTACT)
    assert np.allclose(mesh.edge_midpoints[contact, 1], 0.0)
    assert mesh.edge_lengths[contact].sum() == pytest.approx(1.0)
    dirichlet = mesh.edges_with_tag(BoundaryTag.DIRICHLET)
    assert np.allclose(mesh.edge_midpoints[dirichlet, 1], 1.0)


def test_uniform_refinement_keeps_min_angle():
    mesh = uniform_refine(unit_square_initial_mesh(), 10)
    assert mesh.n_triangles == 4 * 2**10
    assert mesh.min_angle() == pytest.approx(45.0)


def test_mesh_metrics(mp1_mesh):
    h_min, h_t, h_e = mesh_metrics(mp1_mesh)
    assert h_min == pytest.approx(0.5)
    assert len(h_t) == mp1_mesh.n_triangles
    assert len(h_e) == mp1_mesh.n_edges


def test_mesh_metrics_rejects_empty_mesh():
    with pytest.raises(ValueError):
        mesh_metrics(Mesh(np.zeros((0, 2)), np.zeros((0, 3))))


@pytest.mark.parametrize("marked", [[], [99], [-1]])
def test_refine_rejects_bad_marks(marked):
    with pytest.raises(ValueError):
        refine_nvb(unit_square_initial_mesh(), marked)


def test_two_contact_edges_in_one_triangle_rejected():
    mesh = Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    mesh = mesh.with_boundary_tags(lambda mids: np.full(len(mids), int(BoundaryTag.CONTACT)))
    with pytest.raises(ValueError):
        mesh.contact_edge_of_triangle()


def test_check_mesh_reports_angle_violation():
    mesh = Mesh.from_arrays([[0, 0], [1, 0], [0.5, 0.01]], [[0, 1, 2]])
    issues = check_mesh(mesh, min_angle=10.0)
    assert any("minimum angle" in issue for issue in issues)


def test_check_mesh_reports_missing_tags(mp1):
    mesh = mp1.initial_mesh()
    broken = Mesh(mesh.vertices, mesh.triangles, mesh.boundary[:-1], mesh.boundary_tags[:-1])
    assert check_mesh(broken) != []


def test_three_bisections_quarter_every_marked_triangle(mp1, rng):
    mesh = uniform_refine(mp1.initial_mesh(), 2)
    for _ in range(4):
        marked = rng.choice(mesh.n_triangles, size=max(1, mesh.n_triangles // 4), replace=False)
        refined = refine_nvb(mesh, marked, bisections=3)
        assert check_mesh(refined, min_angle=22.5) == []
        children = np.bincount(refined.parent, minlength=mesh.n_triangles)
        assert np.all(children[marked] >= 4)
        from_marked = np.isin(refined.parent, marked)
        ratio = refined.areas[from_marked] / mesh.areas[refined.parent[from_marked]]
        assert ratio.max() <= 0.25 + 1e-12
        sums = np.bincount(refined.parent, weights=refined.areas, minlength=mesh.n_triangles)
        assert np.allclose(sums, mesh.areas, rtol=1e-12)
        assert refined.generation == mesh.generation + 1
        mesh = refined


def test_uniform_three_bisections_halve_the_mesh_size():
    mesh = unit_square_initial_mesh()
    refined = uniform_refine(mesh, 2, bisections=3)
    assert refined.n_triangles == 4 * 4**2
    assert np.allclose(refined.areas, 1.0 / refined.n_triangles)
    assert refined.diameters.max() == pytest.approx(0.25)
    assert refined.min_angle() == pytest.approx(45.0)


def test_unknown_bisection_mode_rejected():
    with pytest.raises(ValueError):
        refine_nvb(unit_square_initial_mesh(), [0], bisections=2)
