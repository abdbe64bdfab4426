import dataclasses

import numpy as np
import pytest

from contact_dg.assembly import (
    DGMethod,
    assemble_load,
    assemble_matrix,
    assemble_system,
    bilinear_form_direct,
    check_coercivity,
    smallest_form_eigenvalue,
    constraint_system,
    hooke_stress,
    trace_jump,
    trace_mean,
)
from contact_dg.mesh import BoundaryTag, Mesh, refine_nvb
from contact_dg.space import DofMap, interpolate

CONTACT = int(BoundaryTag.CONTACT)
NEUMANN = int(BoundaryTag.NEUMANN)


def test_hooke_example():
    stress = hooke_stress(np.array([[1.0, 0.0], [0.0, 0.0]]), mu=1.0, kappa=1.0)
    assert np.allclose(stress, [[3.0, 0.0], [0.0, 1.0]])


def test_hooke_ignores_skew_part(rng):
    grad = rng.standard_normal((5, 2, 2))
    assert np.allclose(hooke_stress(grad, 2.0, 3.0), hooke_stress(np.swapaxes(grad, -1, -2), 2.0, 3.0))
    assert np.allclose(hooke_stress(np.zeros((2, 2)), 2.0, 3.0), 0.0)


@pytest.mark.parametrize("name, theta", [("sipg", -1.0), ("NIPG", 1.0), ("iipg", 0.0)])
def test_method_theta(name, theta):
    assert DGMethod(name).theta == theta


@pytest.mark.parametrize("kwargs", [{"name": "ldg"}, {"name": "sipg", "penalty": 0.0}, {"name": "sipg", "penalty": -1}])
def test_method_validation(kwargs):
    with pytest.raises(ValueError):
        DGMethod(**kwargs)


def test_sipg_symmetric_nipg_not(mp1):
    mesh = mp1.initial_mesh()
    dofmap = DofMap.for_mesh(mesh)
    a_sipg = assemble_matrix(mesh, dofmap, DGMethod("sipg"), mp1.mu, mp1.kappa)
    a_nipg = assemble_matrix(mesh, dofmap, DGMethod("nipg"), mp1.mu, mp1.kappa)
    assert abs(a_sipg - a_sipg.T).max() <= 1e-12 * abs(a_sipg).max()
    assert abs(a_nipg - a_nipg.T).max() > 1e-3


@pytest.mark.parametrize("method", ["sipg", "nipg", "iipg"])
@pytest.mark.parametrize("refinements", [0, 1])
def test_matrix_matches_direct_evaluation(mp1, rng, method, refinements):
    mesh = mp1.initial_mesh()
    if refinements:
        mesh = refine_nvb(mesh, range(mesh.n_triangles))
    assert mesh.n_triangles <= 8
    dofmap = DofMap.for_mesh(mesh)
    dg = DGMethod(method, 25.0)
    matrix = assemble_matrix(mesh, dofmap, dg, 1.5, 0.7)
    w = rng.standard_normal(dofmap.n_dofs)
    v = rng.standard_normal(dofmap.n_dofs)
    direct = bilinear_form_direct(mesh, dg, 1.5, 0.7, w, v)
    assert v @ (matrix @ w) == pytest.approx(direct, rel=1e-10)


def test_penalty_part_scales_with_penalty(mp1_mesh, mp1):
    dofmap = DofMap.for_mesh(mp1_mesh)
    a40 = assemble_matrix(mp1_mesh, dofmap, DGMethod("sipg", 40.0), 1.0, 1.0, parts=("penalty",))
    a80 = assemble_matrix(mp1_mesh, dofmap, DGMethod("sipg", 80.0), 1.0, 1.0, parts=("penalty",))
    assert abs(a80 - 2.0 * a40).max() <= 1e-12 * abs(a80).max()


def test_sipg_minus_iipg_is_symmetry_part(mp1_mesh):
    dofmap = DofMap.for_mesh(mp1_mesh)
    a_sipg = assemble_matrix(mp1_mesh, dofmap, DGMethod("sipg"), 1.0, 1.0)
    a_iipg = assemble_matrix(mp1_mesh, dofmap, DGMethod("iipg"), 1.0, 1.0)
    symmetry = assemble_matrix(mp1_mesh, dofmap, DGMethod("sipg"), 1.0, 1.0, parts=("symmetry",))
    assert abs((a_sipg - a_iipg) - symmetry).max() <= 1e-12 * abs(a_sipg).max()


def test_unknown_part_rejected(mp1_mesh):
    with pytest.raises(ValueError):
        assemble_matrix(mp1_mesh, DofMap.for_mesh(mp1_mesh), DGMethod(), 1.0, 1.0, parts=("mass",))


def test_continuous_field_annihilated_by_jump_terms(mp1_mesh):
    dofmap = DofMap.for_mesh(mp1_mesh)
    # continuous, vanishing on the Dirichlet side y = 1
    w = interpolate(mp1_mesh, lambda x, y: np.stack([x * (1 - y), y * (1 - y)], axis=-1))
    for part in ("penalty", "symmetry"):
        matrix = assemble_matrix(mp1_mesh, dofmap, DGMethod("nipg"), 1.0, 1.0, parts=(part,))
        assert np.max(np.abs(matrix @ w)) <= 1e-11


def test_trace_jump_of_continuous_field(mp1_mesh):
    w = interpolate(mp1_mesh, lambda x, y: np.stack([x * y, x - y**2], axis=-1))
    edge = int(mp1_mesh.edges_with_tag(BoundaryTag.INTERIOR)[0])
    assert np.allclose(trace_jump(mp1_mesh, w, edge, 0.3), 0.0, atol=1e-13)


def test_trace_jump_on_boundary(mp1):
    mesh = mp1.initial_mesh()
    v = interpolate(mesh, lambda x, y: np.stack([np.ones_like(x), np.zeros_like(x)], axis=-1))
    edge = int(mesh.edges_with_tag(BoundaryTag.CONTACT)[0])
    assert np.allclose(mesh.edge_normals[edge], [0.0, -1.0])
    assert np.allclose(trace_jump(mesh, v, edge, 0.5), [[0.0, -1.0], [0.0, 0.0]])


def test_trace_mean_of_equal_sides(mp1_mesh):
    grad = np.array([[0.3, -0.2], [0.5, 1.1]])
    w = interpolate(mp1_mesh, lambda x, y: np.einsum("ij,...j->...i", grad, np.stack([x, y], axis=-1)))
    edge = int(mp1_mesh.edges_with_tag(BoundaryTag.INTERIOR)[2])
    assert np.allclose(trace_mean(mp1_mesh, w, edge, 0.7, 2.0, 3.0), hooke_stress(grad, 2.0, 3.0))


def test_constraint_row_is_simpson_exact(mp1):
    mesh = mp1.initial_mesh()
    dofmap = DofMap.for_mesh(mesh)
    constraints = constraint_system(mesh, dofmap, mp1)
    assert constraints.n_constraints == 1
    # normal component x^2 along the bottom edge: nodal values 0, 1/4, 1
    v = interpolate(mesh, lambda x, y: np.stack([np.zeros_like(x), -x**2], axis=-1))
    assert (constraints.matrix @ v)[0] == pytest.approx(1.0 / 3.0)
    assert constraints.matrix.getrow(0).nnz <= 12


def test_zero_gap_gives_zero_bounds(mp1_mesh, mp1):
    constraints = constraint_system(mp1_mesh, DofMap.for_mesh(mp1_mesh), mp1)
    assert constraints.n_constraints == 2
    assert np.all(constraints.bounds == 0.0)


def test_wedge_gap_integral_splits_at_tip(mp2):
    mesh = Mesh.from_arrays([[0.0, 0.4], [1.0, 0.4], [1.0, 0.6], [0.0, 0.6]], [[0, 1, 2], [0, 2, 3]])
    mesh = mesh.with_boundary_tags(
        lambda mids: np.where(np.abs(mids[:, 0] - 1.0) < 1e-12, CONTACT, NEUMANN)
    )
    constraints = constraint_system(mesh, DofMap.for_mesh(mesh), mp2)
    assert constraints.bounds.tolist() == pytest.approx([-0.035], rel=1e-12)


def test_two_contact_edges_rejected(mp1):
    mesh = Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    mesh = mesh.with_boundary_tags(lambda mids: np.full(len(mids), CONTACT))
    with pytest.raises(ValueError):
        constraint_system(mesh, DofMap.for_mesh(mesh), mp1)


def test_no_contact_edges_gives_empty_system(patch):
    mesh = patch.initial_mesh()
    dofmap = DofMap.for_mesh(mesh)
    constraints = constraint_system(mesh, dofmap, patch)
    assert constraints.matrix.shape == (0, dofmap.n_dofs)
    assert constraints.bounds.shape == (0,)


def test_non_finite_data_rejected(mp1):
    bad = dataclasses.replace(mp1, body_force=lambda x, y: np.full(np.shape(x) + (2,), np.nan))
    mesh = bad.initial_mesh()
    with pytest.raises(ValueError):
        assemble_load(mesh, DofMap.for_mesh(mesh), DGMethod(), bad)


def test_patch_solution_satisfies_discrete_equations(patch):
    # the exact quadratic lies in the space, so it solves A u = b exactly
    mesh = refine_nvb(patch.initial_mesh(), [1, 3])
    dofmap = DofMap.for_mesh(mesh)
    for name in ("sipg", "nipg", "iipg"):
        system = assemble_system(mesh, dofmap, DGMethod(name), patch)
        u = interpolate(mesh, patch.exact)
        residual = system.matrix @ u - system.rhs
        assert np.max(np.abs(residual)) <= 1e-10 * (1 + np.max(np.abs(system.rhs)))


def test_coercivity_check():
    assert check_coercivity(DGMethod("sipg", 40.0), 1.0, 1.0)
    assert smallest_form_eigenvalue(DGMethod("sipg", 1e-4), 1.0, 1.0) < 0


def test_penalty_part_scales_with_shear_modulus(mp1_mesh):
    dofmap = DofMap.for_mesh(mp1_mesh)
    soft = assemble_matrix(mp1_mesh, dofmap, DGMethod("sipg", 40.0), 1.0, 1.0, parts=("penalty",))
    stiff = assemble_matrix(mp1_mesh, dofmap, DGMethod("sipg", 40.0), 192.0, 1.0, parts=("penalty",))
    assert abs(stiff - 192.0 * soft).max() <= 1e-12 * abs(stiff).max()


def test_default_penalty_is_coercive_for_wedge_material(mp2):
    assert check_coercivity(DGMethod("sipg"), mp2.mu, mp2.kappa)
    assert smallest_form_eigenvalue(DGMethod("sipg"), mp2.mu, mp2.kappa) > 0
