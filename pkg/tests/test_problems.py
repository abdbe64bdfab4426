import dataclasses
import json

import numpy as np
import pytest

from contact_dg.assembly import hooke_stress
from contact_dg.mesh import BoundaryTag
from contact_dg.problems import (
    PROBLEMS,
    get_problem,
    lame_from_young_poisson,
    load_problem_config,
    problem_from_dict,
    side_predicate,
    wedge_gap,
)


def test_lame_parameters_of_wedge_material():
    mu, kappa = lame_from_young_poisson(500.0, 0.3)
    assert mu == pytest.approx(192.307692, rel=1e-8)
    assert kappa == pytest.approx(288.461538, rel=1e-8)
    assert lame_from_young_poisson(2.6, 0.3)[0] == pytest.approx(1.0)


@pytest.mark.parametrize("young, poisson", [(500.0, 0.5), (500.0, 0.7), (0.0, 0.3), (-1.0, 0.3), (1.0, -1.0)])
def test_lame_rejects_bad_material(young, poisson):
    with pytest.raises(ValueError):
        lame_from_young_poisson(young, poisson)


def test_zero_poisson_gives_zero_kappa_which_problems_reject(mp1):
    mu, kappa = lame_from_young_poisson(1.0, 0.0)
    assert (mu, kappa) == (0.5, 0.0)
    with pytest.raises(ValueError):
        dataclasses.replace(mp1, kappa=kappa)


def test_registry():
    assert set(PROBLEMS) == {"mp1", "mp2", "patch"}
    assert get_problem("mp2").name == "mp2"
    with pytest.raises(ValueError):
        get_problem("mp3")


def test_side_predicate():
    pred = side_predicate("left", "top")
    hits = pred(np.array([[0.0, 0.5], [0.5, 1.0], [1.0, 0.5], [0.5, 0.0]]))
    assert hits.tolist() == [True, True, False, False]
    with pytest.raises(ValueError):
        side_predicate("front")


@pytest.mark.parametrize("name", ["mp1", "mp2", "patch"])
def test_boundary_partition_covers_every_edge(name):
    mesh = get_problem(name).initial_mesh()
    tags = mesh.edge_tags[mesh.boundary_edge_ids]
    assert np.all(tags > BoundaryTag.INTERIOR)


def test_partition_gaps_are_rejected(mp1):
    with pytest.raises(ValueError):
        mp1.classify_boundary([[0.5, 0.5]])


def test_mp1_layout(mp1):
    mesh = mp1.initial_mesh()
    for tag, axis, value in [(BoundaryTag.DIRICHLET, 1, 1.0), (BoundaryTag.CONTACT, 1, 0.0)]:
        edges = mesh.edges_with_tag(tag)
        assert np.allclose(mesh.edge_midpoints[edges, axis], value)
    assert mp1.mu == mp1.kappa == 1.0


def test_mp1_exact_solution_satisfies_boundary_conditions(mp1):
    x = np.linspace(0, 1, 11)
    assert np.allclose(mp1.exact(x, np.ones_like(x)), 0.0)
    # in contact along y = 0 with compressive normal stress -3 (2 - x)
    assert np.allclose(mp1.exact(x, np.zeros_like(x)), 0.0)
    stress = hooke_stress(mp1.exact_grad(x, np.zeros_like(x)), mp1.mu, mp1.kappa)
    assert np.allclose(stress[:, 1, 1], -3.0 * (2.0 - x))
    assert np.allclose(stress[:, 0, 1], 0.0)


def test_mp1_body_force_matches_finite_differences(mp1):
    x, y, h = 0.3, 0.6, 1e-4

    def stress(px, py):
        return hooke_stress(mp1.exact_grad(px, py), mp1.mu, mp1.kappa)

    div = (stress(x + h, y)[:, 0] - stress(x - h, y)[:, 0] + stress(x, y + h)[:, 1] - stress(x, y - h)[:, 1]) / (2 * h)
    assert np.allclose(mp1.body_force(x, y), -div, atol=1e-6)


def test_mp1_traction_uses_normal(mp1):
    grad = mp1.exact_grad(0.0, 0.4)
    expected = hooke_stress(grad, 1.0, 1.0) @ np.array([-1.0, 0.0])
    assert np.allclose(mp1.traction(0.0, 0.4, -1.0, 0.0), expected)


def test_mp2_data(mp2):
    assert wedge_gap(1.0, 0.5) == pytest.approx(-0.2)
    assert wedge_gap(1.0, 0.0) == pytest.approx(0.05)
    assert np.allclose(mp2.dirichlet_value(np.zeros(3), np.linspace(0, 1, 3)), [[-0.1, 0.0]] * 3)
    assert np.allclose(mp2.body_force(np.array([0.2]), np.array([0.3])), 0.0)
    assert mp2.gap_kinks == ((1.0, 0.5),)
    assert not mp2.has_exact


def test_patch_is_quadratic_with_constant_load(patch):
    assert np.allclose(patch.body_force(np.array([0.1, 0.9]), np.array([0.4, 0.2])), [[-5.0, -4.6]] * 2)


def test_json_problem_with_exact_solution(tmp_path, patch):
    data = {
        "name": "json-patch",
        "boundary": {"dirichlet": ["left"], "neumann": ["right", "bottom", "top"]},
        "lame": {"mu": 1.0, "kappa": 1.0},
        "gap": "0",
        "exact": ["0.1 + x**2 - x*y + 0.5*y**2", "0.2*x - 0.3*y + 0.3*x**2 - x*y + y**2"],
    }
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(data))
    problem = load_problem_config(path)
    x, y = np.array([0.2, 0.7]), np.array([0.5, 0.1])
    assert problem.name == "json-patch"
    assert np.allclose(problem.exact(x, y), patch.exact(x, y))
    assert np.allclose(problem.exact_grad(x, y), patch.exact_grad(x, y))
    assert np.allclose(problem.body_force(x, y), patch.body_force(x, y))
    nx, ny = np.array([1.0, 0.0]), np.array([0.0, -1.0])
    assert np.allclose(problem.traction(x, y, nx, ny), patch.traction(x, y, nx, ny))


def test_json_problem_with_data_expressions():
    problem = problem_from_dict({
        "boundary": {"dirichlet": ["left"], "neumann": ["top", "bottom"], "contact": ["right"]},
        "lame": {"young": 500, "poisson": 0.3},
        "gap": "-0.2 + 0.5*Abs(y - 0.5)",
        "gap_kinks": [[1.0, 0.5]],
        "dirichlet_value": ["-0.1", "0"],
        "traction": ["0", "-nx"],
    })
    y = np.linspace(0, 1, 5)
    assert np.allclose(problem.gap(np.ones(5), y), wedge_gap(1.0, y))
    assert problem.mu == pytest.approx(192.307692, rel=1e-8)
    assert np.allclose(problem.traction(np.zeros(2), np.zeros(2), np.array([0.0, 1.0]), np.zeros(2)),
                       [[0.0, -0.0], [0.0, -1.0]])
    assert problem.gap_kinks == ((1.0, 0.5),)


@pytest.mark.parametrize("data", [
    {"boundary": {"neumann": ["left"]}},
    {"boundary": {"dirichlet": ["left"]}, "gap": "x +* 2"},
    {"boundary": {"dirichlet": ["left"]}, "exact": ["x"]},
    {"boundary": {"dirichlet": ["middle"]}},
])
def test_json_problem_errors(data):
    with pytest.raises(ValueError):
        problem_from_dict(data)


def _difference_stress(problem, x, y, h):
    du_dx = (problem.exact(x + h, y) - problem.exact(x - h, y)) / (2 * h)
    du_dy = (problem.exact(x, y + h) - problem.exact(x, y - h)) / (2 * h)
    return hooke_stress(np.stack([du_dx, du_dy], axis=-1), problem.mu, problem.kappa)


@pytest.fixture
def lattice():
    return np.meshgrid(np.linspace(0.0, 1.0, 20), np.linspace(0.0, 1.0, 20))


def test_mp1_body_force_on_lattice(mp1, lattice):
    x, y = lattice
    h = 1e-4
    div = (
        _difference_stress(mp1, x + h, y, h)[..., 0] - _difference_stress(mp1, x - h, y, h)[..., 0]
        + _difference_stress(mp1, x, y + h, h)[..., 1] - _difference_stress(mp1, x, y - h, h)[..., 1]
    ) / (2 * h)
    f = mp1.body_force(x, y)
    assert f.shape == (20, 20, 2)
    assert np.allclose(f, -div, rtol=1e-6, atol=1e-6 * np.abs(f).max())


@pytest.mark.parametrize("normal", [(1.0, 0.0), (-1.0, 0.0), (0.0, -1.0)])
def test_mp1_traction_on_lattice(mp1, lattice, normal):
    x, y = lattice
    nx, ny = np.full_like(x, normal[0]), np.full_like(x, normal[1])
    expected = np.einsum("...ij,j->...i", _difference_stress(mp1, x, y, 1e-5), np.array(normal))
    pi = mp1.traction(x, y, nx, ny)
    assert np.allclose(pi, expected, rtol=1e-6, atol=1e-6 * np.abs(expected).max())


@pytest.mark.parametrize("name", ["mp1", "mp2"])
def test_contact_and_dirichlet_closures_are_disjoint(name):
    from contact_dg.mesh import uniform_refine

    mesh = uniform_refine(get_problem(name).initial_mesh(), 3)
    contact = set(mesh.edges[mesh.edges_with_tag(BoundaryTag.CONTACT)].ravel().tolist())
    dirichlet = set(mesh.edges[mesh.edges_with_tag(BoundaryTag.DIRICHLET)].ravel().tolist())
    assert contact and dirichlet
    assert contact.isdisjoint(dirichlet)
