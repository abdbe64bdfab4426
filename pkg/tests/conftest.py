import numpy as np
import pytest

from contact_dg.assembly import DGMethod
from contact_dg.mesh import uniform_refine
from contact_dg.problems import model_problem_1, model_problem_2, patch_problem


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-level adaptive runs")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def mp1():
    return model_problem_1()


@pytest.fixture
def mp2():
    return model_problem_2()


@pytest.fixture
def patch():
    return patch_problem()


@pytest.fixture
def sipg():
    return DGMethod("sipg", 40.0)


@pytest.fixture
def mp1_mesh(mp1):
    """MP1 partition on the square after two uniform bisection passes (16 triangles)."""
    return uniform_refine(mp1.initial_mesh(), 2)
