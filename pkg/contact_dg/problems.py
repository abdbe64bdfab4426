"""
Problem definitions for unilateral contact of a linear elastic body.

Holds the two model problems (rigid foundation, rigid wedge), a contact-free
patch problem with a quadratic exact solution, and a loader for custom
problems written as JSON with sympy expression strings.

Data closures are vectorized: they take coordinate arrays x, y of any shape
and return arrays with a trailing component axis of length 2 (scalars for
the gap). Tractions additionally receive the outward normal components.
"""

import json
import logging
from dataclasses import dataclass, replace
from tokenize import TokenError
from typing import Callable, Optional

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from contact_dg.assembly import hooke_stress
from contact_dg.mesh import ON_BOUNDARY_TOL, BoundaryTag, unit_square_initial_mesh

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Boundary presets of the unit square, as predicates on edge midpoints
# ---------------------------------------------------------------------------
BOUNDARY_PRESETS = {
    "left":   (0, 0.0),
    "right":  (0, 1.0),
    "bottom": (1, 0.0),
    "top":    (1, 1.0),
}

# ---------------------------------------------------------------------------
# Model problem 2 material: Young's modulus and Poisson ratio
# ---------------------------------------------------------------------------
WEDGE_YOUNG = 500.0
WEDGE_POISSON = 0.3
WEDGE_TIP = (1.0, 0.5)
WEDGE_PUSH = (-0.1, 0.0)


def side_predicate(*names):
    """Predicate on midpoints (n, 2) selecting the union of named sides."""
    for name in names:
        if name not in BOUNDARY_PRESETS:
            raise ValueError(f"unknown boundary preset '{name}' (known: {sorted(BOUNDARY_PRESETS)})")

    def predicate(midpoints):
        midpoints = np.asarray(midpoints, dtype=float).reshape(-1, 2)
        hit = np.zeros(len(midpoints), dtype=bool)
        for name in names:
            axis, value = BOUNDARY_PRESETS[name]
            hit |= np.abs(midpoints[:, axis] - value) < ON_BOUNDARY_TOL
        return hit

    predicate.sides = names
    return predicate


def _vector(*components):
    return np.stack(np.broadcast_arrays(*components), axis=-1)


def _zero_vector(x, y, *normal):
    return np.zeros(np.shape(x) + (2,))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of one contact problem on the unit square."""

    name: str
    mu: float
    kappa: float
    dirichlet: Callable
    neumann: Callable
    contact: Callable
    body_force: Callable
    traction: Callable
    gap: Callable
    dirichlet_value: Callable
    exact: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    gap_kinks: tuple = ()
    description: str = ""

    def __post_init__(self):
        if not (self.mu > 0 and self.kappa > 0):
            raise ValueError(f"Lame parameters must be positive, got mu={self.mu}, kappa={self.kappa}")

    @property
    def has_exact(self):
        return self.exact is not None

    def classify_boundary(self, midpoints):
        """BoundaryTag per boundary edge midpoint; every midpoint must match exactly one part."""
        midpoints = np.asarray(midpoints, dtype=float).reshape(-1, 2)
        parts = [
            (BoundaryTag.DIRICHLET, self.dirichlet(midpoints)),
            (BoundaryTag.NEUMANN, self.neumann(midpoints)),
            (BoundaryTag.CONTACT, self.contact(midpoints)),
        ]
        count = sum(hit.astype(int) for _, hit in parts)
        if np.any(count != 1):
            bad = midpoints[count != 1]
            raise ValueError(f"boundary partition of '{self.name}' is not a partition at {bad.tolist()}")
        tags = np.empty(len(midpoints), dtype=np.int64)
        for tag, hit in parts:
            tags[hit] = int(tag)
        return tags

    def initial_mesh(self):
        return unit_square_initial_mesh().with_boundary_tags(self.classify_boundary)


def lame_from_young_poisson(young, poisson):
    """(mu, kappa) from Young's modulus and Poisson ratio."""
    if young <= 0:
        raise ValueError(f"Young's modulus must be positive, got {young}")
    if poisson >= 0.5 or poisson <= -1.0:
        raise ValueError(f"Poisson ratio {poisson} outside (-1, 0.5); the incompressible limit is excluded")
    mu = young / (2.0 * (1.0 + poisson))
    kappa = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    return mu, kappa


def manufactured_problem(name, exact, exact_grad, exact_hessian, mu, kappa,
                         dirichlet, neumann, contact, gap, description=""):
    """Problem whose body force, traction and Dirichlet datum come from an exact solution.

    exact_grad returns (..., 2, 2) with [c, j] = d u_c / d x_j and
    exact_hessian returns (..., 2, 2, 2) with [c, j, k] = d2 u_c / dx_j dx_k.
    """

    def body_force(x, y):
        h = exact_hessian(x, y)
        laplace = h[..., :, 0, 0] + h[..., :, 1, 1]
        grad_div = h[..., 0, 0, :] + h[..., 1, 1, :]
        return -(mu * (laplace + grad_div) + kappa * grad_div)

    def traction(x, y, nx, ny):
        stress = hooke_stress(exact_grad(x, y), mu, kappa)
        n = _vector(nx, ny)
        return np.einsum("...ij,...j->...i", stress, n)

    return ProblemSpec(
        name=name, mu=mu, kappa=kappa,
        dirichlet=dirichlet, neumann=neumann, contact=contact,
        body_force=body_force, traction=traction, gap=gap,
        dirichlet_value=exact, exact=exact, exact_grad=exact_grad,
        description=description,
    )


# ---------------------------------------------------------------------------
# Model problem 1: contact with a rigid foundation
# u = (y^2 (y - 1), (x - 2) y (1 - y) e^y), mu = kappa = 1, chi = 0
# ---------------------------------------------------------------------------


def _mp1_g(y):
    return y * (1 - y) * np.exp(y)


def _mp1_dg(y):
    return np.exp(y) * (1 - y - y**2)


def _mp1_ddg(y):
    return -np.exp(y) * y * (3 + y)


def _mp1_exact(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return _vector(y**2 * (y - 1), (x - 2) * _mp1_g(y))


def _mp1_grad(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    zero = np.zeros_like(x)
    row1 = _vector(zero, 3 * y**2 - 2 * y)
    row2 = _vector(_mp1_g(y), (x - 2) * _mp1_dg(y))
    return np.stack([row1, row2], axis=-2)


def _mp1_hessian(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    zero = np.zeros_like(x)
    h1 = np.stack([_vector(zero, zero), _vector(zero, 6 * y - 2)], axis=-2)
    h2 = np.stack([_vector(zero, _mp1_dg(y)), _vector(_mp1_dg(y), (x - 2) * _mp1_ddg(y))], axis=-2)
    return np.stack([h1, h2], axis=-3)


def _zero_gap(x, y):
    return np.zeros(np.shape(x))


def model_problem_1():
    """Unit square on a rigid foundation: clamped top, free sides, contact at the bottom."""
    return manufactured_problem(
        "mp1", _mp1_exact, _mp1_grad, _mp1_hessian, mu=1.0, kappa=1.0,
        dirichlet=side_predicate("top"),
        neumann=side_predicate("left", "right"),
        contact=side_predicate("bottom"),
        gap=_zero_gap,
        description="contact with a rigid foundation",
    )


# ---------------------------------------------------------------------------
# Model problem 2: contact with a rigid wedge
# chi(y) = -0.2 + 0.5 |y - 0.5|, u = (-0.1, 0) on x = 0, E = 500, nu = 0.3
# ---------------------------------------------------------------------------


def wedge_gap(x, y):
    return -0.2 + 0.5 * np.abs(np.asarray(y, dtype=float) - WEDGE_TIP[1]) + 0.0 * np.asarray(x)


def _wedge_push(x, y):
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    return np.broadcast_to(np.array(WEDGE_PUSH), shape + (2,)).copy()


def model_problem_2():
    """Unit square pushed against a rigid wedge on its right side."""
    mu, kappa = lame_from_young_poisson(WEDGE_YOUNG, WEDGE_POISSON)
    return ProblemSpec(
        name="mp2", mu=mu, kappa=kappa,
        dirichlet=side_predicate("left"),
        neumann=side_predicate("bottom", "top"),
        contact=side_predicate("right"),
        body_force=_zero_vector, traction=_zero_vector,
        gap=wedge_gap, dirichlet_value=_wedge_push,
        gap_kinks=(WEDGE_TIP,),
        description="contact with a rigid wedge",
    )


# ---------------------------------------------------------------------------
# Patch problem: full quadratic displacement, no contact boundary
# ---------------------------------------------------------------------------


def _patch_exact(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return _vector(
        0.1 + x**2 - x * y + 0.5 * y**2,
        0.2 * x - 0.3 * y + 0.3 * x**2 - x * y + y**2,
    )


def _patch_grad(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return np.stack(
        [_vector(2 * x - y, -x + y), _vector(0.2 + 0.6 * x - y, -0.3 - x + 2 * y)], axis=-2
    )


def _patch_hessian(x, y):
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    h = np.array([[[2.0, -1.0], [-1.0, 1.0]], [[0.6, -1.0], [-1.0, 2.0]]])
    return np.broadcast_to(h, shape + (2, 2, 2)).copy()


def _no_contact_gap(x, y):
    return np.full(np.shape(x), np.inf)


def patch_problem(mu=1.0, kappa=1.0):
    """Contact-free problem whose exact solution lies in the discrete space."""
    return manufactured_problem(
        "patch", _patch_exact, _patch_grad, _patch_hessian, mu=mu, kappa=kappa,
        dirichlet=side_predicate("left"),
        neumann=side_predicate("right", "bottom", "top"),
        contact=lambda midpoints: np.zeros(len(np.asarray(midpoints).reshape(-1, 2)), dtype=bool),
        gap=_no_contact_gap,
        description="quadratic patch test",
    )


PROBLEMS = {
    "mp1": model_problem_1,
    "mp2": model_problem_2,
    "patch": patch_problem,
}


def get_problem(name):
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem '{name}' (known: {', '.join(sorted(PROBLEMS))})")
    return PROBLEMS[name]()


# ---------------------------------------------------------------------------
# Custom problems from JSON
# ---------------------------------------------------------------------------
_X, _Y, _NX, _NY = sympy.symbols("x y nx ny", real=True)
_SYMBOLS = {"x": _X, "y": _Y, "nx": _NX, "ny": _NY, "Abs": sympy.Abs, "exp": sympy.exp,
            "sin": sympy.sin, "cos": sympy.cos, "sqrt": sympy.sqrt, "log": sympy.log,
            "pi": sympy.pi, "E": sympy.E}


def _parse(text):
    try:
        return parse_expr(str(text), local_dict=dict(_SYMBOLS))
    except (SyntaxError, TypeError, TokenError, sympy.SympifyError) as e:
        raise ValueError(f"cannot parse expression '{text}': {e}") from e


def _lambdify(expr, args):
    fn = sympy.lambdify(args, expr, modules="numpy")

    def evaluate(*values):
        shape = np.broadcast(*[np.asarray(v) for v in values]).shape
        return np.broadcast_to(np.asarray(fn(*values), dtype=float), shape).copy()

    return evaluate


def _vector_closure(exprs, args):
    parts = [_lambdify(e, args) for e in exprs]

    def evaluate(*values):
        return np.stack([p(*values) for p in parts], axis=-1)

    return evaluate


def _pair(data, key, default=("0", "0")):
    value = data.get(key, list(default))
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValueError(f"'{key}' must be a list of two expressions")
    return [_parse(v) for v in value]


def load_problem_config(path):
    """Read a custom problem from a JSON file.

    Keys: name, boundary {dirichlet, neumann, contact: lists of presets},
    lame {mu, kappa} or {young, poisson}, body_force, traction (may use nx,
    ny), gap, gap_kinks, dirichlet_value, and optionally exact. When exact
    is given, body_force, traction and dirichlet_value are derived from it.
    """
    with open(path) as f:
        data = json.load(f)
    logger.info("loaded problem '%s' from %s", data.get("name", "custom"), path)
    return problem_from_dict(data)


def problem_from_dict(data):
    name = data.get("name", "custom")
    boundary = data.get("boundary", {})
    try:
        dirichlet = side_predicate(*boundary["dirichlet"])
        neumann = side_predicate(*boundary.get("neumann", []))
        contact = side_predicate(*boundary.get("contact", []))
    except KeyError as e:
        raise ValueError(f"problem '{name}' needs boundary.{e.args[0]}") from e

    lame = data.get("lame", {"mu": 1.0, "kappa": 1.0})
    if "young" in lame:
        mu, kappa = lame_from_young_poisson(float(lame["young"]), float(lame["poisson"]))
    else:
        mu, kappa = float(lame["mu"]), float(lame["kappa"])

    gap = _lambdify(_parse(data.get("gap", "0")), (_X, _Y))
    kinks = tuple(tuple(float(c) for c in k) for k in data.get("gap_kinks", []))

    if "exact" in data:
        u = _pair(data, "exact")
        grad = [[sympy.diff(u[c], v) for v in (_X, _Y)] for c in range(2)]
        hess = [[[sympy.diff(grad[c][j], v) for v in (_X, _Y)] for j in range(2)] for c in range(2)]
        exact = _vector_closure(u, (_X, _Y))
        grad_fns = [[_lambdify(grad[c][j], (_X, _Y)) for j in range(2)] for c in range(2)]
        hess_fns = [[[_lambdify(hess[c][j][k], (_X, _Y)) for k in range(2)] for j in range(2)]
                    for c in range(2)]

        def exact_grad(x, y):
            return np.stack([np.stack([g(x, y) for g in row], axis=-1) for row in grad_fns], axis=-2)

        def exact_hessian(x, y):
            return np.stack(
                [np.stack([np.stack([h(x, y) for h in row], axis=-1) for row in block], axis=-2)
                 for block in hess_fns],
                axis=-3,
            )

        spec = manufactured_problem(name, exact, exact_grad, exact_hessian, mu, kappa,
                                    dirichlet, neumann, contact, gap,
                                    description=data.get("description", ""))
        if kinks:
            spec = replace(spec, gap_kinks=kinks)
        return spec

    return ProblemSpec(
        name=name, mu=mu, kappa=kappa,
        dirichlet=dirichlet, neumann=neumann, contact=contact,
        body_force=_vector_closure(_pair(data, "body_force"), (_X, _Y)),
        traction=_vector_closure(_pair(data, "traction"), (_X, _Y, _NX, _NY)),
        gap=gap,
        dirichlet_value=_vector_closure(_pair(data, "dirichlet_value"), (_X, _Y)),
        gap_kinks=kinks,
        description=data.get("description", ""),
    )
