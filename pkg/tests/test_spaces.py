import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fpsi.mesh import build_interface_map, build_reference_meshes
from fpsi.quadrature import line_rule, triangle_rule
from fpsi.spaces import HermiteSpace, apply_coupling_constraint, build_spaces


def _spaces(nx, ny=None, L=1.0, R=1.0):
    meshes = build_reference_meshes(L, R, nx, ny or nx)
    return build_spaces(meshes, build_interface_map(*meshes))


@pytest.mark.parametrize("order", [1, 2, 4, 6, 8])
def test_triangle_rule_exact_for_monomials(order):
    rule = triangle_rule(order)
    x, y = sp.symbols("x y")
    for i in range(order + 1):
        for j in range(order + 1 - i):
            exact = float(sp.integrate(sp.integrate(x**i * y**j, (y, 0, 1 - x)), (x, 0, 1)))
            approx = np.sum(rule.weights * rule.points[:, 0] ** i * rule.points[:, 1] ** j)
            assert abs(approx - exact) < 1e-14


@pytest.mark.parametrize("order", [1, 3, 6, 12])
def test_line_rule_exact(order):
    rule = line_rule(order)
    for k in range(order + 1):
        assert abs(np.sum(rule.weights * rule.points**k) - 1.0 / (k + 1)) < 1e-14


def test_plate_dof_counts():
    S, lay = _spaces(1)
    assert S.plate.n_dofs == 4 and len(S.plate.free) == 0
    S, lay = _spaces(2)
    assert S.plate.n_dofs == 6 and len(S.plate.free) == 2
    assert apply_coupling_constraint(lay, S).n_shared_free == 1


def test_interface_node_dof_classes():
    S, lay = _spaces(2)
    D = S.displacement
    o = lay.offsets["eta"]
    bottom = D.boundary_nodes("bottom")
    ess = set(lay.essential.tolist())
    assert all(o + D.component_dofs(n, 0) in ess for n in bottom)
    interior = [n for n in bottom if 0 < D.node_coords[n, 0] < 1]
    assert all(o + D.component_dofs(n, 1) not in ess for n in interior)
    assert set(lay.coupling_pairs[:, 0].tolist()) <= {int(o + D.component_dofs(n, 1)) for n in bottom}


def test_zero_plate_forces_zero_interface():
    S, lay = _spaces(3)
    cm = apply_coupling_constraint(lay, S)
    X = np.random.default_rng(0).standard_normal(lay.n_total)
    X = cm.impose(X, np.zeros(S.plate.n_dofs), S.plate, S.displacement.n_nodes)
    assert cm.mismatch(X, np.zeros(S.plate.n_dofs)) == 0.0


def test_coupling_agreement_at_interface_vertices():
    S, lay = _spaces(4)
    cm = apply_coupling_constraint(lay, S)
    rng = np.random.default_rng(1)
    om = rng.standard_normal(S.plate.n_dofs)
    om[S.plate.clamped] = 0
    X = cm.impose(rng.standard_normal(lay.n_total), om, S.plate, S.displacement.n_nodes)
    D = S.displacement
    eta = X[lay.block("eta")]
    xs = S.plate.nodes
    ey = D.evaluate(eta, np.column_stack([xs, 0 * xs]))[0][:, 1]
    assert np.max(np.abs(ey - S.plate.evaluate(om, xs))) <= 1e-14


def test_pressure_constant_reproduced():
    S, _ = _spaces(3)
    p = S.pressure.interpolate(lambda x, y: 1.0 + 0 * x)
    pts = np.random.default_rng(2).uniform([0, 0], [1, 1], (50, 2))
    val, grad = S.pressure.evaluate(p, pts)
    assert np.allclose(val, 1.0, atol=1e-15) and np.allclose(grad, 0.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.floats(0.01, 0.99))
def test_hermite_reproduces_cubics(c, x):
    S, _ = _spaces(3)
    f = lambda s: c[0] + c[1] * s + c[2] * s**2 + c[3] * s**3  # noqa: E731
    df = lambda s: c[1] + 2 * c[2] * s + 3 * c[3] * s**2  # noqa: E731
    H = S.plate
    w = H.interpolate(f, df)
    assert abs(H.evaluate(w, np.array([x]))[0] - f(x)) <= 1e-13 * max(1, abs(f(x)))
    assert abs(H.evaluate(w, np.array([x]), 2)[0] - (2 * c[2] + 6 * c[3] * x)) <= 1e-10


def test_quadratic_vector_gradient_exact():
    S, _ = _spaces(3)
    D = S.displacement
    f = lambda x, y: np.stack([x**2 - x * y, 2 * y**2 + x], -1)  # noqa: E731
    eta = D.interpolate(f)
    pts = np.random.default_rng(3).uniform([0, 0], [1, 1], (60, 2))
    _, g = D.evaluate(eta, pts)
    x, y = pts[:, 0], pts[:, 1]
    exact = np.stack([np.stack([2 * x - y, -x], -1), np.stack([np.ones_like(x), 4 * y], -1)], -2)
    assert np.max(np.abs(g - exact)) <= 1e-12


def test_hermite_element_matrices_match_symbolic():
    """Mass and bending matrices on one element against exact sympy integrals."""
    meshes = build_reference_meshes(2.0, 1.0, 1, 1)
    H = HermiteSpace(meshes[2])
    x, h = sp.symbols("x"), sp.Integer(2)
    s = x / h
    N = [1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3, h * (-s**2 + s**3)]
    M = np.array([[float(sp.integrate(a * b, (x, 0, h))) for b in N] for a in N])
    K = np.array([[float(sp.integrate(sp.diff(a, x, 2) * sp.diff(b, x, 2), (x, 0, h))) for b in N] for a in N])
    assert np.allclose(H.mass().toarray(), M, rtol=0, atol=1e-13)
    assert np.allclose(H.bending().toarray(), K, rtol=0, atol=1e-13)


def test_hermite_mass_integrates_square():
    meshes = build_reference_meshes(1.0, 1.0, 8, 1)
    H = HermiteSpace(meshes[2])
    w = H.interpolate(lambda x: np.sin(math.pi * x), lambda x: math.pi * np.cos(math.pi * x))
    assert abs(w @ (H.mass() @ w) - 0.5) < 1e-4  # cubic interpolation error O(h^4)
