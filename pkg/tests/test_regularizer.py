import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpsi.errors import ConfigError, CouplingError
from fpsi.regularizer import (AuxGrid, ExtendedField, MollifierKernel, convolution_rate_report, fit_order,
                              kernel_mass, mollify, odd_extend, reflection_sources, regularized_interface_normal,
                              regularized_lagrangian_map)
from fpsi.transforms import AnalyticPlate
from fpsi.verify import rate_field

L = R = 1.0


def _const_ext(vals_fn, delta, h=None):
    grid = AuxGrid.build(L, R, h or delta / 8, delta + 2 * (h or delta / 8))
    return ExtendedField(grid, vals_fn(grid.points()))


def test_kernel_mass_is_one():
    assert abs(kernel_mass() - 1.0) <= 1e-12


@pytest.mark.parametrize("delta", [0.2, 0.1, 0.05, 0.025])
def test_corrected_weights_have_unit_mass(delta):
    ext = _const_ext(lambda P: np.column_stack([np.ones(len(P)), 2 * np.ones(len(P))]), delta)
    pts = np.random.default_rng(0).uniform(0, 1, (30, 2))
    v = mollify(ext, delta).value(pts)
    assert np.max(np.abs(v - [1, 2])) <= 1e-10


@pytest.mark.parametrize("delta", [0.2, 0.05])
def test_raw_discrete_mass_close_to_one(delta):
    assert abs(MollifierKernel(delta).discrete_mass(delta / 8) - 1.0) <= 1e-2


def test_l2_norm_of_kernel():
    # closed form: int sigma^2 = c^2 pi / 9 on the unit ball
    from scipy.integrate import quad

    d = 0.1
    k = MollifierKernel(d)
    num = quad(lambda r: 2 * math.pi * r * k(np.array([r, 0.0])) ** 2, 0, d)[0]
    assert math.isclose(k.l2_norm, math.sqrt(num), rel_tol=1e-8)


def test_kernel_norm_scaling():
    """||sigma_delta||_L2 * delta does not depend on delta (measured by quadrature)."""
    from scipy.integrate import quad

    vals = []
    for d in (0.2, 0.1, 0.05, 0.025):
        k = MollifierKernel(d)
        vals.append(d * math.sqrt(quad(lambda r: 2 * math.pi * r * k(np.array([r, 0.0])) ** 2, 0, d)[0]))
    assert max(vals) / min(vals) - 1 <= 1e-2


def test_zero_field_extends_and_mollifies_to_zero():
    ext = odd_extend(lambda P: np.zeros((len(P), 2)), AnalyticPlate.constant(0.0), L=L, R=R, delta=0.1)
    assert np.all(ext.values == 0)
    reg = mollify(ext, 0.1)
    pts = np.random.default_rng(1).uniform(0, 1, (20, 2))
    assert np.all(reg.value(pts) == 0)
    assert np.array_equal(regularized_lagrangian_map(reg, pts), pts)
    assert np.array_equal(regularized_interface_normal(reg, np.array([0.3, 0.7])), [[0, 1], [0, 1]])


def test_extension_below_interface_reproduces_trace():
    w = lambda x: np.sin(math.pi * x / L)  # noqa: E731
    eta = lambda P: np.column_stack([0 * P[:, 0], w(P[:, 0])])  # noqa: E731
    ext = odd_extend(eta, None, 0.02, L=L, R=R, margin=0.2)
    P = ext.grid.points()
    sel = (P[:, 1] < 0) & (P[:, 0] > 0) & (P[:, 0] < L)
    assert sel.any()
    assert np.allclose(ext.values[sel], np.column_stack([0 * P[sel, 0], w(P[sel, 0])]), atol=1e-14)


def test_extension_above_top_is_odd():
    src, sx, sy, below = reflection_sources(np.array([[0.5 * L, 1.5 * R]]), L, R)
    assert np.allclose(src, [[0.5, 0.5]]) and sx[0] == 1 and sy[0] == -1 and below[0] == 0
    eta = lambda P: np.column_stack([0 * P[:, 0], P[:, 1]])  # noqa: E731
    ext = odd_extend(eta, None, 0.25, L=L, R=R, margin=0.75)
    P = ext.grid.points()
    i = np.argmin(np.sum((P - [0.625, 1.625]) ** 2, 1))
    assert np.allclose(P[i], [0.625, 1.625])
    assert np.allclose(ext.values[i], [0, -(2 * R - 1.625)])


def test_extension_rejects_inconsistent_plate():
    eta = lambda P: np.column_stack([0 * P[:, 0], np.sin(math.pi * P[:, 0])])  # noqa: E731
    with pytest.raises(CouplingError):
        odd_extend(eta, AnalyticPlate.constant(0.1), L=L, R=R, delta=0.1)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.sampled_from([0.2, 0.1, 0.05]))
def test_affine_reproduction(c, delta):
    A = np.array(c[:4]).reshape(2, 2)
    b = np.array(c[4:])
    ext = _const_ext(lambda P: P @ A.T + b, delta)
    pts = np.random.default_rng(2).uniform(0, 1, (15, 2))
    reg = mollify(ext, delta)
    assert np.max(np.abs(reg.value(pts) - (pts @ A.T + b))) <= 1e-10
    assert np.max(np.abs(reg.gradient(pts) - A)) <= 1e-9


def test_constant_trace_gives_flat_normal():
    ext = _const_ext(lambda P: np.column_stack([0 * P[:, 0], 0.3 + 0 * P[:, 0]]), 0.1)
    n = regularized_interface_normal(mollify(ext, 0.1), np.linspace(0, 1, 7))
    assert np.allclose(n, [[0, 1]] * 7, atol=1e-10)


def test_normal_matches_fd_of_trace():
    eta, _ = rate_field()
    reg = mollify(odd_extend(eta, None, 0.1 / 8, L=L, R=R, margin=0.2), 0.1)
    x = np.linspace(0.05, 0.95, 19)
    h = 1e-5
    fd = (reg.trace(x + h) - reg.trace(x - h)) / (2 * h)
    assert np.max(np.abs(regularized_interface_normal(reg, x)[:, 0] + fd)) <= 1e-6


@pytest.mark.parametrize("delta", [0.2, 0.1])
def test_boundary_annihilation(delta):
    eta, _ = rate_field()
    reg = mollify(odd_extend(eta, None, delta / 8, L=L, R=R, margin=1.5 * delta), delta)
    s = np.linspace(0, 1, 21)
    B = np.concatenate([np.column_stack([0 * s, s]), np.column_stack([0 * s + L, s]), np.column_stack([s, 0 * s + R])])
    assert np.max(np.abs(reg.value(B))) <= 1e-10


def test_closeness_transfer_bound():
    """max |grad eta1^d - grad eta2^d| <= ||sigma_d||_L2 ||grad(eta1 - eta2)||_L2 on the extended domain."""
    delta = 0.1
    e1, _ = rate_field()
    e2 = lambda P: 0.5 * e1(P) + np.column_stack([np.sin(math.pi * P[:, 0]) * P[:, 1] * (1 - P[:, 1]), 0 * P[:, 0]])  # noqa: E731
    d = lambda P: e1(P) - e2(P)  # noqa: E731
    h = delta / 16
    r1 = mollify(odd_extend(e1, None, h, L=L, R=R, margin=2 * delta), delta)
    r2 = mollify(odd_extend(e2, None, h, L=L, R=R, margin=2 * delta), delta)
    P = np.random.default_rng(3).uniform(0, 1, (200, 2))
    lhs = np.max(np.abs(r1.gradient(P) - r2.gradient(P)))
    ext = odd_extend(d, None, h, L=L, R=R, margin=2 * delta)
    ny, nx = ext.grid.shape
    V = ext.values.reshape(ny, nx, 2)
    gy, gx = np.gradient(V, ext.grid.hy, ext.grid.hx, axis=(0, 1))
    rhs = MollifierKernel(delta).l2_norm * math.sqrt(np.sum(gx**2 + gy**2) * ext.grid.hx * ext.grid.hy)
    assert lhs <= rhs


def test_delta_validation():
    ext = _const_ext(lambda P: np.zeros((len(P), 2)), 0.1)
    with pytest.raises(ConfigError):
        mollify(ext, 1.5)
    with pytest.raises(ConfigError):
        mollify(ext, 0.01)  # under-resolved by the auxiliary grid


def test_fit_order_exact_power():
    d = np.array([0.2, 0.1, 0.05])
    assert math.isclose(fit_order(d, 3 * d**1.5), 1.5, rel_tol=1e-12)
    assert math.isnan(fit_order(d, [0, 0, 0]))


def test_rate_report_zero_field():
    z = lambda P: np.zeros((len(P), 2))  # noqa: E731
    rows = convolution_rate_report(z, lambda P: np.zeros((len(P), 2, 2)), [0.2, 0.1])
    assert all(r.h1_error == 0 and r.grad_max_error == 0 for r in rows)
    assert math.isnan(rows[0].fitted_order_h1)


def test_rate_report_affine_interior_superconvergent():
    A = np.array([[0.3, -0.2], [0.1, 0.4]])
    rows = convolution_rate_report(lambda P: P @ A.T, lambda P: np.broadcast_to(A, (len(P), 2, 2)), [0.2, 0.1],
                                   n_boundary=3)
    # the odd extension of a non-vanishing affine field is not affine near the
    # boundary, so only the deep interior is exact
    reg = mollify(odd_extend(lambda P: P @ A.T, None, 0.1 / 8, L=L, R=R, margin=0.2), 0.1)
    P = np.random.default_rng(4).uniform(0.15, 0.85, (30, 2))
    assert np.max(np.abs(reg.value(P) - P @ A.T)) <= 1e-10
    assert rows[0].h1_error > 0


def test_rate_report_requires_decreasing():
    eta, grad = rate_field()
    with pytest.raises(ConfigError):
        convolution_rate_report(eta, grad, [0.1, 0.2])


def test_mollifier_rates_on_smooth_field():
    eta, grad = rate_field()
    rows = convolution_rate_report(eta, grad, [0.2, 0.1, 0.05, 0.025])
    assert 1.45 <= rows[0].fitted_order_h1 <= 2.2
    assert rows[0].fitted_order_grad >= 0.9
    assert all(a.h1_error > b.h1_error for a, b in zip(rows, rows[1:]))
