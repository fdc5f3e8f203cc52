"""Odd extension of the Biot displacement and its spatial mollification.

The convolution with the scaled kernel is evaluated by midpoint quadrature
on an auxiliary grid symmetric about the rectangle's edges. The midpoint
weights are corrected (reproducing-kernel correction) so that the discrete
kernel has unit mass and reproduces affine fields exactly at every target
point. Derivatives are obtained by differentiating the corrected weights,
never the extended field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, CouplingError
from .spaces import LagrangeSpace

KERNEL_CONSTANT = 5.0 / np.pi


def kernel_profile(r2):
    """sigma as a function of |x|^2: c (1 - |x|^2)^4 inside the unit ball."""
    r2 = np.asarray(r2, dtype=float)
    return np.where(r2 < 1.0, KERNEL_CONSTANT * np.clip(1.0 - r2, 0.0, None) ** 4, 0.0)


def kernel_mass(n: int = 16) -> float:
    """Integral of the unit kernel by Gauss quadrature in polar coordinates."""
    x, w = np.polynomial.legendre.leggauss(n)
    r, wr = 0.5 * (x + 1), 0.5 * w
    return float(2 * np.pi * np.sum(wr * r * kernel_profile(r**2)))


@dataclass(frozen=True)
class MollifierKernel:
    delta: float
    constant: float = KERNEL_CONSTANT

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        return kernel_profile(np.sum(d**2, axis=-1) / self.delta**2) / self.delta**2

    def profile(self, r2):
        return kernel_profile(r2)

    @property
    def l2_norm(self) -> float:
        # ||sigma_delta||_L2 = c sqrt(pi / 9) / delta
        return self.constant * math.sqrt(math.pi / 9.0) / self.delta

    def discrete_mass(self, h: float) -> float:
        """Raw midpoint-rule mass of sigma_delta on a grid of spacing h (no correction)."""
        m = int(math.ceil(self.delta / h)) + 1
        z = (np.arange(-m, m) + 0.5) * h
        X, Y = np.meshgrid(z, z)
        return float(np.sum(self(np.stack([X, Y], -1))) * h * h)


# ------------------------------------------------------------------ auxiliary grid

@dataclass(frozen=True)
class AuxGrid:
    """Cell-midpoint grid x_i = (i + 1/2) hx, symmetric about x = 0, L and y = 0, R."""

    L: float
    R: float
    hx: float
    hy: float
    i0: int
    i1: int
    j0: int
    j1: int

    @classmethod
    def build(cls, L: float, R: float, h_target: float, margin: float):
        nx = max(1, int(math.ceil(L / h_target - 1e-12)))
        ny = max(1, int(math.ceil(R / h_target - 1e-12)))
        hx, hy = L / nx, R / ny
        mx, my = int(math.ceil(margin / hx)), int(math.ceil(margin / hy))
        return cls(L, R, hx, hy, -mx, nx + mx, -my, ny + my)

    @property
    def shape(self):
        return (self.j1 - self.j0, self.i1 - self.i0)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def coords(self):
        x = (np.arange(self.i0, self.i1) + 0.5) * self.hx
        y = (np.arange(self.j0, self.j1) + 0.5) * self.hy
        return x, y

    def points(self) -> np.ndarray:
        x, y = self.coords()
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def flat_index(self, i, j):
        return (j - self.j0) * (self.i1 - self.i0) + (i - self.i0)


def reflection_sources(points: np.ndarray, L: float, R: float):
    """For each point return (source point in the rectangle, sign, trace flag).

    The extension equals ``sign * (s_y * eta(src) + 2 * flag * omega(src_x) e_y)``
    where s_y = -1 for reflected y; ``sign`` collects the x-reflection and
    ``flag`` marks points below the interface.
    """
    x, y = points[:, 0].copy(), points[:, 1].copy()
    sx = np.ones(len(x))
    left, right = x < 0, x > L
    x[left], x[right] = -x[left], 2 * L - x[right]
    sx[left | right] = -1.0
    sy = np.ones(len(y))
    below, above = y < 0, y > R
    y[below], y[above] = -y[below], 2 * R - y[above]
    sy[below | above] = -1.0
    if np.any((x < 0) | (x > L) | (y < 0) | (y > R)):
        raise ConfigError("auxiliary grid exceeds the extended domain [-L,2L]x[-R,2R]")
    return np.column_stack([x, y]), sx, sy, below.astype(float)


@dataclass(frozen=True)
class ExtendedField:
    """Odd extension sampled on the auxiliary grid: values shape (ng, 2)."""

    grid: AuxGrid
    values: np.ndarray

    def sample(self, i, j):
        return self.values[self.grid.flat_index(np.asarray(i), np.asarray(j))]


def _eta_evaluator(eta):
    if callable(eta) and not hasattr(eta, "space"):
        return lambda p: np.asarray(eta(p), dtype=float).reshape(len(p), 2)
    return lambda p: eta.space.evaluate(eta.eta, p)[0]


def odd_extend(eta, omega=None, h_aux: float | None = None, *, L: float, R: float,
               delta: float | None = None, margin: float | None = None,
               tol: float = 1e-10) -> ExtendedField:
    """Sample the odd extension of ``eta`` on an auxiliary grid.

    ``eta`` is a BiotDisplacementField or a callable on (n, 2) points. The
    interface displacement used below y = 0 is the trace of eta_y itself;
    when a plate field ``omega`` is supplied it must agree with that trace
    to ``tol`` at the plate nodes (or sample points for closed forms).
    """
    ev = _eta_evaluator(eta)
    if h_aux is None:
        if delta is None:
            raise ConfigError("either h_aux or delta must be given")
        h_aux = delta / 8.0
    if margin is None:
        margin = min(L, R)
    grid = AuxGrid.build(L, R, h_aux, margin)
    pts = grid.points()
    src, sx, sy, below = reflection_sources(pts, L, R)
    xs = np.unique(src[below > 0, 0])
    if omega is not None:
        xc = getattr(getattr(omega, "space", None), "nodes", None)
        xc = np.asarray(xc) if xc is not None else (xs if len(xs) else np.linspace(0, L, 11))
        tr = ev(np.column_stack([xc, np.zeros_like(xc)]))[:, 1]
        gap = np.max(np.abs(tr - omega.value(xc))) if len(xc) else 0.0
        if gap > tol:
            raise CouplingError(f"Biot trace and plate displacement differ by {gap:.3e} > {tol:g}")
    vals = sy[:, None] * ev(src)
    if np.any(below > 0):
        trace = ev(np.column_stack([src[below > 0, 0], np.zeros(int(below.sum()))]))[:, 1]
        vals[below > 0, 1] += 2.0 * trace
    vals *= sx[:, None]
    return ExtendedField(grid, vals)


# ------------------------------------------------------------------ corrected weights

def _chunked_weights(grid: AuxGrid, delta: float, targets: np.ndarray, chunk: int = 2048):
    """Yield (rows, cols, w, wx, wy) blocks of corrected convolution weights."""
    hx, hy = grid.hx, grid.hy
    mx, my = int(math.ceil(delta / hx)) + 1, int(math.ceil(delta / hy)) + 1
    oi, oj = np.meshgrid(np.arange(-mx, mx + 1), np.arange(-my, my + 1))
    oi, oj = oi.ravel(), oj.ravel()
    C = KERNEL_CONSTANT * hx * hy / delta**2
    for s in range(0, len(targets), chunk):
        p = targets[s:s + chunk]
        ic = np.floor(p[:, 0] / hx - 0.5).astype(np.int64)
        jc = np.floor(p[:, 1] / hy - 0.5).astype(np.int64)
        I, J = ic[:, None] + oi[None, :], jc[:, None] + oj[None, :]
        dx = ((I + 0.5) * hx - p[:, :1]) / delta
        dy = ((J + 0.5) * hy - p[:, 1:2]) / delta
        r2 = dx**2 + dy**2
        inside = r2 < 1.0
        if np.any(inside & ((I < grid.i0) | (I >= grid.i1) | (J < grid.j0) | (J >= grid.j1))):
            raise ConfigError("auxiliary grid does not cover the kernel support of a target point")
        q = np.where(inside, 1.0 - r2, 0.0)
        k = C * q**4
        dk = 8.0 * C * q**3 / delta          # d k / d p_a = dk * d_a (scaled offsets)
        b = np.stack([np.ones_like(dx), dx, dy], -1)             # (T, K, 3)
        M = np.einsum("tk,tki,tkj->tij", k, b, b)
        a = np.linalg.solve(M, np.broadcast_to(np.array([1.0, 0.0, 0.0]), (len(p), 3))[..., None])[..., 0]
        ba = b @ a[..., None]
        ba = ba[..., 0]
        w = k * ba
        S = np.einsum("tk,tki->ti", k, b)
        grads = []
        for al, d_al in ((1, dx), (2, dy)):
            dk_al = dk * d_al
            e = np.zeros(3)
            e[al] = 1.0
            dM = np.einsum("tk,tki,tkj->tij", dk_al, b, b) - (np.einsum("i,tj->tij", e, S)
                                                              + np.einsum("ti,j->tij", S, e)) / delta
            da = -np.linalg.solve(M, (dM @ a[..., None]))[..., 0]
            grads.append(dk_al * ba + k * ((b @ da[..., None])[..., 0] - a[:, al:al + 1] / delta))
        mask = inside
        rows = np.broadcast_to(np.arange(s, s + len(p))[:, None], I.shape)[mask]
        cols = grid.flat_index(I[mask], J[mask])
        yield rows, cols, w[mask], grads[0][mask], grads[1][mask]


def convolution_weights(grid: AuxGrid, delta: float, targets: np.ndarray):
    """Sparse (n_targets, n_grid) matrices for values, d/dx and d/dy of eta^delta."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    R_, C_, V_, X_, Y_ = [], [], [], [], []
    for r, c, w, wx, wy in _chunked_weights(grid, delta, targets):
        R_.append(r), C_.append(c), V_.append(w), X_.append(wx), Y_.append(wy)
    shape = (len(targets), grid.size)
    cat = np.concatenate
    rows, cols = (cat(R_), cat(C_)) if R_ else (np.zeros(0, int), np.zeros(0, int))
    mk = lambda v: sp.csr_matrix((cat(v) if v else np.zeros(0), (rows, cols)), shape=shape)  # noqa: E731
    return mk(V_), mk(X_), mk(Y_)


def _check_delta(delta: float, L: float, R: float, h_aux: float):
    if not (0 < delta < min(L, R)):
        raise ConfigError(f"delta = {delta} violates 0 < δ < min(L,R) = {min(L, R)}")
    if delta < 2 * h_aux * (1 - 1e-12):
        raise ConfigError(f"delta = {delta} under-resolved: need δ >= 2*h_aux = {2 * h_aux}")


class RegularizedDisplacement:
    """Evaluator of eta^delta (values and first derivatives) anywhere in the Biot rectangle."""

    def __init__(self, ext: ExtendedField, delta: float):
        g = ext.grid
        _check_delta(delta, g.L, g.R, max(g.hx, g.hy))
        self.ext, self.delta = ext, delta
        self.kernel = MollifierKernel(delta)

    def _apply(self, pts):
        W, WX, WY = convolution_weights(self.ext.grid, self.delta, pts)
        v = self.ext.values
        return W @ v, np.stack([WX @ v, WY @ v], -1)

    def value(self, pts):
        return self._apply(np.atleast_2d(pts))[0]

    def gradient(self, pts):
        """(n, 2, 2) with [i, a] = d eta_i / d x_a."""
        return self._apply(np.atleast_2d(pts))[1]

    def trace(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.value(np.column_stack([x, np.zeros_like(x)]))[:, 1]

    def trace_dx(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.gradient(np.column_stack([x, np.zeros_like(x)]))[:, 1, 0]


def mollify(ext: ExtendedField, delta: float) -> RegularizedDisplacement:
    return RegularizedDisplacement(ext, delta)


def regularized_lagrangian_map(eta_delta: RegularizedDisplacement, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return pts + eta_delta.value(pts)


def regularized_interface_normal(eta_delta: RegularizedDisplacement, x) -> np.ndarray:
    d = eta_delta.trace_dx(x)
    return np.column_stack([-d, np.ones_like(d)])


# ------------------------------------------------------------------ FE operator

@dataclass
class RegularizerOperator:
    """Precomputed linear map from Biot displacement DOFs to eta^delta data.

    Because eta^delta is linear in eta, the extension (grid <- DOFs) and the
    convolution (targets <- grid) are assembled once per (mesh, delta).
    """

    space: LagrangeSpace
    delta: float
    h_aux: float
    targets: dict
    grid: AuxGrid = field(init=False)
    ext_x: sp.csr_matrix = field(init=False)
    ext_y: sp.csr_matrix = field(init=False)
    weights: dict = field(init=False)
    used_points: np.ndarray = field(init=False)

    def __post_init__(self):
        m = self.space.mesh
        L, R = m.x1 - m.x0, m.y1 - m.y0
        _check_delta(self.delta, L, R, self.h_aux)
        grid = AuxGrid.build(L, R, self.h_aux, self.delta + 2 * self.h_aux)
        self.grid = grid
        weights = {name: convolution_weights(grid, self.delta, pts) for name, pts in self.targets.items()}
        used = np.unique(np.concatenate([w[0].indices for w in weights.values()]))
        # restrict to grid columns that carry weight
        remap = lambda A: A[:, used]  # noqa: E731
        self.weights = {k: tuple(remap(A) for A in v) for k, v in weights.items()}
        pts = grid.points()[used]
        self.used_points = pts
        src, sx, sy, below = reflection_sources(pts, L, R)
        V, _, _ = self.space.eval_matrices(src)
        S = sp.diags(sx * sy)
        self.ext_x = (S @ V).tocsr()
        ey = S @ V
        b = below > 0
        if np.any(b):
            T, _, _ = self.space.eval_matrices(np.column_stack([src[:, 0], np.zeros(len(src))]))
            ey = ey + sp.diags(2.0 * sx * below) @ T
        self.ext_y = ey.tocsr()

    def extension(self, eta: np.ndarray):
        n = self.space.n_nodes
        return self.ext_x @ eta[:n], self.ext_y @ eta[n:2 * n]

    def apply(self, eta: np.ndarray, name: str):
        """Values (nt, 2) and gradients (nt, 2, 2) of eta^delta at target set ``name``."""
        ex, ey = self.extension(eta)
        return self.apply_extension(ex, ey, name)

    def apply_extension(self, ex: np.ndarray, ey: np.ndarray, name: str):
        """Mollify extension values given at ``used_points``."""
        W, WX, WY = self.weights[name]
        val = np.column_stack([W @ ex, W @ ey])
        grad = np.empty((W.shape[0], 2, 2))
        grad[:, 0, 0], grad[:, 0, 1] = WX @ ex, WY @ ex
        grad[:, 1, 0], grad[:, 1, 1] = WX @ ey, WY @ ey
        return val, grad


# ------------------------------------------------------------------ rate study

def _graded_axis(a: float, b: float, delta: float, n_layer: int = 8, h_in: float = 0.05, ng: int = 4):
    """Gauss points/weights on [a, b] refined inside layers of width delta at both ends."""
    lay = np.linspace(0.0, delta, n_layer + 1)
    mid_n = max(1, int(math.ceil((b - a - 2 * delta) / h_in)))
    mid = np.linspace(a + delta, b - delta, mid_n + 1)
    br = np.unique(np.concatenate([a + lay, mid, b - lay[::-1]]))
    x, w = np.polynomial.legendre.leggauss(ng)
    lo, hi = br[:-1, None], br[1:, None]
    pts = (0.5 * (hi - lo) * (x + 1) + lo).ravel()
    wts = (0.5 * (hi - lo) * w).ravel()
    return pts, wts


@dataclass(frozen=True)
class RateRow:
    delta: float
    h1_error: float
    grad_max_error: float
    fitted_order_h1: float
    fitted_order_grad: float


def fit_order(deltas, errors) -> float:
    """Least-squares slope of log(error) against log(delta); nan if not fittable."""
    d, e = np.asarray(deltas, float), np.asarray(errors, float)
    ok = (e > 0) & np.isfinite(e)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(d[ok]), np.log(e[ok]), 1)[0])


def convolution_rate_report(eta_exact: Callable, grad_exact: Callable, delta_list, L: float = 1.0,
                            R: float = 1.0, h_aux_factor: float = 8.0, n_boundary: int = 401):
    """H^1 and max-gradient errors of eta^delta against closed-form eta.

    ``eta_exact(p) -> (n, 2)``, ``grad_exact(p) -> (n, 2, 2)``. Norms use
    Gauss quadrature refined inside the boundary layers of width delta; the
    maximum is taken over quadrature points and boundary samples.
    """
    deltas = [float(d) for d in delta_list]
    if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise ConfigError("delta_list must be strictly decreasing")
    h1, gmax = [], []
    for d in deltas:
        ext = odd_extend(eta_exact, None, d / h_aux_factor, L=L, R=R, margin=d + 2 * d / h_aux_factor)
        reg = mollify(ext, d)
        xq, wx = _graded_axis(0.0, L, d)
        yq, wy = _graded_axis(0.0, R, d)
        X, Y = np.meshgrid(xq, yq)
        W = np.outer(wy, wx).ravel()
        P = np.column_stack([X.ravel(), Y.ravel()])
        val, grad = reg._apply(P)
        ev, eg = val - eta_exact(P), grad - grad_exact(P)
        h1.append(float(np.sqrt(np.sum(W * (np.sum(ev**2, 1) + np.sum(eg**2, (1, 2)))))))
        s = np.linspace(0, 1, n_boundary)
        B = np.concatenate([np.column_stack([s * L, 0 * s]), np.column_stack([s * L, 0 * s + R]),
                            np.column_stack([0 * s, s * R]), np.column_stack([0 * s + L, s * R])])
        _, gb = reg._apply(B)
        gmax.append(float(max(np.max(np.abs(eg)), np.max(np.abs(gb - grad_exact(B))))))
    p1, p2 = fit_order(deltas, h1), fit_order(deltas, gmax)
    return [RateRow(d, e1, e2, p1, p2) for d, e1, e2 in zip(deltas, h1, gmax)]
