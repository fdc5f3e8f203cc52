"""Geometric maps between reference and physical configurations.

Plate displacements are passed as objects with ``value(x)``, ``dx(x)``,
``dxx(x)`` and attribute ``L`` (``PlateField`` for finite element data,
``AnalyticPlate`` for closed forms). Velocity fields for the transfer maps
are callables ``u(points) -> (n, 2)`` on physical points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegeneracyError, DomainError
from .spaces import HermiteSpace, LagrangeSpace

_TOL = 1e-12


@dataclass(frozen=True)
class PlateField:
    """Plate displacement ``omega`` and velocity ``zeta`` in the Hermite space."""

    space: HermiteSpace
    omega: np.ndarray
    zeta: np.ndarray | None = None

    @property
    def L(self) -> float:
        return self.space.mesh.x1

    def value(self, x):
        return self.space.evaluate(self.omega, x, 0)

    def dx(self, x):
        return self.space.evaluate(self.omega, x, 1)

    def dxx(self, x):
        return self.space.evaluate(self.omega, x, 2)

    def velocity(self, x):
        if self.zeta is None:
            return np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
        return self.space.evaluate(self.zeta, x, 0)


@dataclass(frozen=True)
class AnalyticPlate:
    """Closed-form plate profile with its first two derivatives."""

    f: Callable
    df: Callable
    ddf: Callable = None
    L: float = 1.0

    def value(self, x):
        return np.broadcast_to(self.f(np.asarray(x, dtype=float)), np.shape(x)).astype(float)

    def dx(self, x):
        return np.broadcast_to(self.df(np.asarray(x, dtype=float)), np.shape(x)).astype(float)

    def dxx(self, x):
        if self.ddf is None:
            raise NotImplementedError("second derivative not supplied")
        return np.broadcast_to(self.ddf(np.asarray(x, dtype=float)), np.shape(x)).astype(float)

    @classmethod
    def constant(cls, c: float, L: float = 1.0):
        z = lambda x: 0.0 * x  # noqa: E731
        return cls(lambda x: c + 0.0 * x, z, z, L)


@dataclass(frozen=True)
class BiotDisplacementField:
    """Biot displacement ``eta`` and velocity ``xi`` in a vector Lagrange space."""

    space: LagrangeSpace
    eta: np.ndarray
    xi: np.ndarray | None = None

    def value(self, pts):
        return self.space.evaluate(self.eta, pts)[0]

    def gradient(self, pts):
        return self.space.evaluate(self.eta, pts)[1]


def _pts(p):
    return np.atleast_2d(np.asarray(p, dtype=float))


def _check_fluid_ref(pts, L, R):
    tol = _TOL * max(L, R, 1.0)
    bad = (pts[:, 0] < -tol) | (pts[:, 0] > L + tol) | (pts[:, 1] < -R - tol) | (pts[:, 1] > tol)
    if np.any(bad):
        raise DomainError(f"point {pts[bad][0]} outside reference fluid domain")


def _positive_height(w, R, what="R + omega"):
    h = R + np.asarray(w)
    if np.any(~(h > 0)):
        raise DegeneracyError(f"degenerate fluid domain: {what} = {np.min(h):.3e} <= 0")
    return h


# ------------------------------------------------------------------ ALE map

def ale_map(omega, points, R: float) -> np.ndarray:
    """(x, y) -> (x, y + (1 + y/R) omega(x)) on the reference fluid rectangle."""
    p = _pts(points)
    _check_fluid_ref(p, omega.L, R)
    w = omega.value(p[:, 0])
    return np.column_stack([p[:, 0], p[:, 1] + (1.0 + p[:, 1] / R) * w])


def ale_inverse(omega, points, R: float) -> np.ndarray:
    """Physical point -> reference point, (x, -R + R (R + y)/(R + omega(x)))."""
    p = _pts(points)
    h = _positive_height(omega.value(p[:, 0]), R)
    return np.column_stack([p[:, 0], -R + R * (R + p[:, 1]) / h])


def ale_differential(omega, points, R: float) -> np.ndarray:
    """Analytic differential of the ALE map, shape (n, 2, 2)."""
    p = _pts(points)
    w, wx = omega.value(p[:, 0]), omega.dx(p[:, 0])
    F = np.zeros((len(p), 2, 2))
    F[:, 0, 0] = 1.0
    F[:, 1, 0] = (1.0 + p[:, 1] / R) * wx
    F[:, 1, 1] = 1.0 + w / R
    return F


def fluid_jacobian(omega, x, R: float):
    return 1.0 + omega.value(x) / R


def interface_jacobian(omega, x):
    return np.sqrt(1.0 + omega.dx(x) ** 2)


def biot_jacobian(eta, points=None):
    """det(I + grad eta); ``eta`` is a gradient array (..., 2, 2) or a field evaluated at ``points``."""
    G = np.asarray(eta.gradient(points) if points is not None else eta, dtype=float)
    return (1.0 + G[..., 0, 0]) * (1.0 + G[..., 1, 1]) - G[..., 0, 1] * G[..., 1, 0]


def fluid_inverse_differential(w, wx, yhat, R: float) -> np.ndarray:
    """Inverse ALE differential from omega, omega_x and yhat arrays, shape (..., 2, 2)."""
    h = _positive_height(w, R)
    A = np.zeros(np.shape(h) + (2, 2))
    A[..., 0, 0] = 1.0
    A[..., 1, 0] = -(R + yhat) * wx / h
    A[..., 1, 1] = R / h
    return A


def transformed_gradient_fluid(omega, grad_hat, points, R: float) -> np.ndarray:
    """Apply (d_x - (R+y) w_x/(R+w) d_y, R/(R+w) d_y) to reference gradients.

    ``grad_hat`` has shape (n, 2) for scalars or (n, m, 2) for vector fields
    (rows are components).
    """
    p = _pts(points)
    A = fluid_inverse_differential(omega.value(p[:, 0]), omega.dx(p[:, 0]), p[:, 1], R)
    g = np.asarray(grad_hat, dtype=float)
    if g.ndim == 2:
        return np.einsum("nj,nji->ni", g, A)
    return np.einsum("nmj,nji->nmi", g, A)


def inverse_deformation(grad_eta, tol: float = 1e-14):
    """(I + grad eta)^-1 and its determinant; raises on (near) singular matrices."""
    G = np.asarray(grad_eta, dtype=float)
    F = G + np.eye(2)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    scale = np.max(np.abs(F), axis=(-1, -2))
    if np.any(np.abs(det) <= tol * np.maximum(scale, 1.0) ** 2):
        raise DegeneracyError("I + grad(eta) is singular")
    inv = np.empty_like(F)
    inv[..., 0, 0], inv[..., 1, 1] = F[..., 1, 1] / det, F[..., 0, 0] / det
    inv[..., 0, 1], inv[..., 1, 0] = -F[..., 0, 1] / det, -F[..., 1, 0] / det
    return inv, det


def transformed_gradient_biot(grad_eta, grad_hat) -> np.ndarray:
    """grad_hat . (I + grad eta)^-1 for scalar (n, 2) or vector (n, m, 2) gradients."""
    inv, _ = inverse_deformation(grad_eta)
    g = np.asarray(grad_hat, dtype=float)
    if g.ndim == inv.ndim - 1:
        return np.einsum("...j,...ji->...i", g, inv)
    return np.einsum("...mj,...ji->...mi", g, inv)


def domain_velocity(zeta, yhat, R: float) -> np.ndarray:
    """ALE domain velocity ((R + y)/R) zeta e_y."""
    z = np.asarray(zeta, dtype=float)
    y = np.asarray(yhat, dtype=float)
    wy = (R + y) / R * z
    return np.stack([np.zeros_like(wy), wy], -1)


def normal_tangent(omega, x):
    """Renormalized normal (-w_x, 1) and tangent (1, w_x); |n| equals the interface Jacobian."""
    wx = np.asarray(omega.dx(x), dtype=float)
    one = np.ones_like(wx)
    return np.stack([-wx, one], -1), np.stack([one, wx], -1)


# ------------------------------------------------------------------ transfers

def _ratio(src, dst, x, R):
    hs = _positive_height(src.value(x), R, "R + omega_src")
    hd = _positive_height(dst.value(x), R, "R + omega_dst")
    r = hs / hd
    dr = (src.dx(x) * hd - hs * dst.dx(x)) / hd**2
    return r, dr


def transfer_matrix_K(src, dst, points, R: float) -> np.ndarray:
    """[[r, 0], [-(R + y) r', 1]] with r = (R + omega_src)/(R + omega_dst); shape (n, 2, 2)."""
    p = _pts(points)
    r, dr = _ratio(src, dst, p[:, 0], R)
    K = np.zeros((len(p), 2, 2))
    K[:, 0, 0] = r
    K[:, 1, 0] = -(R + p[:, 1]) * dr
    K[:, 1, 1] = 1.0
    return K


def transfer_velocity(u: Callable, src, dst, points, R: float) -> np.ndarray:
    """Divergence-preserving transfer of a velocity on the domain bounded by
    ``src`` to the domain bounded by ``dst``: K(x, y) u(x, r(x)(R + y) - R)."""
    p = _pts(points)
    r, _ = _ratio(src, dst, p[:, 0], R)
    q = np.column_stack([p[:, 0], r * (R + p[:, 1]) - R])
    return np.einsum("nij,nj->ni", transfer_matrix_K(src, dst, p, R), np.asarray(u(q)))


def push_forward_velocity(u: Callable, omega, omega_delta, points, R: float) -> np.ndarray:
    """Move u from the domain below ``omega`` to the domain below ``omega_delta``."""
    return transfer_velocity(u, omega, omega_delta, points, R)


def pull_back_velocity(u_delta: Callable, omega, omega_delta, points, R: float) -> np.ndarray:
    """Move u_delta from the domain below ``omega_delta`` to the domain below ``omega``."""
    return transfer_velocity(u_delta, omega_delta, omega, points, R)


@dataclass(frozen=True)
class TransferMaps:
    """Bundle of evaluators for a fixed plate displacement (and optional Biot gradient)."""

    omega: object
    R: float

    def phi(self, pts):
        return ale_map(self.omega, pts, self.R)

    def phi_inv(self, pts):
        return ale_inverse(self.omega, pts, self.R)

    def J_f(self, x):
        return fluid_jacobian(self.omega, x, self.R)

    def J_gamma(self, x):
        return interface_jacobian(self.omega, x)

    def grad_f(self, grad_hat, pts):
        return transformed_gradient_fluid(self.omega, grad_hat, pts, self.R)

    def normal_tangent(self, x):
        return normal_tangent(self.omega, x)
