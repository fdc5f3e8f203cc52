"""Gauss rules on the unit interval and on the reference triangle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights on a reference cell, exact to degree ``order``."""

    points: np.ndarray
    weights: np.ndarray
    order: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def line_rule(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree <= order."""
    n = max(1, math.ceil((order + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, order)


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """Collapsed Gauss rule on the triangle (0,0), (1,0), (0,1).

    The Duffy map (u, v) -> (u (1 - v), v) has Jacobian (1 - v), so a tensor
    rule with ceil((order + 2) / 2) points per direction is exact to ``order``.
    """
    n = max(1, math.ceil((order + 2) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    t, wt = 0.5 * (x + 1.0), 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    WU, WV = np.meshgrid(wt, wt, indexing="ij")
    pts = np.column_stack([(U * (1 - V)).ravel(), V.ravel()])
    wts = (WU * WV * (1 - V)).ravel()
    return QuadratureRule(pts, wts, order)
