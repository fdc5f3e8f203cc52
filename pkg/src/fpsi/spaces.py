"""Finite element spaces: Lagrange P1/P2 on the structured triangulations and
clamped Hermite cubics on the plate, plus the global DOF layout."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, MeshIncompatibilityError
from .mesh import InterfaceMap, RefMesh
from .quadrature import line_rule, triangle_rule

_TOL = 1e-12


# ---------------------------------------------------------------- reference bases

def ref_basis(degree: int, pts: np.ndarray):
    """Values (n, nloc) and reference gradients (n, nloc, 2) on the unit triangle.

    Local order: vertices a, b, c, then edge midpoints ab, bc, ca.
    """
    xi, eta = pts[..., 0], pts[..., 1]
    l1, l2, l3 = 1.0 - xi - eta, xi, eta
    one = np.ones_like(xi)
    g1, g2, g3 = (-one, -one), (one, 0 * one), (0 * one, one)
    if degree == 1:
        val = np.stack([l1, l2, l3], axis=-1)
        grad = np.stack([np.stack(g, -1) for g in (g1, g2, g3)], axis=-2)
        return val, grad
    if degree != 2:
        raise ValueError("only degrees 1 and 2 are supported")
    L = (l1, l2, l3)
    G = (np.stack(g1, -1), np.stack(g2, -1), np.stack(g3, -1))
    vals, grads = [], []
    for a in range(3):
        vals.append(L[a] * (2 * L[a] - 1))
        grads.append((4 * L[a] - 1)[..., None] * G[a])
    for a, b in ((0, 1), (1, 2), (2, 0)):
        vals.append(4 * L[a] * L[b])
        grads.append(4 * (L[b][..., None] * G[a] + L[a][..., None] * G[b]))
    return np.stack(vals, -1), np.stack(grads, -2)


@dataclass(frozen=True)
class CellQuadrature:
    """Quadrature data on every cell: physical points, weights (incl. |det|),
    basis values and physical basis gradients."""

    points: np.ndarray      # (nc, nq, 2)
    weights: np.ndarray     # (nc, nq)
    phi: np.ndarray         # (nq, nloc)
    grad: np.ndarray        # (nc, nq, nloc, 2)
    order: int

    @property
    def flat_points(self):
        return self.points.reshape(-1, 2)


class LagrangeSpace:
    """Continuous Lagrange elements of degree 1 or 2 on a structured triangulation.

    Scalar nodes live on a refined lattice of (k*nx+1) x (k*ny+1) points.
    Vector spaces (``ncomp=2``) store DOFs component-blocked: all x-values,
    then all y-values.
    """

    def __init__(self, mesh: RefMesh, degree: int, ncomp: int = 1):
        self.mesh, self.degree, self.ncomp = mesh, degree, ncomp
        k = degree
        nx, ny = mesh.nx, mesh.ny
        self.NX, self.NY = k * nx, k * ny
        self.hx = (mesh.x1 - mesh.x0) / nx
        self.hy = (mesh.y1 - mesh.y0) / ny
        X = mesh.x0 + (mesh.x1 - mesh.x0) * (np.arange(self.NX + 1) / self.NX)
        Y = mesh.y0 + (mesh.y1 - mesh.y0) * (np.arange(self.NY + 1) / self.NY)
        X[0], X[-1], Y[0], Y[-1] = mesh.x0, mesh.x1, mesh.y0, mesh.y1
        self.node_x, self.node_y = X, Y
        GX, GY = np.meshgrid(X, Y)
        self.node_coords = np.column_stack([GX.ravel(), GY.ravel()])
        self.n_nodes = len(self.node_coords)
        self.n_dofs = ncomp * self.n_nodes

        nid = lambda I, J: J * (self.NX + 1) + I  # noqa: E731
        i, j = np.meshgrid(np.arange(nx), np.arange(ny))
        i, j = i.ravel(), j.ravel()
        lower = [(k * i, k * j), (k * i + k, k * j), (k * i + k, k * j + k)]
        upper = [(k * i, k * j), (k * i + k, k * j + k), (k * i, k * j + k)]
        cells = np.empty((2 * len(i), 3 if k == 1 else 6), dtype=np.int64)
        for slot, tri in ((0, lower), (1, upper)):
            cols = [nid(*v) for v in tri]
            if k == 2:
                for a, b in ((0, 1), (1, 2), (2, 0)):
                    cols.append(nid((tri[a][0] + tri[b][0]) // 2, (tri[a][1] + tri[b][1]) // 2))
            cells[slot::2] = np.column_stack(cols)
        self.cell_nodes = cells
        hx, hy = self.hx, self.hy
        # columns (b - a, c - a) of the affine map for the two triangle types
        self._jac = np.array([[[hx, hx], [0.0, hy]], [[hx, 0.0], [hy, hy]]])
        self._jinv_t = np.array([np.linalg.inv(J).T for J in self._jac])
        self._origin = mesh.vertices[mesh.cells[:, 0]]

    # -------------------------------------------------------------- topology
    def boundary_nodes(self, side: str) -> np.ndarray:
        """Scalar node indices on 'left', 'right', 'bottom' or 'top'."""
        I, J = np.meshgrid(np.arange(self.NX + 1), np.arange(self.NY + 1))
        I, J = I.ravel(), J.ravel()
        mask = {"left": I == 0, "right": I == self.NX,
                "bottom": J == 0, "top": J == self.NY}[side]
        return np.nonzero(mask)[0]

    def component_dofs(self, nodes: np.ndarray, comp: int) -> np.ndarray:
        return comp * self.n_nodes + np.asarray(nodes)

    def cell_dofs(self) -> np.ndarray:
        """(nc, ncomp*nloc) global DOFs with local order comp-major."""
        return np.concatenate([c * self.n_nodes + self.cell_nodes for c in range(self.ncomp)], axis=1)

    # ------------------------------------------------------------ quadrature
    @lru_cache(maxsize=8)
    def quadrature(self, order: int) -> CellQuadrature:
        rule = triangle_rule(order)
        phi, dphi = ref_basis(self.degree, rule.points)
        nc = len(self.cell_nodes)
        kind = np.arange(nc) % 2
        jac = self._jac[kind]                                    # (nc, 2, 2)
        pts = self._origin[:, None, :] + np.einsum("cij,qj->cqi", jac, rule.points)
        det = self.hx * self.hy
        w = np.broadcast_to(rule.weights * det, (nc, len(rule))).copy()
        grad = np.einsum("cij,qkj->cqki", self._jinv_t[kind], dphi)
        return CellQuadrature(pts, w, phi, grad, order)

    # ------------------------------------------------------------ evaluation
    def locate(self, points: np.ndarray):
        """Cell index and reference coordinates for each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.mesh
        lx, ly = m.x1 - m.x0, m.y1 - m.y0
        tol = _TOL * max(lx, ly, 1.0)
        bad = ((pts[:, 0] < m.x0 - tol) | (pts[:, 0] > m.x1 + tol)
               | (pts[:, 1] < m.y0 - tol) | (pts[:, 1] > m.y1 + tol) | ~np.isfinite(pts).all(1))
        if np.any(bad):
            raise DomainError(f"point {pts[bad][0]} outside [{m.x0},{m.x1}]x[{m.y0},{m.y1}]")
        sx = (pts[:, 0] - m.x0) / self.hx
        sy = (pts[:, 1] - m.y0) / self.hy
        i = np.clip(np.floor(sx).astype(np.int64), 0, m.nx - 1)
        j = np.clip(np.floor(sy).astype(np.int64), 0, m.ny - 1)
        s, t = sx - i, sy - j
        upper = t > s
        xi = np.where(upper, s, s - t)
        et = np.where(upper, t - s, t)
        cell = 2 * (j * m.nx + i) + upper
        return cell, np.column_stack([xi, et])

    def eval_matrices(self, points: np.ndarray):
        """Sparse scalar evaluation matrices (value, d/dx, d/dy), each (npts, n_nodes)."""
        cell, ref = self.locate(points)
        phi, dphi = ref_basis(self.degree, ref)
        grad = np.einsum("pij,pkj->pki", self._jinv_t[cell % 2], dphi)
        rows = np.repeat(np.arange(len(cell)), phi.shape[1])
        cols = self.cell_nodes[cell].ravel()
        shape = (len(cell), self.n_nodes)
        mk = lambda v: sp.csr_matrix((v.ravel(), (rows, cols)), shape=shape)  # noqa: E731
        return mk(phi), mk(grad[..., 0]), mk(grad[..., 1])

    def evaluate(self, dofs: np.ndarray, points: np.ndarray):
        """Values (npts, ncomp) and gradients (npts, ncomp, 2) at points."""
        V, DX, DY = self.eval_matrices(points)
        d = np.asarray(dofs).reshape(self.ncomp, self.n_nodes)
        val = np.stack([V @ d[c] for c in range(self.ncomp)], -1)
        grad = np.stack([np.stack([DX @ d[c], DY @ d[c]], -1) for c in range(self.ncomp)], -2)
        return val, grad

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of a callable ``f(x, y)`` returning scalars or (.., ncomp)."""
        x, y = self.node_coords[:, 0], self.node_coords[:, 1]
        vals = np.asarray(f(x, y), dtype=float)
        if self.ncomp == 1:
            return np.broadcast_to(vals, (self.n_nodes,)).astype(float).copy()
        vals = np.broadcast_to(vals, (self.n_nodes, self.ncomp))
        return np.ascontiguousarray(vals.T).ravel()


# ------------------------------------------------------------------ Hermite plate

def hermite_basis(s: np.ndarray, h: float, deriv: int = 0) -> np.ndarray:
    """Cubic Hermite shape functions on an element of length h, local coordinate s in [0,1].

    Order: value at left, slope at left, value at right, slope at right.
    """
    s = np.asarray(s, dtype=float)
    if deriv == 0:
        b = [1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3, h * (s**3 - s**2)]
    elif deriv == 1:
        b = [(-6 * s + 6 * s**2) / h, 1 - 4 * s + 3 * s**2, (6 * s - 6 * s**2) / h, 3 * s**2 - 2 * s]
    elif deriv == 2:
        b = [(-6 + 12 * s) / h**2, (-4 + 6 * s) / h, (6 - 12 * s) / h**2, (6 * s - 2) / h]
    elif deriv == 3:
        b = [12 / h**3 + 0 * s, 6 / h**2 + 0 * s, -12 / h**3 + 0 * s, 6 / h**2 + 0 * s]
    else:
        raise ValueError("deriv must be 0..3")
    return np.stack(b, -1)


class HermiteSpace:
    """H^2-conforming cubic Hermite space on the plate mesh.

    DOF ``2 i`` is the value and ``2 i + 1`` the slope at node ``i``.
    """

    def __init__(self, mesh: RefMesh):
        self.mesh = mesh
        self.nodes = mesh.xs
        self.ne = mesh.nx
        self.h = (mesh.x1 - mesh.x0) / mesh.nx
        self.n_dofs = 2 * (self.ne + 1)
        self.clamped = np.array([0, 1, self.n_dofs - 2, self.n_dofs - 1])
        self.free = np.setdiff1d(np.arange(self.n_dofs), self.clamped)
        e = np.arange(self.ne)
        self.elem_dofs = np.column_stack([2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3])

    def locate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = self.mesh
        tol = _TOL * max(m.x1 - m.x0, 1.0)
        if np.any((x < m.x0 - tol) | (x > m.x1 + tol) | ~np.isfinite(x)):
            raise DomainError(f"plate point outside [{m.x0}, {m.x1}]")
        sx = (x - m.x0) / self.h
        e = np.clip(np.floor(sx).astype(np.int64), 0, self.ne - 1)
        return e, sx - e

    def eval_matrix(self, x, deriv: int = 0) -> sp.csr_matrix:
        e, s = self.locate(x)
        B = hermite_basis(s, self.h, deriv)
        rows = np.repeat(np.arange(len(e)), 4)
        return sp.csr_matrix((B.ravel(), (rows, self.elem_dofs[e].ravel())), shape=(len(e), self.n_dofs))

    def evaluate(self, dofs, x, deriv: int = 0) -> np.ndarray:
        return self.eval_matrix(x, deriv) @ np.asarray(dofs)

    def interpolate(self, f, df) -> np.ndarray:
        out = np.empty(self.n_dofs)
        out[0::2] = f(self.nodes)
        out[1::2] = df(self.nodes)
        return out

    @lru_cache(maxsize=8)
    def quadrature(self, order: int = 8):
        """Points (ne, nq), weights (ne, nq) and basis tables (nq, 4) per derivative."""
        rule = line_rule(order)
        pts = self.mesh.x0 + (np.arange(self.ne)[:, None] + rule.points[None, :]) * self.h
        w = np.broadcast_to(rule.weights * self.h, pts.shape).copy()
        tabs = [hermite_basis(rule.points, self.h, d) for d in range(3)]
        return pts, w, tabs

    def _assemble(self, loc: np.ndarray) -> sp.csr_matrix:
        rows = np.repeat(self.elem_dofs, 4, axis=1).ravel()
        cols = np.tile(self.elem_dofs, (1, 4)).ravel()
        return sp.csr_matrix((np.broadcast_to(loc, (self.ne, 4, 4)).ravel(), (rows, cols)),
                             shape=(self.n_dofs, self.n_dofs))

    @lru_cache(maxsize=1)
    def mass(self) -> sp.csr_matrix:
        _, w, (B0, _, _) = self.quadrature(8)
        return self._assemble(np.einsum("q,qa,qb->ab", w[0], B0, B0))

    @lru_cache(maxsize=1)
    def bending(self) -> sp.csr_matrix:
        _, w, (_, _, B2) = self.quadrature(8)
        return self._assemble(np.einsum("q,qa,qb->ab", w[0], B2, B2))


# ------------------------------------------------------------------ layout

@dataclass(frozen=True)
class FunctionSpaceSet:
    plate: HermiteSpace
    velocity: LagrangeSpace
    multiplier: LagrangeSpace
    displacement: LagrangeSpace
    pressure: LagrangeSpace


@dataclass(frozen=True)
class DofLayout:
    """Global DOF layout of the coupled fluid-Biot unknown (u, multiplier, eta, p).

    The plate unknown is stored separately; ``coupling_pairs`` lists
    (global eta_y DOF, plate value DOF) for every interface vertex.
    """

    n_u: int
    n_pi: int
    n_eta: int
    n_p: int
    essential: np.ndarray
    plate_essential: np.ndarray
    coupling_pairs: np.ndarray

    @property
    def offsets(self):
        o = np.cumsum([0, self.n_u, self.n_pi, self.n_eta, self.n_p])
        return {"u": o[0], "pi": o[1], "eta": o[2], "p": o[3], "end": o[4]}

    @property
    def n_total(self) -> int:
        return self.n_u + self.n_pi + self.n_eta + self.n_p

    @property
    def free(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_total), self.essential)

    def block(self, name: str) -> slice:
        o = self.offsets
        nxt = {"u": "pi", "pi": "eta", "eta": "p", "p": "end"}[name]
        return slice(o[name], o[nxt])

    def split(self, x: np.ndarray) -> dict:
        return {k: x[self.block(k)] for k in ("u", "pi", "eta", "p")}

    def join(self, u, pi, eta, p) -> np.ndarray:
        return np.concatenate([u, pi, eta, p])


def build_spaces(meshes, imap: InterfaceMap, velocity_degree: int = 2, pressure_degree: int = 1):
    fluid, biot, plate = meshes
    if not (fluid.nx == biot.nx == plate.nx) or len(imap) != fluid.nx + 1:
        raise MeshIncompatibilityError("meshes do not share the interface lattice")
    spaces = FunctionSpaceSet(
        plate=HermiteSpace(plate),
        velocity=LagrangeSpace(fluid, velocity_degree, 2),
        multiplier=LagrangeSpace(fluid, pressure_degree, 1),
        displacement=LagrangeSpace(biot, velocity_degree, 2),
        pressure=LagrangeSpace(biot, pressure_degree, 1),
    )
    V, Q, D, P = spaces.velocity, spaces.multiplier, spaces.displacement, spaces.pressure
    n_u, n_pi, n_eta, n_p = V.n_dofs, Q.n_dofs, D.n_dofs, P.n_dofs
    o_eta = n_u + n_pi
    o_p = o_eta + n_eta

    wall_f = np.unique(np.concatenate([V.boundary_nodes(s) for s in ("left", "right", "bottom")]))
    ess = [V.component_dofs(wall_f, 0), V.component_dofs(wall_f, 1)]
    wall_b = np.unique(np.concatenate([D.boundary_nodes(s) for s in ("left", "right", "top")]))
    ess += [o_eta + D.component_dofs(wall_b, 0), o_eta + D.component_dofs(wall_b, 1)]
    ess.append(o_eta + D.component_dofs(D.boundary_nodes("bottom"), 0))
    wall_p = np.unique(np.concatenate([P.boundary_nodes(s) for s in ("left", "right", "top")]))
    ess.append(o_p + wall_p)
    essential = np.unique(np.concatenate(ess))

    # interface vertex i sits at P2 lattice column k*i on the bottom row
    k = D.degree
    vert_nodes = k * np.arange(plate.nx + 1)
    pairs = np.column_stack([o_eta + D.component_dofs(vert_nodes, 1), 2 * imap.plate_nodes])
    layout = DofLayout(n_u, n_pi, n_eta, n_p, essential, spaces.plate.clamped, pairs)
    return spaces, layout


@dataclass(frozen=True)
class CouplingMap:
    """Identification of Biot interface y-displacements with plate values.

    ``pairs`` holds (global eta_y DOF, plate value DOF) for each interface
    vertex; ``free_pairs`` excludes the clamped end points.
    """

    pairs: np.ndarray
    free_pairs: np.ndarray
    eta_offset: int
    trace_nodes: np.ndarray     # scalar Biot nodes on the interface, ordered in x
    trace_x: np.ndarray

    @property
    def n_shared_free(self) -> int:
        return len(self.free_pairs)

    def mismatch(self, coupled: np.ndarray, omega: np.ndarray) -> float:
        """Max nodal |eta_y - omega| over interface vertices."""
        if len(self.pairs) == 0:
            return 0.0
        return float(np.max(np.abs(coupled[self.pairs[:, 0]] - omega[self.pairs[:, 1]])))

    def impose(self, coupled: np.ndarray, omega: np.ndarray, plate: HermiteSpace, n_nodes: int):
        """Overwrite interface eta_y DOFs with the plate profile (nodal interpolant)."""
        out = np.array(coupled, dtype=float, copy=True)
        dofs = self.eta_offset + n_nodes + self.trace_nodes
        out[dofs] = plate.evaluate(omega, self.trace_x)
        return out


def apply_coupling_constraint(layout: DofLayout, spaces: FunctionSpaceSet | None = None) -> CouplingMap:
    """Return the node-pair identification between Biot interface y-DOFs and plate values."""
    pairs = np.asarray(layout.coupling_pairs)
    plate_ess = set(layout.plate_essential.tolist())
    free = np.array([p for p in pairs if int(p[1]) not in plate_ess], dtype=np.int64).reshape(-1, 2)
    eta_off = layout.offsets["eta"]
    if spaces is not None:
        D = spaces.displacement
        nodes = D.boundary_nodes("bottom")
        nodes = nodes[np.argsort(D.node_coords[nodes, 0], kind="stable")]
        xs = D.node_coords[nodes, 0]
        vx = spaces.plate.nodes
        if not np.array_equal(xs[:: D.degree], vx):
            raise MeshIncompatibilityError("Biot interface vertices are not collocated with plate nodes")
        return CouplingMap(pairs, free, eta_off, nodes, xs)
    return CouplingMap(pairs, free, eta_off, np.zeros(0, dtype=np.int64), np.zeros(0))
