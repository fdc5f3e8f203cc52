"""Quadrature-level operators, the two implicit subproblem systems and the
discrete energy / dissipation functionals.

Every bilinear form is written as ``A_test^T diag(c) A_trial`` where the
``A`` are sparse evaluation operators at quadrature points acting on the
global coupled unknown ``X = (u, multiplier, eta, p)``. Energies are
evaluated with the same operators and weights, so the discrete energy
identities hold up to the quadrature of the (non-polynomial) regularized
geometry only.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DegeneracyError
from .mesh import build_interface_map, build_reference_meshes
from .quadrature import line_rule
from .regularizer import RegularizerOperator
from .spaces import apply_coupling_constraint, build_spaces
from .transforms import fluid_inverse_differential


@dataclass(frozen=True)
class PhysicalParams:
    rho_b: float = 1.0
    mu_e: float = 1.0
    lam_e: float = 1.0
    mu_v: float = 0.1
    lam_v: float = 0.1
    alpha: float = 1.0
    c0: float = 1.0
    kappa: float = 1.0
    rho_p: float = 1.0
    nu: float = 1.0
    beta: float = 1.0
    L: float = 1.0
    R: float = 1.0

    def validate(self) -> "PhysicalParams":
        for k in ("rho_b", "mu_e", "lam_e", "alpha", "rho_p", "nu", "L", "R"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} = {getattr(self, k)} violates ρ_b, μ_e, λ_e, α, ρ_p, ν > 0 (and L, R > 0)")
        for k in ("mu_v", "lam_v"):
            if not getattr(self, k) >= 0:
                raise ConfigError(f"{k} = {getattr(self, k)} violates μ_v, λ_v ≥ 0")
        for k in ("beta", "c0"):
            if not getattr(self, k) >= 0:
                raise ConfigError(f"{k} = {getattr(self, k)} violates β, c₀ ≥ 0")
        if not self.kappa > 0:
            raise ConfigError(f"kappa = {self.kappa} violates κ > 0")
        return self

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _place(M: sp.spmatrix, offset: int, n: int) -> sp.csr_matrix:
    """Shift the columns of M by ``offset`` inside an n-column matrix."""
    M = M.tocoo()
    return sp.csr_matrix((M.data, (M.row, M.col + offset)), shape=(M.shape[0], n))


def _d(v) -> sp.dia_matrix:
    return sp.diags(np.asarray(v, dtype=float))


@dataclass
class RegularizedGeometry:
    """eta^delta data needed by one fluid-Biot step."""

    grad_b: np.ndarray     # (nqb, 2, 2) gradient at Biot quadrature points
    val_g: np.ndarray      # (ngq, 2) values on the interface quadrature points
    grad_g: np.ndarray     # (ngq, 2, 2)

    @property
    def F(self):
        return self.grad_b + np.eye(2)

    @property
    def det(self):
        F = self.F
        return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]

    @property
    def adj(self):
        F = self.F
        A = np.empty_like(F)
        A[:, 0, 0], A[:, 1, 1] = F[:, 1, 1], F[:, 0, 0]
        A[:, 0, 1], A[:, 1, 0] = -F[:, 0, 1], -F[:, 1, 0]
        return A

    @property
    def normal_dx(self):
        """x-derivative of the regularized interface displacement."""
        return self.grad_g[:, 1, 0]


class Discretization:
    """Meshes, spaces, DOF layout and all fixed quadrature operators."""

    def __init__(self, params: PhysicalParams, nx: int, ny: int, order: int = 6,
                 delta: float | None = None, h_aux_factor: float = 8.0, line_order: int | None = None):
        self.params = params.validate()
        self.nx, self.ny, self.order = nx, ny, order
        L, R = params.L, params.R
        self.meshes = build_reference_meshes(L, R, nx, ny)
        self.imap = build_interface_map(*self.meshes)
        self.spaces, self.layout = build_spaces(self.meshes, self.imap)
        self.coupling = apply_coupling_constraint(self.layout, self.spaces)
        S, lay = self.spaces, self.layout
        n = lay.n_total
        off = lay.offsets
        self.n = n
        V, Q, D, P, H = S.velocity, S.multiplier, S.displacement, S.pressure, S.plate
        self.n2f, self.n2b = V.n_nodes, D.n_nodes

        # fluid quadrature
        fq, fq1 = V.quadrature(order), Q.quadrature(order)
        self.xf = fq.flat_points
        self.wf = fq.weights.ravel()
        Nf, Gfx, Gfy = self._cell_ops(V, fq)
        Qf, _, _ = self._cell_ops(Q, fq1)
        self.U = [_place(Nf, off["u"] + c * self.n2f, n) for c in range(2)]
        self._Gf = [[_place(G, off["u"] + c * self.n2f, n) for G in (Gfx, Gfy)] for c in range(2)]
        self.PI = _place(Qf, off["pi"], n)
        self.Hf = [H.eval_matrix(self.xf[:, 0], d) for d in (0, 1)]

        # Biot quadrature
        bq, bq1 = D.quadrature(order), P.quadrature(order)
        self.xb = bq.flat_points
        self.wb = bq.weights.ravel()
        Nb, Gbx, Gby = self._cell_ops(D, bq)
        Pb, Pbx, Pby = self._cell_ops(P, bq1)
        self.E = [_place(Nb, off["eta"] + c * self.n2b, n) for c in range(2)]
        self.DE = [[_place(G, off["eta"] + c * self.n2b, n) for G in (Gbx, Gby)] for c in range(2)]
        self.PB = _place(Pb, off["p"], n)
        self.DP = [_place(Pbx, off["p"], n), _place(Pby, off["p"], n)]

        # interface quadrature (plate mesh)
        self.line_order = line_order if line_order is not None else 2 * order
        rule = line_rule(self.line_order)
        h = H.h
        self.xg = (np.arange(H.ne)[:, None] * h + rule.points[None, :] * h).ravel()
        self.wg = np.tile(rule.weights * h, H.ne)
        pg = np.column_stack([self.xg, np.zeros_like(self.xg)])
        Vg, _, _ = V.eval_matrices(pg)
        Dg, Dgx, _ = D.eval_matrices(pg)
        Pg, _, _ = P.eval_matrices(pg)
        self.UG = [_place(Vg, off["u"] + c * self.n2f, n) for c in range(2)]
        self.EG = [_place(Dg, off["eta"] + c * self.n2b, n) for c in range(2)]
        self.EGx = [_place(Dgx, off["eta"] + c * self.n2b, n) for c in range(2)]
        self.PG = _place(Pg, off["p"], n)
        self.Hg = [H.eval_matrix(self.xg, d) for d in (0, 1, 2)]
        self.Dg = Dg

        self.free = lay.free
        self.plate_free = H.free
        self.delta = delta
        self.h_aux = None if delta is None else delta / h_aux_factor
        self.reg_op = None
        if delta is not None and delta > 0:
            self.reg_op = RegularizerOperator(D, delta, self.h_aux, {"biot": self.xb, "gamma": pg})

    @staticmethod
    def _cell_ops(space, q):
        """Sparse scalar operators (value, d/dx, d/dy) at all quadrature points of a space."""
        nc, nq = q.weights.shape
        nloc = q.phi.shape[1]
        rows = np.repeat(np.arange(nc * nq), nloc)
        cols = np.repeat(space.cell_nodes, nq, axis=0).ravel()
        shape = (nc * nq, space.n_nodes)
        val = np.broadcast_to(q.phi, (nc, nq, nloc)).ravel()
        mk = lambda v: sp.csr_matrix((np.ascontiguousarray(v).ravel(), (rows, cols)), shape=shape)  # noqa: E731
        return mk(val), mk(q.grad[..., 0]), mk(q.grad[..., 1])

    # ---------------------------------------------------------------- geometry
    def regularize(self, eta: np.ndarray) -> RegularizedGeometry:
        """eta^delta at Biot and interface quadrature points (delta = 0: eta itself)."""
        if self.reg_op is None:
            gb = np.stack([np.stack([self.DE[c][j] @ eta for j in range(2)], -1) for c in range(2)], -2)
            vg = np.column_stack([self.EG[c] @ eta for c in range(2)])
            gg = np.zeros((len(self.xg), 2, 2))
            gg[:, 1, 0] = self.EGx[1] @ eta
            gg[:, 0, 0] = self.EGx[0] @ eta
            return RegularizedGeometry(gb, vg, gg)
        e = eta[self.layout.block("eta")]
        vb, gb = self.reg_op.apply(e, "biot")
        vg, gg = self.reg_op.apply(e, "gamma")
        return RegularizedGeometry(gb, vg, gg)

    def fluid_geometry(self, omega: np.ndarray):
        """J, inverse differential and omega values at fluid quadrature points."""
        R = self.params.R
        w, wx = self.Hf[0] @ omega, self.Hf[1] @ omega
        A = fluid_inverse_differential(w, wx, self.xf[:, 1], R)
        return 1.0 + w / R, A, w

    def fluid_grad_ops(self, A):
        """DU[c][i]: operator for d_i u_c under the transformed gradient."""
        return [[_d(A[:, 0, i]) @ self._Gf[c][0] + _d(A[:, 1, i]) @ self._Gf[c][1] for i in range(2)]
                for c in range(2)]

    def interface_frame(self, omega: np.ndarray):
        wx = self.Hg[1] @ omega
        n = np.column_stack([-wx, np.ones_like(wx)])
        tau = np.column_stack([np.ones_like(wx), wx])
        return n, tau, np.sqrt(1.0 + wx**2)

    # ---------------------------------------------------------------- helpers
    def field_at(self, ops, X):
        return np.column_stack([op @ X for op in ops])

    def plate_trace_of_xi(self, X):
        """Interface values of the Biot velocity y-component (the plate velocity zeta^n)."""
        return self.EG[1] @ X


# ------------------------------------------------------------------ systems

@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    min_diag_dissipative: float = float("nan")

    def solve(self) -> np.ndarray:
        A = self.matrix[self.free][:, self.free].tocsc()
        x = np.zeros(self.matrix.shape[0])
        x[self.free] = spla.spsolve(A, self.rhs[self.free])
        if not np.all(np.isfinite(x)):
            raise DegeneracyError("linear solve produced non-finite values")
        return x

    def residual(self, x) -> float:
        A = self.matrix[self.free][:, self.free]
        r = A @ x[self.free] - self.rhs[self.free]
        return float(np.linalg.norm(r) / max(np.linalg.norm(self.rhs[self.free]), 1e-300))


class _Form:
    """Accumulator for sum_k A_test^T diag(c) (A_trial X + o)."""

    def __init__(self, n):
        self.n = n
        self.mats = []
        self.rhs = np.zeros(n)

    def add(self, test, coef, trial, offset=None):
        T = test.T @ _d(coef)
        self.mats.append(T @ trial)
        if offset is not None:
            self.rhs -= T @ offset

    def add_rhs(self, vec):
        self.rhs += vec

    def matrix(self):
        A = sp.csr_matrix((self.n, self.n))
        for M in self.mats:
            A = A + M
        return A.tocsr()


def plate_mass_system(disc: Discretization):
    H = disc.spaces.plate
    return H.mass(), H.bending()


def plate_coupling_matrix(disc: Discretization) -> sp.csr_matrix:
    """Mixed mass between plate test functions and interface traces of the coupled unknown."""
    return (disc.Hg[0].T @ _d(disc.wg) @ disc.EG[1]).tocsr()


def assemble_plate_system(disc: Discretization, omega_prev: np.ndarray, zeta_prev, dt: float,
                          forcing: np.ndarray | None = None) -> AssembledSystem:
    """(rho_p M + dt^2 K) w^{n+1/2} = rho_p M w^{n-1/2} + dt rho_p (zeta^n, phi) + dt^2 f.

    ``zeta_prev`` is either a Hermite DOF vector (length of the plate space)
    or a full coupled vector whose Biot velocity trace defines zeta^n.
    """
    H = disc.spaces.plate
    rho = disc.params.rho_p
    M, K = H.mass(), H.bending()
    zp = np.asarray(zeta_prev, dtype=float)
    if len(zp) == H.n_dofs:
        zterm = M @ zp
    else:
        zterm = disc.Hg[0].T @ (disc.wg * (disc.EG[1] @ zp))
    rhs = rho * (M @ omega_prev) + dt * rho * zterm
    if forcing is not None:
        rhs = rhs + dt**2 * forcing
    A = (rho * M + dt**2 * K).tocsr()
    return AssembledSystem(A, rhs, H.free, float(np.min(A.diagonal()[H.free])) if len(H.free) else float("nan"))


def assemble_fluid_biot_system(disc: Discretization, X_n: np.ndarray, xi_n: np.ndarray,
                               omega_n: np.ndarray, omega_half: np.ndarray, zeta_half: np.ndarray,
                               geo: RegularizedGeometry, dt: float,
                               forcing: np.ndarray | None = None) -> AssembledSystem:
    """Coupled fluid-Biot system for X^{n+1} = (u, multiplier, eta, p).

    ``X_n`` holds (u^n, ., eta^n, p^n); ``xi_n`` is the coupled-layout vector
    whose eta block stores the Biot velocity eta-dot^n.
    """
    prm = disc.params
    R = prm.R
    F = _Form(disc.n)
    wf, wb, wg = disc.wf, disc.wb, disc.wg

    # ---- fluid on the reference domain with the geometry of omega^n
    J, A, _ = disc.fluid_geometry(omega_n)
    if np.any(J <= 0):
        i = int(np.argmin(J))
        raise DegeneracyError(f"fluid Jacobian {J[i]:.3e} <= 0 at {disc.xf[i]}")
    z = disc.Hf[0] @ zeta_half
    DU = disc.fluid_grad_ops(A)
    U = disc.U
    un = disc.field_at(U, X_n)
    b = un.copy()
    b[:, 1] -= z * (R + disc.xf[:, 1]) / R
    for c in range(2):
        F.add(U[c], wf * J / dt, U[c], -(U[c] @ X_n))
        F.add(U[c], wf * z / (2 * R), U[c])
        Bc = _d(b[:, 0]) @ DU[c][0] + _d(b[:, 1]) @ DU[c][1]
        F.add(U[c], 0.5 * wf * J, Bc)
        F.add(Bc, -0.5 * wf * J, U[c])
        for i in range(2):
            Sym = 0.5 * (DU[c][i] + DU[i][c])
            F.add(Sym, 2 * prm.nu * wf * J, Sym)
    div = DU[0][0] + DU[1][1]
    F.add(div, -wf * J, disc.PI)
    F.add(disc.PI, -wf * J, div)

    # ---- interface with the normal/tangent of omega^n
    nrm, tau, Jg = disc.interface_frame(omega_n)
    UG, EG, PG = disc.UG, disc.EG, disc.PG
    ugn = disc.field_at(UG, X_n)
    Sdot = _d(ugn[:, 0]) @ UG[0] + _d(ugn[:, 1]) @ UG[1]
    Vn = _d(nrm[:, 0]) @ UG[0] + _d(nrm[:, 1]) @ UG[1]
    Pn = _d(nrm[:, 0]) @ EG[0] + _d(nrm[:, 1]) @ EG[1]
    Vt = _d(tau[:, 0]) @ UG[0] + _d(tau[:, 1]) @ UG[1]
    Pt = _d(tau[:, 0]) @ EG[0] + _d(tau[:, 1]) @ EG[1]
    eta_n_n = Pn @ X_n
    eta_n_t = Pt @ X_n
    F.add(Pn - Vn, wg, 0.5 * Sdot - PG)
    F.add(Sdot, 0.5 * wg, Vn - Pn / dt, eta_n_n / dt)
    F.add(Pt - Vt, prm.beta * wg / Jg, Pt / dt - Vt, -eta_n_t / dt)
    zg = disc.Hg[0] @ zeta_half
    F.add(EG[1], prm.rho_p * wg / dt, EG[1] / dt, -(EG[1] @ X_n) / dt - zg)
    nd = np.column_stack([-geo.normal_dx, np.ones_like(wg)])
    Pnd = _d(nd[:, 0]) @ EG[0] + _d(nd[:, 1]) @ EG[1]
    F.add(PG, -prm.alpha * wg, Pnd / dt, -(Pnd @ X_n) / dt)
    F.add(PG, -wg, Vn - Pn / dt, eta_n_n / dt)

    # ---- Biot on the reference domain, geometry of eta^{n,delta}
    E, DE, PB, DP = disc.E, disc.DE, disc.PB, disc.DP
    xin = disc.field_at(E, xi_n)
    for c in range(2):
        F.add(E[c], prm.rho_b * wb / dt, E[c] / dt, -(E[c] @ X_n) / dt - xin[:, c])
        for i in range(2):
            Sym = 0.5 * (DE[c][i] + DE[i][c])
            F.add(Sym, 2 * prm.mu_e * wb, Sym)
            F.add(Sym, 2 * prm.mu_v * wb / dt, Sym, -(Sym @ X_n))
    dv = DE[0][0] + DE[1][1]
    F.add(dv, prm.lam_e * wb, dv)
    F.add(dv, prm.lam_v * wb / dt, dv, -(dv @ X_n))
    adj = geo.adj
    det = geo.det
    if np.any(det <= 0):
        i = int(np.argmin(det))
        raise DegeneracyError(f"det(I + grad eta^delta) = {det[i]:.3e} <= 0 at {disc.xb[i]}")
    Jdiv = sum(_d(adj[:, j, c]) @ DE[c][j] for c in range(2) for j in range(2))
    F.add(Jdiv, -prm.alpha * wb, PB)
    F.add(PB, prm.c0 * wb / dt, PB, -(PB @ X_n))
    Gr = [_d(adj[:, 0, i]) @ DP[0] + _d(adj[:, 1, i]) @ DP[1] for i in range(2)]
    for i in range(2):
        F.add(Gr[i], -prm.alpha * wb, E[i] / dt, -(E[i] @ X_n) / dt)
        F.add(Gr[i], prm.kappa * wb / det, Gr[i])

    if forcing is not None:
        F.add_rhs(forcing)
    M = F.matrix()
    diag = M.diagonal()[disc.free]
    return AssembledSystem(M, F.rhs, disc.free, float(np.min(diag)) if len(diag) else float("nan"))


# ------------------------------------------------------------------ energies

ENERGY_TERMS = ("fluid_kinetic", "biot_kinetic", "storage", "elastic_shear", "elastic_bulk",
                "plate_kinetic", "plate_bending")


@dataclass(frozen=True)
class EnergyRecord:
    fluid_kinetic: float = 0.0
    biot_kinetic: float = 0.0
    storage: float = 0.0
    elastic_shear: float = 0.0
    elastic_bulk: float = 0.0
    plate_kinetic: float = 0.0
    plate_bending: float = 0.0

    @property
    def total(self) -> float:
        return float(sum(getattr(self, k) for k in ENERGY_TERMS))


def _sym_sq(disc, X, ops):
    g = np.stack([np.stack([ops[c][i] @ X for i in range(2)], -1) for c in range(2)], -2)
    s = 0.5 * (g + np.swapaxes(g, -1, -2))
    return np.sum(s**2, axis=(-1, -2)), g[:, 0, 0] + g[:, 1, 1]


def compute_discrete_energy(disc: Discretization, X: np.ndarray, xi: np.ndarray, omega: np.ndarray,
                            omega_weight: np.ndarray | None = None,
                            zeta_plate: np.ndarray | None = None) -> EnergyRecord:
    """Discrete energy; ``zeta_plate`` (Hermite) replaces the Biot velocity trace when given."""
    prm = disc.params
    R = prm.R
    ww = omega if omega_weight is None else omega_weight
    J = 1.0 + (disc.Hf[0] @ ww) / R
    u = disc.field_at(disc.U, X)
    xiv = disc.field_at(disc.E, xi)
    p = disc.PB @ X
    dsq, dv = _sym_sq(disc, X, disc.DE)
    zg = disc.Hg[0] @ zeta_plate if zeta_plate is not None else disc.EG[1] @ xi
    lap = disc.Hg[2] @ omega
    return EnergyRecord(
        fluid_kinetic=0.5 * float(np.sum(disc.wf * J * np.sum(u**2, 1))),
        biot_kinetic=0.5 * prm.rho_b * float(np.sum(disc.wb * np.sum(xiv**2, 1))),
        storage=0.5 * prm.c0 * float(np.sum(disc.wb * p**2)),
        elastic_shear=prm.mu_e * float(np.sum(disc.wb * dsq)),
        elastic_bulk=0.5 * prm.lam_e * float(np.sum(disc.wb * dv**2)),
        plate_kinetic=0.5 * prm.rho_p * float(np.sum(disc.wg * zg**2)),
        plate_bending=0.5 * float(np.sum(disc.wg * lap**2)),
    )


DISSIPATION_TERMS = ("viscous", "visco_shear", "visco_bulk", "permeability", "slip")


@dataclass(frozen=True)
class DissipationRecord:
    viscous: float = 0.0
    visco_shear: float = 0.0
    visco_bulk: float = 0.0
    permeability: float = 0.0
    slip: float = 0.0

    @property
    def total(self) -> float:
        return float(sum(getattr(self, k) for k in DISSIPATION_TERMS))


def compute_discrete_dissipation(disc: Discretization, X: np.ndarray, xi: np.ndarray, omega_n: np.ndarray,
                                 geo: RegularizedGeometry, dt: float) -> DissipationRecord:
    """dt times the dissipation rate at the new state with the geometry of step n."""
    prm = disc.params
    J, A, _ = disc.fluid_geometry(omega_n)
    dsq, _ = _sym_sq(disc, X, disc.fluid_grad_ops(A))
    vsq, vdiv = _sym_sq(disc, xi, disc.DE)
    gp = np.column_stack([disc.DP[0] @ X, disc.DP[1] @ X])
    Jgp = np.einsum("qj,qji->qi", gp, geo.adj)
    nrm, tau, Jg = disc.interface_frame(omega_n)
    slip = np.sum((disc.field_at(disc.EG, xi) - disc.field_at(disc.UG, X)) * tau, 1)
    return DissipationRecord(
        viscous=dt * 2 * prm.nu * float(np.sum(disc.wf * J * dsq)),
        visco_shear=dt * 2 * prm.mu_v * float(np.sum(disc.wb * vsq)),
        visco_bulk=dt * prm.lam_v * float(np.sum(disc.wb * vdiv**2)),
        permeability=dt * prm.kappa * float(np.sum(disc.wb * np.sum(Jgp**2, 1) / geo.det)),
        slip=dt * prm.beta * float(np.sum(disc.wg * slip**2 / Jg)),
    )


def alpha_terms(disc: Discretization, xi: np.ndarray, X: np.ndarray, geo: RegularizedGeometry):
    """The three alpha-coupling integrals tested with (eta-dot, p); their sum vanishes analytically."""
    a = disc.params.alpha
    p = disc.PB @ X
    adj = geo.adj
    g = np.stack([np.stack([disc.DE[c][j] @ xi for j in range(2)], -1) for c in range(2)], -2)
    jdiv = np.einsum("qcj,qjc->q", g, adj)
    gp = np.column_stack([disc.DP[0] @ X, disc.DP[1] @ X])
    Jgp = np.einsum("qj,qji->qi", gp, adj)
    xiv = disc.field_at(disc.E, xi)
    nd = np.column_stack([-geo.normal_dx, np.ones_like(disc.wg)])
    xig = disc.field_at(disc.EG, xi)
    t1 = -a * float(np.sum(disc.wb * p * jdiv))
    t2 = -a * float(np.sum(disc.wb * np.sum(xiv * Jgp, 1)))
    t3 = -a * float(np.sum(disc.wg * np.sum(xig * nd, 1) * (disc.PG @ X)))
    return t1, t2, t3


def darcy_velocity(space, p: np.ndarray, points: np.ndarray, kappa: float, grad_eta_delta=None) -> np.ndarray:
    """q = -kappa grad p on the regularized configuration, pulled back to reference points."""
    _, g = space.evaluate(p, points)
    g = g[:, 0, :]
    if grad_eta_delta is None:
        return -kappa * g
    F = np.asarray(grad_eta_delta) + np.eye(2)
    return -kappa * np.einsum("nj,nji->ni", g, np.linalg.inv(F))


def korn_terms(disc: Discretization, X: np.ndarray):
    """(int |D(eta)|^2, int |grad eta|^2) on the Biot rectangle."""
    g = np.stack([np.stack([disc.DE[c][j] @ X for j in range(2)], -1) for c in range(2)], -2)
    s = 0.5 * (g + np.swapaxes(g, -1, -2))
    return float(np.sum(disc.wb * np.sum(s**2, (1, 2)))), float(np.sum(disc.wb * np.sum(g**2, (1, 2))))


def convection_block(disc: Discretization, X_n: np.ndarray, omega_n: np.ndarray, zeta_half: np.ndarray):
    """Skew-symmetrized transformed convection operator (u rows/columns of the coupled system)."""
    R = disc.params.R
    J, A, _ = disc.fluid_geometry(omega_n)
    DU = disc.fluid_grad_ops(A)
    b = disc.field_at(disc.U, X_n)
    b[:, 1] -= (disc.Hf[0] @ zeta_half) * (R + disc.xf[:, 1]) / R
    N = sp.csr_matrix((disc.n, disc.n))
    for c in range(2):
        Bc = _d(b[:, 0]) @ DU[c][0] + _d(b[:, 1]) @ DU[c][1]
        N = N + 0.5 * (disc.U[c].T @ _d(disc.wf * J) @ Bc - Bc.T @ _d(disc.wf * J) @ disc.U[c])
    return N.tocsr()
