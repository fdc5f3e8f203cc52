"""Lie splitting time loop: plate step, then the coupled fluid-Biot step.

Each full step records both discrete energy identities, the geometric
monitors and a verdict; the loop stops as soon as the plate approaches the
fluid bottom or the regularized Lagrangian map degenerates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (AssembledSystem, Discretization, EnergyRecord, PhysicalParams, RegularizedGeometry,
                       alpha_terms, assemble_fluid_biot_system, assemble_plate_system,
                       compute_discrete_dissipation, compute_discrete_energy)
from .errors import ConfigError, DegeneracyError

OK = "ok"
PLATE_TOUCH = "plate_touches_boundary"
LAGRANGIAN = "lagrangian_degenerate"


@dataclass(frozen=True)
class Thresholds:
    margin_R: float = 0.01     # as a fraction of R
    margin_det: float = 1e-3
    norm_cap: float = 1e3


@dataclass(frozen=True)
class CoupledState:
    """Unknowns at one time level.

    ``X`` = (u, multiplier, eta, p) in the coupled layout; ``xi`` uses the
    same layout with the Biot velocity in the eta block; ``omega`` and
    ``zeta`` are Hermite DOFs of the plate displacement and of the plate
    velocity of the most recent plate step.
    """

    n: int
    t: float
    half: bool
    X: np.ndarray
    xi: np.ndarray
    omega: np.ndarray
    zeta: np.ndarray


@dataclass(frozen=True)
class MonitorReport:
    min_gap_R: float
    min_det: float
    min_J_f: float
    max_F_norm: float
    max_Finv_norm: float
    verdict: str


@dataclass(frozen=True)
class LedgerRow:
    n: int
    t: float
    E_prev: float
    E_half: float
    E_full: float
    D: float
    res_eq1: float
    res_eq2: float
    min_det: float
    min_gap_R: float
    verdict: str
    nd_plate: float = 0.0
    nd_coupled: float = 0.0
    work_plate: float = 0.0
    work_coupled: float = 0.0
    alpha_sum: float = 0.0
    alpha_scale: float = 0.0


LEDGER_COLUMNS = ("n", "t", "E_half", "E_full", "D", "res_eq1", "res_eq2", "min_det", "min_gap_R", "verdict")


@dataclass
class EnergyLedger:
    E0: float
    rows: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


def relative_residual(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)


@dataclass(frozen=True)
class InequalityCheck:
    n: int
    monotone: bool
    bounded: bool

    @property
    def passed(self):
        return self.monotone and self.bounded


def check_global_energy_inequality(ledger: EnergyLedger, E0: float | None = None, rtol: float = 1e-8,
                                   slack: float = 1e-12):
    """Per-step pass/fail of E^{n+1} <= E^{n+1/2} <= E^n and E^n + sum D <= E0 (1 + rtol).

    ``slack`` absorbs roundoff relative to E0 in the monotone chain; forcing
    work, if any, is added to the budget.
    """
    E0 = ledger.E0 if E0 is None else E0
    out, acc, work = [], 0.0, 0.0
    tol = slack * max(abs(E0), 1e-300)
    for r in ledger.rows:
        acc += r.D
        work += r.work_plate + r.work_coupled
        mono = (r.E_half <= r.E_prev + r.work_plate + tol) and (r.E_full <= r.E_half + r.work_coupled + tol)
        bound = r.E_full + acc <= (E0 + work) * (1 + rtol) + tol
        out.append(InequalityCheck(r.n, bool(mono), bool(bound)))
    return out


# ------------------------------------------------------------------ trajectory

@dataclass
class Trajectory:
    """Snapshots at integer levels; piecewise-constant and linear interpolants."""

    states: list = field(default_factory=list)
    half_states: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def piecewise_constant(self, t: float) -> CoupledState:
        ts = self.times
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 1))
        return self.states[i]

    def linear(self, t: float) -> CoupledState:
        ts = self.times
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)) if len(ts) > 1 else 0
        if len(ts) == 1:
            return self.states[0]
        a, b = self.states[i], self.states[i + 1]
        s = (t - a.t) / (b.t - a.t)
        mix = lambda x, y: (1 - s) * x + s * y  # noqa: E731
        return CoupledState(a.n, t, False, mix(a.X, b.X), mix(a.xi, b.xi), mix(a.omega, b.omega), b.zeta)

    def zeta_star(self):
        """Plate velocities of the plate steps (Hermite), one per step."""
        return [s.zeta for s in self.half_states]


@dataclass
class RunResult:
    trajectory: Trajectory
    ledger: EnergyLedger
    monitors: list
    cause: str
    final: CoupledState

    @property
    def terminated_early(self) -> bool:
        return self.cause != OK


# ------------------------------------------------------------------ simulation

class Simulation:
    """Time stepper bound to one discretization, time step and regularization."""

    def __init__(self, disc: Discretization, dt: float, thresholds: Thresholds = Thresholds(),
                 forcing=None):
        if not dt > 0:
            raise ConfigError(f"dt = {dt} must be positive")
        self.disc, self.dt, self.thr, self.forcing = disc, dt, thresholds, forcing
        H = disc.spaces.plate
        prm = disc.params
        M, K = H.mass(), H.bending()
        A = (prm.rho_p * M + dt**2 * K).tocsc()
        f = H.free
        self._plate_lu = spla.splu(A[f][:, f].tocsc()) if len(f) else None

    # ---------------------------------------------------------------- initial data
    def initial_state(self, u0=None, p0=None, eta0=None, xi0=None, omega0=None, t0: float = 0.0,
                      tol: float = 1e-10) -> CoupledState:
        """Interpolate closed-form initial data and check the hypotheses on it.

        ``omega0`` is a pair (f, f'); vector fields are callables (x, y) -> (n, 2).
        """
        d = self.disc
        S, lay = d.spaces, d.layout
        X = np.zeros(d.n)
        xi = np.zeros(d.n)
        if u0 is not None:
            X[lay.block("u")] = S.velocity.interpolate(u0)
        if p0 is not None:
            X[lay.block("p")] = S.pressure.interpolate(p0)
        if eta0 is not None:
            X[lay.block("eta")] = S.displacement.interpolate(eta0)
        if xi0 is not None:
            xi[lay.block("eta")] = S.displacement.interpolate(xi0)
        omega = S.plate.interpolate(*omega0) if omega0 is not None else np.zeros(S.plate.n_dofs)
        X[lay.essential] = 0.0
        xi[lay.essential] = 0.0
        R = d.params.R
        if np.max(np.abs(omega[0::2]), initial=0.0) >= R:
            raise ConfigError("initial plate displacement violates |ω₀| < R")
        gap = d.coupling.mismatch(X, omega)
        if gap > tol:
            raise ConfigError(f"initial data violate η₀|Γ = ω₀ e_y (nodal mismatch {gap:.3e})")
        state = CoupledState(0, t0, False, X, xi, omega, np.zeros_like(omega))
        geo = d.regularize(X)
        mon = self.monitor(state, geo)
        if mon.verdict != OK:
            raise ConfigError(f"initial data violate the monitor hypotheses ({mon.verdict}; "
                              f"min det(I+∇η₀^δ) = {mon.min_det:.3e}, gap = {mon.min_gap_R:.3e})")
        return state

    # ---------------------------------------------------------------- monitors
    def monitor(self, state: CoupledState, geo: RegularizedGeometry, omega=None) -> MonitorReport:
        d, thr = self.disc, self.thr
        R = d.params.R
        om = state.omega if omega is None else omega
        wvals = np.concatenate([d.Hg[0] @ om, om[0::2]])
        gap = float(min(np.min(R - np.abs(wvals)), np.min(R - np.abs(geo.val_g[:, 1]))))
        J_f = float(np.min(1.0 + (d.Hf[0] @ om) / R))
        F = geo.F
        det = geo.det
        min_det = float(np.min(det))
        fn = np.linalg.norm(F, ord=2, axis=(1, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            sv_min = np.linalg.svd(F, compute_uv=False)[:, -1]
            inv_n = np.where(sv_min > 0, 1.0 / sv_min, np.inf)
        max_F, max_Finv = float(np.max(fn)), float(np.max(inv_n))
        if gap < thr.margin_R * R:
            verdict = PLATE_TOUCH
        elif min_det < thr.margin_det or max_F > thr.norm_cap or max_Finv > thr.norm_cap:
            verdict = LAGRANGIAN
        else:
            verdict = OK
        return MonitorReport(gap, min_det, J_f, max_F, max_Finv, verdict)

    # ---------------------------------------------------------------- energies
    def energy(self, state: CoupledState, omega_weight=None, use_plate_zeta=False) -> EnergyRecord:
        return compute_discrete_energy(self.disc, state.X, state.xi, state.omega, omega_weight,
                                       state.zeta if use_plate_zeta else None)

    # ---------------------------------------------------------------- steps
    def step_plate(self, state: CoupledState):
        """Plate subproblem; returns (half state, E^n, E^{n+1/2}, numerical dissipation, work)."""
        d, dt = self.disc, self.dt
        t_half = state.t + dt
        f = self.forcing.plate(t_half) if self.forcing is not None else None
        sysm = assemble_plate_system(d, state.omega, state.xi, dt, f)
        w = np.zeros_like(state.omega)
        if self._plate_lu is not None:
            w[sysm.free] = self._plate_lu.solve(sysm.rhs[sysm.free])
        zeta = (w - state.omega) / dt
        half = CoupledState(state.n, state.t, True, state.X, state.xi, w, zeta)
        return half, f

    def plate_identity(self, state: CoupledState, half: CoupledState, f):
        d, dt = self.disc, self.dt
        prm = d.params
        E_n = self.energy(state)
        E_h = self.energy(half, omega_weight=state.omega, use_plate_zeta=True)
        zn = d.EG[1] @ state.xi
        zh = d.Hg[0] @ half.zeta
        dl = d.Hg[2] @ (half.omega - state.omega)
        nd = 0.5 * prm.rho_p * float(np.sum(d.wg * (zh - zn) ** 2)) + 0.5 * float(np.sum(d.wg * dl**2))
        work = dt * float(f @ half.zeta) if f is not None else 0.0
        return E_n, E_h, nd, work

    def step_fluid_biot(self, half: CoupledState, geo: RegularizedGeometry):
        """Coupled fluid-Biot subproblem with the geometry of omega^n and eta^{n,delta}."""
        d, dt = self.disc, self.dt
        t_new = half.t + dt
        omega_n = half.omega - dt * half.zeta
        f = self.forcing.fluid_biot(t_new) if self.forcing is not None else None
        sysm = assemble_fluid_biot_system(d, half.X, half.xi, omega_n, half.omega, half.zeta, geo, dt, f)
        X = sysm.solve()
        xi = np.zeros(d.n)
        eb = d.layout.block("eta")
        xi[eb] = (X[eb] - half.X[eb]) / dt
        new = CoupledState(half.n + 1, t_new, False, X, xi, half.omega.copy(), half.zeta)
        return new, f, omega_n

    def coupled_identity(self, half: CoupledState, new: CoupledState, omega_n, geo, f, E_half):
        d, dt = self.disc, self.dt
        prm = d.params
        E_new = self.energy(new)
        D = compute_discrete_dissipation(d, new.X, new.xi, omega_n, geo, dt)
        J = 1.0 + (d.Hf[0] @ omega_n) / prm.R
        du = d.field_at(d.U, new.X - half.X)
        dxi = d.field_at(d.E, new.xi - half.xi)
        deta = new.X - half.X
        g = np.stack([np.stack([d.DE[c][j] @ deta for j in range(2)], -1) for c in range(2)], -2)
        s = 0.5 * (g + np.swapaxes(g, -1, -2))
        dp = d.PB @ (new.X - half.X)
        dz = d.EG[1] @ new.xi - d.Hg[0] @ half.zeta
        nd = (0.5 * float(np.sum(d.wf * J * np.sum(du**2, 1)))
              + 0.5 * prm.rho_b * float(np.sum(d.wb * np.sum(dxi**2, 1)))
              + prm.mu_e * float(np.sum(d.wb * np.sum(s**2, (1, 2))))
              + 0.5 * prm.lam_e * float(np.sum(d.wb * (g[:, 0, 0] + g[:, 1, 1]) ** 2))
              + 0.5 * prm.c0 * float(np.sum(d.wb * dp**2))
              + 0.5 * prm.rho_p * float(np.sum(d.wg * dz**2)))
        work = 0.0
        if f is not None:
            Y = new.X.copy()
            eb = d.layout.block("eta")
            Y[eb] = new.xi[eb]
            work = dt * float(f @ Y)
        a = alpha_terms(d, new.xi, new.X, geo)
        return E_new, D, nd, work, a

    # ---------------------------------------------------------------- loop
    def run(self, state0: CoupledState, T: float, snapshot_stride: int = 1,
            callback: Callable | None = None) -> RunResult:
        d, dt = self.disc, self.dt
        nsteps = int(round((T - state0.t) / dt))
        traj = Trajectory([state0], [])
        state = state0
        geo = d.regularize(state.X)
        mon = self.monitor(state, geo)
        E0 = self.energy(state).total
        ledger = EnergyLedger(E0)
        monitors = [mon]
        cause = mon.verdict
        for _ in range(nsteps if cause == OK else 0):
            half, fp = self.step_plate(state)
            E_n, E_h, nd1, w1 = self.plate_identity(state, half, fp)
            mon_h = self.monitor(half, geo)
            if mon_h.verdict != OK:
                monitors.append(mon_h)
                cause = mon_h.verdict
                break
            try:
                new, ff, omega_n = self.step_fluid_biot(half, geo)
                geo_new = d.regularize(new.X)
                mon_new = self.monitor(new, geo_new)
            except DegeneracyError as exc:
                cause = PLATE_TOUCH if "fluid" in str(exc) else LAGRANGIAN
                break
            E_new, D, nd2, w2, a = self.coupled_identity(half, new, omega_n, geo, ff, E_h.total)
            res1 = relative_residual(E_h.total + nd1, E_n.total + w1)
            res2 = relative_residual(E_new.total + D.total + nd2, E_h.total + w2)
            ledger.rows.append(LedgerRow(new.n, new.t, E_n.total, E_h.total, E_new.total, D.total, res1, res2,
                                         mon_new.min_det, mon_new.min_gap_R, mon_new.verdict, nd1, nd2, w1, w2,
                                         float(sum(a)), float(sum(abs(x) for x in a))))
            monitors.append(mon_new)
            if snapshot_stride and new.n % snapshot_stride == 0:
                traj.half_states.append(half)
                traj.states.append(new)
            if callback is not None:
                callback(new, ledger.rows[-1])
            state, geo = new, geo_new
            if mon_new.verdict != OK:
                cause = mon_new.verdict
                break
        if traj.states[-1] is not state:
            traj.states.append(state)
        return RunResult(traj, ledger, monitors, cause, state)


# ------------------------------------------------------------------ plate only

@dataclass(frozen=True)
class PlateRow:
    n: int
    E_n: float
    E_half: float
    numerical_dissipation: float
    residual: float


def run_plate_only(nx: int, steps: int, dt: float, omega0: np.ndarray, zeta0: np.ndarray,
                   rho_p: float = 1.0, L: float = 1.0):
    """Decoupled plate oscillation: zeta^{n+1} := zeta^{n+1/2}; returns per-step identity rows."""
    from .mesh import build_reference_meshes
    from .spaces import HermiteSpace

    _, _, pm = build_reference_meshes(L, 1.0, nx, 1)
    H = HermiteSpace(pm)
    M, K = H.mass(), H.bending()
    f = H.free
    lu = spla.splu((rho_p * M + dt**2 * K)[f][:, f].tocsc())
    w, z = np.array(omega0, float), np.array(zeta0, float)
    w[H.clamped] = 0.0
    z[H.clamped] = 0.0
    en = lambda a, b: 0.5 * rho_p * b @ (M @ b) + 0.5 * a @ (K @ a)  # noqa: E731
    rows = []
    for n in range(steps):
        rhs = rho_p * (M @ w) + dt * rho_p * (M @ z)
        w_new = np.zeros_like(w)
        w_new[f] = lu.solve(rhs[f])
        z_new = (w_new - w) / dt
        E_n, E_h = en(w, z), en(w_new, z_new)
        dz, dw = z_new - z, w_new - w
        nd = 0.5 * rho_p * dz @ (M @ dz) + 0.5 * dw @ (K @ dw)
        rows.append(PlateRow(n + 1, E_n, E_h, nd, relative_residual(E_h + nd, E_n)))
        w, z = w_new, z_new
    return rows, (w, z), H


# ------------------------------------------------------------------ initial data catalog

def initial_data(kind: str, params: PhysicalParams, amp: float = 0.01):
    """Closed-form initial data; returns keyword arguments for ``Simulation.initial_state``."""
    L, R = params.L, params.R
    pi = math.pi
    sx = lambda x: np.sin(pi * x / L)  # noqa: E731
    bump = lambda x: np.sin(pi * x / L) ** 2  # noqa: E731
    dbump = lambda x: (pi / L) * np.sin(2 * pi * x / L)  # noqa: E731

    def vec(fx, fy):
        return lambda x, y: np.stack(np.broadcast_arrays(fx(x, y), fy(x, y)), -1)

    if kind == "zero":
        return {}
    if kind == "smooth":
        a = amp

        def u0(x, y):
            # velocity of the stream function x^2 (L-x)^2 (y+R)^2, vanishing on the walls
            ux = x**2 * (L - x) ** 2 * 2 * (y + R)
            uy = -(2 * x * (L - x) ** 2 - 2 * x**2 * (L - x)) * (y + R) ** 2
            return a * 10 * np.stack([ux, uy], -1)

        return dict(
            u0=u0,
            p0=lambda x, y: a * sx(x) * np.cos(pi * y / (2 * R)),
            eta0=vec(lambda x, y: a * sx(x) * np.sin(pi * y / R), lambda x, y: a * bump(x) * (1 - y / R)),
            xi0=vec(lambda x, y: a * sx(x) * np.sin(pi * y / R),
                    lambda x, y: -a * bump(x) * (1 - y / R) + a * sx(x) * np.sin(pi * y / R)),
            omega0=(lambda x: a * bump(x), lambda x: a * dbump(x)),
        )
    if kind == "plate_drop":
        V = amp
        return dict(xi0=vec(lambda x, y: 0 * x, lambda x, y: -V * bump(x) * (1 - y / R)))
    if kind == "fold":
        V = amp
        return dict(xi0=vec(lambda x, y: 0 * x, lambda x, y: -V * sx(x) * np.sin(pi * y / R)))
    raise ConfigError(f"unknown initial data kind {kind!r}")
