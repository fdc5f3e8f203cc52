"""Executable property suite: energy identities, stability, Korn, transforms,
mollifier rates, manufactured-solution residuals and degeneracy termination.

Each check returns a :class:`PropertyResult`; the CLI ``verify`` subcommand and
the acceptance tests print one line per result.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .assembly import Discretization, PhysicalParams, korn_terms
from .scheme import LAGRANGIAN, PLATE_TOUCH, Simulation, Thresholds, check_global_energy_inequality
from .scheme import initial_data, run_plate_only
from .transforms import (AnalyticPlate, ale_inverse, ale_map, pull_back_velocity, push_forward_velocity,
                         transfer_velocity, transformed_gradient_fluid)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: value={self.value:.3e} tol={self.tolerance:.1e} {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrap(*a, **k):
        t0 = time.perf_counter()
        r = fn(*a, **k)
        return PropertyResult(r.name, r.passed, r.value, r.tolerance, r.detail, time.perf_counter() - t0)
    wrap.__name__ = fn.__name__
    wrap.__doc__ = fn.__doc__
    return wrap


# ------------------------------------------------------------------ energy identities

@_timed
def plate_energy_identity(seed: int = 0, nx: int = 16, steps: int = 100, dt: float = 1e-2) -> PropertyResult:
    """Per-step relative residual of the plate energy equality with random data."""
    rng = np.random.default_rng(seed)
    n = 2 * (nx + 1)
    rows, _, _ = run_plate_only(nx, steps, dt, rng.standard_normal(n), rng.standard_normal(n))
    worst = max(r.residual for r in rows)
    return PropertyResult("plate energy equality", worst <= 1e-10, worst, 1e-10, f"{steps} steps")


def coupled_run(nx: int = 8, steps: int = 20, dt: float = 1e-2, delta: float = 0.1, order: int = 6,
                params: PhysicalParams | None = None, amp: float = 0.05):
    prm = params or PhysicalParams()
    disc = Discretization(prm, nx, nx, order=order, delta=delta)
    sim = Simulation(disc, dt, Thresholds())
    s0 = sim.initial_state(**initial_data("smooth", prm, amp))
    return sim.run(s0, steps * dt, snapshot_stride=0)


@_timed
def coupled_energy_identity(order: int = 6) -> PropertyResult:
    """Max per-step residual of the coupled energy equality, and its decrease with quadrature order."""
    r0 = coupled_run(order=order)
    r1 = coupled_run(order=order + 2)
    e0 = max(r.res_eq2 for r in r0.ledger.rows)
    e1 = max(r.res_eq2 for r in r1.ledger.rows)
    e_half = max(r.res_eq1 for r in r0.ledger.rows)
    ok = e0 <= 1e-6 and e1 < e0 and e_half <= 1e-10 and len(r0.ledger.rows) == 20
    return PropertyResult("coupled energy equality", ok, e0, 1e-6,
                          f"order {order}: {e0:.2e}, order {order + 2}: {e1:.2e}, plate half-step {e_half:.1e}")


@_timed
def energy_stability(dts=(1e-1, 1e-2, 1e-3), steps: int = 20) -> PropertyResult:
    """E^{n+1} <= E^{n+1/2} <= E^n every step and E^n + sum D <= E_0 (1 + 1e-8)."""
    worst, fails = 0.0, []
    for dt in dts:
        res = coupled_run(steps=steps, dt=dt)
        checks = check_global_energy_inequality(res.ledger, rtol=1e-8)
        if not all(c.passed for c in checks) or len(res.ledger.rows) != steps:
            fails.append(dt)
        E0, acc = res.ledger.E0, 0.0
        for r in res.ledger.rows:
            acc += r.D
            worst = max(worst, (r.E_full + acc - E0) / E0)
    return PropertyResult("unconditional energy stability", not fails, worst, 1e-8,
                          f"dt={list(dts)} failing={fails}")


# ------------------------------------------------------------------ Korn

@_timed
def korn_inequality(seed: int = 0, samples: int = 200, nx: int = 8) -> PropertyResult:
    """int |D(eta)|^2 >= 1/2 int |grad eta|^2 for random admissible displacements."""
    disc = Discretization(PhysicalParams(), nx, nx, delta=None)
    rng = np.random.default_rng(seed)
    blk = disc.layout.block("eta")
    worst, ratio = np.inf, np.inf
    for _ in range(samples):
        X = np.zeros(disc.n)
        X[blk] = rng.standard_normal(blk.stop - blk.start)
        X[disc.layout.essential] = 0.0
        d2, g2 = korn_terms(disc, X)
        worst = min(worst, d2 - 0.5 * g2)
        ratio = min(ratio, d2 / g2)
    return PropertyResult("Korn inequality", worst >= -1e-12, ratio, 0.5,
                          f"{samples} samples, min int|D|^2 / int|grad|^2")


# ------------------------------------------------------------------ transforms

def _plate(a: float = 0.2, L: float = 1.0):
    k = 2 * math.pi / L
    return AnalyticPlate(lambda x: a * np.sin(k * x) * np.sin(k * x / 2) ** 2,
                         lambda x: a * (k * np.cos(k * x) * np.sin(k * x / 2) ** 2
                                        + np.sin(k * x) * k * np.sin(k * x / 2) * np.cos(k * x / 2)),
                         None, L)


def _dfree(P):
    """Divergence-free closed-form velocity (stream function sin(2x) cos(3y))."""
    x, y = P[:, 0], P[:, 1]
    return np.column_stack([-3 * np.sin(2 * x) * np.sin(3 * y), -2 * np.cos(2 * x) * np.cos(3 * y)])


@_timed
def transform_suite(seed: int = 0, n: int = 200) -> PropertyResult:
    """ALE round trip, finite-difference chain rule, divergence and trace preservation."""
    rng = np.random.default_rng(seed)
    R = 1.0
    w = _plate(0.2)
    wd = _plate(-0.15)
    pts = np.column_stack([rng.uniform(0, 1, n), rng.uniform(-R, 0, n)])
    out = {}
    # ALE round trip
    out["ale_round_trip"] = (float(np.max(np.abs(ale_inverse(w, ale_map(w, pts, R), R) - pts))), 1e-13)
    # transformed gradient of v(Phi(.)) against the analytic physical gradient
    f = lambda P: np.sin(P[:, 0]) * np.exp(P[:, 1])  # noqa: E731
    gf = lambda P: np.column_stack([np.cos(P[:, 0]) * np.exp(P[:, 1]), np.sin(P[:, 0]) * np.exp(P[:, 1])])  # noqa: E731
    h = 1e-5
    inner = np.column_stack([rng.uniform(h, 1 - h, n), rng.uniform(-R + h, -h, n)])
    vhat = lambda p: f(ale_map(w, p, R))  # noqa: E731
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    ghat = np.column_stack([(vhat(inner + ex) - vhat(inner - ex)) / (2 * h),
                            (vhat(inner + ey) - vhat(inner - ey)) / (2 * h)])
    g = transformed_gradient_fluid(w, ghat, inner, R)
    exact = gf(ale_map(w, inner, R))
    out["chain_rule"] = (float(np.max(np.abs(g - exact) / np.maximum(1.0, np.abs(exact)))), 1e-5)
    # divergence preservation of the K-transfer (domain below wd <- domain below w)
    phys = np.column_stack([inner[:, 0], inner[:, 1] + (1 + inner[:, 1] / R) * wd.value(inner[:, 0])])
    T = lambda P: transfer_velocity(_dfree, w, wd, P, R)  # noqa: E731
    div = ((T(phys + ex)[:, 0] - T(phys - ex)[:, 0]) + (T(phys + ey)[:, 1] - T(phys - ey)[:, 1])) / (2 * h)
    out["divergence_preservation"] = (float(np.max(np.abs(div))), 1e-6)
    # push-forward / pull-back round trip
    uhat = lambda P: push_forward_velocity(_dfree, w, wd, P, R)  # noqa: E731
    back = pull_back_velocity(uhat, w, wd, ale_map(w, pts, R), R)
    out["transfer_round_trip"] = (float(np.max(np.abs(back - _dfree(ale_map(w, pts, R))))), 1e-13)
    # traces: normal flux through the moving top, vertical traces on bottom and walls
    x = rng.uniform(0, 1, n)
    top_d = np.column_stack([x, wd.value(x)])
    top_s = np.column_stack([x, w.value(x)])
    flux_d = np.sum(T(top_d) * np.column_stack([-wd.dx(x), np.ones(n)]), 1)
    flux_s = np.sum(_dfree(top_s) * np.column_stack([-w.dx(x), np.ones(n)]), 1)
    bot = np.column_stack([x, -R + 0 * x])
    walls = np.column_stack([np.repeat([0.0, 1.0], n // 2), rng.uniform(-R, 0, 2 * (n // 2))])
    src_walls = np.column_stack([walls[:, 0], (R + w.value(walls[:, 0])) / (R + wd.value(walls[:, 0]))
                                 * (R + walls[:, 1]) - R])
    tr = max(np.max(np.abs(flux_d - flux_s)), np.max(np.abs(T(bot)[:, 1] - _dfree(bot)[:, 1])),
             np.max(np.abs(T(walls)[:, 0] - _dfree(src_walls)[:, 0]
                           * (R + w.value(walls[:, 0])) / (R + wd.value(walls[:, 0])))))
    out["trace_preservation"] = (float(tr), 1e-12)
    bad = [k for k, (v, tol) in out.items() if not v <= tol]
    detail = ", ".join(f"{k}={v:.1e}" for k, (v, _) in out.items())
    return PropertyResult("transform oracle suite", not bad, max(v / tol for v, tol in out.values()), 1.0,
                          detail + (f" failing={bad}" if bad else ""))


# ------------------------------------------------------------------ mollifier

def rate_field():
    """Smooth manufactured displacement (0, sin(pi x) sin(pi y) y) on the unit square."""
    pi = math.pi

    def eta(P):
        x, y = P[:, 0], P[:, 1]
        return np.column_stack([0 * x, np.sin(pi * x) * np.sin(pi * y) * y])

    def grad(P):
        x, y = P[:, 0], P[:, 1]
        G = np.zeros((len(x), 2, 2))
        G[:, 1, 0] = pi * np.cos(pi * x) * np.sin(pi * y) * y
        G[:, 1, 1] = np.sin(pi * x) * (pi * np.cos(pi * y) * y + np.sin(pi * y))
        return G

    return eta, grad


@_timed
def mollifier_rates(deltas=(0.2, 0.1, 0.05, 0.025)) -> PropertyResult:
    from .regularizer import convolution_rate_report

    eta, grad = rate_field()
    rows = convolution_rate_report(eta, grad, deltas)
    p1, p2 = rows[0].fitted_order_h1, rows[0].fitted_order_grad
    return PropertyResult("mollifier rates", p1 >= 1.45 and p2 >= 0.9, p1, 1.45,
                          f"H1 order {p1:.3f} (>= 1.45), gradient order {p2:.3f} (>= 0.9)")


# ------------------------------------------------------------------ degeneracy

def degeneracy_runs():
    """The two engineered terminations: plate drop and Biot fold."""
    prm = PhysicalParams(mu_e=1.0, lam_e=1.0, mu_v=0.01, lam_v=0.01)
    disc = Discretization(prm, 8, 8, delta=0.1)
    sim = Simulation(disc, 1e-3, Thresholds())
    drop = sim.run(sim.initial_state(**initial_data("plate_drop", prm, 50.0)), 0.1, snapshot_stride=0)
    prm2 = PhysicalParams(mu_e=0.01, lam_e=0.01, mu_v=0.01, lam_v=0.01)
    disc2 = Discretization(prm2, 8, 8, delta=0.1)
    sim2 = Simulation(disc2, 1e-2, Thresholds())
    fold = sim2.run(sim2.initial_state(**initial_data("fold", prm2, 5.0)), 1.0, snapshot_stride=0)
    return drop, fold, sim.thr


def _last_accepted(res):
    """Monitor of the last state that passed (the final entry is the failing one)."""
    return res.monitors[-2] if len(res.monitors) > 1 else res.monitors[0]


@_timed
def degeneracy_termination() -> PropertyResult:
    drop, fold, thr = degeneracy_runs()
    a, b = _last_accepted(drop), _last_accepted(fold)
    ok = (drop.cause == PLATE_TOUCH and a.min_gap_R > 0 and fold.cause == LAGRANGIAN
          and b.min_det >= thr.margin_det)
    return PropertyResult("degeneracy termination", ok, min(a.min_gap_R, b.min_det), 0.0,
                          f"drop: {drop.cause} gap={a.min_gap_R:.3e}; fold: {fold.cause} det={b.min_det:.3e}")


# ------------------------------------------------------------------ suite

def property_suite(seed: int = 0, include_slow: bool = True) -> list:
    """Korn, transforms, energy identities and mollifier rates."""
    out = [plate_energy_identity(seed), korn_inequality(seed), transform_suite(seed), coupled_energy_identity()]
    if include_slow:
        out += [energy_stability(), mollifier_rates()]
    return out
