import numpy as np
import pytest

from fpsi.assembly import Discretization, PhysicalParams, assemble_plate_system
from fpsi.errors import ConfigError
from fpsi.scheme import (LEDGER_COLUMNS, OK, EnergyLedger, LedgerRow, Simulation, Thresholds,
                         check_global_energy_inequality, initial_data, relative_residual, run_plate_only)

PRM = PhysicalParams()


@pytest.fixture(scope="module")
def sim4():
    return Simulation(Discretization(PRM, 4, 4, delta=0.1), 1e-2, Thresholds())


@pytest.fixture(scope="module")
def smooth_state(sim4):
    return sim4.initial_state(**initial_data("smooth", PRM, 0.05))


def test_zero_state_plate_step(sim4):
    s0 = sim4.initial_state()
    half, f = sim4.step_plate(s0)
    assert np.all(half.omega == 0) and np.all(half.zeta == 0)
    E_n, E_h, nd, work = sim4.plate_identity(s0, half, f)
    assert E_n.total == E_h.total == nd == 0


def test_first_plate_step_uses_initial_data(sim4, smooth_state):
    """omega^{-1/2} is omega(0) and the plate velocity is the initial Biot velocity trace."""
    half, _ = sim4.step_plate(smooth_state)
    expected = assemble_plate_system(sim4.disc, smooth_state.omega, smooth_state.xi, sim4.dt).solve()
    assert np.allclose(half.omega, expected, rtol=0, atol=1e-14)
    assert np.allclose(half.zeta, (half.omega - smooth_state.omega) / sim4.dt, atol=1e-12)


def test_zero_state_fluid_step(sim4):
    s0 = sim4.initial_state()
    half, _ = sim4.step_plate(s0)
    new, _, _ = sim4.step_fluid_biot(half, sim4.disc.regularize(s0.X))
    assert np.all(new.X == 0) and np.all(new.xi == 0)


def test_coupled_step_uses_initial_biot_velocity(sim4, smooth_state):
    half, _ = sim4.step_plate(smooth_state)
    geo = sim4.disc.regularize(smooth_state.X)
    new, _, omega_n = sim4.step_fluid_biot(half, geo)
    assert np.array_equal(omega_n, smooth_state.omega) or np.allclose(omega_n, smooth_state.omega, atol=1e-14)
    eb = sim4.disc.layout.block("eta")
    assert np.allclose(new.xi[eb], (new.X[eb] - smooth_state.X[eb]) / sim4.dt)


def test_coupled_step_dissipates(sim4, smooth_state):
    half, _ = sim4.step_plate(smooth_state)
    geo = sim4.disc.regularize(smooth_state.X)
    E_h = sim4.energy(half, omega_weight=smooth_state.omega, use_plate_zeta=True).total
    new, f, om = sim4.step_fluid_biot(half, geo)
    E_new, D, nd, work, _ = sim4.coupled_identity(half, new, om, geo, f, E_h)
    assert E_new.total < E_h
    assert D.total > 0
    assert relative_residual(E_new.total + D.total + nd, E_h + work) <= 1e-6


def test_zero_initial_data_run_stays_zero():
    sim = Simulation(Discretization(PRM, 2, 2, delta=0.1), 0.25)
    res = sim.run(sim.initial_state(), 1.0)
    assert len(res.ledger.rows) == 4 and res.cause == OK
    assert all(np.all(s.X == 0) and np.all(s.omega == 0) for s in res.trajectory.states)
    assert all(r.E_full == 0 and r.verdict == OK for r in res.ledger.rows)
    assert all(c.passed for c in check_global_energy_inequality(res.ledger))


def test_incompatible_initial_data_rejected(sim4):
    bump = lambda x: 0.01 * np.sin(np.pi * x) ** 2  # noqa: E731
    dbump = lambda x: 0.01 * np.pi * np.sin(2 * np.pi * x)  # noqa: E731
    with pytest.raises(ConfigError, match="η₀"):
        sim4.initial_state(omega0=(bump, dbump))


def test_initial_plate_beyond_R_rejected(sim4):
    with pytest.raises(ConfigError):
        sim4.initial_state(omega0=(lambda x: 1.5 * np.sin(np.pi * x) ** 2,
                                   lambda x: 1.5 * np.pi * np.sin(2 * np.pi * x)))


def test_nonpositive_dt_rejected():
    with pytest.raises(ConfigError):
        Simulation(Discretization(PRM, 2, 2), 0.0)


def test_unknown_initial_kind():
    with pytest.raises(ConfigError):
        initial_data("tsunami", PRM)


def test_plate_oscillation_identity():
    rng = np.random.default_rng(0)
    rows, _, _ = run_plate_only(16, 100, 1e-2, rng.standard_normal(34), rng.standard_normal(34))
    assert max(r.residual for r in rows) <= 1e-10
    assert all(r.E_half <= r.E_n for r in rows)
    assert all(r.numerical_dissipation >= 0 for r in rows)


def test_plate_only_energy_nonincreasing():
    rng = np.random.default_rng(1)
    rows, _, _ = run_plate_only(8, 50, 1e-2, rng.standard_normal(18), rng.standard_normal(18))
    E = [rows[0].E_n] + [r.E_half for r in rows]
    assert all(b <= a for a, b in zip(E, E[1:]))
    assert E[-1] < E[0]


def test_inequality_checker_flags_growth():
    rows = [LedgerRow(1, 0.1, 1.0, 0.9, 0.8, 0.1, 0, 0, 1, 1, OK),
            LedgerRow(2, 0.2, 0.8, 0.85, 0.8, 0.0, 0, 0, 1, 1, OK)]
    checks = check_global_energy_inequality(EnergyLedger(1.0, rows))
    assert checks[0].passed and not checks[1].monotone


def test_ledger_columns():
    assert LEDGER_COLUMNS[:2] == ("n", "t") and "verdict" in LEDGER_COLUMNS


@pytest.fixture(scope="module")
def long_run():
    rng = np.random.default_rng(7)
    data = initial_data("smooth", PRM, 0.01 + 0.04 * rng.random())
    sim = Simulation(Discretization(PRM, 4, 4, delta=0.1), 1e-2)
    return sim.run(sim.initial_state(**data), 2.0, snapshot_stride=10)


def test_long_coupled_run_monotone(long_run):
    assert len(long_run.ledger.rows) == 200 and long_run.cause == OK
    assert all(c.passed for c in check_global_energy_inequality(long_run.ledger))
    assert max(long_run.ledger.column("res_eq1")) <= 1e-10


def test_monitors_stay_away_from_thresholds(long_run):
    thr = Thresholds()
    assert min(m.min_det for m in long_run.monitors) > 10 * thr.margin_det
    assert min(m.min_gap_R for m in long_run.monitors) > 10 * thr.margin_R
    assert max(m.max_F_norm for m in long_run.monitors) < thr.norm_cap / 10


def test_trajectory_interpolants(long_run):
    tr = long_run.trajectory
    assert np.allclose(tr.times, np.arange(0, 2.01, 0.1))
    a, b = tr.states[1], tr.states[2]
    mid = tr.linear(0.15)
    assert np.allclose(mid.X, 0.5 * (a.X + b.X))
    assert tr.piecewise_constant(0.15) is a
    assert len(tr.zeta_star()) == 20
