import math

import numpy as np
import pytest

from fpsi.assembly import Discretization, PhysicalParams
from fpsi.consistency import (INTEGRATED, TERM_NAMES, EnergyDifference, MMSForcing, bootstrap_monitor,
                              build_reference, delta_sweep, energy_difference, energy_difference_terms,
                              envelope_constant, mms_residual_check, reference_initial_state, sample_reference,
                              sample_state)
from fpsi.errors import ConfigError
from fpsi.scheme import CoupledState, Simulation, Trajectory

PRM = PhysicalParams()


def _setup(ref, nx, delta=0.1):
    disc = Discretization(PRM, nx, nx, delta=delta)
    sim = Simulation(disc, 0.01)
    return disc, sim, reference_initial_state(sim, ref)


def test_rest_reference_has_zero_residuals(rest_ref):
    rep = mms_residual_check(rest_ref, n_points=20)
    assert rep.worst == 0 and rep.divergence == 0 and rep.passed()


def test_separable_reference_residuals(separable_ref):
    rep = mms_residual_check(separable_ref, n_points=20, seed=1)
    assert rep.passed(1e-8)
    assert rep.divergence <= 1e-12


def test_reference_fields_closed_form(separable_ref):
    """Plate trace of the Biot displacement and the clamped plate conditions."""
    ref = separable_ref
    x = np.linspace(0, 1, 11)
    for t in (0.0, 0.3, 0.77):
        w = ref.omega(t, x)
        assert np.allclose(ref.biot(t, x, 0 * x)[:, 1], w[:, 0], atol=1e-15)
        assert np.allclose(w[[0, -1], 0:2], 0, atol=1e-15)
    a = 0.05
    xs = np.array([0.3])
    assert math.isclose(ref.omega(0.0, xs)[0, 0], a * math.sin(0.6 * math.pi) * math.sin(0.3 * math.pi) ** 2,
                        rel_tol=1e-14)


def test_reference_rejects_bad_input():
    with pytest.raises(ConfigError):
        build_reference("spiral", PRM)
    with pytest.raises(ConfigError):
        build_reference("separable", PhysicalParams(R=0.01), a=0.05)


def test_rest_energy_difference_is_zero(rest_ref):
    disc, sim, s0 = _setup(rest_ref, 2)
    terms = energy_difference_terms(disc, sample_reference(disc, rest_ref, 0.0), s0, disc.regularize(s0.X))
    assert np.all(terms == 0)
    res = sim.run(s0, 0.05)
    total, terms = energy_difference(disc, rest_ref, res.trajectory, 0.05)
    assert total == 0 and np.all(terms == 0)


def test_interpolated_reference_is_at_fe_floor(separable_ref):
    E = []
    for nx in (4, 8):
        disc, _, s0 = _setup(separable_ref, nx)
        terms = energy_difference_terms(disc, sample_reference(disc, separable_ref, 0.0), s0, disc.regularize(s0.X))
        assert len(terms) == len(TERM_NAMES) and np.all(terms >= 0)
        E.append(terms.sum())
    # cubic Hermite plate interpolation in H^2: error O(h^2), squared O(h^4)
    assert math.log2(E[0] / E[1]) >= 3.5
    assert E[1] <= 0.02


def test_energy_difference_quadratic_scaling(separable_ref):
    disc, _, s0 = _setup(separable_ref, 4)
    target = sample_state(disc, s0)
    rng = np.random.default_rng(0)
    dX, dxi = rng.standard_normal(disc.n), rng.standard_normal(disc.n)
    dX[disc.layout.essential] = 0
    dxi[disc.layout.essential] = 0
    geo = disc.regularize(s0.X)

    def E(eps):
        s = CoupledState(0, 0.0, False, s0.X + eps * dX, s0.xi + eps * dxi, s0.omega, s0.zeta)
        return energy_difference_terms(disc, target, s, geo).sum()

    assert E(0.0) <= 1e-28
    assert abs(E(2e-3) / E(1e-3) - 4.0) <= 0.2


def test_energy_difference_accumulates_integrated_terms(separable_ref):
    disc, _, s0 = _setup(separable_ref, 4)
    target = sample_state(disc, s0)
    s1 = CoupledState(1, 0.1, False, 1.01 * s0.X, 1.01 * s0.xi, s0.omega, s0.zeta)
    ed = EnergyDifference(disc)
    geo = disc.regularize(s0.X)
    dens = energy_difference_terms(disc, target, s1, geo)
    ed.update(target, s1, geo, 0.1)
    total, terms = ed.update(target, s1, geo, 0.1)
    for k in range(len(TERM_NAMES)):
        expected = 0.1 * dens[k] if k in INTEGRATED else dens[k]
        assert math.isclose(terms[k], expected, rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(total, terms.sum(), rel_tol=1e-12)


def test_bootstrap_witness_trivial_and_interpolant(rest_ref, separable_ref):
    disc, _, s0 = _setup(rest_ref, 2)
    w = bootstrap_monitor(disc, Trajectory([s0], []), ref=rest_ref)
    assert np.all(w.min_det == 1) and np.all(w.grad_gap == 0)
    gaps = []
    for nx in (4, 8):
        disc, _, s0 = _setup(separable_ref, nx)
        gaps.append(bootstrap_monitor(disc, Trajectory([s0], []), ref=separable_ref).grad_gap[0])
    # the gap is the interpolation floor: small and shrinking with h
    assert gaps[1] < gaps[0] <= 0.05


def test_mms_forcing_vanishes_for_rest(rest_ref):
    disc = Discretization(PRM, 2, 2, delta=0.1)
    f = MMSForcing(disc, rest_ref)
    assert np.all(f.plate(0.3) == 0) and np.all(f.fluid_biot(0.3) == 0)


def test_rest_sweep_is_zero(rest_ref):
    rep = delta_sweep(rest_ref, [0.4, 0.2], nx=2, dt=0.1, T=0.2)
    assert all(r.max_E == 0 for r in rep.rows)
    assert all(r.bootstrap_min_det == 1 for r in rep.rows)
    rep = delta_sweep(rest_ref, [0.4, 0.2], nx=2, dt=0.1, T=0.2, mode="reference")
    assert all(r.max_E == 0 for r in rep.rows) and rep.inconclusive


@pytest.mark.parametrize("kw", [dict(mode="bogus"), dict(deltas=[0.1, 0.2]), dict(deltas=[])])
def test_sweep_argument_validation(rest_ref, kw):
    args = dict(deltas=[0.2, 0.1], nx=2, dt=0.1, T=0.1)
    args.update(kw)
    with pytest.raises(ConfigError):
        delta_sweep(rest_ref, **args)


def test_envelope_constant_exact():
    d = [0.2, 0.1]
    t = [np.array([0.0, 1.0])] * 2
    E = [2.0 * di**3 * np.exp(2.0 * t[0]) for di in d]
    assert math.isclose(envelope_constant(d, t, E), 2.0, rel_tol=1e-9)
