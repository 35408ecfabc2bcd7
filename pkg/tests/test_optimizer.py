import numpy as np
import pytest

from qoct.filters import ControlField, GaussianPass, band_power_fraction
from qoct.optimizer import (OptimizationError, OptimizerConfig, field_update, final_population,
                            occupation_history, optimize, run_fluence_fixed, run_time_dependent)
from qoct.propagator import TimeGrid, propagate
from qoct.qsystem import NLevelSystem, Wavefunction
from qoct.targets import Projection, TargetSpec, Uniform

TL = NLevelSystem.from_two_level(0.0, 0.1568, 0.3921)
PSI0, PHI = TL.basis_state(0), TL.basis_state(1)
TG = TimeGrid(100.0, 0.02)


def _run(**kw):
    kw.setdefault("max_iter", 40)
    return optimize(TL, PSI0, PHI, OptimizerConfig(**kw), TG)


@pytest.mark.parametrize("scheme", ["standard", "rapid"])
def test_monotonic_schemes_increase_J(scheme):
    eps, rec = _run(scheme=scheme, alpha=1.0, guess=0.01)
    j = np.array(rec.j)
    assert np.all(np.diff(j) > -1e-9)
    assert rec.j1[-1] > 0.9
    assert np.array_equal(eps.values, rec.last_field.values)


def test_standard_j3_vanishes_for_exact_propagation():
    _, rec = _run(scheme="standard", alpha=1.0, guess=0.01, max_iter=5)
    assert np.nanmax(np.abs(rec.j3)) < 1e-10


def test_returned_field_reproduces_recorded_yield():
    eps, rec = _run(scheme="rapid", alpha=1.0, guess=0.01)
    assert final_population(TL, PSI0, eps, TG, PHI) == pytest.approx(rec.j1[-1], abs=1e-12)


def test_time_dependent_eta_xi_one_matches_standard():
    cfg = dict(alpha=1.0, guess=0.01, max_iter=8, tol=0.0)
    _, a = _run(scheme="standard", **cfg)
    _, b = _run(scheme="time_dependent", eta=1.0, xi=1.0, **cfg)
    assert np.allclose(a.j, b.j, rtol=0, atol=1e-12)


def test_time_dependent_eta_xi_zero_keeps_field():
    _, rec = _run(scheme="time_dependent", eta=0.0, xi=0.0, alpha=1.0, guess=0.01, max_iter=4, tol=-1)
    assert np.ptp(rec.j) < 1e-13


def test_fixed_fluence_every_iterate():
    eps, rec = run_fluence_fixed(TL, PSI0, PHI, 0.05, OptimizerConfig(guess=0.01, max_iter=15), TG)
    fl = np.array(rec.fluence)[:, 0]
    assert np.max(np.abs(fl - 0.05)) < 1e-10
    assert rec.best_j1 > rec.j1[0]
    assert final_population(TL, PSI0, eps, TG, PHI) == pytest.approx(rec.best_j1, abs=1e-12)


def test_fixed_fluence_zero_guess_rejected():
    with pytest.raises(OptimizationError):
        run_fluence_fixed(TL, PSI0, PHI, 0.05, OptimizerConfig(guess=0.0, max_iter=3), TG)


def test_filtered_field_stays_in_band():
    tg = TimeGrid(200.0, 0.05)
    chain = GaussianPass((0.1568,), 500.0)
    cfg = OptimizerConfig(scheme="filtered", alpha=1.0, filters=chain, guess=0.005, max_iter=20)
    eps, rec = optimize(TL, PSI0, PHI, cfg, tg)
    assert rec.best_index > 0
    assert band_power_fraction(eps, [(0.1568 - 0.05, 0.1568 + 0.05)]) > 0.99
    assert rec.best_j1 > rec.j1[0]


def test_time_dependent_uniform_projection_improves():
    spec = TargetSpec(Projection(PHI), Uniform())
    cfg = OptimizerConfig(scheme="time_dependent", alpha=1.0, guess=0.02, max_iter=20)
    _, rec = run_time_dependent(TL, PSI0, spec, cfg, TG)
    assert rec.j1[-1] > rec.j1[0]
    assert np.all(np.diff(rec.j) > -1e-9)


def test_zero_field_warning():
    with pytest.warns(RuntimeWarning, match="stationary"):
        _run(scheme="standard", guess=0.0, max_iter=3, tol=-1)


def test_checkpoint_replay_is_bit_identical():
    a = _run(scheme="rapid", guess=0.01, max_iter=5, store=True, block=300)
    b = _run(scheme="rapid", guess=0.01, max_iter=5, store=False, block=300)
    assert np.array_equal(a[0].values, b[0].values)
    assert a[1].j == b[1].j


def test_occupation_history_stride():
    f = ControlField.constant(0.01, TG)
    t, P = occupation_history(TL, PSI0, f, TG, [PSI0, PHI], stride=7)
    assert t[0] == 0 and np.allclose(P.sum(axis=1), 1.0, atol=1e-10)
    assert P.shape == (len(range(0, TG.n_steps + 1, 7)), 2)


def test_field_update_sign():
    chi = Wavefunction(np.array([0.0, 1.0j]), None)
    psi = Wavefunction(np.array([1.0, 0.0], dtype=complex), None)
    mu = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert field_update(chi, psi, mu, 2.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        field_update(chi, psi, mu, 0.0)


@pytest.mark.parametrize("bad", [dict(scheme="nope"), dict(alpha=0.0), dict(eta=1.5), dict(max_iter=0),
                                 dict(fluence=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        OptimizerConfig(**bad).validate()


def test_rapid_requires_projection():
    from qoct.targets import PhaseFixedOverlap
    with pytest.raises(ValueError):
        optimize(TL, PSI0, PhaseFixedOverlap(PHI), OptimizerConfig(scheme="rapid"), TG)


@pytest.mark.slow
def test_penalty_sweep_behaviour():
    tg = TimeGrid(400.0, 0.02)
    res = {}
    for a in (0.8, 1.0, 6.0, 8.0):
        eps, rec = optimize(TL, PSI0, PHI, OptimizerConfig(scheme="rapid", alpha=a, guess=0.05, max_iter=2000), tg)
        res[a] = (rec.j1[-1], float(np.sum(eps.values ** 2) * eps.dt))
    assert res[8.0][0] < res[1.0][0]
    assert res[1.0][0] <= 1 - 1e-6
    fl = [res[a][1] for a in (0.8, 1.0, 6.0)]
    assert (max(fl) - min(fl)) / max(fl) < 0.10


def test_j3_small_relative_to_j1():
    _, rec = _run(scheme="rapid", alpha=1.0, guess=0.01, max_iter=10)
    assert np.all(np.abs(rec.j3) < 1e-6 * np.abs(rec.j1))
