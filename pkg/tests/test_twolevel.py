import numpy as np
import pytest

from qoct.filters import ControlField
from qoct.propagator import TimeGrid, propagate
from qoct.twolevel import (DOUBLE_WELL_PAIR, analytic_kernel_eigenvalues, integrate_exact,
                           optimal_amplitude_offresonant, perturbation_eigenfield, pulse_area_amplitude,
                           rwa_fluence, rwa_populations, table1_rwa)


def test_rwa_resonant_pi_pulse():
    pa, pb = rwa_populations(0.1, 0.0, np.pi / 0.1)
    assert pb == pytest.approx(1.0)
    assert pa + pb == pytest.approx(1.0)


def test_pulse_area_amplitude():
    assert pulse_area_amplitude(0.3921, 400) == pytest.approx(np.pi / (0.3921 * 400))
    with pytest.raises(ValueError):
        pulse_area_amplitude(0.0, 400)


def test_offresonant_amplitude():
    A, pmax = optimal_amplitude_offresonant(0.3921, 400, 0.0, 0)
    assert A == pytest.approx(pulse_area_amplitude(0.3921, 400))
    assert pmax == 1.0
    A, pmax = optimal_amplitude_offresonant(0.3921, 400, 0.005, 0)
    assert pmax < 1
    rabi = A * 0.3921
    _, pb = rwa_populations(rabi, 0.005, 400)
    assert pb == pytest.approx(pmax)
    with pytest.raises(ValueError):
        optimal_amplitude_offresonant(0.3921, 400, 1.0, 0)


def test_exact_rk4_matches_split_propagator():
    s = DOUBLE_WELL_PAIR
    tg = TimeGrid(100.0, 0.005)
    f = ControlField.from_function(lambda t: 0.03 * np.sin(0.1568 * t), tg)
    ca, cb = integrate_exact(s, f, tg)
    out = propagate(s.as_nlevel().basis_state(0), f, s.as_nlevel(), tg)
    assert abs(abs(cb) ** 2 - abs(out.amplitudes[1]) ** 2) < 1e-7
    assert abs(ca) ** 2 + abs(cb) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_table_rows_t400():
    (row,) = table1_rwa(DOUBLE_WELL_PAIR, [400.0])
    assert row[1] == pytest.approx(0.9986, abs=5e-4)
    assert row[2] == pytest.approx(rwa_fluence(pulse_area_amplitude(0.3921, 400), 400))


def test_kernel_eigenvalues_match_continuum():
    tg = TimeGrid(400.0, 0.05)
    sol = perturbation_eigenfield(DOUBLE_WELL_PAIR, tg)
    l1, l2 = analytic_kernel_eigenvalues(DOUBLE_WELL_PAIR, 400.0)
    assert sol.eigenvalues[0] == pytest.approx(l1, rel=1e-5)
    assert sol.eigenvalues[1] == pytest.approx(l2, rel=1e-5)
    assert abs(sol.eigenvalues[2]) / sol.eigenvalues[0] < 1e-10
    assert np.sum(sol.optimal_field.values ** 2) * tg.dt == pytest.approx(1 / sol.eigenvalues[0])
