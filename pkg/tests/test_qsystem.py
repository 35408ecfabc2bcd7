import numpy as np
import pytest

from qoct.qsystem import (AsymmetricDoubleWell, DensityAt, GridSystem, Harmonic, MatrixDipole,
                          NLevelSystem, PositionDipole, SpatialGrid, Tabulated, Wavefunction,
                          dipole_matrix, expectation, fix_phases, inner_product)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        SpatialGrid(10.0, 100)
    with pytest.raises(ValueError):
        SpatialGrid(-1.0, 64)


def test_grid_spacing_matches_optimization_grid():
    g = SpatialGrid(15.0, 256)
    assert g.dx == pytest.approx(0.1171875)
    assert g.x[0] == -15.0
    assert len(g.k) == 256
    assert SpatialGrid.from_spacing(30.0, 0.1171875).n_points == 512


def test_double_well_shape():
    V = AsymmetricDoubleWell()
    x = np.array([-4.0, 0.0, 4.0])
    # w0^4/64 x^4 - x^2/4 + x^3/256
    assert np.allclose(V(x), x ** 4 / 64 - x ** 2 / 4 + x ** 3 / 256)
    # the cubic term lowers the left well
    assert V(-2.83) < V(2.83)


def test_tabulated_interpolates(tmp_path):
    f = tmp_path / "v.dat"
    np.savetxt(f, np.column_stack([[0.0, 1.0, 2.0], [0.0, 2.0, 0.0]]))
    V = Tabulated.load(f)
    assert V(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Tabulated([0.0], [1.0])


def test_wavefunction_norm_and_inner_product():
    g = SpatialGrid(10.0, 128)
    a = Wavefunction(np.exp(-g.x ** 2), g).normalized()
    assert a.norm() == pytest.approx(1.0)
    assert inner_product(a, a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Wavefunction(np.ones(10), g)


def test_expectation_of_position_and_density():
    g = SpatialGrid(10.0, 256)
    psi = Wavefunction(np.exp(-(g.x - 1.5) ** 2), g).normalized()
    assert expectation(PositionDipole(), psi) == pytest.approx(1.5, abs=1e-10)
    assert expectation(DensityAt(1.5), psi) > 0
    with pytest.raises(ValueError):
        expectation(DensityAt(50.0), psi)


def test_matrix_dipole_must_be_hermitian():
    with pytest.raises(ValueError):
        MatrixDipole(np.array([[0, 1], [2, 0]]))


def test_nlevel_two_level_construction():
    s = NLevelSystem.from_two_level(0.0, 0.1568, 0.3921)
    assert s.dim == 2 and s.n_pol == 1
    assert np.allclose(s.dipoles[0], [[0, 0.3921], [0.3921, 0]])
    with pytest.raises(ValueError):
        NLevelSystem(np.array([[0, 1j], [1j, 0]]), (np.eye(2),))


def test_dipole_matrix_harmonic_oracle():
    # <0|x|1> = 1/sqrt(2) for unit frequency
    g = SpatialGrid(12.0, 256)
    x = g.x
    h0 = np.pi ** -0.25 * np.exp(-x ** 2 / 2)
    h1 = np.sqrt(2) * x * h0
    M = dipole_matrix([Wavefunction(h0, g), Wavefunction(h1, g)])
    assert M[0, 1] == pytest.approx(1 / np.sqrt(2), abs=1e-10)
    assert abs(M[0, 0]) < 1e-12


def test_fix_phases_makes_states_real():
    g = SpatialGrid(10.0, 128)
    s = Wavefunction(np.exp(-g.x ** 2) * np.exp(0.7j), g)
    (f,) = fix_phases([s])
    assert np.max(np.abs(f.amplitudes.imag)) < 1e-12
    assert f.amplitudes.real.max() > 0


def test_grid_system_defaults():
    s = GridSystem(SpatialGrid(15.0, 256))
    assert s.n_pol == 1
    assert np.allclose(s.dipole_values()[0], s.grid.x)
    h = GridSystem(SpatialGrid(15.0, 256), Harmonic())
    assert h.potential_values().min() >= 0
