import numpy as np
import pytest

from qoct.controllability import NLevelControlSystem, lie_basis, lie_rank, two_level_system


def test_two_level_nonzero_trace_controllable():
    assert lie_rank(two_level_system(0.0, 0.1568, 0.3921)) == (4, True)


def test_two_level_traceless_not_controllable():
    assert lie_rank(two_level_system(-0.0784, 0.0784, 0.3921)) == (3, False)


def test_no_coupling():
    r, ok = lie_rank(two_level_system(0.0, 0.1568, 0.0))
    assert r == 1 and not ok


def test_three_level_ladder_controllable():
    h0 = np.diag([0.0, 1.0, 2.3])
    mu = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    r, ok = lie_rank(NLevelControlSystem(h0, (mu,)))
    assert ok and r == 9


def test_basis_elements_anti_hermitian():
    b = lie_basis(two_level_system(0.0, 0.1568, 0.3921))
    for X in b.elements:
        assert np.allclose(X, -X.conj().T)


def test_validation():
    with pytest.raises(ValueError):
        NLevelControlSystem(np.array([[0, 1], [0, 0]]), ())
    with pytest.raises(ValueError):
        lie_basis(two_level_system(0, 1, 1), tol=0)
