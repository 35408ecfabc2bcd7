"""Grids, wavefunctions, model potentials, dipoles and simple observables.

Atomic units throughout.  The Hamiltonian is H = T + V - mu*eps(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid on [-x_max, x_max)."""

    x_max: float
    n_points: int

    def __post_init__(self):
        n = int(self.n_points)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 8, got {n}")
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")

    @classmethod
    def from_spacing(cls, x_max: float, dx: float) -> "SpatialGrid":
        n = int(round(2 * x_max / dx))
        return cls(x_max, n)

    @property
    def dx(self) -> float:
        return 2.0 * self.x_max / self.n_points

    @property
    def x(self) -> np.ndarray:
        return -self.x_max + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        # standard DFT ordering, spacing 2*pi/(n*dx)
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, self.dx)


@dataclass(frozen=True, eq=False)
class Wavefunction:
    """Complex amplitudes on a grid, or a bare coefficient vector (grid=None)."""

    amplitudes: np.ndarray
    grid: SpatialGrid | None = None

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.ndim != 1:
            raise ValueError("amplitudes must be one-dimensional")
        if self.grid is not None and a.shape[0] != self.grid.n_points:
            raise ValueError("amplitude length does not match grid")
        object.__setattr__(self, "amplitudes", a)

    @property
    def weight(self) -> float:
        return 1.0 if self.grid is None else self.grid.dx

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.weight))

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.amplitudes / self.norm(), self.grid)

    def with_amplitudes(self, a) -> "Wavefunction":
        return Wavefunction(a, self.grid)


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class AsymmetricDoubleWell:
    """V(x) = w0^4/(64 B) x^4 - w0^2/4 x^2 + beta x^3."""

    B: float = 1.0
    omega0: float = 1.0
    beta: float = 1.0 / 256.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        w2 = self.omega0 ** 2
        return w2 * w2 / (64.0 * self.B) * x ** 4 - w2 / 4.0 * x ** 2 + self.beta * x ** 3


@dataclass(frozen=True)
class Harmonic:
    omega: float = 1.0
    center: float = 0.0

    def __call__(self, x):
        return 0.5 * self.omega ** 2 * (np.asarray(x, dtype=float) - self.center) ** 2


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Samples (x, V) resampled onto a grid by linear interpolation."""

    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vs = np.asarray(self.values, dtype=float)
        if xs.shape != vs.shape or xs.ndim != 1 or xs.size < 2:
            raise ValueError("tabulated potential needs matching 1-d x and V arrays")
        order = np.argsort(xs)
        object.__setattr__(self, "xs", xs[order])
        object.__setattr__(self, "values", vs[order])

    @classmethod
    def load(cls, path: str | Path) -> "Tabulated":
        data = np.loadtxt(path, comments="#", ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.values)


Potential = Union[AsymmetricDoubleWell, Harmonic, Tabulated]


def eval_potential(pot: Potential, grid: SpatialGrid) -> np.ndarray:
    return np.asarray(pot(grid.x), dtype=float)


# ------------------------------------------------------------------- dipoles

@dataclass(frozen=True)
class PositionDipole:
    """mu = x on the grid (the double-well dipole)."""

    def on_grid(self, grid: SpatialGrid) -> np.ndarray:
        return grid.x


@dataclass(frozen=True, eq=False)
class MatrixDipole:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("dipole matrix must be square")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12:
            raise ValueError("dipole matrix must be Hermitian")
        object.__setattr__(self, "matrix", m)


DipoleOperator = Union[PositionDipole, MatrixDipole]


@dataclass(frozen=True)
class DensityAt:
    """|psi(x0)|^2 observable, nearest grid point."""

    x0: float


# ------------------------------------------------------------------ systems

@dataclass(frozen=True, eq=False)
class GridSystem:
    grid: SpatialGrid
    potential: Potential = field(default_factory=AsymmetricDoubleWell)
    dipoles: tuple = (PositionDipole(),)
    mass: float = 1.0

    @property
    def n_pol(self) -> int:
        return len(self.dipoles)

    @property
    def dim(self) -> int:
        return self.grid.n_points

    @property
    def weight(self) -> float:
        return self.grid.dx

    def potential_values(self) -> np.ndarray:
        return eval_potential(self.potential, self.grid)

    def dipole_values(self) -> np.ndarray:
        return np.array([d.on_grid(self.grid) for d in self.dipoles], dtype=float)

    def kinetic_energies(self) -> np.ndarray:
        return self.grid.k ** 2 / (2.0 * self.mass)

    def state(self, amplitudes) -> Wavefunction:
        return Wavefunction(amplitudes, self.grid)


@dataclass(frozen=True, eq=False)
class NLevelSystem:
    """Finite basis model: H = H0 - sum_j mu_j eps_j."""

    h0: np.ndarray
    dipoles: tuple

    def __post_init__(self):
        h0 = np.asarray(self.h0, dtype=np.complex128)
        if h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
            raise ValueError("h0 must be square")
        if np.max(np.abs(h0 - h0.conj().T)) > 1e-12:
            raise ValueError("h0 must be Hermitian")
        mus = tuple(MatrixDipole(d).matrix if not isinstance(d, MatrixDipole) else d.matrix
                    for d in self.dipoles)
        if not mus:
            raise ValueError("need at least one dipole operator")
        for m in mus:
            if m.shape != h0.shape:
                raise ValueError("dipole shape does not match h0")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "dipoles", mus)

    @classmethod
    def from_two_level(cls, omega_a: float, omega_b: float, mu: float) -> "NLevelSystem":
        return cls(np.diag([omega_a, omega_b]), (np.array([[0.0, mu], [mu, 0.0]]),))

    @classmethod
    def from_eigenbasis(cls, energies, dipole: np.ndarray) -> "NLevelSystem":
        return cls(np.diag(np.asarray(energies, dtype=float)), (np.asarray(dipole),))

    @property
    def n_pol(self) -> int:
        return len(self.dipoles)

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def weight(self) -> float:
        return 1.0

    def state(self, amplitudes) -> Wavefunction:
        return Wavefunction(amplitudes, None)

    def basis_state(self, n: int) -> Wavefunction:
        a = np.zeros(self.dim, np.complex128)
        a[n] = 1.0
        return Wavefunction(a, None)


System = Union[GridSystem, NLevelSystem]


# --------------------------------------------------------------- observables

def _check_same(a: Wavefunction, b: Wavefunction):
    if a.grid != b.grid or a.amplitudes.shape != b.amplitudes.shape:
        raise ValueError("wavefunctions live on different grids")


def inner_product(a: Wavefunction, b: Wavefunction) -> complex:
    """<a|b> = sum conj(a) b dx."""
    _check_same(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.weight)


def expectation(op, psi: Wavefunction) -> float:
    if isinstance(op, DensityAt):
        g = psi.grid
        if g is None:
            raise ValueError("density needs a spatial grid")
        if not (-g.x_max <= op.x0 < g.x_max):
            raise ValueError(f"x0={op.x0} lies outside the grid")
        i = int(np.argmin(np.abs(g.x - op.x0)))
        return float(np.abs(psi.amplitudes[i]) ** 2)
    if isinstance(op, PositionDipole):
        if psi.grid is None:
            raise ValueError("position operator needs a spatial grid")
        a = psi.amplitudes
        return float(np.real(np.vdot(a, psi.grid.x * a)) * psi.weight)
    m = op.matrix if isinstance(op, MatrixDipole) else np.asarray(op)
    a = psi.amplitudes
    return float(np.real(np.vdot(a, m @ a)) * psi.weight)


def dipole_matrix(states: Sequence[Wavefunction], op: DipoleOperator = PositionDipole()) -> np.ndarray:
    """mu_mn = <m|mu|n> for a list of grid states."""
    grid = states[0].grid
    A = np.array([s.amplitudes for s in states])
    if isinstance(op, PositionDipole):
        return np.real(A.conj() @ (grid.x * A).T) * grid.dx
    return np.real(A.conj() @ (op.matrix @ A.T)) * states[0].weight


def fix_phases(states: Sequence[Wavefunction]) -> list[Wavefunction]:
    """Make each state real with a positive first lobe.

    Real-valued eigenfunctions are rotated to real and the sign is chosen so
    the largest-magnitude amplitude on the left half is positive.  Relative
    signs of dipole elements then follow from this choice.
    """
    out = []
    for s in states:
        a = s.amplitudes
        i = int(np.argmax(np.abs(a)))
        a = a * np.exp(-1j * np.angle(a[i]))
        n = a.shape[0]
        left = np.abs(a[: n // 2])
        j = int(np.argmax(left))
        if a[j].real < 0:
            a = -a
        out.append(s.with_amplitudes(a))
    return out
