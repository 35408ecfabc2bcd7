"""Target operators O (and O(t)), weight functions w(t), and J1.

Operators act on raw amplitude arrays of shape (N,) or (m, N); time-dependent
ones take the matching sample times.  Inner products carry the state measure
``w`` (dx on a grid, 1 for N-level vectors).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .qsystem import SpatialGrid, Wavefunction


def _amps(states) -> np.ndarray:
    if isinstance(states, Wavefunction):
        return states.amplitudes
    if isinstance(states, (list, tuple)):
        return np.array([s.amplitudes for s in states])
    return np.asarray(states, dtype=np.complex128)


def _measure(states) -> float:
    if isinstance(states, Wavefunction):
        return states.weight
    if isinstance(states, (list, tuple)) and states and isinstance(states[0], Wavefunction):
        return states[0].weight
    return 1.0


# ------------------------------------------------------------------ weights

@dataclass(frozen=True)
class FinalTime:
    """w(t) = 2T delta(t - T): J1 reduces to <Psi(T)|O|Psi(T)>."""

    def samples(self, tg) -> np.ndarray:
        raise TypeError("the final-time weight has no sampled form")


@dataclass(frozen=True)
class Uniform:
    def samples(self, tg) -> np.ndarray:
        return np.ones(tg.n_steps + 1)


@dataclass(frozen=True, eq=False)
class Sampled:
    """w(t_i) on the time grid, rescaled so (1/T) int w dt = 1 (trapezoid)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("sampled weight needs at least two samples")
        if np.any(v < 0):
            raise ValueError("weight must be non-negative")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f: Callable, tg) -> "Sampled":
        t = tg.times
        v = np.asarray(f(t), dtype=float)
        integral = float(np.sum(v * tg.trapezoid()))
        if integral <= 0:
            raise ValueError("weight profile integrates to zero")
        return cls(tg.t_final * v / integral)

    def samples(self, tg) -> np.ndarray:
        if self.values.size != tg.n_steps + 1:
            raise ValueError("sampled weight does not match the time grid")
        integral = float(np.sum(self.values * tg.trapezoid()))
        return self.values * (tg.t_final / integral)


WeightFunction = Union[FinalTime, Uniform, Sampled]


# ---------------------------------------------------------------- operators

class _Operator:
    time_dependent = False
    w = 1.0

    def apply(self, psi, t=None):
        raise NotImplementedError

    def expect(self, psi, t=None):
        psi = np.asarray(psi)
        op = self.apply(psi, t)
        return np.real(np.sum(psi.conj() * op, axis=-1)) * self.w

    def boundary(self, psi_T, T):
        """chi(T) for a final-time target."""
        return self.apply(psi_T, T)

    def value(self, psi_T, T):
        return float(self.expect(psi_T, T))


class Projection(_Operator):
    """|phi><phi|."""

    def __init__(self, phi: Wavefunction):
        self.phi = _amps(phi).copy()
        self.w = _measure(phi)
        self.state = phi

    def apply(self, psi, t=None):
        psi = np.asarray(psi)
        c = (psi @ self.phi.conj()) * self.w
        return np.multiply.outer(c, self.phi) if psi.ndim > 1 else c * self.phi


class PhaseFixedOverlap(_Operator):
    """J1 = Re <Psi(T)|phi>; fixes the global phase of the reached state.

    Not an operator target: the costate boundary is chi(T) = phi/2.
    """

    def __init__(self, phi: Wavefunction):
        self.phi = _amps(phi).copy()
        self.w = _measure(phi)

    def apply(self, psi, t=None):
        raise TypeError("the phase-fixed overlap is a linear functional, not an operator")

    def boundary(self, psi_T, T):
        return 0.5 * self.phi

    def value(self, psi_T, T):
        return float(np.real(np.vdot(psi_T, self.phi)) * self.w)


def narrow_gaussian(grid: SpatialGrid, x0: float, sigma: float) -> np.ndarray:
    x = grid.x
    return np.exp(-0.5 * ((x - x0) / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)


class LocalDensity(_Operator):
    """delta(x - x0) approximated by a normalized Gaussian of width sigma."""

    def __init__(self, grid: SpatialGrid, x0: float, sigma: float | None = None):
        if not (-grid.x_max <= x0 < grid.x_max):
            raise ValueError("x0 outside the grid")
        self.grid = grid
        self.x0 = float(x0)
        self.sigma = 2.0 * grid.dx if sigma is None else float(sigma)
        self.g = narrow_gaussian(grid, self.x0, self.sigma)
        self.w = grid.dx

    def apply(self, psi, t=None):
        return self.g * np.asarray(psi)


class MovingDensity(_Operator):
    """delta(x - x0(t)) with a Gaussian stand-in."""

    time_dependent = True

    def __init__(self, grid: SpatialGrid, x0: Callable, sigma: float | None = None):
        self.grid = grid
        self.x0 = x0
        self.sigma = 2.0 * grid.dx if sigma is None else float(sigma)
        self.w = grid.dx

    def apply(self, psi, t=None):
        psi = np.asarray(psi)
        t = np.asarray(t, dtype=float)
        centers = np.atleast_1d(np.asarray(self.x0(t), dtype=float))
        x = self.grid.x
        g = np.exp(-0.5 * ((x[None, :] - centers[:, None]) / self.sigma) ** 2) / (np.sqrt(2 * np.pi) * self.sigma)
        return g.reshape(psi.shape) * psi if psi.ndim == 1 else g * psi


class DensityOverlap(_Operator):
    """J1 = int sqrt(n(x,T) n_f(x)) dx.  Evaluation only."""

    def __init__(self, grid: SpatialGrid, n_f: np.ndarray):
        self.grid = grid
        self.n_f = np.asarray(n_f, dtype=float)
        self.w = grid.dx

    def apply(self, psi, t=None):
        raise NotImplementedError("the density-overlap target is evaluated, not optimized")

    def value(self, psi_T, T=None):
        n = np.abs(np.asarray(psi_T)) ** 2
        return float(np.sum(np.sqrt(n * self.n_f)) * self.w)


class MultiObjective(_Operator):
    """sum_j beta_j O_j."""

    def __init__(self, terms: Sequence[tuple]):
        self.terms = [(float(b), op) for b, op in terms]
        if not self.terms:
            raise ValueError("multi-objective target needs at least one term")
        if not all(np.isfinite(b) for b, _ in self.terms):
            raise ValueError("weights must be finite")
        self.w = self.terms[0][1].w
        self.time_dependent = any(op.time_dependent for _, op in self.terms)

    def apply(self, psi, t=None):
        out = None
        for b, op in self.terms:
            y = b * op.apply(psi, t)
            out = y if out is None else out + y
        return out


class Follower(_Operator):
    """O(t) = |phi(t)><phi(t)|, phi(t) = sum_n c_n(t) e^{-i E_n t} |n>.

    ``coeffs(t)`` maps an array of m times to an (m, n_states) array.
    """

    time_dependent = True

    def __init__(self, coeffs: Callable, basis, energies, t_final: float):
        self.coeffs = coeffs
        self.basis = _amps(basis)
        self.w = _measure(basis)
        self.energies = np.asarray(energies, dtype=float)
        self.t_final = float(t_final)
        if self.basis.shape[0] != self.energies.size:
            raise ValueError("basis and energies differ in length")

    def target_states(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < -1e-12) or np.any(t > self.t_final * (1 + 1e-12)):
            raise ValueError("follower queried outside [0, T]")
        c = np.asarray(self.coeffs(t), dtype=np.complex128).reshape(t.size, -1)
        c = c * np.exp(-1j * np.outer(t, self.energies))
        return c @ self.basis

    def apply(self, psi, t=None):
        psi = np.asarray(psi)
        phi = self.target_states(t)
        if psi.ndim == 1:
            phi = phi[0]
            return phi * (np.vdot(phi, psi) * self.w)
        ov = np.sum(phi.conj() * psi, axis=1) * self.w
        return phi * ov[:, None]


TargetOperator = Union[Projection, PhaseFixedOverlap, LocalDensity, MovingDensity,
                       DensityOverlap, MultiObjective, Follower]


@dataclass(frozen=True, eq=False)
class TargetSpec:
    op: _Operator
    weight: WeightFunction = field(default_factory=FinalTime)

    @property
    def final_time(self) -> bool:
        return isinstance(self.weight, FinalTime)


# ---------------------------------------------------------------- functions

def apply_target(spec: TargetSpec | _Operator, psi: Wavefunction, t: float) -> Wavefunction:
    op = spec.op if isinstance(spec, TargetSpec) else spec
    a = op.apply(psi.amplitudes, np.array([t]) if op.time_dependent else t)
    return psi.with_amplitudes(np.asarray(a).reshape(psi.amplitudes.shape))


def evaluate_J1(spec: TargetSpec, trajectory, tg) -> float:
    """Final-time weight: <Psi(T)|O|Psi(T)>.  Otherwise (1/T) int w <O(t)> dt.

    ``trajectory`` may be a Wavefunction (final state), an (n+1, N) array or
    a propagator Trajectory.
    """
    op = spec.op
    if spec.final_time:
        if isinstance(trajectory, Wavefunction):
            psi_T = trajectory.amplitudes
        elif hasattr(trajectory, "last"):
            psi_T = trajectory.last
        else:
            psi_T = np.asarray(trajectory)[-1]
        return op.value(psi_T, tg.t_final)
    w = spec.weight.samples(tg) * tg.trapezoid()
    t = tg.times
    if hasattr(trajectory, "bounds"):
        total = 0.0
        for j, (s, e) in enumerate(trajectory.bounds):
            blk = trajectory.block(j)
            lo = s if j == 0 else s + 1
            sl = slice(lo - s, e - s + 1)
            total += float(np.sum(w[lo:e + 1] * op.expect(blk[sl], t[lo:e + 1])))
        return total / tg.t_final
    traj = np.asarray(trajectory)
    if traj.shape[0] != tg.n_steps + 1:
        raise ValueError("trajectory does not cover the time grid")
    return float(np.sum(w * op.expect(traj, t))) / tg.t_final


def occupation_path(t, T: float) -> np.ndarray:
    """Target amplitudes c_0..c_4 (real) for the ladder-following example.

    Steps are right-continuous in t: theta(t - a) = 1 at t = a while
    theta(a - t) = 0 there, so the pieces never overlap at a jump.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    up = lambda a: (t >= a).astype(float)  # noqa: E731
    down = lambda a: (t < a).astype(float)  # noqa: E731
    c0 = down(T / 2) * np.cos(np.pi * t / T)
    c1 = up(3 * T / 4) * np.sin(2 * np.pi * t / T - 1.5 * np.pi)
    c2 = np.zeros_like(t)
    c4 = down(T / 2) * np.sin(np.pi * t / T) + up(T / 2) * down(5 * T / 8)
    rest = np.clip(1.0 - c0 ** 2 - c1 ** 2 - c4 ** 2, 0.0, None)
    c3 = up(T / 2) * np.sqrt(rest)
    return np.stack([c0, c1, c2, c3, c4], axis=1)


def follower_weight_profile(T: float) -> Callable:
    def f(t):
        t = np.asarray(t, dtype=float)
        return 1.0 - np.exp(-(t - 5 * T / 8) ** 2 / 1600.0) + np.exp(-(t - T) ** 2 / 64.0)
    return f


def build_follower_path(basis, energies, tg) -> TargetSpec:
    """Follower target along |0> -> |4> -> |3> -> |1> with the dip/peak weight."""
    T = tg.t_final
    if T <= 0:
        raise ValueError("T must be positive")
    basis = list(basis)[:5] if isinstance(basis, (list, tuple)) else np.asarray(basis)[:5]
    op = Follower(lambda t: occupation_path(t, T), basis, np.asarray(energies)[:5], T)
    return TargetSpec(op, Sampled.from_function(follower_weight_profile(T), tg))
