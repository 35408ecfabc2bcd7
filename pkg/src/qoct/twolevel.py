"""Two-level machinery: exact coefficient ODEs, RWA populations, pulse-area
amplitudes and the first-order perturbation-theory eigenfield."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse.linalg

from . import _kernels as K
from .filters import ControlField
from .propagator import TimeGrid
from .qsystem import NLevelSystem


@dataclass(frozen=True)
class TwoLevelSystem:
    omega_a: float
    omega_b: float
    mu: float

    @property
    def omega_ba(self) -> float:
        return self.omega_b - self.omega_a

    def as_nlevel(self) -> NLevelSystem:
        return NLevelSystem.from_two_level(self.omega_a, self.omega_b, self.mu)


# the double-well ground/first-excited pair
DOUBLE_WELL_PAIR = TwoLevelSystem(0.0, 0.1568, 0.3921)


def integrate_exact(sys: TwoLevelSystem, field: Union[ControlField, Callable], tg: TimeGrid,
                    c0=(1.0, 0.0)):
    """RK4 for i dc/dt = (H0 - mu eps(t)) c.  Returns (c_a(T), c_b(T)).

    A ControlField is piecewise constant on each step; a callable eps(t) is
    sampled at t, t+dt/2 and t+dt.
    """
    n = tg.n_steps
    if isinstance(field, ControlField):
        if field.n_steps != n or abs(field.dt - tg.dt) > 1e-15:
            raise ValueError("field does not match the time grid")
        e = field.values[0]
        stages = np.repeat(e[:, None], 3, axis=1)
    else:
        t = tg.dt * np.arange(n)
        stages = np.stack([field(t), field(t + 0.5 * tg.dt), field(t + tg.dt)], axis=1).astype(float)
    ca, cb = K.rk4_two_level(complex(c0[0]), complex(c0[1]), sys.omega_a, sys.omega_b, sys.mu,
                             np.ascontiguousarray(stages), tg.dt)
    return ca, cb


def rwa_populations(rabi: float, detuning: float, t):
    """(|g_a|^2, |g_b|^2) starting from the lower state."""
    t = np.asarray(t, dtype=float)
    omega2 = rabi ** 2 + detuning ** 2
    if omega2 == 0:
        pb = np.zeros_like(t)
    else:
        pb = rabi ** 2 / omega2 * np.sin(0.5 * np.sqrt(omega2) * t) ** 2
    return 1.0 - pb, pb


def pulse_area_amplitude(mu: float, T: float) -> float:
    """Resonant pi-pulse amplitude A = pi/(mu T)."""
    if mu == 0:
        raise ValueError("mu must be non-zero")
    if T <= 0:
        raise ValueError("T must be positive")
    return np.pi / (mu * T)


def optimal_amplitude_offresonant(mu: float, T: float, detuning: float, k: int = 0):
    """Amplitude completing (2k+1) half Rabi cycles off resonance.

    Returns (A, max_yield).  Raises when k is too small for the detuning.
    """
    if mu == 0:
        raise ValueError("mu must be non-zero")
    q = ((2 * k + 1) * np.pi / T) ** 2
    d2 = detuning ** 2
    if q < d2 * (1 - 1e-14):
        raise ValueError(f"k={k} too small for detuning {detuning}: no real amplitude")
    A = np.sqrt(max(q - d2, 0.0)) / abs(mu)
    return A, 1.0 - d2 / q


def rwa_fluence(A: float, T: float) -> float:
    """A^2 T / 2, the fluence of A sin(w t) over many periods."""
    return 0.5 * A * A * T


@dataclass(frozen=True, eq=False)
class PerturbationSolution:
    eigenvalues: np.ndarray       # descending
    eigenfields: np.ndarray       # (n_modes, n_steps), unit dt-norm
    optimal_field: ControlField   # rescaled top mode
    amplitude: float
    degenerate: bool
    times: np.ndarray


def perturbation_eigenfield(sys: TwoLevelSystem, tg: TimeGrid, n_modes: int = 4) -> PerturbationSolution:
    """Eigenpairs of K(t,t') = mu^2 cos(w_ba (t - t')) with rectangle weights dt.

    Samples sit at interval midpoints.  The rescaled field has fluence 1/lambda_1
    so its first-order yield is one.
    """
    n = tg.n_steps
    if n < 3:
        raise ValueError("need at least 3 time steps")
    dt = tg.dt
    t = dt * (np.arange(n) + 0.5)
    w = sys.omega_ba
    # rank-2 kernel mu^2 (c c^T + s s^T) dt, applied matrix-free inside Lanczos
    c = np.cos(w * t)
    s = np.sin(w * t)
    m2 = sys.mu ** 2 * dt
    kern = scipy.sparse.linalg.LinearOperator((n, n), dtype=float,
                                           matvec=lambda v: m2 * (c * (c @ v) + s * (s @ v)))
    k = min(n_modes, n - 1)
    vals, vecs = scipy.sparse.linalg.eigsh(kern, k=k, which="LA", tol=1e-13)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order].T / np.sqrt(dt)   # unit norm under sum f^2 dt
    degenerate = bool(abs(vals[0] - vals[1]) < 1e-12 * max(abs(vals[0]), 1.0))
    top = vecs[0]
    scale = np.sqrt((1.0 / vals[0]) / (np.sum(top ** 2) * dt))
    eps = ControlField(scale * top[None, :], dt)
    return PerturbationSolution(vals, vecs, eps, float(np.max(np.abs(eps.values))), degenerate, t)


def analytic_kernel_eigenvalues(sys: TwoLevelSystem, T: float):
    """Exact nonzero eigenvalues of the continuous rank-2 kernel on [0, T]."""
    w = sys.omega_ba
    a = T / 2 + np.sin(2 * w * T) / (4 * w)
    b = T / 2 - np.sin(2 * w * T) / (4 * w)
    c = np.sin(w * T) ** 2 / (2 * w)
    disc = np.sqrt(((a - b) / 2) ** 2 + c ** 2)
    m = sys.mu ** 2
    return m * ((a + b) / 2 + disc), m * ((a + b) / 2 - disc)


def table1_rwa(sys: TwoLevelSystem, T_values, dt: float = 0.01):
    """Rows (T, P_RWA, E0_RWA): exact propagation of A sin(w_ba t), A = pi/(mu T)."""
    rows = []
    for T in T_values:
        tg = TimeGrid(T, dt)
        A = pulse_area_amplitude(sys.mu, T)
        _, cb = integrate_exact(sys, lambda t, A=A: A * np.sin(sys.omega_ba * t), tg)
        rows.append((float(T), float(abs(cb) ** 2), rwa_fluence(A, T)))
    return rows
