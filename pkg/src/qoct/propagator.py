"""Time evolution: split-operator stepping, imaginary-time eigenstates and the
inhomogeneous backward equation for time-dependent targets.

The real-time step is the symmetric split exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2)
with the field held constant over [t_i, t_i + dt).  Backward steps apply the
exact inverse, so forward-then-backward is an identity up to rounding.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import _kernels as K
from .qsystem import GridSystem, NLevelSystem, Potential, SpatialGrid, System, Wavefunction, eval_potential

log = logging.getLogger(__name__)

FORWARD = 1
BACKWARD = -1

DEFAULT_BUDGET = 2e8  # complex values per stored trajectory
BLOCK = 2000


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("t_final and dt must be positive")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-12 * max(1.0, self.t_final):
            raise ValueError(f"t_final={self.t_final} is not a multiple of dt={self.dt}")

    @classmethod
    def from_steps(cls, t_final: float, n_steps: int) -> "TimeGrid":
        return cls(t_final, t_final / n_steps)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def times(self) -> np.ndarray:
        """Sample times t_0..t_n."""
        return self.dt * np.arange(self.n_steps + 1)

    def trapezoid(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def memory_budget() -> float:
    env = os.environ.get("QOCT_MEMORY_BUDGET")
    return float(env) if env else DEFAULT_BUDGET


# ------------------------------------------------------------------ dynamics

def grid_params(V, D, kin, hdt, dx):
    """Kernel tuple for the split step, with radix-2 FFT tables."""
    V = np.ascontiguousarray(V, dtype=float)
    D = np.ascontiguousarray(np.atleast_2d(D), dtype=float)
    n = V.shape[0]
    bits = n.bit_length() - 1
    rev = np.array([int(format(i, f"0{bits}b")[::-1], 2) for i in range(n)], dtype=np.int64)
    tw = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    stw = np.concatenate([tw[:: n // (2 ** s)] for s in range(1, bits + 1)])
    D0 = D[:, 0].copy()
    Dd = D[:, 1] - D[:, 0]
    idx = np.arange(n)
    affine = bool(np.allclose(D, D0[:, None] + Dd[:, None] * idx[None, :], rtol=0, atol=1e-12))
    return (V, D, np.ascontiguousarray(kin / n), float(hdt), float(dx), rev, stw,
            np.ascontiguousarray(stw.conj()), np.exp(-1j * V * hdt), D0, Dd, affine)


class Dynamics:
    """A system discretized for a fixed time step.  Holds kernel parameters."""

    def __init__(self, system: System, dt: float):
        self.system = system
        self.dt = float(dt)
        self.n_pol = system.n_pol
        self.dim = system.dim
        self.weight = float(system.weight)
        if isinstance(system, GridSystem):
            V = system.potential_values()
            D = np.ascontiguousarray(system.dipole_values())
            kin = np.exp(-1j * system.kinetic_energies() * self.dt)
            self.P = grid_params(V, D, kin, 0.5 * self.dt, self.weight)
            self.step = K.grid_step
            self.dip = K.grid_dip
        elif isinstance(system, NLevelSystem):
            h0 = system.h0
            Uf = scipy.linalg.expm(-0.5j * self.dt * h0)
            Ub = np.ascontiguousarray(Uf.conj().T)
            W, Q = [], []
            for m in system.dipoles:
                w, q = np.linalg.eigh(m)
                W.append(w)
                Q.append(q.astype(np.complex128))
            W = np.array(W)
            Q = np.array(Q)
            Qh = np.ascontiguousarray(np.conj(np.transpose(Q, (0, 2, 1))))
            M = np.array([m.astype(np.complex128) for m in system.dipoles])
            if len(M) == 1:
                c = np.ascontiguousarray
                self.P = (c(Uf @ Q[0]), c(Qh[0] @ Uf), c(Ub @ Q[0]), c(Qh[0] @ Ub), W, M, self.dt)
                self.step = K.nl_step1
            else:
                self.P = (np.ascontiguousarray(Uf), Ub, W, Q, Qh, M, self.dt)
                self.step = K.nl_step
            self.dip = K.nl_dip
        else:
            raise TypeError(f"unsupported system {type(system).__name__}")

    def fields_t(self, values: np.ndarray) -> np.ndarray:
        """(n_pol, n) field -> contiguous (n, n_pol) kernel layout."""
        return np.ascontiguousarray(np.asarray(values, dtype=float).T)

    def norm2(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, psi).real * self.weight)


def _field_values(field, n_pol: int, n_steps: int) -> np.ndarray:
    v = field.values if hasattr(field, "values") else np.asarray(field, dtype=float)
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape != (n_pol, n_steps):
        raise ValueError(f"field shape {v.shape} does not match (n_pol={n_pol}, n_steps={n_steps})")
    return v


# ---------------------------------------------------------------- operations

def split_step(psi: Wavefunction, V_total: np.ndarray, dt: float, direction: int = FORWARD,
               mass: float = 1.0) -> Wavefunction:
    """One split-operator step with a given total potential (field included)."""
    grid = psi.grid
    if grid is None:
        raise ValueError("split_step needs a grid wavefunction")
    kin = np.exp(-1j * grid.k ** 2 / (2 * mass) * dt)
    P = grid_params(np.asarray(V_total, dtype=float), np.zeros((1, grid.n_points)), kin, 0.5 * dt, grid.dx)
    out = K.step_once(K.grid_step, np.ascontiguousarray(psi.amplitudes, dtype=np.complex128), np.zeros(1),
                      float(np.sign(direction)), P)
    return psi.with_amplitudes(out)


def propagate(psi0: Wavefunction, field, system: System, tg: TimeGrid, direction: int = FORWARD,
              tap: Optional[Callable[[float, Wavefunction], None]] = None,
              store: bool = False):
    """Propagate psi0 over the time grid with a fixed field.

    Forward starts at t=0 and returns psi(T); backward starts at T and returns
    psi(0).  ``tap(t_i, psi)`` is called at each sample time (slow path).
    With ``store=True`` the full trajectory (n+1, N) is returned as well.
    """
    dyn = Dynamics(system, tg.dt)
    eps = dyn.fields_t(_field_values(field, dyn.n_pol, tg.n_steps))
    psi = np.ascontiguousarray(psi0.amplitudes, dtype=np.complex128)
    sgn = 1.0 if direction == FORWARD else -1.0
    if tap is None:
        traj = np.empty((tg.n_steps + 1 if store else 0, dyn.dim), np.complex128)
        out = K.run_plain(dyn.step, psi, eps, sgn, dyn.P, traj)
        res = psi0.with_amplitudes(out)
        return (res, traj) if store else res
    n = tg.n_steps
    order = range(n) if sgn > 0 else range(n - 1, -1, -1)
    traj = np.empty((n + 1, dyn.dim), np.complex128) if store else None
    i0 = 0 if sgn > 0 else n
    tap(i0 * tg.dt, psi0.with_amplitudes(psi.copy()))
    if store:
        traj[i0] = psi
    for i in order:
        psi = K.step_once(dyn.step, psi, eps[i], sgn, dyn.P)
        j = i + 1 if sgn > 0 else i
        tap(j * tg.dt, psi0.with_amplitudes(psi.copy()))
        if store:
            traj[j] = psi
    res = psi0.with_amplitudes(psi)
    return (res, traj) if store else res


def imaginary_time_eigenstates(potential: Potential, grid: SpatialGrid, n_states: int,
                               dtau: float = 0.005, tol: float = 1e-10,
                               max_steps: int = 1_000_000, check_every: int = 100,
                               mass: float = 1.0):
    """Lowest eigenpairs by imaginary-time relaxation with re-orthogonalization.

    Returns (energies, states), each state rotated to be real.
    """
    if not 1 <= n_states <= 8:
        raise ValueError("n_states must be between 1 and 8")
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    V = eval_potential(potential, grid)
    tk = grid.k ** 2 / (2 * mass)
    x = grid.x
    width = grid.x_max / 6.0  # broad enough to reach every well
    found = np.empty((0, grid.n_points), np.complex128)
    P = grid_params(V, np.zeros((1, grid.n_points)), np.ones(grid.n_points), 0.0, grid.dx)
    energies = []
    for k in range(n_states):
        guess = (x ** k * np.exp(-0.5 * (x / width) ** 2)).astype(np.complex128)
        guess /= np.sqrt(np.sum(np.abs(guess) ** 2) * grid.dx)
        psi, e, steps, ok = K.imag_time_solve(guess, found, V, tk, dtau, grid.dx, tol,
                                              max_steps, check_every, P[5], P[6], P[7])
        if not ok:
            raise PropagationError(f"state {k} did not converge within {max_steps} steps")
        # make real: eigenfunctions of a real Hamiltonian
        i = int(np.argmax(np.abs(psi)))
        psi = psi * np.exp(-1j * np.angle(psi[i]))
        found = np.vstack([found, psi[None, :]])
        energies.append(e)
        log.debug("state %d: E=%.10f after %d steps", k, e, steps)
    states = [Wavefunction(found[k].copy(), grid) for k in range(n_states)]
    return np.array(energies), states


def propagate_inhomogeneous(chi_T: Wavefunction, field, system: System, tg: TimeGrid,
                            weight: np.ndarray, source_states: np.ndarray,
                            store: bool = False):
    """Backward solution of i d/dt chi = H chi - (i/T) w(t) O(t)Psi(t).

    ``source_states`` holds O(t_i)Psi(t_i) for i = 0..n (shape (n+1, N)) and
    ``weight`` the samples w(t_i).  The source is accumulated with the
    trapezoid rule on each step.
    """
    dyn = Dynamics(system, tg.dt)
    n = tg.n_steps
    eps = dyn.fields_t(_field_values(field, dyn.n_pol, n))
    src = np.asarray(source_states, dtype=np.complex128)
    if src.shape != (n + 1, dyn.dim):
        raise ValueError(f"source needs shape {(n + 1, dyn.dim)}, got {src.shape}")
    w = np.asarray(weight, dtype=float)
    if w.shape != (n + 1,):
        raise ValueError("weight must have one sample per time point")
    src = np.ascontiguousarray(w[:, None] * src)
    h = 0.5 * tg.dt / tg.t_final
    traj = np.empty((n + 1 if store else 0, dyn.dim), np.complex128)
    # no feedback (b=0): the psi slot is unused, src stands in for it
    out = K.run_backward_fb(dyn.step, dyn.dip, np.ascontiguousarray(chi_T.amplitudes), src,
                            eps, 1.0, 0.0, np.zeros(dyn.n_pol), False, dyn.weight, dyn.P,
                            src, h, traj, np.empty_like(eps))
    res = chi_T.with_amplitudes(out)
    return (res, traj) if store else res


# -------------------------------------------------------------- trajectories

def block_bounds(n_steps: int, block: int):
    return [(s, min(s + block, n_steps)) for s in range(0, n_steps, block)]


class Trajectory:
    """States at t_0..t_n, kept whole or as per-block checkpoints.

    In checkpoint mode ``block(j)`` re-runs block j from its checkpoint with
    the recorded field (and source), which reproduces the original states
    bit for bit.
    """

    def __init__(self, n_steps: int, dim: int, stored: bool, block: int = BLOCK, bounds=None):
        self.n_steps = n_steps
        self.dim = dim
        self.stored = stored
        self.bounds = block_bounds(n_steps, block) if bounds is None else list(bounds)
        self.full = np.empty((n_steps + 1, dim), np.complex128) if stored else None
        self.checkpoints: dict[int, np.ndarray] = {}
        self.replay: Optional[Callable[[int], np.ndarray]] = None
        self.first: Optional[np.ndarray] = None
        self.last: Optional[np.ndarray] = None

    def buffer(self, j: int) -> np.ndarray:
        s, e = self.bounds[j]
        if self.stored:
            return self.full[s:e + 1]
        return np.empty((e - s + 1, self.dim), np.complex128)

    def block(self, j: int) -> np.ndarray:
        s, e = self.bounds[j]
        if self.stored:
            return self.full[s:e + 1]
        return self.replay(j)

    def __len__(self):
        return len(self.bounds)


def wants_storage(n_steps: int, dim: int, budget: Optional[float] = None) -> bool:
    b = memory_budget() if budget is None else budget
    return (n_steps + 1) * dim <= b


def forward_pass(dyn: Dynamics, psi0: np.ndarray, ref: np.ndarray, *, chi: Optional[Trajectory] = None,
                 a: float = 1.0, b: float = 0.0, inv_alpha=None, rapid: bool = False,
                 stored: bool = True, block: int = BLOCK):
    """Forward propagation, optionally with feedback from a costate trajectory.

    ``ref`` is the (n, n_pol) reference field.  Returns (field, trajectory)
    where field is the (n, n_pol) field actually used.
    """
    n = ref.shape[0]
    traj = Trajectory(n, dyn.dim, stored, block)
    eps = np.empty_like(ref) if chi is not None else ref
    inv_alpha = np.zeros(dyn.n_pol) if inv_alpha is None else np.asarray(inv_alpha, dtype=float)
    psi = np.ascontiguousarray(psi0, dtype=np.complex128)
    traj.first = psi.copy()
    for j, (s, e) in enumerate(traj.bounds):
        if not stored:
            traj.checkpoints[j] = psi.copy()
        buf = traj.buffer(j)
        if chi is None:
            psi = K.run_plain(dyn.step, psi, ref[s:e], 1.0, dyn.P, buf)
        else:
            psi = K.run_forward_fb(dyn.step, dyn.dip, psi, chi.block(j), ref[s:e], a, b,
                                   inv_alpha, rapid, dyn.weight, dyn.P, buf, eps[s:e])
    traj.last = psi.copy()
    if not stored:
        field = eps

        def replay(j, _t=traj, _f=field):
            s, e = _t.bounds[j]
            buf = np.empty((e - s + 1, dyn.dim), np.complex128)
            K.run_plain(dyn.step, _t.checkpoints[j].copy(), _f[s:e], 1.0, dyn.P, buf)
            return buf

        traj.replay = replay
    return eps, traj


def backward_pass(dyn: Dynamics, chi_T: np.ndarray, psi: Trajectory, ref: np.ndarray, *,
                  a: float = 1.0, b: float = 0.0, inv_alpha=None, rapid: bool = False,
                  source: Optional[Callable[[int, int, np.ndarray], np.ndarray]] = None,
                  h: float = 0.0, store_chi: bool = True, stored: bool = True):
    """Backward propagation of the costate with feedback from ``psi``.

    ``source(s, e, psi_block)`` returns w_i O_i psi_i for samples s..e.
    Returns (field, chi trajectory or None, chi(0)).
    """
    n = ref.shape[0]
    eps = np.empty_like(ref)
    inv_alpha = np.zeros(dyn.n_pol) if inv_alpha is None else np.asarray(inv_alpha, dtype=float)
    keep = store_chi
    traj = Trajectory(n, dyn.dim, stored and keep, bounds=psi.bounds)
    chi = np.ascontiguousarray(chi_T, dtype=np.complex128)
    traj.last = chi.copy()
    empty = np.empty((0, dyn.dim), np.complex128)
    for j in range(len(psi.bounds) - 1, -1, -1):
        s, e = psi.bounds[j]
        pblk = psi.block(j)
        src = empty if source is None else np.ascontiguousarray(source(s, e, pblk))
        if keep and not stored:
            traj.checkpoints[j] = chi.copy()
        buf = traj.buffer(j) if keep else empty
        chi = K.run_backward_fb(dyn.step, dyn.dip, chi, pblk, ref[s:e], a, b, inv_alpha, rapid,
                                dyn.weight, dyn.P, src, h, buf, eps[s:e])
    traj.first = chi.copy()
    if keep and not stored:
        def replay(j, _t=traj, _f=eps):
            s, e = _t.bounds[j]
            pblk = psi.block(j)
            src = empty if source is None else np.ascontiguousarray(source(s, e, pblk))
            buf = np.empty((e - s + 1, dyn.dim), np.complex128)
            K.run_backward_fb(dyn.step, dyn.dip, _t.checkpoints[j].copy(), pblk, _f[s:e], 1.0, 0.0,
                              inv_alpha, False, dyn.weight, dyn.P, src, h, buf, np.empty_like(_f[s:e]))
            return buf

        traj.replay = replay
    return eps, (traj if keep else None), chi


def tdse_residual(dyn: Dynamics, psi: Trajectory, chi: Trajectory, eps: np.ndarray) -> complex:
    total = 0j
    for j, (s, e) in enumerate(psi.bounds):
        total += K.tdse_residual(dyn.step, psi.block(j), chi.block(j), eps[s:e], dyn.P, dyn.weight)
    return total
