"""Iterative control-equation solvers.

All schemes share the same compiled forward/backward passes with immediate
feedback; they differ in which field feeds which propagation and in what
happens to the candidate field between iterations:

* standard:        forward, then chi(T) = O Psi(T) backward with feedback,
                   then forward with feedback.
* rapid:           projection targets; chi starts from phi_f and the update
                   carries the overlap <Psi|chi>.
* fluence/filter:  one backward pass with feedback, then G[.] and, with a
                   fixed fluence, rescaling by alpha_k / alpha_{k+1}.
* time_dependent:  chi(T) = 0 with the source w(t) O(t) Psi(t); (eta, xi)
                   mixing, or the constrained single-pass variant when a
                   filter or fluence is requested.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .filters import ControlField, apply_filter
from .propagator import (BLOCK, Dynamics, PropagationError, TimeGrid, Trajectory, backward_pass,
                         forward_pass, tdse_residual, wants_storage)
from .qsystem import GridSystem, NLevelSystem, System, Wavefunction
from .targets import FinalTime, Projection, TargetSpec, evaluate_J1

log = logging.getLogger(__name__)

SCHEMES = ("standard", "rapid", "fluence", "filtered", "time_dependent")


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    scheme: str = "rapid"
    alpha: float | Sequence[float] = 1.0
    fluence: Optional[float | Sequence[float]] = None   # E0 per polarization
    filters: object = None                              # FieldFilter or list
    eta: float = 1.0
    xi: float = 1.0
    tol: float = 1e-5
    max_iter: int = 600
    guess: float | ControlField = 0.0
    store: Optional[bool] = None        # None: decide from the memory budget
    track_j3: Optional[bool] = None     # None: on for N-level systems
    norm_tol: float = 1e-4
    block: int = BLOCK
    callback: Optional[Callable] = None

    def validate(self, n_pol: int = 1):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        a = np.broadcast_to(np.asarray(self.alpha, dtype=float), (n_pol,))
        if np.any(~(a > 0)):
            raise ValueError("alpha must be positive")
        if self.fluence is not None:
            e = np.broadcast_to(np.asarray(self.fluence, dtype=float), (n_pol,))
            if np.any(~(e > 0)):
                raise ValueError("fluence E0 must be positive")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if not 0 <= self.xi <= 2:
            raise ValueError("xi must lie in [0, 2]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class ConvergenceRecord:
    """Per-iteration functional values.  J3 is NaN when not tracked and then
    counts as zero in J."""

    j1: list = field(default_factory=list)
    j2: list = field(default_factory=list)
    j3: list = field(default_factory=list)
    j: list = field(default_factory=list)
    fluence: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    best_index: int = -1
    best_j1: float = -np.inf
    best_field: Optional[ControlField] = None
    last_field: Optional[ControlField] = None
    converged: bool = False
    wall_time: float = 0.0

    def add(self, j1, j2, j3, fluence, alpha, eps: ControlField):
        j3v = float(j3)
        self.j1.append(float(j1))
        self.j2.append(float(j2))
        self.j3.append(j3v)
        self.j.append(float(j1) + float(j2) + (0.0 if np.isnan(j3v) else j3v))
        self.fluence.append(np.array(fluence, dtype=float))
        self.alpha.append(np.array(alpha, dtype=float))
        self.last_field = eps
        if j1 > self.best_j1:
            self.best_j1 = float(j1)
            self.best_index = len(self.j1) - 1
            self.best_field = eps

    @property
    def iterations(self) -> int:
        return len(self.j1)

    def delta(self) -> float:
        return abs(self.j[-1] - self.j[-2]) if len(self.j) > 1 else np.inf

    def rows(self):
        for k in range(self.iterations):
            yield (k, self.j1[k], self.j2[k], self.j3[k], self.j[k],
                   *self.fluence[k].tolist(), *self.alpha[k].tolist())


# ------------------------------------------------------------------ helpers

def field_update(chi: Wavefunction, psi: Wavefunction, dipole, alpha: float) -> float:
    """-(1/alpha) Im <chi|mu|psi> for one polarization.

    ``dipole`` is a real array: the diagonal mu(x) on a grid or an N x N matrix.
    """
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    d = np.asarray(dipole)
    a, b = chi.amplitudes, psi.amplitudes
    v = np.vdot(a, d * b) if d.ndim == 1 else np.vdot(a, d @ b)
    return float(-np.imag(v * chi.weight) / alpha)


def _as_spec(target) -> TargetSpec:
    if isinstance(target, TargetSpec):
        return target
    if isinstance(target, Wavefunction):
        return TargetSpec(Projection(target))
    return TargetSpec(target)


class _Setup:
    def __init__(self, system: System, psi0: Wavefunction, tg: TimeGrid, cfg: OptimizerConfig):
        cfg.validate(system.n_pol)
        self.system = system
        self.tg = tg
        self.cfg = cfg
        self.dyn = Dynamics(system, tg.dt)
        self.n = tg.n_steps
        self.npol = system.n_pol
        self.psi0 = np.ascontiguousarray(psi0.amplitudes, dtype=np.complex128)
        self.norm0 = self.dyn.norm2(self.psi0)
        self.stored = wants_storage(self.n, self.dyn.dim) if cfg.store is None else bool(cfg.store)
        if not self.stored:
            log.info("trajectory exceeds the memory budget; using block checkpoints")
        self.alpha = np.broadcast_to(np.asarray(cfg.alpha, dtype=float), (self.npol,)).copy()
        self.E0 = None if cfg.fluence is None else np.broadcast_to(
            np.asarray(cfg.fluence, dtype=float), (self.npol,)).copy()
        self.track_j3 = isinstance(system, NLevelSystem) if cfg.track_j3 is None else cfg.track_j3
        self.record = ConvergenceRecord()
        self.t_start = time.perf_counter()

    def guess(self) -> np.ndarray:
        g = self.cfg.guess
        if isinstance(g, ControlField):
            if g.n_pol != self.npol or g.n_steps != self.n:
                raise ValueError("initial guess does not match the time grid")
            return self.dyn.fields_t(g.values)
        return np.full((self.n, self.npol), float(g))

    def to_field(self, eps_t: np.ndarray) -> ControlField:
        return ControlField(np.ascontiguousarray(eps_t.T), self.tg.dt)

    def fluence(self, eps_t: np.ndarray) -> np.ndarray:
        return np.sum(eps_t ** 2, axis=0) * self.tg.dt

    def forward(self, ref, **kw):
        eps, traj = forward_pass(self.dyn, self.psi0, ref, stored=self.stored, block=self.cfg.block, **kw)
        drift = abs(self.dyn.norm2(traj.last) - self.norm0)
        if drift > self.cfg.norm_tol:
            raise PropagationError(f"norm drifted by {drift:.2e} during forward propagation; "
                                   "reduce dt or enlarge the grid")
        return eps, traj

    def j3(self, psi: Trajectory, chi: Optional[Trajectory], eps) -> float:
        if not self.track_j3 or chi is None:
            return np.nan
        return float(-2.0 * np.imag(tdse_residual(self.dyn, psi, chi, eps)))

    def log_iter(self, k):
        r = self.record
        if self.cfg.callback is not None:
            self.cfg.callback(k, r)
        if k % 10 == 0:
            log.info("iter %d  J1=%.6f  J=%.6f  E0=%s", k, r.j1[-1], r.j[-1], np.array2string(r.fluence[-1]))
        if k == 1 and r.j1[-1] < 1e-8:
            msg = "J1 < 1e-8 after the first iteration: a zero field may be a stationary point"
            log.warning(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)

    def done(self, k) -> bool:
        if self.record.delta() < self.cfg.tol:
            self.record.converged = True
            return True
        return k + 1 >= self.cfg.max_iter

    def finish(self, best: bool = False):
        # monotonic schemes hand back the final iterate; constrained ones the best J1
        self.record.wall_time = time.perf_counter() - self.t_start
        r = self.record
        return (r.best_field if best else r.last_field), r

    def source_fn(self, spec: TargetSpec):
        if spec.final_time:
            return None, 0.0
        w = spec.weight.samples(self.tg)
        t = self.tg.times
        op = spec.op

        def src(s, e, pblk):
            return w[s:e + 1, None] * op.apply(pblk, t[s:e + 1])

        return src, 0.5 * self.tg.dt / self.tg.t_final

    def chi_final(self, spec: TargetSpec, psi: Trajectory) -> np.ndarray:
        if spec.final_time:
            return np.ascontiguousarray(spec.op.boundary(psi.last, self.tg.t_final), dtype=np.complex128)
        return np.zeros(self.dyn.dim, np.complex128)


# ------------------------------------------------------------------ schemes

def run_standard(system: System, psi0: Wavefunction, target, cfg: OptimizerConfig, tg: TimeGrid):
    """Forward / backward-with-feedback / forward-with-feedback iteration."""
    spec = _as_spec(target)
    if not spec.final_time:
        raise ValueError("the standard scheme needs a final-time target")
    S = _Setup(system, psi0, tg, cfg)
    inv_a = 1.0 / S.alpha
    eps, psi = S.forward(S.guess())
    for k in range(cfg.max_iter):
        j1 = evaluate_J1(spec, psi, tg)
        chiT = S.chi_final(spec, psi)
        eps_tilde, chi, _ = backward_pass(S.dyn, chiT, psi, eps, a=0.0, b=1.0, inv_alpha=inv_a,
                                          stored=S.stored)
        fl = S.fluence(eps)
        S.record.add(j1, -np.sum(S.alpha * fl), S.j3(psi, chi, eps), fl, S.alpha, S.to_field(eps))
        S.log_iter(k)
        if S.done(k):
            break
        eps, psi = S.forward(eps_tilde, chi=chi, a=0.0, b=1.0, inv_alpha=inv_a)
    return S.finish()


def _backward_plain(S: _Setup, chiT: np.ndarray, eps: np.ndarray) -> Trajectory:
    # costate with a fixed field: reuse the feedback kernel with b = 0
    holder = _ZeroTrajectory(S.n, S.dyn.dim, S.cfg.block)
    _, chi, _ = backward_pass(S.dyn, chiT, holder, eps, a=1.0, b=0.0, stored=S.stored)
    return chi


class _ZeroTrajectory(Trajectory):
    """Stand-in psi for passes without feedback (never read when b = 0)."""

    def __init__(self, n_steps, dim, block):
        super().__init__(n_steps, dim, False, block)

    def block(self, j):
        s, e = self.bounds[j]
        return np.zeros((e - s + 1, self.dim), np.complex128)


def run_rapid_projection(system: System, psi0: Wavefunction, phi_f, cfg: OptimizerConfig, tg: TimeGrid):
    """Projection-target scheme with the overlap factor refreshed every step."""
    spec = _as_spec(phi_f)
    if not isinstance(spec.op, Projection):
        raise ValueError("the rapid scheme requires a projection target")
    S = _Setup(system, psi0, tg, cfg)
    inv_a = 1.0 / S.alpha
    phi = np.ascontiguousarray(spec.op.phi, dtype=np.complex128)
    ref = S.guess()
    chi = _backward_plain(S, phi, ref)
    for k in range(cfg.max_iter):
        eps, psi = S.forward(ref, chi=chi, a=0.0, b=1.0, inv_alpha=inv_a, rapid=True)
        j1 = evaluate_J1(spec, psi, tg)
        j3 = S.j3(psi, chi, eps)
        fl = S.fluence(eps)
        S.record.add(j1, -np.sum(S.alpha * fl), j3, fl, S.alpha, S.to_field(eps))
        S.log_iter(k)
        if S.done(k):
            break
        ref, chi, _ = backward_pass(S.dyn, phi, psi, eps, a=0.0, b=1.0, inv_alpha=inv_a,
                                    rapid=True, stored=S.stored)
    return S.finish()


def _run_constrained(S: _Setup, spec: TargetSpec, chain):
    """Single backward pass, filter, optional fluence rescale."""
    cfg = S.cfg
    eps = S.guess()
    if S.E0 is not None:
        e0 = S.fluence(eps)
        if np.any(e0 <= 0):
            raise OptimizationError("a fixed-fluence run needs a non-zero initial guess")
        alpha = np.sqrt(e0 / S.E0)
        eps = eps / alpha[None, :]  # every recorded iterate carries fluence E0
    else:
        alpha = S.alpha.copy()
    src, h = S.source_fn(spec)
    for k in range(cfg.max_iter):
        _, psi = S.forward(eps)
        j1 = evaluate_J1(spec, psi, S.tg)
        chiT = S.chi_final(spec, psi)
        tilde, chi, _ = backward_pass(S.dyn, chiT, psi, eps, a=0.0, b=1.0, inv_alpha=1.0 / alpha,
                                      source=src, h=h, store_chi=S.track_j3, stored=S.stored)
        fl = S.fluence(eps)
        j2 = -np.sum(alpha * (fl - S.E0)) if S.E0 is not None else -np.sum(alpha * fl)
        S.record.add(j1, j2, S.j3(psi, chi, eps), fl, alpha, S.to_field(eps))
        S.log_iter(k)
        if S.done(k):
            break
        bar = S.dyn.fields_t(apply_filter(chain, S.to_field(tilde)).values)
        if S.E0 is not None:
            new_alpha = np.sqrt(np.sum((alpha[None, :] * bar) ** 2, axis=0) * S.tg.dt / S.E0)
            if np.any(new_alpha <= 0) or not np.all(np.isfinite(new_alpha)):
                raise OptimizationError("filtered update vanished; cannot rescale to the fixed fluence")
            eps = bar * (alpha / new_alpha)[None, :]
            alpha = new_alpha
        else:
            eps = bar
    return S.finish(best=True)


def run_fluence_fixed(system: System, psi0: Wavefunction, target, E0, cfg: OptimizerConfig,
                      tg: TimeGrid):
    """alpha becomes a Lagrange multiplier chosen so every iterate has fluence E0."""
    cfg = _with(cfg, fluence=E0)
    S = _Setup(system, psi0, tg, cfg)
    return _run_constrained(S, _as_spec(target), None)


def run_filtered(system: System, psi0: Wavefunction, target, chain, cfg: OptimizerConfig,
                 tg: TimeGrid, E0=None):
    """eps_{k+1} = G[eps~_k]; with E0 given the filtered field is rescaled."""
    cfg = _with(cfg, filters=chain, fluence=E0 if E0 is not None else cfg.fluence)
    S = _Setup(system, psi0, tg, cfg)
    return _run_constrained(S, _as_spec(target), chain)


def run_time_dependent(system: System, psi0: Wavefunction, target, cfg: OptimizerConfig,
                       tg: TimeGrid):
    """Time-dependent targets: inhomogeneous costate, (eta, xi) mixing.

    A filter chain or fixed fluence switches to the constrained single-pass
    variant.
    """
    spec = _as_spec(target)
    if not spec.final_time:
        w = spec.weight.samples(tg)
        norm = float(np.sum(w * tg.trapezoid())) / tg.t_final
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"weight is not normalized: (1/T) int w = {norm}")
    S = _Setup(system, psi0, tg, cfg)
    if cfg.filters is not None or cfg.fluence is not None:
        return _run_constrained(S, spec, cfg.filters)
    inv_a = 1.0 / S.alpha
    src, h = S.source_fn(spec)
    eps, psi = S.forward(S.guess())
    for k in range(cfg.max_iter):
        j1 = evaluate_J1(spec, psi, tg)
        chiT = S.chi_final(spec, psi)
        tilde, chi, _ = backward_pass(S.dyn, chiT, psi, eps, a=1.0 - cfg.eta, b=cfg.eta,
                                      inv_alpha=inv_a, source=src, h=h, stored=S.stored)
        fl = S.fluence(eps)
        S.record.add(j1, -np.sum(S.alpha * fl), S.j3(psi, chi, eps), fl, S.alpha, S.to_field(eps))
        S.log_iter(k)
        if S.done(k):
            break
        eps, psi = S.forward(tilde, chi=chi, a=1.0 - cfg.xi, b=cfg.xi, inv_alpha=inv_a)
    return S.finish()


def _with(cfg: OptimizerConfig, **changes) -> OptimizerConfig:
    from dataclasses import replace
    return replace(cfg, **changes)


def optimize(system: System, psi0: Wavefunction, target, cfg: OptimizerConfig, tg: TimeGrid):
    """Dispatch on ``cfg.scheme``."""
    s = cfg.scheme
    if s == "standard":
        return run_standard(system, psi0, target, cfg, tg)
    if s == "rapid":
        return run_rapid_projection(system, psi0, target, cfg, tg)
    if s == "fluence":
        if cfg.fluence is None:
            raise ValueError("scheme 'fluence' needs a fluence value")
        return run_filtered(system, psi0, target, cfg.filters, cfg, tg)
    if s == "filtered":
        return run_filtered(system, psi0, target, cfg.filters, cfg, tg)
    if s == "time_dependent":
        return run_time_dependent(system, psi0, target, cfg, tg)
    raise ValueError(f"unknown scheme {s!r}")


# --------------------------------------------------------------- analysis

def trajectory(system: System, psi0: Wavefunction, eps: ControlField, tg: TimeGrid) -> np.ndarray:
    """Full (n+1, N) trajectory for a fixed field."""
    dyn = Dynamics(system, tg.dt)
    _, traj = forward_pass(dyn, np.ascontiguousarray(psi0.amplitudes, dtype=np.complex128),
                           dyn.fields_t(eps.values), stored=True)
    return traj.full


def occupation_history(system: System, psi0: Wavefunction, eps: ControlField, tg: TimeGrid,
                       basis, stride: int = 1):
    """(times, P) with P[k, n] = |<n|psi(t)>|^2 every ``stride`` samples.

    Blocks are replayed from checkpoints so memory stays at one block.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    dyn = Dynamics(system, tg.dt)
    B = np.array([np.asarray(b.amplitudes if isinstance(b, Wavefunction) else b) for b in basis])
    _, traj = forward_pass(dyn, np.ascontiguousarray(psi0.amplitudes, dtype=np.complex128),
                           dyn.fields_t(eps.values), stored=False)
    idx = np.arange(0, tg.n_steps + 1, stride)
    out = np.empty((idx.size, B.shape[0]))
    k = 0
    for j, (s, e) in enumerate(traj.bounds):
        blk = None
        while k < idx.size and idx[k] <= e:
            if blk is None:
                blk = traj.block(j)
            out[k] = np.abs(blk[idx[k] - s] @ B.conj().T * dyn.weight) ** 2
            k += 1
    return idx * tg.dt, out


def final_population(system: System, psi0: Wavefunction, eps: ControlField, tg: TimeGrid,
                     phi: Wavefunction) -> float:
    from .propagator import propagate
    out = propagate(psi0, eps, system, tg)
    return abs(np.vdot(phi.amplitudes, out.amplitudes) * phi.weight) ** 2
