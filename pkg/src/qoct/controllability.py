"""Lie-algebra rank test for complete controllability of N-level systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class NLevelControlSystem:
    h0: np.ndarray
    controls: tuple = field(default_factory=tuple)

    def __post_init__(self):
        h0 = np.asarray(self.h0, dtype=np.complex128)
        ctr = tuple(np.asarray(h, dtype=np.complex128) for h in self.controls)
        for m in (h0,) + ctr:
            if m.ndim != 2 or m.shape != h0.shape:
                raise ValueError("all Hamiltonians must be square and of equal size")
            if np.max(np.abs(m - m.conj().T)) > 1e-12:
                raise ValueError("Hamiltonians must be Hermitian")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "controls", ctr)

    @property
    def n(self) -> int:
        return self.h0.shape[0]


@dataclass(frozen=True, eq=False)
class LieBasis:
    elements: list          # anti-Hermitian N x N matrices
    W: np.ndarray           # columns: real vectorizations (2 N^2 rows)
    rank: int


def _vec(X: np.ndarray) -> np.ndarray:
    # real coordinates of a complex matrix; the algebra is a real vector space
    return np.concatenate([X.real.ravel(), X.imag.ravel()])


def _independent(W: np.ndarray | None, v: np.ndarray, tol: float) -> bool:
    if np.linalg.norm(v) <= tol:
        return False
    if W is None:
        return True
    s = np.linalg.svd(np.column_stack([W, v]), compute_uv=False)
    return s[-1] > tol


def lie_basis(sys: NLevelControlSystem, tol: float = 1e-9) -> LieBasis:
    """Close {iH0, iH_m} under commutators and return a basis of the span."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    N = sys.n
    seeds = [1j * sys.h0] + [1j * h for h in sys.controls]
    scale = max(max(np.linalg.norm(s) for s in seeds), 1.0)
    thr = tol * scale
    elems: list[np.ndarray] = []
    W = None
    for X in seeds:
        v = _vec(X)
        if _independent(W, v, thr):
            elems.append(X)
            W = v[:, None] if W is None else np.column_stack([W, v])
    cap = N ** 4
    rounds = 0
    frontier = list(range(len(elems)))
    while frontier and len(elems) < N * N:
        rounds += 1
        if rounds > cap:
            raise RuntimeError("commutator closure exceeded its round cap")
        new = []
        for i in frontier:
            for j in range(len(elems)):
                if i == j:
                    continue
                C = elems[i] @ elems[j] - elems[j] @ elems[i]
                v = _vec(C)
                if _independent(W, v, thr):
                    elems.append(C)
                    W = np.column_stack([W, v])
                    new.append(len(elems) - 1)
                    if len(elems) == N * N:
                        break
            if len(elems) == N * N:
                break
        frontier = new
    rank = 0 if W is None else int(np.linalg.matrix_rank(W, tol=thr))
    return LieBasis(elems, np.zeros((2 * N * N, 0)) if W is None else W, rank)


def lie_rank(sys: NLevelControlSystem, tol: float = 1e-9):
    """(rank, controllable) with controllable iff the algebra has dimension N^2."""
    b = lie_basis(sys, tol)
    return b.rank, b.rank == sys.n ** 2


def two_level_system(omega_a: float, omega_b: float, mu: float, eps: float = 1.0) -> NLevelControlSystem:
    h0 = np.diag([omega_a, omega_b]).astype(complex)
    h1 = -eps * np.array([[0, mu], [mu, 0]], dtype=complex)
    return NLevelControlSystem(h0, (h1,))
