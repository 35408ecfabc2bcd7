"""Control fields and the filter operators G applied to them.

DFT convention: forward transform with e^{-i w t} and no normalization, the
inverse carries 1/n.  Angular frequencies are w_m = 2 pi m / (n dt).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ControlField:
    """Real field samples, shape (n_pol, n_steps); value i holds on [t_i, t_i+dt)."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.ndim != 2:
            raise ValueError("field values must be (n_pol, n_steps)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float, tg, n_pol: int = 1) -> "ControlField":
        return cls(np.full((n_pol, tg.n_steps), float(value)), tg.dt)

    @classmethod
    def zeros(cls, tg, n_pol: int = 1) -> "ControlField":
        return cls.constant(0.0, tg, n_pol)

    @classmethod
    def from_function(cls, f: Callable, tg, n_pol: int = 1) -> "ControlField":
        t = tg.dt * np.arange(tg.n_steps)
        v = np.asarray(f(t), dtype=float)
        return cls(np.broadcast_to(v, (n_pol, tg.n_steps)).copy(), tg.dt)

    @property
    def n_pol(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps)

    def fluence(self) -> np.ndarray:
        return fluence(self)

    def spectrum(self):
        return spectrum(self)

    def scaled(self, c) -> "ControlField":
        c = np.asarray(c, dtype=float).reshape(-1, 1)
        return ControlField(self.values * c, self.dt)


def fluence(eps: ControlField) -> np.ndarray:
    """E0_j = sum_i eps_j(t_i)^2 dt, one value per polarization."""
    return np.sum(eps.values ** 2, axis=1) * eps.dt


def angular_frequencies(n: int, dt: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(n, dt)


def spectrum(eps: ControlField):
    """(omega, X) with X the unnormalized DFT of each polarization."""
    return angular_frequencies(eps.n_steps, eps.dt), np.fft.fft(eps.values, axis=1)


def spectral_fluence(eps: ControlField) -> np.ndarray:
    """Parseval side: (1/2pi) sum |eps(w)|^2 dw with eps(w) = dt X."""
    n = eps.n_steps
    X = np.fft.fft(eps.values, axis=1)
    dw = 2.0 * np.pi / (n * eps.dt)
    return np.sum(np.abs(eps.dt * X) ** 2, axis=1) * dw / (2.0 * np.pi)


# ------------------------------------------------------------------- filters

_IMAG_TOL = 1e-10


def _real_part(z: np.ndarray) -> np.ndarray:
    scale = max(float(np.max(np.abs(z), initial=0.0)), 1e-300)
    resid = float(np.max(np.abs(z.imag), initial=0.0))
    if resid > _IMAG_TOL * max(scale, 1.0):
        raise ValueError(f"filter produced a complex field (residue {resid:.2e})")
    return np.ascontiguousarray(z.real)


class _FrequencyFilter:
    """Base for multiplicative masks f(w) applied in the frequency domain."""

    pad: int = 1
    domain = "frequency"

    def mask(self, omega: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def checked_mask(self, omega: np.ndarray) -> np.ndarray:
        m = np.asarray(self.mask(omega), dtype=float)
        mirror = np.asarray(self.mask(-omega), dtype=float)
        if np.max(np.abs(m - mirror), initial=0.0) > 1e-12:
            raise ValueError("frequency mask must satisfy f(w) = f(-w)")
        return m

    def __call__(self, eps: ControlField) -> ControlField:
        n = eps.n_steps
        npad = n * max(1, int(self.pad))
        omega = angular_frequencies(npad, eps.dt)
        X = np.fft.fft(eps.values, n=npad, axis=1)
        y = np.fft.ifft(self.checked_mask(omega)[None, :] * X, axis=1)[:, :n]
        return ControlField(_real_part(y), eps.dt)


@dataclass(frozen=True)
class Identity:
    domain = "time"

    def __call__(self, eps: ControlField) -> ControlField:
        return eps


@dataclass(frozen=True, eq=False)
class SpectralMask(_FrequencyFilter):
    f: Callable[[np.ndarray], np.ndarray]
    pad: int = 1

    def mask(self, omega):
        return self.f(omega)


def _gauss_pair(omega, centers, gamma):
    out = np.zeros_like(omega)
    for w0 in centers:
        out += np.exp(-gamma * (omega - w0) ** 2) + np.exp(-gamma * (omega + w0) ** 2)
    return out


@dataclass(frozen=True)
class GaussianPass(_FrequencyFilter):
    """Sum of Gaussians exp(-gamma (w -+ w0)^2) over the listed centers."""

    centers: tuple
    gamma: float = 500.0
    pad: int = 1

    def __post_init__(self):
        if np.ndim(self.centers) == 0:
            object.__setattr__(self, "centers", (float(self.centers),))
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    def mask(self, omega):
        return _gauss_pair(omega, self.centers, self.gamma)


@dataclass(frozen=True)
class GaussianStop(_FrequencyFilter):
    centers: tuple
    gamma: float = 500.0
    pad: int = 1

    def __post_init__(self):
        if np.ndim(self.centers) == 0:
            object.__setattr__(self, "centers", (float(self.centers),))
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    def mask(self, omega):
        return 1.0 - _gauss_pair(omega, self.centers, self.gamma)


@dataclass(frozen=True)
class Band(_FrequencyFilter):
    """Pass w_a <= |w| <= w_b."""

    w_lo: float
    w_hi: float
    pad: int = 1

    def __post_init__(self):
        if not 0 <= self.w_lo <= self.w_hi:
            raise ValueError("band edges must satisfy 0 <= w_lo <= w_hi")

    def mask(self, omega):
        a = np.abs(omega)
        return ((a >= self.w_lo) & (a <= self.w_hi)).astype(float)


@dataclass(frozen=True)
class SingleBin(_FrequencyFilter):
    """Pass only the DFT bin nearest to w0 (and its mirror): a monochromatic field."""

    w0: float
    pad: int = 1

    def mask(self, omega):
        if omega.size < 2:
            return np.ones_like(omega)
        dw = abs(omega[1] - omega[0])
        sel = round(abs(self.w0) / dw) * dw
        return (np.abs(np.abs(omega) - sel) < 0.5 * dw).astype(float)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Pointwise h(t) eps(t); h given as samples or a function of t."""

    h: Union[np.ndarray, Callable]
    domain = "time"

    def __call__(self, eps: ControlField) -> ControlField:
        h = self.h(eps.times) if callable(self.h) else np.asarray(self.h, dtype=float)
        h = np.broadcast_to(h, (eps.n_steps,))
        if np.any(h < 0):
            raise ValueError("envelope must be non-negative")
        return ControlField(eps.values * h[None, :], eps.dt)


@dataclass(frozen=True, eq=False)
class PhaseOnly:
    """Keep spectral phases, impose the amplitude spectrum A(w)."""

    amplitude: Union[np.ndarray, Callable]
    domain = "frequency"

    def _amplitude(self, omega):
        A = self.amplitude(omega) if callable(self.amplitude) else np.asarray(self.amplitude, dtype=float)
        A = np.broadcast_to(A, omega.shape)
        mirror = self.amplitude(-omega) if callable(self.amplitude) else A[(-np.arange(omega.size)) % omega.size]
        if np.any(A < 0) or np.max(np.abs(A - mirror), initial=0.0) > 1e-12:
            raise ValueError("phase-only amplitude must be symmetric and non-negative")
        return A

    def __call__(self, eps: ControlField) -> ControlField:
        omega = angular_frequencies(eps.n_steps, eps.dt)
        A = self._amplitude(omega)
        X = np.fft.fft(eps.values, axis=1)
        mag = np.abs(X)
        phase = np.where(mag > 0, X / np.where(mag > 0, mag, 1.0), 1.0)
        y = np.fft.ifft(A[None, :] * phase, axis=1)
        return ControlField(_real_part(y), eps.dt)


@dataclass(frozen=True)
class Chain:
    filters: tuple = field(default_factory=tuple)
    domain = "mixed"

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        seen_freq = False
        for f in self.filters:
            if getattr(f, "domain", "") == "frequency":
                seen_freq = True
            elif seen_freq and getattr(f, "domain", "") == "time" and not isinstance(f, Identity):
                log.info("time-domain filter %s follows a frequency-domain filter; "
                         "only the last filter acts exactly", type(f).__name__)

    def __call__(self, eps: ControlField) -> ControlField:
        for f in self.filters:
            eps = f(eps)
        return eps


FieldFilter = Union[Identity, SpectralMask, GaussianPass, GaussianStop, Band, SingleBin, Envelope,
                    PhaseOnly, Chain]


def apply_filter(flt, eps: ControlField) -> ControlField:
    if flt is None:
        return eps
    if isinstance(flt, (list, tuple)):
        flt = Chain(tuple(flt))
    return flt(eps)


def band_power_fraction(eps: ControlField, bands: Sequence[tuple]) -> float:
    """Share of spectral power with |w| inside any of the (lo, hi) bands."""
    omega, X = spectrum(eps)
    p = np.sum(np.abs(X) ** 2, axis=0)
    a = np.abs(omega)
    inside = np.zeros_like(a, dtype=bool)
    for lo, hi in bands:
        inside |= (a >= lo) & (a <= hi)
    total = p.sum()
    return float(p[inside].sum() / total) if total > 0 else 0.0


def dominant_peaks(eps: ControlField, count: int = 3, pol: int = 0, min_separation: int = 3):
    """Positive frequencies of the ``count`` largest local maxima of |X|^2."""
    omega, X = spectrum(eps)
    n = eps.n_steps
    half = n // 2
    p = np.abs(X[pol, : half + 1]) ** 2
    w = omega[: half + 1]
    w[-1] = abs(w[-1])
    peaks = [i for i in range(1, half) if p[i] >= p[i - 1] and p[i] >= p[i + 1]]
    peaks.sort(key=lambda i: -p[i])
    chosen = []
    for i in peaks:
        if all(abs(i - j) >= min_separation for j in chosen):
            chosen.append(i)
        if len(chosen) == count:
            break
    return w[chosen], p[chosen]
