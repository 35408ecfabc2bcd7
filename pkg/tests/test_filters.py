import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoct.filters import (Band, Chain, ControlField, Envelope, GaussianPass, GaussianStop, Identity,
                          PhaseOnly, SingleBin, SpectralMask, angular_frequencies, apply_filter,
                          band_power_fraction, dominant_peaks, fluence, spectral_fluence)
from qoct.propagator import TimeGrid


def _field(n=512, dt=0.5, seed=0):
    r = np.random.default_rng(seed)
    return ControlField(r.normal(size=(1, n)), dt)


def test_fluence_of_constant():
    tg = TimeGrid(10.0, 0.01)
    assert fluence(ControlField.constant(0.2, tg))[0] == pytest.approx(0.4)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=4, max_value=600), st.floats(min_value=1e-3, max_value=2.0),
       st.integers(min_value=0, max_value=10 ** 6))
def test_parseval(n, dt, seed):
    f = _field(n, dt, seed)
    assert abs(spectral_fluence(f)[0] - fluence(f)[0]) < 1e-8 * max(1.0, fluence(f)[0])


def test_identity_and_empty_chain_are_noops():
    f = _field()
    assert np.array_equal(Identity()(f).values, f.values)
    assert np.array_equal(Chain(())(f).values, f.values)
    assert apply_filter(None, f) is f


def test_gaussian_pass_keeps_resonant_sine():
    tg = TimeGrid(400.0, 0.05)
    w0 = 2 * np.pi * 10 / 400  # exactly on a bin
    f = ControlField.from_function(lambda t: np.sin(w0 * t), tg)
    out = GaussianPass((w0,), 500.0)(f)
    assert np.max(np.abs(out.values - f.values)) < 1e-10
    gone = GaussianStop((w0,), 500.0)(f)
    assert np.max(np.abs(gone.values)) < 1e-10


def test_gaussian_pass_removes_far_frequency():
    tg = TimeGrid(400.0, 0.05)
    f = ControlField.from_function(lambda t: np.sin(2 * np.pi * 40 / 400 * t), tg)
    out = GaussianPass((0.1568,), 500.0)(f)
    assert np.max(np.abs(out.values)) < 1e-12


def test_asymmetric_mask_rejected():
    with pytest.raises(ValueError, match="f\\(w\\) = f\\(-w\\)"):
        SpectralMask(lambda w: (w > 0).astype(float))(_field())


def test_band_properties():
    f = _field(1024, 0.25)
    b = Band(0.5, 2.0)
    out = b(f)
    w, X = np.fft.fftfreq(1024, 0.25) * 2 * np.pi, np.fft.fft(out.values[0])
    outside = (np.abs(w) < 0.5) | (np.abs(w) > 2.0)
    assert np.max(np.abs(X[outside])) < 1e-9
    # idempotent and never increases fluence
    assert np.allclose(b(out).values, out.values, atol=1e-12)
    assert fluence(out)[0] <= fluence(f)[0]
    with pytest.raises(ValueError):
        Band(2.0, 1.0)


def test_single_bin_gives_monochromatic_field():
    tg = TimeGrid(400.0, 0.05)
    f = ControlField.from_function(lambda t: np.sin(0.1568 * t) + 0.3 * np.cos(0.9 * t), tg)
    out = SingleBin(0.1568)(f)
    w, p = dominant_peaks(out, 1)
    assert abs(w[0] - 0.1568) <= 2 * np.pi / 400
    assert band_power_fraction(out, [(0.14, 0.17)]) > 0.999


def test_envelope_and_chain_order():
    tg = TimeGrid(10.0, 0.01)
    f = ControlField.constant(1.0, tg)
    env = Envelope(lambda t: np.sin(np.pi * t / 10) ** 2)
    assert env(f).values[0, 0] == 0.0
    with pytest.raises(ValueError):
        Envelope(-np.ones(tg.n_steps))(f)
    c = Chain((GaussianPass((1.0,), 10.0), env))
    assert c(f).values.shape == f.values.shape


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_phase_only_magnitude_fidelity(seed):
    f = _field(256, 0.5, seed)
    w = angular_frequencies(256, 0.5)
    A = np.exp(-(np.abs(w) - 1.0) ** 2)
    out = PhaseOnly(lambda om: np.exp(-(np.abs(om) - 1.0) ** 2))(f)
    X = np.fft.fft(out.values[0])
    assert np.max(np.abs(np.abs(X) - A)) < 1e-8


def test_complex_residue_detected():
    class Bad(GaussianPass):
        def checked_mask(self, omega):
            return 1.0 + 1.0 * (omega > 0)
    with pytest.raises(ValueError, match="complex"):
        Bad((1.0,))(_field())


def test_dominant_peaks_orders_by_power():
    tg = TimeGrid(400.0, 0.05)
    w1, w2 = 2 * np.pi * 10 / 400, 2 * np.pi * 30 / 400
    f = ControlField.from_function(lambda t: np.sin(w1 * t) + 2 * np.sin(w2 * t), tg)
    w, _ = dominant_peaks(f, 2)
    assert np.allclose(w, [w2, w1])
