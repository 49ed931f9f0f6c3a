import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_toeplitz
from scipy.signal import lfilter

from speechdecomp.core import (ArModel, SignalBuffer, ar_covariance, ar_fit, ar_psd,
                               autocorrelation, is_stable, itakura_saito, levinson,
                               power_spectrum)
from speechdecomp.synthetic import ar_noise, random_stable_ar


def test_signal_buffer_validation():
    with pytest.raises(ValueError):
        SignalBuffer(np.zeros(4), 0)
    with pytest.raises(ValueError):
        SignalBuffer(np.array([0.0, np.nan]), 8000)
    buf = SignalBuffer(np.zeros(8000), 8000)
    assert len(buf) == 8000 and buf.duration == 1.0


# ar_fit

def test_ar_fit_zero_slice_is_silent():
    m = ar_fit(np.zeros(100), 4)
    assert m.silent
    np.testing.assert_array_equal(m.coeffs, np.zeros(4))
    assert m.excitation_variance == 0.0


def test_ar_fit_ar1_matches_yule_walker_closed_form(rng):
    e = rng.normal(size=40000)
    u = lfilter([1.0], [1.0, -0.9], e)
    m = ar_fit(u, 1)
    # closed form on the sample autocorrelation: a1 = -r1/r0, err = r0 (1 - a1^2)
    r = np.array([np.dot(u, u), np.dot(u[1:], u[:-1])]) / u.size
    assert m.coeffs[0] == pytest.approx(-r[1] / r[0], abs=1e-6)
    assert m.coeffs[0] == pytest.approx(-0.9, abs=0.01)
    assert m.excitation_variance == pytest.approx(np.var(e), rel=0.05)


def test_ar_fit_white_noise(rng):
    x = rng.normal(size=4000)
    m = ar_fit(x, 2)
    assert np.all(np.abs(m.coeffs) < 0.1)
    assert m.excitation_variance == pytest.approx(np.mean(x ** 2), rel=0.02)


def test_levinson_matches_direct_toeplitz_solve(rng):
    x = ar_noise(rng, random_stable_ar(rng, 6), 3000)
    r = autocorrelation(x, 10)
    a, err, _ = levinson(r, 10)
    np.testing.assert_allclose(a, solve_toeplitz(r[:10], -r[1:11]), rtol=1e-8, atol=1e-10)
    assert err == pytest.approx(r[0] + np.dot(a, r[1:11]), rel=1e-10)


def test_ar_fit_rejects_short_slice():
    with pytest.raises(ValueError):
        ar_fit(np.ones(4), 4)


def test_ar_fit_matches_periodogram_within_one_db(rng):
    coeffs = np.array([-1.3, 0.6])
    x = ar_noise(rng, coeffs, 64000)
    model = ar_fit(x, 2)
    bins = 256
    # Welch-style averaged periodogram as reference
    frames = x[: (x.size // bins) * bins].reshape(-1, bins)
    per = np.mean(np.abs(np.fft.fft(frames * np.hanning(bins), axis=1)) ** 2, axis=0)
    per /= np.sum(np.hanning(bins) ** 2)
    err = np.abs(10 * np.log10(ar_psd(model, bins) / per))
    assert np.mean(err) < 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), order=st.integers(1, 30), n=st.integers(40, 400))
def test_ar_fit_always_stable(seed, order, n):
    rng = np.random.default_rng(seed)
    kind = seed % 3
    if kind == 0:
        x = rng.normal(size=n)
    elif kind == 1:
        x = np.cumsum(rng.normal(size=n))  # near unit root
    else:
        x = np.sin(0.3 * np.arange(n)) + 1e-6 * rng.normal(size=n)
    if n <= order:
        return
    m = ar_fit(x, order)
    assert np.all(np.abs(np.roots(m.polynomial)) < 1.0)


def test_is_stable_agrees_with_roots(rng):
    for _ in range(500):
        c = rng.normal(scale=rng.uniform(0.1, 1.0), size=rng.integers(1, 16))
        assert is_stable(c) == bool(np.all(np.abs(np.roots(np.r_[1.0, c])) < 1.0))


# ar_psd

def test_ar_psd_order_zero_flat():
    m = ArModel(np.zeros(0), 3.0)
    np.testing.assert_allclose(ar_psd(m, 16), 3.0)


def test_ar_psd_ar1_values():
    m = ArModel(np.array([-0.9]), 1.0)
    psd = ar_psd(m, 512)
    assert psd[0] == pytest.approx(1 / 0.1 ** 2)
    assert psd[256] == pytest.approx(1 / 1.9 ** 2)


def test_ar_psd_rejects_unstable_and_tiny_grid():
    with pytest.raises(ValueError):
        ar_psd(ArModel(np.array([-1.5]), 1.0), 64)
    with pytest.raises(ValueError):
        ar_psd(ArModel(np.array([-0.5]), 1.0), 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), order=st.integers(1, 20),
       var=st.floats(1e-6, 1e6))
def test_ar_psd_positive(seed, order, var):
    rng = np.random.default_rng(seed)
    m = ArModel(random_stable_ar(rng, order), var)
    assert np.all(ar_psd(m, 128) > 0)


# Itakura-Saito

def test_itakura_saito_values():
    s = np.array([1.0, 2.0, 3.0])
    assert itakura_saito(s, s) == 0.0
    assert itakura_saito(2 * s, s) == pytest.approx(2 - np.log(2) - 1)
    assert itakura_saito([1.0, 4.0], [1.0, 1.0]) == pytest.approx(
        0.5 * (4 - np.log(4) - 1))
    assert itakura_saito([1.0, 4.0], [1.0, 1.0]) == pytest.approx(0.8069, abs=1e-4)


def test_itakura_saito_errors():
    with pytest.raises(ValueError):
        itakura_saito([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        itakura_saito([1.0, 2.0], [1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=32),
       st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=32))
def test_itakura_saito_nonnegative(a, b):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    d = itakura_saito(a, b)
    assert d >= 0
    if d == 0:
        np.testing.assert_allclose(a, b, rtol=1e-6)


# periodogram

def test_power_spectrum_cases():
    np.testing.assert_array_equal(power_spectrum(np.zeros(16), 16), 0)
    imp = np.zeros(32)
    imp[0] = 1.0
    np.testing.assert_allclose(power_spectrum(imp, 32), 1 / 32)
    n = 64
    sin = np.cos(2 * np.pi * 5 * np.arange(n) / n)
    p = power_spectrum(sin, n)
    assert set(np.flatnonzero(p > 1e-9)) == {5, n - 5}
    with pytest.raises(ValueError):
        power_spectrum(np.zeros(0), 8)


def test_ar_covariance_ar1_closed_form():
    m = ArModel(np.array([-0.9]), 1.0)
    r = ar_covariance(m, 5)
    i, j = np.indices((5, 5))
    np.testing.assert_allclose(r, 0.9 ** np.abs(i - j) / (1 - 0.81), rtol=1e-10)
