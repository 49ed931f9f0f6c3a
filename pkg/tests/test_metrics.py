import numpy as np
import pytest

from speechdecomp.core import SignalBuffer
from speechdecomp.metrics import SEGSNR_CEIL, lsd, mix_at_isnr, seg_snr


def buf(x):
    return SignalBuffer(np.asarray(x, dtype=float), 8000)


def test_seg_snr_identity_and_zero(rng):
    x = buf(rng.normal(size=1600))
    assert seg_snr(x, x) == SEGSNR_CEIL
    assert seg_snr(x, buf(np.zeros(1600))) == pytest.approx(0.0)


def test_seg_snr_constructed_ten_db(rng):
    frame = 160
    ref = rng.normal(size=frame * 20)
    err = rng.normal(size=ref.size)
    # rescale the error frame by frame to exactly 10 dB below the reference
    for k in range(20):
        sl = slice(k * frame, (k + 1) * frame)
        err[sl] *= np.sqrt(np.sum(ref[sl] ** 2) / np.sum(err[sl] ** 2) / 10)
    assert seg_snr(buf(ref), buf(ref + err)) == pytest.approx(10.0, abs=0.1)


def test_seg_snr_gates_silent_frames(rng):
    ref = np.concatenate((np.zeros(160), rng.normal(size=160)))
    est = np.concatenate((np.ones(160), ref[160:]))
    assert seg_snr(buf(ref), buf(est)) == SEGSNR_CEIL


def test_metric_errors(rng):
    with pytest.raises(ValueError):
        seg_snr(buf(np.zeros(320)), buf(np.zeros(320)))
    with pytest.raises(ValueError):
        lsd(buf(np.ones(320)), buf(np.ones(300)))


def test_lsd_cases(rng):
    x = buf(rng.normal(size=1600))
    assert lsd(x, x) == 0.0
    assert lsd(x, buf(2 * x.samples)) == pytest.approx(10 * np.log10(4), abs=0.01)
    other = lsd(x, buf(rng.normal(size=1600)))
    assert 0 < other < np.inf


def test_mix_powers(rng):
    clean, noise = rng.normal(size=800), 3 * rng.normal(size=1000)
    m0 = mix_at_isnr(clean, noise, 0.0).samples - clean
    assert np.mean(m0 ** 2) == pytest.approx(np.mean(clean ** 2), rel=1e-6)
    m10 = mix_at_isnr(clean, noise, 10.0).samples - clean
    assert np.mean(m10 ** 2) == pytest.approx(np.mean(clean ** 2) / 10, rel=1e-9)


def test_mix_homogeneous(rng):
    clean, noise = rng.normal(size=800), rng.normal(size=800)
    a = mix_at_isnr(clean, noise, 5.0).samples
    b = mix_at_isnr(2 * clean, noise, 5.0).samples
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12)


def test_mix_errors_and_wrap(rng):
    with pytest.raises(ValueError):
        mix_at_isnr(rng.normal(size=100), rng.normal(size=50), 0.0)
    with pytest.raises(ValueError):
        mix_at_isnr(np.zeros(100), rng.normal(size=100), 0.0)
    out = mix_at_isnr(rng.normal(size=100), rng.normal(size=30), 0.0, offset=10, wrap=True)
    assert len(out) == 100
