import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_recording
from oracles import naive_dft, welch_oracle
from topocnn.spectral import (
    BANDS,
    Band,
    band_power,
    extract_windows,
    fft,
    get_band,
    hamming,
    welch_psd,
    window_samples,
)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_fft_matches_naive_dft_small(n, rng):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    np.testing.assert_allclose(fft(x), naive_dft(x), atol=1e-9)
    np.testing.assert_allclose(fft(x, inverse=True), naive_dft(x, inverse=True), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 7).flatmap(
    lambda k: arrays(np.float64, 2**k, elements=st.floats(-1e3, 1e3, allow_nan=False))))
def test_fft_round_trip(x):
    np.testing.assert_allclose(fft(fft(x), inverse=True).real, x, atol=1e-9)


def test_fft_batched_leading_axes(rng):
    x = rng.standard_normal((3, 2, 32))
    out = fft(x)
    for i in range(3):
        for j in range(2):
            np.testing.assert_array_equal(out[i, j], fft(x[i, j]))


@pytest.mark.parametrize("n", [0, 3, 6, 100])
def test_fft_rejects_non_power_of_two(n):
    with pytest.raises(ValueError, match="power of two"):
        fft(np.zeros(n))


def test_fft_impulse_and_constant():
    x = np.zeros(16)
    x[0] = 1
    np.testing.assert_allclose(fft(x), np.ones(16), atol=1e-15)
    np.testing.assert_allclose(fft(np.ones(16)), np.r_[16, np.zeros(15)], atol=1e-12)


def test_hamming_is_periodic():
    w = hamming(8)
    assert w[0] == pytest.approx(0.08)
    assert w[4] == pytest.approx(1.0)
    np.testing.assert_allclose(w[1:], w[1:][::-1], atol=1e-15)


def test_welch_matches_oracle(rng):
    x = rng.standard_normal((2, 512))
    est = welch_psd(x, 256.0)
    assert est.df == 1.0
    assert est.power.shape == (2, 129)
    np.testing.assert_allclose(est.power, welch_oracle(x, 256.0), rtol=1e-10)


def test_welch_sinusoid_peak():
    fs = 256.0
    t = np.arange(1024) / fs
    x = np.sin(2 * np.pi * 10.0 * t)[None]
    est = welch_psd(x, fs)
    assert est.freqs_hz[np.argmax(est.power[0])] == 10.0


def test_welch_constant_signal_is_zero():
    est = welch_psd(np.full((1, 512), 3.7), 256.0)
    np.testing.assert_allclose(est.power, 0.0, atol=1e-25)


@pytest.mark.parametrize("kw, fragment", [
    ({"seg_len": 100}, "power of two"),
    ({"overlap": 1.0}, "overlap"),
    ({"seg_len": 1024}, "exceeds"),
    ({"taper": "hann"}, "taper"),
])
def test_welch_argument_errors(kw, fragment):
    with pytest.raises(ValueError, match=fragment):
        welch_psd(np.zeros((1, 512)), 256.0, **kw)


def test_band_power_inclusive_bins():
    freqs = np.arange(129.0)
    power = np.arange(129.0)[None]
    from topocnn.spectral import PsdEstimate
    est = PsdEstimate(freqs, power, 1.0)
    # theta1 covers bins 5 and 6 inclusive
    assert band_power(est, BANDS["theta1"])[0] == 5.5
    assert band_power(est, BANDS["alpha2"])[0] == 11.5


def test_band_power_errors():
    from topocnn.spectral import PsdEstimate
    est = PsdEstimate(np.arange(5.0), np.ones((1, 5)), 1.0)
    with pytest.raises(ValueError, match="Nyquist"):
        band_power(est, BANDS["theta1"])
    est = PsdEstimate(np.array([0.0, 4.0, 8.0, 12.0]), np.ones((1, 4)), 4.0)
    with pytest.raises(ValueError, match="no frequency bins"):
        band_power(est, BANDS["theta1"])


def test_band_lookup_and_validation():
    assert get_band("alpha1") == BANDS["alpha1"]
    with pytest.raises(ValueError, match="unknown band"):
        get_band("gamma")
    with pytest.raises(ValueError):
        Band("bad", 6.0, 5.0)


def test_window_extraction_tiles_and_drops_remainder():
    data = np.arange(2 * 1100, dtype=float).reshape(2, 1100)
    rec = make_recording(data)
    wins = extract_windows(rec, 2.0)
    assert len(wins) == 2
    assert [w.start_sample for w in wins] == [0, 512]
    np.testing.assert_array_equal(wins[1].data, data[:, 512:1024])
    assert extract_windows(make_recording(np.zeros((2, 100))), 2.0) == []


def test_window_samples_errors():
    assert window_samples(4.0, 256.0) == 1024
    with pytest.raises(ValueError):
        window_samples(0.0, 256.0)
    with pytest.raises(ValueError, match="whole number"):
        window_samples(0.01, 256.0)


@pytest.mark.parametrize("length, expected", [(2.0, 12), (4.0, 6), (6.0, 4)])
def test_window_counts_for_24_seconds(length, expected):
    rec = make_recording(np.zeros((1, 24 * 256)))
    assert len(extract_windows(rec, length)) == expected


def test_short_recording_gives_no_windows():
    assert extract_windows(make_recording(np.zeros((1, 256))), 2.0) == []


def test_fft_examples():
    np.testing.assert_allclose(fft([1, 0, 0, 0]), [1, 1, 1, 1])
    np.testing.assert_allclose(fft(np.full(8, 2.5)), np.r_[20.0, np.zeros(7)], atol=1e-14)


def test_band_power_of_flat_psd_and_sinusoid():
    from topocnn.spectral import PsdEstimate
    flat = PsdEstimate(np.arange(129.0), np.ones((2, 129)), 1.0)
    np.testing.assert_array_equal(band_power(flat, BANDS["theta1"]), [1.0, 1.0])
    t = np.arange(512) / 256.0
    est = welch_psd(np.sin(2 * np.pi * 10 * t)[None], 256.0)
    assert band_power(est, BANDS["alpha1"])[0] > 100 * band_power(est, BANDS["theta1"])[0]
    with pytest.raises(ValueError):
        band_power(est, Band("high", 200.0, 210.0))


def test_parseval_white_noise():
    rng = np.random.default_rng(7)
    sigma = 3.0
    ratios = []
    for _ in range(50):
        est = welch_psd(rng.normal(0, sigma, (1, 512)), 256.0)
        ratios.append(est.power.sum() * est.df / sigma**2)
    assert 0.95 <= np.mean(ratios) <= 1.05
