"""LFCC tests built around independently coded oracles.

The spectral path is checked against a naive direct-sum DFT, the cepstral
stage against an explicit cosine-sum DCT, and the derivative stage against
a literal loop over the regression formula.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from eegpipe.errors import ConfigError, DataError
from eegpipe.features import (
    FEATURE_DIM,
    FRAMES_PER_EPOCH,
    FeatureConfig,
    FeatureTensor,
    assemble,
    channel_features,
    deltas,
    export_csv,
    extract,
    filterbank_centers,
    filterbank_log_energies,
    frame_signal,
    lfcc_frame,
    lfcc_frames,
    read_features,
    write_features,
)
from eegpipe.montage import DifferentialRecording

CFG = FeatureConfig()


# -- oracles -----------------------------------------------------------------

def direct_power_spectrum(x, nfft):
    """Magnitude-squared DFT by the defining sum (no FFT library)."""
    n = np.arange(len(x))
    k = np.arange(nfft // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, n) / nfft)
    return np.abs(basis @ x) ** 2


def triangle_weights(freqs, lo, mid, hi):
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(up, down), 0.0, 1.0)


def dct2_ortho_oracle(v):
    N = len(v)
    out = np.zeros(N)
    for k in range(N):
        out[k] = np.sqrt(2.0 / N) * sum(
            v[n] * np.cos(np.pi * (n + 0.5) * k / N) for n in range(N)
        )
    out[0] /= np.sqrt(2.0)
    return out


def delta_oracle(seq, half):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    t_count = len(seq)
    den = 2.0 * sum(n * n for n in range(1, half + 1))
    rows = []
    for t in range(t_count):
        acc = np.zeros(seq.shape[1])
        for n in range(1, half + 1):
            acc += n * (seq[min(t_count - 1, t + n)] - seq[max(0, t - n)])
        rows.append(acc / den)
    return np.array(rows)


# -- framing -----------------------------------------------------------------

def test_framing_arithmetic():
    fs = 250.0
    windows = frame_signal(np.zeros(2500), fs, CFG)  # 10 s
    assert windows.shape == (100, 50)

    windows = frame_signal(np.zeros(int(0.95 * fs)), fs, CFG)  # 0.95 s
    assert windows.shape[0] == 9


def test_framing_empty_signal():
    with pytest.raises(DataError, match="empty"):
        frame_signal(np.array([]), 250.0, CFG)


def test_framing_window_placement():
    # window t starts (win - frame)//2 = 12 samples before the frame at 250 Hz
    fs = 250.0
    x = np.arange(1.0, 2501.0)
    windows = frame_signal(x, fs, CFG)
    # frame 1 covers samples [25, 50); its window covers [13, 63)
    assert_array_equal(windows[1], x[13:63])
    # frame 0's window reaches 12 samples before the signal: zero padding
    assert_array_equal(windows[0][:12], np.zeros(12))
    assert_array_equal(windows[0][12:], x[:38])
    # last frame's window starts at 99*25 - 12 = 2463 and runs past the end
    assert_array_equal(windows[-1][:37], x[2463:])
    assert_array_equal(windows[-1][37:], np.zeros(13))


def test_framing_short_tail_dropped():
    fs = 250.0
    w1 = frame_signal(np.ones(1024), fs, CFG)
    assert w1.shape[0] == 1024 // 25


# -- spectral path -----------------------------------------------------------

def test_sinusoid_peaks_in_matching_filter():
    fs = 1000.0
    centers = filterbank_centers(fs, CFG)
    t = np.arange(int(fs * CFG.window_duration)) / fs
    for k in range(1, CFG.filterbank_size - 1):
        window = np.sin(2 * np.pi * centers[k] * t)
        log_e = filterbank_log_energies(window, fs, CFG)
        assert int(np.argmax(log_e)) == k


def test_filterbank_energies_match_direct_dft_oracle():
    fs = 1000.0
    rng = np.random.default_rng(5)
    window = rng.normal(size=int(fs * CFG.window_duration))
    nfft = 256
    hammed = window * np.hamming(window.size)
    spectrum = direct_power_spectrum(hammed, nfft)
    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    edges = np.linspace(0.0, fs / 2.0, CFG.filterbank_size + 2)
    expected = np.log(np.maximum(
        np.array([
            triangle_weights(freqs, edges[k], edges[k + 1], edges[k + 2]) @ spectrum
            for k in range(CFG.filterbank_size)
        ]),
        CFG.fft_floor,
    ))
    got = filterbank_log_energies(window, fs, CFG)
    assert_allclose(got, expected, rtol=1e-9, atol=1e-9)


def test_parseval_within_tolerance():
    rng = np.random.default_rng(9)
    for _ in range(10):
        length = int(rng.integers(20, 200))
        x = rng.normal(size=length)
        hammed = x * np.hamming(length)
        nfft = 1
        while nfft < length:
            nfft *= 2
        spectrum = np.fft.fft(hammed, nfft)
        time_energy = np.sum(hammed**2)
        freq_energy = np.sum(np.abs(spectrum) ** 2) / nfft
        assert abs(time_energy - freq_energy) <= 1e-6 * max(time_energy, 1e-30)


def test_cepstra_match_cosine_sum_oracle():
    fs = 250.0
    rng = np.random.default_rng(12)
    window = rng.normal(size=50)
    base = lfcc_frame(window, fs, CFG)
    log_fb = filterbank_log_energies(window, fs, CFG)
    expected = dct2_ortho_oracle(log_fb)[1 : CFG.cepstral_count + 1]
    assert_allclose(base[1:8], expected, rtol=1e-9, atol=1e-12)


def test_zero_window_features():
    base = lfcc_frame(np.zeros(50), 250.0, CFG)
    assert_allclose(base[0], np.log(CFG.fft_floor), rtol=0, atol=0)
    assert_allclose(base[1:8], np.zeros(7), rtol=0, atol=1e-12)
    assert base[8] == 0.0  # all subframes share the floor energy


def test_amplitude_scale_property():
    fs = 250.0
    rng = np.random.default_rng(21)
    for _ in range(5):
        window = rng.normal(size=50) * 40.0
        scale = float(rng.uniform(1.5, 8.0))
        a = lfcc_frame(window, fs, CFG)
        b = lfcc_frame(window * scale, fs, CFG)
        assert abs((b[0] - a[0]) - 2 * np.log(scale)) < 1e-9
        assert_allclose(b[1:8], a[1:8], rtol=0, atol=1e-9)
        # differential energy is a log-domain spread: scale-invariant too
        assert abs(b[8] - a[8]) < 1e-9


def test_window_too_short():
    with pytest.raises(DataError, match="too short"):
        lfcc_frame(np.array([1.0]), 250.0, CFG)


# -- derivatives -------------------------------------------------------------

def test_delta_constant_is_exactly_zero():
    seq = np.full((30, 9), 3.7)
    out = deltas(seq, CFG)
    assert np.all(out == 0.0)


def test_delta_linear_ramp_interior_is_one():
    seq = np.arange(40.0)
    out = deltas(seq, CFG)[:, 0]
    half = (CFG.delta_window - 1) // 2
    assert_array_equal(out[half:-half], np.ones(40 - 2 * half))


def test_delta_matches_summation_oracle():
    rng = np.random.default_rng(33)
    seq = rng.normal(size=(20, 9))
    out = deltas(seq, CFG)
    expected = delta_oracle(seq, (CFG.delta_window - 1) // 2)
    assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


# -- assembly ----------------------------------------------------------------

def test_assemble_shape_and_drop():
    base = np.zeros((4, 9))
    d1 = np.ones((4, 9))
    d2 = np.full((4, 9), 2.0)
    d2[:, 8] = 99.0  # the dropped slot
    out = assemble(base, d1, d2)
    assert out.shape == (4, 26)
    assert_array_equal(out[:, :9], base)
    assert_array_equal(out[:, 9:18], d1)
    assert_array_equal(out[:, 18:], np.full((4, 8), 2.0))


def test_assemble_all_zero():
    out = assemble(np.zeros(9), np.zeros(9), np.zeros(9))
    assert out.shape == (1, 26)
    assert np.all(out == 0.0)


def test_assemble_dimension_mismatch():
    with pytest.raises(DataError, match="9 features"):
        assemble(np.zeros(8), np.zeros(8), np.zeros(8))


# -- end-to-end tensor -------------------------------------------------------

def make_diff_recording(duration_s, fs=250.0, n_channels=3, seed=0):
    rng = np.random.default_rng(seed)
    n = int(duration_s * fs)
    return DifferentialRecording(
        labels=tuple(f"C{i}-D{i}" for i in range(n_channels)),
        samples=tuple(rng.normal(size=n) * 30 for _ in range(n_channels)),
        sample_rate=fs,
    )


def test_extract_shape_exact():
    rec = make_diff_recording(12.35)
    tensor = extract(rec, CFG)
    assert tensor.values.shape == (12, FRAMES_PER_EPOCH, 3, FEATURE_DIM)
    assert tensor.n_epochs == 12
    assert tensor.values.dtype == np.float32


def test_extract_channels_independent():
    # feature values of a channel do not depend on what else is montaged in
    rec = make_diff_recording(4.0, n_channels=3, seed=5)
    full = extract(rec, CFG)
    solo = extract(
        DifferentialRecording(rec.labels[1:2], rec.samples[1:2], rec.sample_rate),
        CFG,
    )
    assert_array_equal(full.values[:, :, 1, :], solo.values[:, :, 0, :])


def test_channel_features_frame_count():
    fs = 250.0
    out = channel_features(np.random.default_rng(0).normal(size=2500), fs, CFG)
    assert out.shape == (100, 26)


def test_batched_frames_match_single_frame_path():
    fs = 250.0
    windows = frame_signal(np.random.default_rng(3).normal(size=1000), fs, CFG)
    batch = lfcc_frames(windows, fs, CFG)
    single = np.stack([lfcc_frame(w, fs, CFG) for w in windows])
    assert_allclose(batch, single, rtol=1e-9, atol=1e-12)


def test_container_round_trip_bit_exact():
    rec = make_diff_recording(5.0, seed=8)
    tensor = extract(rec, CFG)
    blob = write_features(tensor)
    back = read_features(blob)
    assert_array_equal(back.values, tensor.values)
    assert back.channel_labels == tensor.channel_labels
    assert back.sample_rate == tensor.sample_rate
    assert back.config_hash == tensor.config_hash
    assert write_features(back) == blob


def test_container_rejects_garbage():
    with pytest.raises(DataError, match="bad magic"):
        read_features(b"NOPE" + b"\x00" * 100)
    rec = make_diff_recording(2.0)
    blob = write_features(extract(rec, CFG))
    with pytest.raises(DataError, match="payload"):
        read_features(blob[:-4])


def test_export_csv_layout():
    rec = make_diff_recording(2.0, n_channels=2)
    tensor = extract(rec, CFG)
    text = export_csv(tensor)
    lines = text.strip().split("\n")
    assert lines[0].startswith("epoch,frame,channel,f0,")
    assert len(lines) == 1 + 2 * FRAMES_PER_EPOCH * 2
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "0" and first[2] == "C0-D0"
    assert len(first) == 3 + FEATURE_DIM


def test_feature_config_validation():
    with pytest.raises(ConfigError, match="window_duration"):
        FeatureConfig(frame_duration=0.3)
    with pytest.raises(ConfigError, match="cepstral_count"):
        FeatureConfig(cepstral_count=20)
    with pytest.raises(ConfigError, match="delta_window"):
        FeatureConfig(delta_window=4)
    with pytest.raises(ConfigError, match="fft_floor"):
        FeatureConfig(fft_floor=0.0)


def test_feature_tensor_validation():
    with pytest.raises(DataError, match="feature dim"):
        FeatureTensor(np.zeros((1, 10, 2, 25), dtype=np.float32),
                      ("a", "b"), 250.0, b"\x00" * 32)
    with pytest.raises(DataError, match="frames per epoch"):
        FeatureTensor(np.zeros((1, 9, 2, 26), dtype=np.float32),
                      ("a", "b"), 250.0, b"\x00" * 32)
