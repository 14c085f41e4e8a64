"""LFCC feature extraction.

Each channel is analyzed in 0.2 s Hamming windows hopped every 0.1 s. A
frame's 9 base features are [log frame energy, cepstra c1..c7, differential
energy]; first derivatives of all 9 and second derivatives of the first 8
are appended for a 26-dimensional vector. Frames are grouped 10 to the
1 s epoch.

The cepstral path is: Hamming window, magnitude-squared DFT (length = next
power of two at or above the window), triangular filterbank linear-spaced
over [0, Nyquist], log floored at fft_floor, DCT-II (orthonormal), keep
coefficients 1..cepstral_count. Frame energy and differential energy are
computed on the raw (unwindowed) samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigError, DataError
from .hashing import config_digest
from .montage import DifferentialRecording

BASE_DIM = 9
FEATURE_DIM = 26
EPOCH_DURATION = 1.0
FRAMES_PER_EPOCH = 10


@dataclass(frozen=True)
class FeatureConfig:
    frame_duration: float = 0.1
    window_duration: float = 0.2
    cepstral_count: int = 7
    filterbank_size: int = 20
    fft_floor: float = 1e-10
    delta_window: int = 9
    subframe_duration: float = 0.01

    def __post_init__(self):
        if self.window_duration < self.frame_duration:
            raise ConfigError(
                f"window_duration {self.window_duration} < "
                f"frame_duration {self.frame_duration}"
            )
        if self.frame_duration <= 0:
            raise ConfigError("frame_duration must be > 0")
        if not 0 < self.cepstral_count < self.filterbank_size:
            raise ConfigError(
                f"cepstral_count {self.cepstral_count} must be in "
                f"(0, filterbank_size={self.filterbank_size})"
            )
        if self.fft_floor <= 0:
            raise ConfigError("fft_floor must be > 0")
        if self.delta_window < 3 or self.delta_window % 2 == 0:
            raise ConfigError(
                f"delta_window must be odd and >= 3, got {self.delta_window}"
            )
        if not 0 < self.subframe_duration <= self.window_duration:
            raise ConfigError("subframe_duration must be in (0, window_duration]")


@dataclass(frozen=True)
class FeatureTensor:
    """values[epoch][frame][channel][feature], float32."""

    values: np.ndarray
    channel_labels: tuple[str, ...]
    sample_rate: float
    config_hash: bytes

    def __post_init__(self):
        if self.values.ndim != 4:
            raise DataError(f"feature tensor must be 4-D, got {self.values.ndim}-D")
        e, f, c, d = self.values.shape
        if f != FRAMES_PER_EPOCH:
            raise DataError(f"frames per epoch must be {FRAMES_PER_EPOCH}, got {f}")
        if d != FEATURE_DIM:
            raise DataError(f"feature dim must be {FEATURE_DIM}, got {d}")
        if c != len(self.channel_labels):
            raise DataError(
                f"channel axis {c} != label count {len(self.channel_labels)}"
            )

    @property
    def n_epochs(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]


def _frame_geometry(sample_rate: float, cfg: FeatureConfig) -> tuple[int, int]:
    frame_len = int(round(sample_rate * cfg.frame_duration))
    win_len = int(round(sample_rate * cfg.window_duration))
    if frame_len < 1 or win_len < 1:
        raise DataError(
            f"sample rate {sample_rate} Hz gives sub-sample frames "
            f"({frame_len=}, {win_len=})"
        )
    return frame_len, win_len


def frame_signal(samples: np.ndarray, sample_rate: float, cfg: FeatureConfig) -> np.ndarray:
    """Slice a signal into frame-centered analysis windows.

    Window t covers sample range [t*frame - back, t*frame - back + win) with
    back = (win - frame) // 2; samples outside the signal are zero.
    Returns (n_frames, win_len).
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DataError("cannot frame an empty signal")
    frame_len, win_len = _frame_geometry(sample_rate, cfg)
    n_frames = samples.size // frame_len
    if n_frames == 0:
        return np.zeros((0, win_len))
    back = (win_len - frame_len) // 2
    padded = np.concatenate([np.zeros(back), samples, np.zeros(win_len)])
    starts = np.arange(n_frames) * frame_len
    idx = starts[:, None] + np.arange(win_len)[None, :]
    return padded[idx]


def _filterbank(nfft: int, sample_rate: float, cfg: FeatureConfig) -> np.ndarray:
    """(filterbank_size, nfft//2 + 1) triangular weights over [0, Nyquist]."""
    nyquist = sample_rate / 2.0
    edges = np.linspace(0.0, nyquist, cfg.filterbank_size + 2)
    freqs = np.arange(nfft // 2 + 1) * (sample_rate / nfft)
    bank = np.zeros((cfg.filterbank_size, freqs.size))
    for k in range(cfg.filterbank_size):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        bank[k] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return bank


def filterbank_centers(sample_rate: float, cfg: FeatureConfig) -> np.ndarray:
    """Peak frequency of each triangular filter."""
    nyquist = sample_rate / 2.0
    return np.linspace(0.0, nyquist, cfg.filterbank_size + 2)[1:-1]


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def filterbank_log_energies(window: np.ndarray, sample_rate: float,
                            cfg: FeatureConfig) -> np.ndarray:
    """Log (floored) triangular-filter energies of one analysis window."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 2:
        raise DataError(f"window too short for spectrum: {window.size} samples")
    nfft = _next_pow2(window.size)
    spectrum = np.abs(np.fft.rfft(window * np.hamming(window.size), nfft)) ** 2
    bank = _filterbank(nfft, sample_rate, cfg)
    energies = bank @ spectrum
    return np.log(np.maximum(energies, cfg.fft_floor))


def lfcc_frame(window: np.ndarray, sample_rate: float, cfg: FeatureConfig) -> np.ndarray:
    """9 base features of one analysis window."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 2:
        raise DataError(f"window too short: {window.size} samples")

    log_fb = filterbank_log_energies(window, sample_rate, cfg)
    cepstra = scipy.fft.dct(log_fb, type=2, norm="ortho")[1 : cfg.cepstral_count + 1]

    log_energy = np.log(np.sum(window**2) + cfg.fft_floor)

    sub_len = max(1, int(round(sample_rate * cfg.subframe_duration)))
    n_sub = window.size // sub_len
    if n_sub >= 1:
        subs = window[: n_sub * sub_len].reshape(n_sub, sub_len)
        sub_log = np.log(np.sum(subs**2, axis=1) + cfg.fft_floor)
        diff_energy = float(np.max(sub_log) - np.min(sub_log))
    else:
        diff_energy = 0.0

    return np.concatenate([[log_energy], cepstra, [diff_energy]])


def deltas(sequence: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Regression derivatives over the frame axis with edge replication.

    d_t = sum_{n=1..N} n * (x_{t+n} - x_{t-n}) / (2 * sum n^2), N half-window.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    t_count = seq.shape[0]
    if t_count == 0:
        return np.zeros_like(seq)
    half = (cfg.delta_window - 1) // 2
    denom = 2.0 * sum(n * n for n in range(1, half + 1))
    out = np.zeros_like(seq)
    index = np.arange(t_count)
    for n in range(1, half + 1):
        ahead = np.clip(index + n, 0, t_count - 1)
        behind = np.clip(index - n, 0, t_count - 1)
        out += n * (seq[ahead] - seq[behind])
    return out / denom


def assemble(base: np.ndarray, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """[9 base, 9 first derivatives, 8 second derivatives] per frame.

    The second derivative of differential energy (last base feature) is the
    one dropped to land on 26.
    """
    base, d1, d2 = (np.atleast_2d(np.asarray(a, dtype=np.float64))
                    for a in (base, d1, d2))
    for name, arr in (("base", base), ("d1", d1), ("d2", d2)):
        if arr.shape[-1] != BASE_DIM:
            raise DataError(f"{name} must have {BASE_DIM} features, got {arr.shape[-1]}")
    if not (base.shape == d1.shape == d2.shape):
        raise DataError("base/d1/d2 frame counts differ")
    return np.concatenate([base, d1, d2[:, : BASE_DIM - 1]], axis=-1)


def lfcc_frames(windows: np.ndarray, sample_rate: float,
                cfg: FeatureConfig) -> np.ndarray:
    """Row-wise lfcc_frame over a (n_frames, window) matrix, one FFT batch."""
    windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    t_count, win_len = windows.shape
    if win_len < 2:
        raise DataError(f"window too short: {win_len} samples")

    nfft = _next_pow2(win_len)
    spectra = np.abs(np.fft.rfft(windows * np.hamming(win_len), nfft, axis=-1)) ** 2
    bank = _filterbank(nfft, sample_rate, cfg)
    log_fb = np.log(np.maximum(spectra @ bank.T, cfg.fft_floor))
    cepstra = scipy.fft.dct(log_fb, type=2, norm="ortho", axis=-1)
    cepstra = cepstra[:, 1 : cfg.cepstral_count + 1]

    log_energy = np.log(np.sum(windows**2, axis=-1) + cfg.fft_floor)

    sub_len = max(1, int(round(sample_rate * cfg.subframe_duration)))
    n_sub = win_len // sub_len
    if n_sub >= 1:
        subs = windows[:, : n_sub * sub_len].reshape(t_count, n_sub, sub_len)
        sub_log = np.log(np.sum(subs**2, axis=-1) + cfg.fft_floor)
        diff_energy = np.max(sub_log, axis=1) - np.min(sub_log, axis=1)
    else:
        diff_energy = np.zeros(t_count)

    return np.concatenate(
        [log_energy[:, None], cepstra, diff_energy[:, None]], axis=1
    )


def channel_features(samples: np.ndarray, sample_rate: float,
                     cfg: FeatureConfig) -> np.ndarray:
    """(n_frames, 26) feature matrix for one channel."""
    windows = frame_signal(samples, sample_rate, cfg)
    if windows.shape[0] == 0:
        return np.zeros((0, FEATURE_DIM))
    base = lfcc_frames(windows, sample_rate, cfg)
    d1 = deltas(base, cfg)
    d2 = deltas(d1, cfg)
    return assemble(base, d1, d2)


def extract(rec: DifferentialRecording, cfg: FeatureConfig | None = None) -> FeatureTensor:
    """Per-channel LFCCs grouped into 1 s epochs of 10 frames.

    Trailing frames that do not fill an epoch are dropped, so
    n_epochs = floor(duration in seconds).
    """
    cfg = cfg or FeatureConfig()
    per_channel = [
        channel_features(np.asarray(s, dtype=np.float64), rec.sample_rate, cfg)
        for s in rec.samples
    ]
    frames = np.stack(per_channel, axis=1)  # (T, C, 26)
    n_epochs = frames.shape[0] // FRAMES_PER_EPOCH
    frames = frames[: n_epochs * FRAMES_PER_EPOCH]
    values = frames.reshape(n_epochs, FRAMES_PER_EPOCH, rec.n_channels, FEATURE_DIM)
    return FeatureTensor(
        values=values.astype(np.float32),
        channel_labels=rec.labels,
        sample_rate=rec.sample_rate,
        config_hash=config_digest(cfg),
    )


_MAGIC = b"EEGF"
_CONTAINER_VERSION = 1


def write_features(tensor: FeatureTensor) -> bytes:
    """Serialize to the flat binary container (fully deterministic)."""
    labels_blob = "\n".join(tensor.channel_labels).encode("utf-8")
    e, f, c, d = tensor.values.shape
    head = b"".join([
        _MAGIC,
        np.uint32(_CONTAINER_VERSION).tobytes(),
        np.array([e, f, c, d], dtype="<u4").tobytes(),
        np.float64(tensor.sample_rate).tobytes(),
        tensor.config_hash,
        np.uint32(len(labels_blob)).tobytes(),
        labels_blob,
    ])
    return head + tensor.values.astype("<f4").tobytes()


def read_features(data: bytes) -> FeatureTensor:
    if data[:4] != _MAGIC:
        raise DataError("not a feature container (bad magic)")
    pos = 4
    version = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4
    if version != _CONTAINER_VERSION:
        raise DataError(f"unsupported feature container version {version}")
    e, f, c, d = (int(x) for x in np.frombuffer(data[pos : pos + 16], "<u4")); pos += 16
    sample_rate = float(np.frombuffer(data[pos : pos + 8], "<f8")[0]); pos += 8
    cfg_hash = data[pos : pos + 32]; pos += 32
    label_len = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4
    labels = tuple(data[pos : pos + label_len].decode("utf-8").split("\n")); pos += label_len
    payload = data[pos:]
    expected = e * f * c * d * 4
    if len(payload) != expected:
        raise DataError(
            f"feature payload holds {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, "<f4").reshape(e, f, c, d).copy()
    return FeatureTensor(values, labels, sample_rate, cfg_hash)


def export_csv(tensor: FeatureTensor) -> str:
    """Debug CSV: one row per (epoch, frame, channel) with 26 values."""
    header = "epoch,frame,channel," + ",".join(f"f{i}" for i in range(FEATURE_DIM))
    lines = [header]
    e_count, f_count, c_count, _ = tensor.values.shape
    for e in range(e_count):
        for f in range(f_count):
            for c in range(c_count):
                row = tensor.values[e, f, c]
                lines.append(
                    f"{e},{f},{tensor.channel_labels[c]},"
                    + ",".join(f"{v:.9g}" for v in row)
                )
    return "\n".join(lines) + "\n"
