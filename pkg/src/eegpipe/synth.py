"""Synthetic EEG-like recordings with ground-truth seizure annotations.

Background is seeded 1/f (pink) noise per electrode. Seizure bursts arrive
by a renewal process (exponential gaps, uniform durations), and inside each
burst the footprint electrodes receive an added 3 Hz sawtooth-plus-spike
waveform. The default footprint is left-temporal {F7, T3, T5}, so presets
that keep temporal channels see the bursts and occipital-heavy subsets
degrade.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edf import EventList, Recording
from .errors import ConfigError

TEN_TWENTY = (
    "FP1", "FP2", "F3", "F4", "F7", "F8", "C3", "C4", "CZ",
    "P3", "P4", "T3", "T4", "T5", "T6", "O1", "O2", "A1", "A2",
)

SEIZURE_LABEL = "seiz"


@dataclass(frozen=True)
class SynthConfig:
    duration: float = 3600.0
    sample_rate: float = 250.0
    background: float = 30.0
    burst_rate: float = 10.0
    burst_duration: tuple[float, float] = (20.0, 60.0)
    burst_frequency: float = 3.0
    burst_gain: float = 3.0
    footprint: tuple[str, ...] = ("F7", "T3", "T5")
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError(f"duration must be > 0, got {self.duration}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.background < 0:
            raise ConfigError("background amplitude must be >= 0")
        if self.burst_rate < 0:
            raise ConfigError("burst_rate must be >= 0")
        lo, hi = self.burst_duration
        if not 0 < lo <= hi:
            raise ConfigError(f"burst durations must satisfy 0 < lo <= hi, got {lo}, {hi}")
        if self.burst_gain < 0:
            raise ConfigError("burst_gain must be >= 0")
        if not self.footprint:
            raise ConfigError("footprint must name at least one electrode")
        unknown = [e for e in self.footprint if e.upper() not in TEN_TWENTY]
        if unknown:
            raise ConfigError(f"footprint electrodes outside the 10-20 set: {unknown}")


def pink_noise(rng: np.random.Generator, n_samples: int, sample_rate: float,
               amplitude: float) -> np.ndarray:
    """1/f-power noise normalized to the requested RMS amplitude."""
    white = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    shaped = np.fft.irfft(spectrum * scale, n_samples)
    rms = np.sqrt(np.mean(shaped**2))
    if rms == 0 or amplitude == 0:
        return np.zeros(n_samples)
    return shaped * (amplitude / rms)


def sample_burst_intervals(rng: np.random.Generator, cfg: SynthConfig) -> list[tuple[float, float]]:
    """Renewal process: exponential gaps at burst_rate/h, uniform durations.

    Intervals are disjoint by construction and clipped so every burst fits
    inside [0, duration].
    """
    if cfg.burst_rate == 0:
        return []
    mean_gap = 3600.0 / cfg.burst_rate
    lo, hi = cfg.burst_duration
    out = []
    t = 0.0
    while True:
        start = t + rng.exponential(mean_gap)
        length = rng.uniform(lo, hi)
        stop = start + length
        if stop >= cfg.duration:
            break
        out.append((start, stop))
        t = stop
    return out


def burst_waveform(t: np.ndarray, frequency: float, amplitude: float) -> np.ndarray:
    """Sawtooth with a narrow spike riding each cycle."""
    phase = (t * frequency) % 1.0
    sawtooth = 2.0 * phase - 1.0
    spike = np.exp(-((phase - 0.5) ** 2) / (2 * 0.03**2))
    return amplitude * (sawtooth + 2.0 * spike)


def generate(cfg: SynthConfig) -> tuple[Recording, EventList]:
    """Build one recording and its exact annotation list."""
    rng = np.random.default_rng(cfg.seed)
    n_samples = int(round(cfg.duration * cfg.sample_rate))

    channels = {
        e: pink_noise(rng, n_samples, cfg.sample_rate, cfg.background)
        for e in TEN_TWENTY
    }
    intervals = sample_burst_intervals(rng, cfg)

    footprint = {e.upper() for e in cfg.footprint}
    amplitude = cfg.burst_gain * cfg.background
    for start, stop in intervals:
        i0 = int(round(start * cfg.sample_rate))
        i1 = min(n_samples, int(round(stop * cfg.sample_rate)))
        t = np.arange(i0, i1) / cfg.sample_rate
        wave = burst_waveform(t, cfg.burst_frequency, amplitude)
        for e in footprint:
            channels[e][i0:i1] += wave

    recording = Recording(
        labels=TEN_TWENTY,
        samples=tuple(channels[e] for e in TEN_TWENTY),
        sample_rate=cfg.sample_rate,
    )
    events = EventList(
        tuple((start, stop, SEIZURE_LABEL) for start, stop in intervals),
        cfg.duration,
    )
    return recording, events
