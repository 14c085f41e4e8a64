"""Bipolar montage construction.

A montage is an ordered list of (anode, cathode) electrode pairs; applying
it to a referential recording yields one differential channel per pair
(anode minus cathode, elementwise). The default montage is the 22-channel
TCP list; arbitrary montages load from a text config of "ANODE-CATHODE"
lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edf import Recording
from .errors import ConfigError, DataError

# Modern 10-20 names seen in some recordings, mapped onto the older
# temporal names the TCP pair list uses.
ELECTRODE_ALIASES = {
    "T7": "T3",
    "T8": "T4",
    "P7": "T5",
    "P8": "T6",
}

_TCP_PAIRS = (
    ("FP1", "F7"),
    ("F7", "T3"),
    ("T3", "T5"),
    ("T5", "O1"),
    ("FP2", "F8"),
    ("F8", "T4"),
    ("T4", "T6"),
    ("T6", "O2"),
    ("A1", "T3"),
    ("T3", "C3"),
    ("C3", "CZ"),
    ("CZ", "C4"),
    ("C4", "T4"),
    ("T4", "A2"),
    ("FP1", "F3"),
    ("F3", "C3"),
    ("C3", "P3"),
    ("P3", "O1"),
    ("FP2", "F4"),
    ("F4", "C4"),
    ("C4", "P4"),
    ("P4", "O2"),
)


def canonical_electrode(label: str) -> str:
    """Uppercase, strip, and apply the alias table."""
    name = label.strip().upper()
    return ELECTRODE_ALIASES.get(name, name)


def pair_label(anode: str, cathode: str) -> str:
    return f"{canonical_electrode(anode)}-{canonical_electrode(cathode)}"


@dataclass(frozen=True)
class MontageSpec:
    """Ordered list of differential pairs."""

    name: str
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise ConfigError(f"montage {self.name!r}: needs at least one pair")
        seen = set()
        for anode, cathode in self.pairs:
            if not anode.strip() or not cathode.strip():
                raise ConfigError(f"montage {self.name!r}: empty electrode label")
            key = (canonical_electrode(anode), canonical_electrode(cathode))
            if key in seen:
                raise ConfigError(
                    f"montage {self.name!r}: duplicate pair {key[0]}-{key[1]}"
                )
            seen.add(key)

    @property
    def channel_labels(self) -> tuple[str, ...]:
        return tuple(pair_label(a, c) for a, c in self.pairs)

    def electrodes(self) -> tuple[str, ...]:
        """Distinct electrodes referenced, in first-appearance order."""
        out: list[str] = []
        for anode, cathode in self.pairs:
            for e in (canonical_electrode(anode), canonical_electrode(cathode)):
                if e not in out:
                    out.append(e)
        return tuple(out)


@dataclass(frozen=True)
class DifferentialRecording:
    """Montaged signal: one differential channel per montage pair."""

    labels: tuple[str, ...]
    samples: tuple[np.ndarray, ...]
    sample_rate: float

    def __post_init__(self):
        if len(self.labels) != len(self.samples):
            raise DataError("labels and samples length mismatch")
        if not self.labels:
            raise DataError("DifferentialRecording needs at least one channel")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be > 0, got {self.sample_rate}")
        n = len(self.samples[0])
        for lab, sig in zip(self.labels, self.samples):
            if len(sig) != n:
                raise DataError(f"channel {lab!r}: length {len(sig)} != {n}")

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    @property
    def n_samples(self) -> int:
        return len(self.samples[0])

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def index(self, label: str) -> int:
        wanted = label.strip().upper()
        for i, lab in enumerate(self.labels):
            if lab.upper() == wanted:
                return i
        raise DataError(f"missing channel {label}")

    def channel(self, label: str) -> np.ndarray:
        return self.samples[self.index(label)]

    def as_array(self) -> np.ndarray:
        """(n_channels, n_samples) float64 view of the data."""
        return np.stack([np.asarray(s, dtype=np.float64) for s in self.samples])


def default_tcp_montage() -> MontageSpec:
    """The 22-pair TCP montage (longitudinal plus transverse bipolar)."""
    return MontageSpec(name="tcp", pairs=_TCP_PAIRS)


def apply_montage(recording: Recording, spec: MontageSpec) -> DifferentialRecording:
    """Subtract cathode from anode for every pair in the spec.

    Electrode lookup is case-insensitive and alias-aware; a pair naming an
    electrode the recording lacks is an error identifying that electrode.
    """
    by_name: dict[str, np.ndarray] = {}
    for lab, sig in zip(recording.labels, recording.samples):
        by_name[canonical_electrode(lab)] = np.asarray(sig, dtype=np.float64)

    channels = []
    for anode, cathode in spec.pairs:
        a, c = canonical_electrode(anode), canonical_electrode(cathode)
        for e in (a, c):
            if e not in by_name:
                raise DataError(f"missing electrode {e}")
        channels.append(by_name[a] - by_name[c])

    return DifferentialRecording(
        labels=spec.channel_labels,
        samples=tuple(channels),
        sample_rate=recording.sample_rate,
    )


def parse_montage_config(text: str, name: str = "custom") -> MontageSpec:
    """Parse a montage config: one "ANODE-CATHODE" pair per line, '#' comments."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.count("-") != 1:
            raise ConfigError(
                f"montage config line {lineno}: expected ANODE-CATHODE, got {line!r}"
            )
        anode, cathode = line.split("-")
        if not anode.strip() or not cathode.strip():
            raise ConfigError(f"montage config line {lineno}: empty electrode label")
        pairs.append((anode.strip(), cathode.strip()))
    if not pairs:
        raise ConfigError("montage config contains no pairs")
    return MontageSpec(name=name, pairs=tuple(pairs))


def format_montage_config(spec: MontageSpec) -> str:
    """Inverse of parse_montage_config."""
    return "\n".join(f"{a}-{c}" for a, c in spec.pairs) + "\n"
