"""EDF file reading/writing and CSV annotation files.

EDF layout: a 256-byte ASCII fixed header, then 256 bytes of header per
signal (each field stored consecutively for all signals), then data records
of 2-byte little-endian signed integers. Digital values are mapped to
physical units by a per-signal linear calibration.

Annotations are plain UTF-8 CSV, one event per line: "start_s,stop_s,label".
"""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

HEADER_SIZE = 256
SIGNAL_HEADER_SIZE = 256

# (field name, byte width) in file order, fixed header
_FIXED_FIELDS = (
    ("version", 8),
    ("patient_id", 80),
    ("recording_id", 80),
    ("start_date", 8),
    ("start_time", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("record_count", 8),
    ("record_duration", 8),
    ("signal_count", 4),
)

# (field name, byte width per signal) in file order, signal headers
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


@dataclass(frozen=True)
class SignalDescriptor:
    """Per-signal EDF header entry.

    digital_min < digital_max and physical_min != physical_max are required
    for the calibration map to be invertible.
    """

    label: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    samples_per_record: int
    dimension: str = "uV"
    transducer: str = ""
    prefiltering: str = ""

    def __post_init__(self):
        if self.digital_min >= self.digital_max:
            raise DataError(
                f"signal {self.label!r}: digital_min {self.digital_min} >= "
                f"digital_max {self.digital_max}"
            )
        if self.physical_min == self.physical_max:
            raise DataError(f"signal {self.label!r}: degenerate physical range")
        if self.samples_per_record < 1:
            raise DataError(f"signal {self.label!r}: samples_per_record < 1")

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (
            self.digital_max - self.digital_min
        )

    def to_physical(self, digital: np.ndarray) -> np.ndarray:
        return self.physical_min + (digital.astype(np.float64) - self.digital_min) * self.gain

    def to_digital(self, physical: np.ndarray) -> np.ndarray:
        d = np.rint((physical - self.physical_min) / self.gain) + self.digital_min
        return d.astype(np.int16)


@dataclass(frozen=True)
class EdfHeader:
    """Fixed EDF header plus the per-signal descriptors."""

    version: str
    patient_id: str
    recording_id: str
    start: datetime.datetime
    record_count: int
    record_duration: float
    signals: tuple[SignalDescriptor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.record_duration <= 0:
            raise DataError(f"record_duration must be > 0, got {self.record_duration}")
        if self.record_count < 0:
            raise DataError(f"record_count must be >= 0, got {self.record_count}")
        if len(self.signals) < 1:
            raise DataError("EDF header needs at least one signal")

    @property
    def signal_count(self) -> int:
        return len(self.signals)

    @property
    def duration(self) -> float:
        return self.record_count * self.record_duration

    def sample_rate(self, index: int) -> float:
        return self.signals[index].samples_per_record / self.record_duration


@dataclass(frozen=True)
class Recording:
    """Uniform-rate multi-electrode recording in physical units (uV).

    All electrode arrays have equal length and share one sample rate;
    both are enforced at construction.
    """

    labels: tuple[str, ...]
    samples: tuple[np.ndarray, ...]
    sample_rate: float

    def __post_init__(self):
        if len(self.labels) != len(self.samples):
            raise DataError("labels and samples length mismatch")
        if not self.labels:
            raise DataError("Recording needs at least one electrode")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be > 0, got {self.sample_rate}")
        n = len(self.samples[0])
        for lab, sig in zip(self.labels, self.samples):
            if len(sig) != n:
                raise DataError(f"electrode {lab!r}: length {len(sig)} != {n}")

    @property
    def n_samples(self) -> int:
        return len(self.samples[0])

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def electrode(self, label: str) -> np.ndarray:
        wanted = _canon(label)
        for lab, sig in zip(self.labels, self.samples):
            if _canon(lab) == wanted:
                return sig
        raise DataError(f"missing electrode {label}")


@dataclass(frozen=True)
class EventList:
    """Sorted list of (start_s, stop_s, label) intervals over [0, total_duration]."""

    events: tuple[tuple[float, float, str], ...]
    total_duration: float

    def __post_init__(self):
        for start, stop, label in self.events:
            if not (start < stop):
                raise DataError(f"inverted interval ({start}, {stop}, {label!r})")
            if start < 0:
                raise DataError(f"event start {start} < 0")
            if stop > self.total_duration + 1e-9:
                raise DataError(
                    f"event stop {stop} exceeds total duration {self.total_duration}"
                )
        starts = [e[0] for e in self.events]
        if starts != sorted(starts):
            object.__setattr__(
                self, "events", tuple(sorted(self.events, key=lambda e: (e[0], e[1])))
            )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def filtered(self, label: str) -> "EventList":
        return EventList(
            tuple(e for e in self.events if e[2] == label), self.total_duration
        )

    def intervals(self) -> np.ndarray:
        """(n, 2) float array of [start, stop) pairs."""
        if not self.events:
            return np.zeros((0, 2))
        return np.array([[e[0], e[1]] for e in self.events], dtype=np.float64)


def _canon(label: str) -> str:
    return label.strip().upper()


def _ascii_field(value: str, width: int) -> bytes:
    out = value.encode("ascii", errors="replace")[:width]
    return out.ljust(width)


def _num_field(value, width: int) -> bytes:
    if isinstance(value, float) and value == int(value):
        value = int(value)
    text = repr(value) if isinstance(value, float) else str(value)
    if len(text) > width:
        # fall back to compact float formatting that fits the slot
        text = f"{value:.{max(1, width - 7)}g}"
    if len(text) > width:
        raise DataError(f"numeric header value {value} does not fit in {width} chars")
    return text.encode("ascii").ljust(width)


def _parse_number(raw: bytes, what: str, integer: bool):
    text = raw.decode("ascii", errors="replace").strip()
    try:
        return int(text) if integer else float(text)
    except ValueError:
        raise DataError(f"non-numeric header field {what}: {text!r}") from None


def parse_edf(data: bytes, electrodes: list[str] | None = None) -> tuple[Recording, EdfHeader]:
    """Parse EDF bytes into a Recording (physical units) plus its header.

    electrodes: optional subset to retain (case-insensitive). All retained
    signals must share one sample rate; mixed rates are rejected rather than
    resampled.
    """
    if len(data) < HEADER_SIZE:
        raise DataError("truncated fixed header")
    pos = 0
    fixed: dict[str, bytes] = {}
    for name, width in _FIXED_FIELDS:
        fixed[name] = data[pos : pos + width]
        pos += width

    signal_count = _parse_number(fixed["signal_count"], "signal_count", integer=True)
    if signal_count < 1:
        raise DataError(f"signal_count must be >= 1, got {signal_count}")
    header_bytes = _parse_number(fixed["header_bytes"], "header_bytes", integer=True)
    expected_header = HEADER_SIZE + SIGNAL_HEADER_SIZE * signal_count
    if header_bytes != expected_header:
        raise DataError(
            f"header length field {header_bytes} != 256 + 256*{signal_count}"
        )
    if len(data) < expected_header:
        raise DataError("truncated signal headers")

    record_count = _parse_number(fixed["record_count"], "record_count", integer=True)
    record_duration = _parse_number(fixed["record_duration"], "record_duration", integer=False)

    raw_sig: dict[str, list[bytes]] = {}
    for name, width in _SIGNAL_FIELDS:
        raw_sig[name] = [
            data[pos + i * width : pos + (i + 1) * width] for i in range(signal_count)
        ]
        pos += width * signal_count

    descriptors = []
    for i in range(signal_count):
        descriptors.append(
            SignalDescriptor(
                label=raw_sig["label"][i].decode("ascii", errors="replace").strip(),
                physical_min=_parse_number(raw_sig["physical_min"][i], "physical_min", False),
                physical_max=_parse_number(raw_sig["physical_max"][i], "physical_max", False),
                digital_min=_parse_number(raw_sig["digital_min"][i], "digital_min", True),
                digital_max=_parse_number(raw_sig["digital_max"][i], "digital_max", True),
                samples_per_record=_parse_number(
                    raw_sig["samples_per_record"][i], "samples_per_record", True
                ),
                dimension=raw_sig["dimension"][i].decode("ascii", errors="replace").strip(),
                transducer=raw_sig["transducer"][i].decode("ascii", errors="replace").strip(),
                prefiltering=raw_sig["prefiltering"][i].decode("ascii", errors="replace").strip(),
            )
        )

    header = EdfHeader(
        version=fixed["version"].decode("ascii", errors="replace").strip(),
        patient_id=fixed["patient_id"].decode("ascii", errors="replace").strip(),
        recording_id=fixed["recording_id"].decode("ascii", errors="replace").strip(),
        start=_parse_start(fixed["start_date"], fixed["start_time"]),
        record_count=record_count,
        record_duration=record_duration,
        signals=tuple(descriptors),
    )

    samples_per_record = [d.samples_per_record for d in descriptors]
    record_size = 2 * sum(samples_per_record)
    body = data[expected_header:]
    if len(body) != record_count * record_size:
        raise DataError(
            f"truncated data record: body holds {len(body)} bytes, "
            f"expected {record_count * record_size}"
        )
    digital = _split_records(body, record_count, samples_per_record)

    if electrodes is None:
        keep = list(range(signal_count))
    else:
        wanted = [_canon(e) for e in electrodes]
        by_label = {_canon(d.label): i for i, d in enumerate(descriptors)}
        keep = []
        for name in wanted:
            if name not in by_label:
                raise DataError(f"missing electrode {name}")
            keep.append(by_label[name])

    rates = {samples_per_record[i] / record_duration for i in keep}
    if len(rates) != 1:
        raise DataError(
            "mixed sample rates among retained electrodes: "
            + ", ".join(f"{r:g} Hz" for r in sorted(rates))
        )

    recording = Recording(
        labels=tuple(descriptors[i].label for i in keep),
        samples=tuple(descriptors[i].to_physical(digital[i]) for i in keep),
        sample_rate=rates.pop(),
    )
    return recording, header


def edf_total_duration(data: bytes) -> float:
    """Total seconds covered, from the fixed header alone (first 256 bytes)."""
    if len(data) < HEADER_SIZE:
        raise DataError("truncated fixed header")
    pos = 0
    fixed: dict[str, bytes] = {}
    for name, width in _FIXED_FIELDS:
        fixed[name] = data[pos : pos + width]
        pos += width
    record_count = _parse_number(fixed["record_count"], "record_count", integer=True)
    record_duration = _parse_number(fixed["record_duration"], "record_duration", integer=False)
    if record_count < 0 or record_duration <= 0:
        raise DataError("invalid record geometry in fixed header")
    return record_count * record_duration


def _split_records(body: bytes, record_count: int, samples_per_record: list[int]):
    flat = np.frombuffer(body, dtype="<i2")
    per_record = sum(samples_per_record)
    table = flat.reshape(record_count, per_record) if record_count else flat.reshape(0, per_record)
    out = []
    offset = 0
    for spr in samples_per_record:
        out.append(np.ascontiguousarray(table[:, offset : offset + spr]).reshape(-1))
        offset += spr
    return out


def _parse_start(date_raw: bytes, time_raw: bytes) -> datetime.datetime:
    date_s = date_raw.decode("ascii", errors="replace").strip()
    time_s = time_raw.decode("ascii", errors="replace").strip()
    try:
        day, month, year = (int(p) for p in date_s.split("."))
        hour, minute, second = (int(p) for p in time_s.split("."))
    except ValueError:
        raise DataError(f"bad start date/time: {date_s!r} {time_s!r}") from None
    year += 2000 if year < 85 else 1900
    try:
        return datetime.datetime(year, month, day, hour, minute, second)
    except ValueError as exc:
        raise DataError(f"bad start date/time: {exc}") from None


DEFAULT_START = datetime.datetime(2000, 1, 1, 0, 0, 0)


def write_edf(
    recording: Recording,
    header: EdfHeader | None = None,
    record_duration: float = 1.0,
    physical_range: tuple[float, float] | None = None,
    digital_range: tuple[int, int] = (-32768, 32767),
) -> bytes:
    """Serialize a Recording to EDF bytes.

    When header is given its descriptors define the calibration (and must
    match the recording's electrodes); otherwise descriptors are built from
    physical_range (default: a symmetric range just covering the data).
    Samples outside the declared physical range are an error, not clipped.
    """
    if header is not None:
        if header.signal_count != len(recording.labels):
            raise DataError("header signal count does not match recording")
        descriptors = header.signals
        record_count = header.record_count
        record_duration = header.record_duration
        spr = descriptors[0].samples_per_record
        if any(d.samples_per_record != spr for d in descriptors):
            raise DataError("write_edf requires a uniform samples_per_record")
        if record_count * spr != recording.n_samples:
            raise DataError(
                f"header describes {record_count * spr} samples, "
                f"recording has {recording.n_samples}"
            )
    else:
        spr = recording.sample_rate * record_duration
        if abs(spr - round(spr)) > 1e-9 or round(spr) < 1:
            raise DataError(
                f"sample_rate {recording.sample_rate} Hz does not give an integer "
                f"sample count per {record_duration} s record"
            )
        spr = int(round(spr))
        if recording.n_samples % spr != 0:
            raise DataError(
                f"{recording.n_samples} samples do not fill whole "
                f"{record_duration} s records ({spr} samples each)"
            )
        record_count = recording.n_samples // spr
        if physical_range is None:
            peak = max(float(np.max(np.abs(sig))) for sig in recording.samples)
            bound = max(1.0, math.ceil(peak * 1.1))
            physical_range = (-bound, bound)
        descriptors = tuple(
            SignalDescriptor(
                label=lab,
                physical_min=physical_range[0],
                physical_max=physical_range[1],
                digital_min=digital_range[0],
                digital_max=digital_range[1],
                samples_per_record=spr,
            )
            for lab in recording.labels
        )
        header = EdfHeader(
            version="0",
            patient_id="X",
            recording_id="X",
            start=DEFAULT_START,
            record_count=record_count,
            record_duration=record_duration,
            signals=descriptors,
        )

    digital = []
    for desc, sig in zip(descriptors, recording.samples):
        lo, hi = min(desc.physical_min, desc.physical_max), max(desc.physical_min, desc.physical_max)
        if np.any(sig < lo) or np.any(sig > hi):
            raise DataError(
                f"signal {desc.label!r} has samples outside physical range "
                f"[{lo}, {hi}]"
            )
        digital.append(desc.to_digital(sig))

    return _encode(header, digital)


def _encode(header: EdfHeader, digital: list[np.ndarray]) -> bytes:
    n = header.signal_count
    parts = [
        _ascii_field(header.version, 8),
        _ascii_field(header.patient_id, 80),
        _ascii_field(header.recording_id, 80),
        _ascii_field(header.start.strftime("%d.%m.%y"), 8),
        _ascii_field(header.start.strftime("%H.%M.%S"), 8),
        _num_field(HEADER_SIZE + SIGNAL_HEADER_SIZE * n, 8),
        _ascii_field("", 44),
        _num_field(header.record_count, 8),
        _num_field(header.record_duration, 8),
        _num_field(n, 4),
    ]
    columns = {
        "label": [_ascii_field(d.label, 16) for d in header.signals],
        "transducer": [_ascii_field(d.transducer, 80) for d in header.signals],
        "dimension": [_ascii_field(d.dimension, 8) for d in header.signals],
        "physical_min": [_num_field(d.physical_min, 8) for d in header.signals],
        "physical_max": [_num_field(d.physical_max, 8) for d in header.signals],
        "digital_min": [_num_field(d.digital_min, 8) for d in header.signals],
        "digital_max": [_num_field(d.digital_max, 8) for d in header.signals],
        "prefiltering": [_ascii_field(d.prefiltering, 80) for d in header.signals],
        "samples_per_record": [_num_field(d.samples_per_record, 8) for d in header.signals],
        "reserved": [_ascii_field("", 32) for _ in header.signals],
    }
    for name, _ in _SIGNAL_FIELDS:
        parts.extend(columns[name])

    records = []
    reshaped = [
        sig.reshape(header.record_count, d.samples_per_record)
        for sig, d in zip(digital, header.signals)
    ]
    for r in range(header.record_count):
        for sig in reshaped:
            records.append(sig[r].astype("<i2").tobytes())
    return b"".join(parts) + b"".join(records)


def read_annotations(
    text: str, total_duration: float, label: str | None = None
) -> EventList:
    """Parse "start,stop,label" CSV lines into an EventList.

    label: when given, only events carrying that label are kept (the
    scoring-side filter); None keeps everything.
    """
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise DataError(f"annotation line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            start, stop = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"annotation line {lineno}: non-numeric interval") from None
        if stop <= start:
            raise DataError(f"annotation line {lineno}: inverted interval ({start}, {stop})")
        if stop > total_duration + 1e-9:
            raise DataError(
                f"annotation line {lineno}: stop {stop} exceeds duration {total_duration}"
            )
        if label is None or parts[2] == label:
            events.append((start, stop, parts[2]))
    events.sort(key=lambda e: (e[0], e[1]))
    return EventList(tuple(events), total_duration)


def write_annotations(events: EventList) -> str:
    """Inverse of read_annotations (same CSV dialect)."""
    lines = [f"{start:.6f},{stop:.6f},{label}" for start, stop, label in events]
    return "\n".join(lines) + ("\n" if lines else "")
