"""EDF serialization tests, anchored on hand-built byte layouts."""

import datetime

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from eegpipe.edf import (
    DEFAULT_START,
    EdfHeader,
    EventList,
    Recording,
    SignalDescriptor,
    parse_edf,
    read_annotations,
    write_annotations,
    write_edf,
)
from eegpipe.errors import DataError


def _field(text, width):
    return text.encode("ascii").ljust(width)


def build_edf_bytes(labels, records, record_duration=1.0,
                    physical=(-100.0, 100.0), digital=(-32768, 32767)):
    """Independent byte-level EDF builder used as the parser oracle.

    records: list over data records, each a list over signals of int arrays.
    """
    n = len(labels)
    spr = len(records[0][0])
    head = b"".join([
        _field("0", 8),
        _field("X", 80),
        _field("X", 80),
        _field("01.01.00", 8),
        _field("00.00.00", 8),
        _field(str(256 + 256 * n), 8),
        _field("", 44),
        _field(str(len(records)), 8),
        _field(str(int(record_duration)) if record_duration == int(record_duration)
               else repr(record_duration), 8),
        _field(str(n), 4),
    ])
    cols = []
    cols += [_field(lab, 16) for lab in labels]
    cols += [_field("", 80) for _ in labels]
    cols += [_field("uV", 8) for _ in labels]
    cols += [_field(str(int(physical[0])), 8) for _ in labels]
    cols += [_field(str(int(physical[1])), 8) for _ in labels]
    cols += [_field(str(digital[0]), 8) for _ in labels]
    cols += [_field(str(digital[1]), 8) for _ in labels]
    cols += [_field("", 80) for _ in labels]
    cols += [_field(str(spr), 8) for _ in labels]
    cols += [_field("", 32) for _ in labels]
    body = b"".join(
        np.asarray(sig, dtype="<i2").tobytes()
        for record in records
        for sig in record
    )
    return head + b"".join(cols) + body


def test_parse_hand_built_layout():
    # 2 signals, 3 records, 4 samples per record; values chosen so the
    # calibration result is checkable by hand.
    records = [
        [[0, 1, 2, 3], [100, 101, 102, 103]],
        [[4, 5, 6, 7], [104, 105, 106, 107]],
        [[8, 9, 10, 11], [108, 109, 110, 111]],
    ]
    data = build_edf_bytes(["FP1", "FP2"], records)
    rec, header = parse_edf(data)

    assert header.signal_count == 2
    assert header.record_count == 3
    assert header.record_duration == 1.0
    assert header.start == datetime.datetime(2000, 1, 1)
    assert rec.labels == ("FP1", "FP2")
    assert rec.sample_rate == 4.0
    assert rec.n_samples == 12

    # physical = -100 + (d + 32768) * 200 / 65535
    gain = 200.0 / 65535.0
    expect0 = -100.0 + (np.arange(12) + 32768) * gain
    expect1 = -100.0 + (np.arange(100, 112) + 32768) * gain
    assert_allclose(rec.samples[0], expect0, rtol=0, atol=1e-12)
    assert_allclose(rec.samples[1], expect1, rtol=0, atol=1e-12)


def test_digital_zero_maps_to_known_physical():
    # phys(0) = 32768 * 200 / 65535 - 100, about 0.0015259 uV
    records = [[[0]]]
    data = build_edf_bytes(["CZ"], records)
    rec, _ = parse_edf(data)
    assert_allclose(rec.samples[0][0], 32768 * 200.0 / 65535.0 - 100.0, rtol=0, atol=0)


def test_identity_calibration():
    # digital range == physical range makes physical equal the stored ints
    records = [[[-5, 0, 7, 32767], [1, 2, 3, 4]]]
    data = build_edf_bytes(["C3", "C4"], records,
                           physical=(-32768, 32767), digital=(-32768, 32767))
    rec, _ = parse_edf(data)
    assert_array_equal(rec.samples[0], [-5.0, 0.0, 7.0, 32767.0])
    assert_array_equal(rec.samples[1], [1.0, 2.0, 3.0, 4.0])


def test_truncated_data_record_rejected():
    records = [[[0, 1, 2, 3]]]
    data = build_edf_bytes(["O1"], records)
    with pytest.raises(DataError, match="truncated data record"):
        parse_edf(data[:-2])
    with pytest.raises(DataError, match="truncated data record"):
        parse_edf(data + b"\x00\x00")


def test_truncated_header_rejected():
    with pytest.raises(DataError, match="truncated"):
        parse_edf(b"0".ljust(100))
    records = [[[0, 1]]]
    data = build_edf_bytes(["O1"], records)
    with pytest.raises(DataError, match="truncated"):
        parse_edf(data[:300])


def test_electrode_subset_and_alias_case():
    records = [[[1, 2], [3, 4], [5, 6]]]
    data = build_edf_bytes(["FP1", "CZ", "O2"], records,
                           physical=(-32768, 32767), digital=(-32768, 32767))
    rec, _ = parse_edf(data, electrodes=["cz", "O2"])
    assert rec.labels == ("CZ", "O2")
    assert_array_equal(rec.samples[0], [3.0, 4.0])

    with pytest.raises(DataError, match="missing electrode"):
        parse_edf(data, electrodes=["PZ"])


def test_mixed_sample_rates_rejected():
    # build by hand: second signal has 8 samples per record, first has 4
    n = 2
    head = b"".join([
        _field("0", 8), _field("X", 80), _field("X", 80),
        _field("01.01.00", 8), _field("00.00.00", 8),
        _field(str(256 + 256 * n), 8), _field("", 44),
        _field("1", 8), _field("1", 8), _field(str(n), 4),
    ])
    cols = []
    cols += [_field("FP1", 16), _field("FP2", 16)]
    cols += [_field("", 80)] * 2
    cols += [_field("uV", 8)] * 2
    cols += [_field("-100", 8)] * 2
    cols += [_field("100", 8)] * 2
    cols += [_field("-32768", 8)] * 2
    cols += [_field("32767", 8)] * 2
    cols += [_field("", 80)] * 2
    cols += [_field("4", 8), _field("8", 8)]
    cols += [_field("", 32)] * 2
    body = np.zeros(12, dtype="<i2").tobytes()
    data = head + b"".join(cols) + body

    with pytest.raises(DataError, match="mixed sample rates"):
        parse_edf(data)
    # selecting a single-rate subset still works
    rec, _ = parse_edf(data, electrodes=["FP2"])
    assert rec.sample_rate == 8.0


def test_write_read_round_trip_bit_exact():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n_sig = rng.integers(1, 6)
        seconds = int(rng.integers(1, 5))
        fs = int(rng.choice([100, 250, 256]))
        labels = tuple(f"E{i}" for i in range(n_sig))
        samples = tuple(
            rng.uniform(-95.0, 95.0, size=seconds * fs) for _ in range(n_sig)
        )
        rec = Recording(labels, samples, float(fs))
        blob = write_edf(rec, physical_range=(-100.0, 100.0))
        rec2, header = parse_edf(blob)
        blob2 = write_edf(rec2, header=header)
        assert blob2 == blob
        assert rec2.labels == labels
        assert rec2.sample_rate == fs
        # quantization error bounded by half a digital step
        step = 200.0 / 65535.0
        for a, b in zip(rec.samples, rec2.samples):
            assert np.max(np.abs(a - b)) <= step / 2 + 1e-12


def test_write_rejects_out_of_range_samples():
    rec = Recording(("CZ",), (np.array([0.0, 150.0]),), 2.0)
    with pytest.raises(DataError, match="outside physical range"):
        write_edf(rec, physical_range=(-100.0, 100.0))


def test_write_preserves_text_fields_verbatim():
    desc = SignalDescriptor(
        label="CZ", physical_min=-100.0, physical_max=100.0,
        digital_min=-32768, digital_max=32767, samples_per_record=4,
        transducer="AgAgCl electrode", prefiltering="HP:0.1Hz LP:70Hz",
    )
    header = EdfHeader(
        version="0", patient_id="X", recording_id="X", start=DEFAULT_START,
        record_count=1, record_duration=1.0, signals=(desc,),
    )
    rec = Recording(("CZ",), (np.zeros(4),), 4.0)
    blob = write_edf(rec, header=header)
    _, back = parse_edf(blob)
    assert back.signals[0].transducer == "AgAgCl electrode"
    assert back.signals[0].prefiltering == "HP:0.1Hz LP:70Hz"


def test_write_rejects_non_integral_record_split():
    rec = Recording(("CZ",), (np.zeros(10),), 4.0)  # 2.5 records of 1 s
    with pytest.raises(DataError, match="records"):
        write_edf(rec)


def test_signal_descriptor_validation():
    with pytest.raises(DataError, match="digital_min"):
        SignalDescriptor("X", -1.0, 1.0, 5, 5, 1)
    with pytest.raises(DataError, match="degenerate"):
        SignalDescriptor("X", 1.0, 1.0, 0, 1, 1)


def test_annotations_round_trip():
    text = "0.5,2.0,seiz\n# comment\n10.0,11.25,seiz\n3.0,4.0,artifact\n"
    evts = read_annotations(text, total_duration=20.0)
    assert len(evts) == 3
    assert evts.events[0] == (0.5, 2.0, "seiz")
    assert evts.events[1] == (3.0, 4.0, "artifact")  # sorted by start

    seiz_only = read_annotations(text, total_duration=20.0, label="seiz")
    assert len(seiz_only) == 2
    assert all(e[2] == "seiz" for e in seiz_only)

    back = read_annotations(write_annotations(evts), 20.0)
    assert back.events == evts.events


def test_annotations_reject_bad_lines():
    with pytest.raises(DataError, match="expected 3 fields"):
        read_annotations("1.0,2.0\n", 10.0)
    with pytest.raises(DataError, match="non-numeric"):
        read_annotations("a,2.0,seiz\n", 10.0)
    with pytest.raises(DataError, match="inverted"):
        read_annotations("2.0,1.0,seiz\n", 10.0)
    with pytest.raises(DataError, match="exceeds duration"):
        read_annotations("1.0,12.0,seiz\n", 10.0)


def test_event_list_intervals_array():
    evts = EventList(((1.0, 2.0, "seiz"), (4.0, 6.5, "seiz")), 10.0)
    assert_array_equal(evts.intervals(), [[1.0, 2.0], [4.0, 6.5]])
    assert EventList((), 10.0).intervals().shape == (0, 2)


def test_empty_annotation_text():
    evts = read_annotations("", 10.0)
    assert len(evts) == 0
    assert write_annotations(evts) == ""
