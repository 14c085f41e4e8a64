"""Scoring tests against brute-force oracles.

The sweep-line OVLP counter is checked against the quadratic pairwise
definition; epoch labeling is checked against literal per-epoch coverage
built from 1/8 s slots (exact because test intervals sit on that grid).
"""

import json

import numpy as np
import pytest

from eegpipe.edf import EventList
from eegpipe.errors import ConfigError, DataError
from eegpipe.postprocess import PostprocessConfig
from eegpipe.scoring import (
    ScoreReport,
    epoch_confusion,
    epoch_labels,
    fa_per_24h,
    ovlp_score,
    ranking_auc,
    report_json,
    roc_auc,
    roc_csv,
    roc_svg,
    roc_sweep,
    score_events,
)

GRID = 0.125  # all random intervals sit on this grid


def events(pairs, duration):
    return EventList(tuple((a, b, "seiz") for a, b in pairs), duration)


def random_events(rng, duration, max_events=6):
    """Disjoint grid-aligned intervals."""
    n = int(rng.integers(0, max_events + 1))
    slots = int(duration / GRID)
    marks = sorted(rng.choice(slots + 1, size=min(2 * n, slots + 1), replace=False))
    pairs = []
    for i in range(0, len(marks) - 1, 2):
        a, b = marks[i] * GRID, marks[i + 1] * GRID
        if b > a:
            pairs.append((a, b))
    return events(pairs, duration)


# -- oracles -----------------------------------------------------------------

def ovlp_pairwise_oracle(ref, hyp):
    def overlaps(x, y):
        return min(x[1], y[1]) - max(x[0], y[0]) > 0

    tp = sum(
        1 for r in ref if any(overlaps(r, h) for h in hyp)
    )
    fp = sum(
        1 for h in hyp if not any(overlaps(h, r) for r in ref)
    )
    return tp, fp


def epoch_label_oracle(evts, n_epochs):
    labels = []
    for k in range(n_epochs):
        covered = 0
        for s in range(8):  # 1/8 s slots; exact for grid-aligned events
            mid = k + (s + 0.5) * GRID
            if any(start < mid < stop for start, stop, _ in evts):
                covered += 1
        labels.append(covered > 4)
    return np.array(labels)


# -- OVLP --------------------------------------------------------------------

def test_ovlp_basic_overlap():
    ref = events([(10, 20)], 60)
    hyp = events([(15, 30)], 60)
    assert ovlp_score(ref, hyp) == (1, 0)


def test_ovlp_one_hyp_credits_multiple_refs():
    ref = events([(10, 20), (40, 50)], 60)
    hyp = events([(15, 45)], 60)
    assert ovlp_score(ref, hyp) == (2, 0)


def test_ovlp_touching_is_not_overlap():
    ref = events([(10, 20)], 60)
    hyp = events([(20, 30)], 60)
    assert ovlp_score(ref, hyp) == (0, 1)
    # and symmetrically
    assert ovlp_score(hyp, ref) == (0, 1)


def test_ovlp_multiple_hyps_on_one_ref_count_once():
    ref = events([(10, 30)], 60)
    hyp = events([(11, 12), (14, 15), (20, 25)], 60)
    assert ovlp_score(ref, hyp) == (1, 0)


def test_ovlp_empty_sides():
    ref = events([(10, 20)], 60)
    none = events([], 60)
    assert ovlp_score(ref, none) == (0, 0)
    assert ovlp_score(none, ref) == (0, 1)
    assert ovlp_score(none, none) == (0, 0)


def test_ovlp_contained_and_identical():
    ref = events([(10, 20)], 60)
    assert ovlp_score(ref, events([(12, 15)], 60)) == (1, 0)
    assert ovlp_score(ref, events([(10, 20)], 60)) == (1, 0)
    assert ovlp_score(ref, events([(0, 60)], 60)) == (1, 0)


def test_ovlp_duration_mismatch():
    with pytest.raises(DataError, match="total_duration"):
        ovlp_score(events([], 60), events([], 61))


def test_ovlp_matches_pairwise_oracle_randomized():
    rng = np.random.default_rng(42)
    for _ in range(300):
        duration = float(rng.choice([16, 32, 64]))
        ref = random_events(rng, duration)
        hyp = random_events(rng, duration)
        assert ovlp_score(ref, hyp) == ovlp_pairwise_oracle(ref, hyp)


def test_ovlp_permutation_invariant():
    rng = np.random.default_rng(3)
    duration = 64.0
    ref = random_events(rng, duration, max_events=8)
    hyp = random_events(rng, duration, max_events=8)
    base = ovlp_score(ref, hyp)
    for _ in range(5):
        rp = list(ref.events)
        hp = list(hyp.events)
        rng.shuffle(rp)
        rng.shuffle(hp)
        assert ovlp_score(EventList(tuple(rp), duration),
                          EventList(tuple(hp), duration)) == base


# -- FA/24h ------------------------------------------------------------------

def test_fa_per_24h_values():
    assert fa_per_24h(2, 12 * 3600.0) == 4.0
    assert fa_per_24h(0, 3600.0) == 0.0
    assert fa_per_24h(23, 24 * 3600.0) == 23.0


def test_fa_per_24h_zero_duration():
    with pytest.raises(DataError, match="> 0"):
        fa_per_24h(1, 0.0)


# -- epoch confusion ----------------------------------------------------------

def test_epoch_confusion_identical_lists():
    ref = events([(3, 7), (10, 15)], 20)
    tp, fp, tn, fn = epoch_confusion(ref, ref)
    assert fp == 0 and fn == 0
    assert tp == 9  # epochs 3..6 and 10..14
    assert tn == 11


def test_epoch_confusion_all_vs_nothing():
    duration = 30
    hyp = events([(0, duration)], duration)
    ref = events([], duration)
    tp, fp, tn, fn = epoch_confusion(ref, hyp)
    assert (tp, fp, tn, fn) == (0, 30, 0, 0)
    report = ScoreReport(0, 1, 0, 1, tp, fp, tn, fn, float(duration))
    assert report.specificity == 0.0


def test_epoch_majority_rule():
    # 0.5 coverage is NOT positive; 0.625 is
    half = events([(0.0, 0.5)], 4)
    assert list(epoch_labels(half, 4)) == [False, False, False, False]
    more = events([(0.0, 0.625)], 4)
    assert list(epoch_labels(more, 4)) == [True, False, False, False]


def test_epoch_labels_match_bruteforce_oracle():
    rng = np.random.default_rng(17)
    for _ in range(200):
        duration = float(rng.choice([16, 32]))
        evts = random_events(rng, duration)
        n_epochs = int(duration)
        got = epoch_labels(evts, n_epochs)
        expected = epoch_label_oracle(evts, n_epochs)
        np.testing.assert_array_equal(got, expected)


def test_epoch_confusion_trailing_partial_second_dropped():
    ref = events([(0, 2)], 10.7)
    hyp = events([(0, 2)], 10.7)
    tp, fp, tn, fn = epoch_confusion(ref, hyp)
    assert tp + fp + tn + fn == 10


# -- aggregate report ----------------------------------------------------------

def test_score_events_aggregates_counts():
    ref1, hyp1 = events([(5, 10)], 60), events([(6, 9)], 60)
    ref2, hyp2 = events([(0, 4)], 40), events([(20, 30)], 40)
    report = score_events([ref1, ref2], [hyp1, hyp2])
    assert report.tp == 1 and report.fp == 1
    assert report.ref_count == 2 and report.hyp_count == 2
    assert report.total_duration == 100.0
    assert report.sensitivity == 50.0
    assert report.false_alarms_per_24h == 1 * 86400.0 / 100.0


def test_score_report_edge_conventions():
    empty = ScoreReport(0, 0, 0, 0, 0, 0, 10, 0, 10.0)
    assert empty.sensitivity == 100.0
    assert empty.specificity == 100.0
    all_pos = ScoreReport(1, 0, 1, 1, 10, 0, 0, 0, 10.0)
    assert all_pos.specificity == 100.0
    assert all_pos.epoch_fpr == 0.0


def test_score_events_validation():
    with pytest.raises(DataError, match="nothing to score"):
        score_events([], [])
    with pytest.raises(DataError, match="reference lists"):
        score_events([events([], 10)], [])


# -- ROC ----------------------------------------------------------------------

def _separable_case():
    # posteriors high inside the single 20..40 s reference event
    post = np.full(60, 0.1)
    post[20:40] = 0.9
    ref = events([(20, 40)], 60)
    return [post], [ref]


def test_roc_sweep_endpoints():
    posts, refs = _separable_case()
    cfg = PostprocessConfig(smoothing=1, min_duration=0.0, merge_gap=0.0)
    pts = roc_sweep(posts, refs, cfg, [1.0, 0.5, 0.0])
    by_theta = {t: (f, s) for t, f, s in pts}
    assert by_theta[1.0] == (0.0, 0.0)  # strict > 1 matches nothing
    assert by_theta[0.0] == (1.0, 1.0)  # everything flagged
    assert by_theta[0.5] == (0.0, 1.0)  # clean separation


def test_roc_fpr_non_decreasing_as_theta_drops():
    rng = np.random.default_rng(23)
    cfg = PostprocessConfig(smoothing=3, min_duration=3.0, merge_gap=1.0)
    for seed in range(5):
        post = np.random.default_rng(seed).uniform(size=90)
        ref = random_events(rng, 90.0)
        pts = roc_sweep([post], [ref], cfg, list(np.linspace(1, 0, 21)))
        fprs = [f for _, f, _ in pts]
        assert all(a <= b + 1e-12 for a, b in zip(fprs, fprs[1:]))


def test_roc_sweep_grid_validation():
    posts, refs = _separable_case()
    cfg = PostprocessConfig()
    with pytest.raises(ConfigError, match="empty"):
        roc_sweep(posts, refs, cfg, [])
    with pytest.raises(ConfigError, match="descending"):
        roc_sweep(posts, refs, cfg, [0.0, 0.5, 1.0])
    with pytest.raises(ConfigError, match="in \\[0, 1\\]"):
        roc_sweep(posts, refs, cfg, [1.5, 0.5])


def test_roc_auc_of_separable_case():
    posts, refs = _separable_case()
    cfg = PostprocessConfig(smoothing=1, min_duration=0.0, merge_gap=0.0)
    pts = roc_sweep(posts, refs, cfg, list(np.linspace(1, 0, 11)))
    assert roc_auc(pts) >= 0.99


def test_ranking_auc_hand_cases():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0])
    assert ranking_auc(scores, labels) == 1.0
    assert ranking_auc(scores, 1 - labels) == 0.0
    assert ranking_auc(np.ones(4), labels) == 0.5
    # mixed: one inversion among 2x2 pairs -> 3/4
    assert ranking_auc(np.array([0.9, 0.3, 0.4, 0.1]), labels) == 0.75
    with pytest.raises(DataError, match="both classes"):
        ranking_auc(scores, np.ones(4))


# -- emission formats ----------------------------------------------------------

def test_report_json_structure():
    report = ScoreReport(3, 1, 4, 4, 50, 2, 100, 8, 160.0)
    doc = json.loads(report_json(report, config={"hash": "abc"}))
    assert doc["events"] == {"tp": 3, "fp": 1, "ref_count": 4, "hyp_count": 4}
    assert doc["epochs"] == {"tp": 50, "fp": 2, "tn": 100, "fn": 8}
    assert doc["sensitivity_pct"] == 75.0
    assert doc["fa_per_24h"] == 1 * 86400.0 / 160.0
    assert doc["config"] == {"hash": "abc"}


def test_roc_csv_format():
    text = roc_csv([(1.0, 0.0, 0.0), (0.5, 0.25, 0.75)])
    lines = text.strip().split("\n")
    assert lines[0] == "threshold,fpr,tpr"
    assert lines[1] == "1,0,0"
    assert lines[2] == "0.5,0.25,0.75"


def test_roc_svg_is_wellformed_plot():
    svg = roc_svg([(0.5, 0.2, 0.8)])
    assert svg.startswith("<svg")
    assert svg.rstrip().endswith("</svg>")
    assert "polyline" in svg
