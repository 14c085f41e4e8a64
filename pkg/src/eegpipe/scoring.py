"""Any-Overlap event scoring, epoch confusion, FA/24h, and ROC sweeps.

Overlap is strict: two events overlap only when their open-interval
intersection has positive length, so touching endpoints never count. A
reference event is a true positive when at least one hypothesis event
overlaps it; a hypothesis event is a false positive when it overlaps no
reference event. One hypothesis spanning several references credits each
of them.

Specificity is epoch-based: the record is cut into 1 s epochs, an epoch is
positive for a side when events cover more than half of it, and
specificity = tn / (tn + fp) over those epoch labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .edf import EventList
from .errors import ConfigError, DataError
from .postprocess import PostprocessConfig, to_events

SECONDS_PER_DAY = 86400.0
EPOCH_SECONDS = 1.0


def ovlp_score(ref: EventList, hyp: EventList) -> tuple[int, int]:
    """(tp, fp) under Any-Overlap scoring.

    Single sweep over the merged sorted endpoints; at equal times stops are
    processed before starts, which is what makes touching endpoints
    overlap-free. Each event's hit flag is set either at its start (the
    other side is active) or at its stop (the other side started inside it).
    """
    if ref.total_duration != hyp.total_duration:
        raise DataError(
            f"total_duration mismatch: ref {ref.total_duration} s, "
            f"hyp {hyp.total_duration} s"
        )
    STOP, START = 0, 1
    points = []
    for side, events in ((0, ref), (1, hyp)):
        for idx, (start, stop, _) in enumerate(events):
            points.append((start, START, side, idx))
            points.append((stop, STOP, side, idx))
    points.sort(key=lambda p: (p[0], p[1]))

    hit = [np.zeros(len(ref), dtype=bool), np.zeros(len(hyp), dtype=bool)]
    active = [0, 0]
    starts_seen = [0, 0]
    snapshot: dict[tuple[int, int], int] = {}
    for _, kind, side, idx in points:
        other = 1 - side
        if kind == START:
            if active[other] > 0:
                hit[side][idx] = True
            snapshot[(side, idx)] = starts_seen[other]
            starts_seen[side] += 1
            active[side] += 1
        else:
            if starts_seen[other] > snapshot[(side, idx)]:
                hit[side][idx] = True
            active[side] -= 1

    tp = int(np.sum(hit[0]))
    fp = int(len(hyp) - np.sum(hit[1]))
    return tp, fp


def fa_per_24h(fp: int, total_duration: float) -> float:
    if total_duration <= 0:
        raise DataError(f"total_duration must be > 0, got {total_duration}")
    return fp * SECONDS_PER_DAY / total_duration


def epoch_labels(events: EventList, n_epochs: int) -> np.ndarray:
    """Boolean label per 1 s epoch: True when covered > 50%."""
    coverage = np.zeros(n_epochs)
    for start, stop, _ in events:
        first = max(0, int(np.floor(start / EPOCH_SECONDS)))
        last = min(n_epochs - 1, int(np.ceil(stop / EPOCH_SECONDS)) - 1)
        for k in range(first, last + 1):
            lo = k * EPOCH_SECONDS
            hi = lo + EPOCH_SECONDS
            coverage[k] += max(0.0, min(stop, hi) - max(start, lo))
    return coverage > EPOCH_SECONDS / 2.0


def epoch_confusion(ref: EventList, hyp: EventList) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) over 1 s epochs; the trailing partial second is dropped."""
    if ref.total_duration != hyp.total_duration:
        raise DataError(
            f"total_duration mismatch: ref {ref.total_duration} s, "
            f"hyp {hyp.total_duration} s"
        )
    n_epochs = int(np.floor(ref.total_duration / EPOCH_SECONDS))
    r = epoch_labels(ref, n_epochs)
    h = epoch_labels(hyp, n_epochs)
    tp = int(np.sum(r & h))
    fp = int(np.sum(~r & h))
    tn = int(np.sum(~r & ~h))
    fn = int(np.sum(r & ~h))
    return tp, fp, tn, fn


@dataclass(frozen=True)
class ScoreReport:
    """Aggregated event and epoch counts for one or more recordings."""

    tp: int
    fp: int
    ref_count: int
    hyp_count: int
    tp_e: int
    fp_e: int
    tn_e: int
    fn_e: int
    total_duration: float

    @property
    def sensitivity(self) -> float:
        """Percent of reference events hit; 100 when there are none to hit."""
        if self.ref_count == 0:
            return 100.0
        return 100.0 * self.tp / self.ref_count

    @property
    def specificity(self) -> float:
        """Percent of ref-negative epochs left alone; 100 when none exist."""
        denom = self.tn_e + self.fp_e
        if denom == 0:
            return 100.0
        return 100.0 * self.tn_e / denom

    @property
    def epoch_fpr(self) -> float:
        denom = self.tn_e + self.fp_e
        if denom == 0:
            return 0.0
        return self.fp_e / denom

    @property
    def false_alarms_per_24h(self) -> float:
        return fa_per_24h(self.fp, self.total_duration)


def score_events(refs: list[EventList], hyps: list[EventList]) -> ScoreReport:
    """Score recording pairs and sum the counts (order-independent)."""
    if len(refs) != len(hyps):
        raise DataError(f"{len(refs)} reference lists vs {len(hyps)} hypothesis lists")
    if not refs:
        raise DataError("nothing to score")
    tp = fp = ref_n = hyp_n = 0
    tp_e = fp_e = tn_e = fn_e = 0
    duration = 0.0
    for ref, hyp in zip(refs, hyps):
        a, b = ovlp_score(ref, hyp)
        tp += a
        fp += b
        ref_n += len(ref)
        hyp_n += len(hyp)
        e = epoch_confusion(ref, hyp)
        tp_e += e[0]
        fp_e += e[1]
        tn_e += e[2]
        fn_e += e[3]
        duration += ref.total_duration
    return ScoreReport(tp, fp, ref_n, hyp_n, tp_e, fp_e, tn_e, fn_e, duration)


def roc_sweep(
    posteriors: list[np.ndarray],
    refs: list[EventList],
    cfg: PostprocessConfig,
    thresholds: list[float],
) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) per grid point, threshold descending.

    tpr is Any-Overlap sensitivity / 100; fpr is the epoch false-positive
    rate. The postprocess config's own threshold field is ignored in favor
    of the grid value.
    """
    if len(thresholds) == 0:
        raise ConfigError("empty threshold grid")
    grid = [float(t) for t in thresholds]
    if any(not 0.0 <= t <= 1.0 for t in grid):
        raise ConfigError("thresholds must lie in [0, 1]")
    if grid != sorted(grid, reverse=True):
        raise ConfigError("thresholds must be sorted descending")
    if len(posteriors) != len(refs):
        raise DataError(f"{len(posteriors)} posterior sets vs {len(refs)} references")

    out = []
    for theta in grid:
        theta_cfg = PostprocessConfig(
            threshold=theta,
            smoothing=cfg.smoothing,
            min_duration=cfg.min_duration,
            merge_gap=cfg.merge_gap,
        )
        hyps = [to_events(p, theta_cfg) for p in posteriors]
        report = score_events(refs, hyps)
        out.append((theta, report.epoch_fpr, report.sensitivity / 100.0))
    return out


def roc_auc(points: list[tuple[float, float, float]]) -> float:
    """Trapezoidal area under the swept curve, anchored at (0,0) and (1,1)."""
    xy = sorted((fpr, tpr) for _, fpr, tpr in points)
    xs = [0.0] + [p[0] for p in xy] + [1.0]
    ys = [0.0] + [p[1] for p in xy] + [1.0]
    return float(np.trapezoid(ys, xs))


def ranking_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outranks a random negative (ties half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(np.sum(labels))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ranking_auc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    rank_position = 1.0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (rank_position + rank_position + (j - i)) / 2.0
        rank_position += j - i + 1
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[labels]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def report_json(report: ScoreReport, config: dict | None = None) -> str:
    doc = {
        "events": {
            "tp": report.tp,
            "fp": report.fp,
            "ref_count": report.ref_count,
            "hyp_count": report.hyp_count,
        },
        "epochs": {
            "tp": report.tp_e,
            "fp": report.fp_e,
            "tn": report.tn_e,
            "fn": report.fn_e,
        },
        "sensitivity_pct": report.sensitivity,
        "specificity_pct": report.specificity,
        "fa_per_24h": report.false_alarms_per_24h,
        "total_duration_s": report.total_duration,
    }
    if config:
        doc["config"] = config
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def roc_csv(points: list[tuple[float, float, float]]) -> str:
    lines = ["threshold,fpr,tpr"]
    lines += [f"{t:.17g},{fpr:.17g},{tpr:.17g}" for t, fpr, tpr in points]
    return "\n".join(lines) + "\n"


def roc_svg(points: list[tuple[float, float, float]], title: str = "ROC") -> str:
    """Minimal standalone SVG line plot of tpr vs fpr."""
    width, height, margin = 440, 440, 50
    span = width - 2 * margin

    def sx(x: float) -> float:
        return margin + x * span

    def sy(y: float) -> float:
        return height - margin - y * span

    xy = sorted((fpr, tpr) for _, fpr, tpr in points)
    xy = [(0.0, 0.0)] + xy + [(1.0, 1.0)]
    path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in xy)
    ticks = []
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        ticks.append(
            f'<text x="{sx(v):.0f}" y="{height - margin + 18}" '
            f'text-anchor="middle" font-size="11">{v:g}</text>'
        )
        ticks.append(
            f'<text x="{margin - 8}" y="{sy(v) + 4:.0f}" '
            f'text-anchor="end" font-size="11">{v:g}</text>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'<text x="{width // 2}" y="24" text-anchor="middle" font-size="14">{title}</text>'
        f'<line x1="{margin}" y1="{sy(0):.0f}" x2="{width - margin}" y2="{sy(0):.0f}" '
        f'stroke="black"/>'
        f'<line x1="{margin}" y1="{sy(0):.0f}" x2="{margin}" y2="{sy(1):.0f}" '
        f'stroke="black"/>'
        f'<line x1="{sx(0):.0f}" y1="{sy(0):.0f}" x2="{sx(1):.0f}" y2="{sy(1):.0f}" '
        f'stroke="#bbbbbb" stroke-dasharray="4 4"/>'
        + "".join(ticks)
        + f'<text x="{width // 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">epoch FPR</text>'
        f'<polyline points="{path}" fill="none" stroke="#1f6fb2" stroke-width="2"/>'
        "</svg>\n"
    )
