"""Scoring of inferred segmentations against ground truth.

Each message is scored on its interior cut set: precision/recall/F1 for
exact matches, the same after a one-byte-tolerant matching of the
leftovers, and their geometric mean as the headline per-message score
(coarse segmenters miss mostly by exactly one byte, so the gap between
the exact and the tolerant F1 is the interesting quantity).  Per-trace
scores are medians over messages, taking the lower of the two middle
values for even counts.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .model import GroundTruth, Segmentation, UsageError


@dataclass(frozen=True)
class MessageScore:
    exact_precision: float
    exact_recall: float
    exact_f1: float
    near_precision: float
    near_recall: float
    near_f1: float
    fms_like: float


@dataclass(frozen=True)
class ScoreReport:
    """Per-message scores plus trace-level medians and counts."""

    per_message: dict
    medians: dict
    message_count: int
    cut_count: int
    unknown_segments: int
    missing_truth: int
    name: str = ""


def _prf(matched: int, inferred: int, true: int) -> tuple:
    if inferred == 0 and true == 0:
        return 1.0, 1.0, 1.0
    precision = matched / inferred if inferred else 0.0
    recall = matched / true if true else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _near_matches(left, right) -> int:
    """Greedy left-to-right matching at distance <= 1 on sorted lists."""
    i = j = matched = 0
    while i < len(left) and j < len(right):
        if abs(left[i] - right[j]) <= 1:
            matched += 1
            i += 1
            j += 1
        elif left[i] < right[j]:
            i += 1
        else:
            j += 1
    return matched


def score_message(inferred, true) -> MessageScore:
    """Exact and one-byte-tolerant boundary scores of one message."""
    I = sorted(set(inferred))
    T = sorted(set(true))
    exact = set(I) & set(T)
    p_e, r_e, f_e = _prf(len(exact), len(I), len(T))

    rest_i = [c for c in I if c not in exact]
    rest_t = [c for c in T if c not in exact]
    near = len(exact) + _near_matches(rest_i, rest_t)
    p_n, r_n, f_n = _prf(near, len(I), len(T))

    return MessageScore(p_e, r_e, f_e, p_n, r_n, f_n, math.sqrt(f_e * f_n))


def median_low(values):
    """Median; the lower of the two middle values for even counts."""
    if not values:
        raise UsageError("median of an empty list")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def _true_ranges(cuts, length):
    bounds = [0] + list(cuts) + [length]
    return list(zip(bounds, bounds[1:]))


def _unknown_segments(seg: Segmentation, true_cuts, length: int) -> int:
    """Inferred segments matching no true field range even within one byte at both ends."""
    truth = _true_ranges(true_cuts, length)
    unknown = 0
    for s, e in _true_ranges(seg.cuts, length):
        if not any(abs(s - ts) <= 1 and abs(e - te) <= 1 for ts, te in truth):
            unknown += 1
    return unknown


def score_trace(segmentations, truth: GroundTruth, messages, name: str = "") -> ScoreReport:
    """Score a whole trace; messages without ground truth are excluded and counted."""
    by_id = {m.id: m for m in messages}
    per_message = {}
    cut_count = 0
    unknown = 0
    missing = 0
    for seg in segmentations:
        if seg.message_id not in truth.cuts or seg.message_id not in by_id:
            missing += 1
            continue
        true_cuts = truth.cuts[seg.message_id]
        per_message[seg.message_id] = score_message(seg.cuts, true_cuts)
        cut_count += len(seg.cuts)
        unknown += _unknown_segments(seg, true_cuts, len(by_id[seg.message_id].payload))

    medians = {}
    if per_message:
        scores = list(per_message.values())
        for metric in ("exact_f1", "near_f1", "fms_like"):
            medians[metric] = median_low([getattr(s, metric) for s in scores])
    return ScoreReport(per_message=per_message, medians=medians,
                       message_count=len(per_message), cut_count=cut_count,
                       unknown_segments=unknown, missing_truth=missing, name=name)


def compare_csv(reports) -> str:
    """Aligned per-message score table, one column per pipeline, medians last."""
    reports = list(reports)
    names = [r.name or f"pipeline{i}" for i, r in enumerate(reports)]
    shared = sorted(set.intersection(*(set(r.per_message) for r in reports))) if reports else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["message_id"] + names)
    for mid in shared:
        writer.writerow([mid] + [f"{r.per_message[mid].fms_like:.4f}" for r in reports])
    writer.writerow(["median"] + [f"{r.medians.get('fms_like', 0.0):.4f}" for r in reports])
    return buf.getvalue()


def report_to_json(report: ScoreReport) -> dict:
    return {
        "name": report.name,
        "medians": {k: round(v, 6) for k, v in report.medians.items()},
        "message_count": report.message_count,
        "cut_count": report.cut_count,
        "unknown_segments": report.unknown_segments,
        "missing_truth": report.missing_truth,
        "per_message": {
            str(mid): {
                "exact_f1": round(s.exact_f1, 6),
                "near_f1": round(s.near_f1, 6),
                "fms_like": round(s.fms_like, 6),
            }
            for mid, s in sorted(report.per_message.items())
        },
    }
