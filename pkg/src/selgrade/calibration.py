"""Threshold calibration over similarity-scored grading records.

A scored record carries the similarity s between the embeddings of
(question, correct answer) and (question, given answer). Two thresholds
split the score axis into three buckets:

    auto-incorrect   s < t_incorrect
    deferred         t_incorrect <= s <= t_correct   (manual grading)
    auto-correct     s > t_correct

Calibration picks the thresholds with maximal auto-graded coverage subject
to per-bucket accuracy floors, evaluated on a labeled dataset. Candidate
thresholds are the distinct observed scores, the midpoints of consecutive
distinct scores, and one sentinel below the minimum plus one above the
maximum. Midpoints matter: a threshold placed between observed values keeps
items off the bucket boundaries, which in turn keeps the deferred band
empty when the two thresholds collapse into one.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import Grade, GradingRecord, record_from_dict, record_to_dict

__all__ = [
    "ScoredRecord",
    "ScoredDataset",
    "AccuracyConstraints",
    "Thresholds",
    "CoverageReport",
    "ClassMetrics",
    "BucketAccuracy",
    "CurvePoint",
    "candidate_thresholds",
    "partition",
    "accuracy_easy",
    "accuracy_difficult",
    "find_optimal_threshold",
    "calibrate",
    "coverage",
    "metrics_at",
    "accuracy_curve",
    "curve_to_csv",
    "scored_to_dict",
    "scored_from_dict",
    "dump_scored_jsonl",
    "load_scored_jsonl",
]


@dataclass(frozen=True)
class ScoredRecord:
    record: GradingRecord
    s: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.s):
            raise ValueError(f"similarity must be finite, got {self.s!r}")


@dataclass(frozen=True)
class ScoredDataset:
    """Scored records plus a role tag ("D", "validation", "exam", ...)."""

    items: tuple[ScoredRecord, ...]
    role: str = "D"

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def scores(self) -> np.ndarray:
        return np.array([item.s for item in self.items], dtype=float)

    def correct_mask(self) -> np.ndarray:
        return np.array(
            [item.record.grade is Grade.CORRECT for item in self.items], dtype=bool
        )


@dataclass(frozen=True)
class AccuracyConstraints:
    c_min_incorrect: float
    c_min_correct: float

    def __post_init__(self) -> None:
        for name, value in (
            ("c_min_incorrect", self.c_min_incorrect),
            ("c_min_correct", self.c_min_correct),
        ):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class Thresholds:
    t_incorrect: float
    t_star: float
    t_correct: float
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.t_incorrect > self.t_correct:
            raise ValueError(
                f"t_incorrect ({self.t_incorrect}) must not exceed "
                f"t_correct ({self.t_correct})"
            )


@dataclass(frozen=True)
class CoverageReport:
    n_incorrect: int
    n_deferred: int
    n_correct: int
    n_total: int
    f_incorrect: float
    f_deferred: float
    f_correct: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClassMetrics:
    threshold: float
    accuracy: float
    precision_correct: float
    recall_correct: float
    precision_incorrect: float
    recall_incorrect: float
    flags: tuple[str, ...] = ()


class BucketAccuracy(NamedTuple):
    accuracy: float
    n: int


class CurvePoint(NamedTuple):
    threshold: float
    accuracy: float
    coverage: float
    n: int


def candidate_thresholds(scores: Sequence[float]) -> np.ndarray:
    """Distinct scores, midpoints of consecutive distinct scores, sentinels."""
    if len(scores) == 0:
        raise ValueError("no scores, no candidates")
    distinct = np.unique(np.asarray(scores, dtype=float))
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    sentinels = np.array([distinct[0] - 1.0, distinct[-1] + 1.0])
    return np.unique(np.concatenate([distinct, midpoints, sentinels]))


def partition(
    data: ScoredDataset, thresholds: Thresholds
) -> tuple[ScoredDataset, ScoredDataset, ScoredDataset]:
    """Split into (auto-incorrect, deferred, auto-correct).

    Boundary ties go to the deferred band: the band is inclusive on both
    ends, the outer buckets are strict.
    """
    incorrect, deferred, correct = [], [], []
    for item in data.items:
        if item.s < thresholds.t_incorrect:
            incorrect.append(item)
        elif item.s > thresholds.t_correct:
            correct.append(item)
        else:
            deferred.append(item)
    return (
        ScoredDataset(items=tuple(incorrect), role=data.role),
        ScoredDataset(items=tuple(deferred), role=data.role),
        ScoredDataset(items=tuple(correct), role=data.role),
    )


def accuracy_easy(data: ScoredDataset, threshold: float, side: Grade) -> BucketAccuracy:
    """Bucket accuracy at a single threshold.

    side=CORRECT: fraction of items with s > threshold graded Correct.
    side=INCORRECT: fraction of items with s < threshold graded Incorrect.
    Empty bucket: accuracy 1.0 with n = 0 (vacuous, callers must check n).
    """
    scores = data.scores()
    correct = data.correct_mask()
    if side is Grade.CORRECT:
        in_bucket = scores > threshold
        hits = correct[in_bucket]
    else:
        in_bucket = scores < threshold
        hits = ~correct[in_bucket]
    n = int(in_bucket.sum())
    if n == 0:
        return BucketAccuracy(1.0, 0)
    return BucketAccuracy(float(hits.sum()) / n, n)


def accuracy_difficult(
    data: ScoredDataset, lo: float, hi: float, side: Grade
) -> BucketAccuracy:
    """Band accuracy over lo <= s <= hi, inclusive on both ends."""
    scores = data.scores()
    correct = data.correct_mask()
    in_band = (scores >= lo) & (scores <= hi)
    n = int(in_band.sum())
    if n == 0:
        return BucketAccuracy(1.0, 0)
    hits = correct[in_band] if side is Grade.CORRECT else ~correct[in_band]
    return BucketAccuracy(float(hits.sum()) / n, n)


def _sorted_arrays(data: ScoredDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    scores = data.scores()
    correct = data.correct_mask()
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    c_sorted = correct[order]
    # cum_correct[k] = number of Correct among the k lowest-scored items
    cum_correct = np.concatenate([[0], np.cumsum(c_sorted)])
    return s_sorted, c_sorted.astype(int), cum_correct


def find_optimal_threshold(data: ScoredDataset) -> tuple[float, float]:
    """Single threshold maximizing accuracy of the rule s > T -> Correct.

    Among equally accurate candidates, values strictly between observed
    scores are preferred (smallest such), so the returned threshold avoids
    sitting exactly on a data point whenever possible; otherwise the
    smallest optimal candidate wins. Keeping T off the data points keeps
    the two inclusive difficult bands [t_incorrect, T] and [T, t_correct]
    disjoint in practice.
    """
    if len(data) == 0:
        raise ValueError("cannot place a threshold on an empty dataset")
    s_sorted, _, cum_correct = _sorted_arrays(data)
    n = len(s_sorted)
    total_correct = int(cum_correct[-1])
    cands = candidate_thresholds(s_sorted)

    # items predicted Incorrect are those with s <= T
    at_or_below = np.searchsorted(s_sorted, cands, side="right")
    correct_above = total_correct - cum_correct[at_or_below]
    incorrect_below_or_at = at_or_below - cum_correct[at_or_below]
    hits = correct_above + incorrect_below_or_at

    best_hits = hits.max()
    optimal = hits == best_hits
    observed = np.isin(cands, np.unique(s_sorted))
    preferred = optimal & ~observed
    pick = int(np.argmax(preferred)) if preferred.any() else int(np.argmax(optimal))
    return float(cands[pick]), float(best_hits) / n


def _best_side_threshold(
    s_sorted: np.ndarray,
    cum_correct: np.ndarray,
    cands: np.ndarray,
    c_min: float,
    side: Grade,
) -> float | None:
    """Qualifying candidate with maximal bucket, ties toward the smallest.

    Qualifying means the bucket is non-empty and meets the accuracy floor.
    Returns None when nothing qualifies.
    """
    n = len(s_sorted)
    total_correct = int(cum_correct[-1])
    if side is Grade.INCORRECT:
        sizes = np.searchsorted(s_sorted, cands, side="left")
        good = sizes - cum_correct[sizes]
    else:
        at_or_below = np.searchsorted(s_sorted, cands, side="right")
        sizes = n - at_or_below
        good = total_correct - cum_correct[at_or_below]
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(sizes > 0, good / np.maximum(sizes, 1), 0.0)
    qualifying = (sizes > 0) & (acc >= c_min)
    if not qualifying.any():
        return None
    best_size = sizes[qualifying].max()
    mask = qualifying & (sizes == best_size)
    return float(cands[int(np.argmax(mask))])


def calibrate(
    data: ScoredDataset, constraints: AccuracyConstraints
) -> tuple[Thresholds, CoverageReport]:
    """Pick (t_incorrect, t_correct) with maximal coverage under the floors.

    Each side independently takes the qualifying candidate whose bucket is
    largest (ties toward the smallest candidate). An unqualifiable side gets
    the sentinel that empties its bucket and a zero-coverage flag. If the
    searches cross (t_correct < t_incorrect), t_correct is raised to
    t_incorrect and `normalized` is set; the raised threshold sits between
    observed scores whenever the incorrect side's winner was a midpoint, so
    the collapse does not silently defer boundary items.
    """
    if len(data) == 0:
        raise ValueError("cannot calibrate on an empty dataset")
    s_sorted, _, cum_correct = _sorted_arrays(data)
    cands = candidate_thresholds(s_sorted)
    flags: list[str] = []

    t_incorrect = _best_side_threshold(
        s_sorted, cum_correct, cands, constraints.c_min_incorrect, Grade.INCORRECT
    )
    if t_incorrect is None:
        t_incorrect = float(s_sorted[0] - 1.0)
        flags.append("no_qualifying_incorrect")

    t_correct = _best_side_threshold(
        s_sorted, cum_correct, cands, constraints.c_min_correct, Grade.CORRECT
    )
    if t_correct is None:
        t_correct = float(s_sorted[-1] + 1.0)
        flags.append("no_qualifying_correct")

    normalized = False
    if t_correct < t_incorrect:
        t_correct = t_incorrect
        normalized = True

    t_star, _ = find_optimal_threshold(data)
    thresholds = Thresholds(
        t_incorrect=t_incorrect,
        t_star=t_star,
        t_correct=t_correct,
        normalized=normalized,
    )
    return thresholds, coverage(data, thresholds, extra_flags=tuple(flags))


def coverage(
    data: ScoredDataset, thresholds: Thresholds, extra_flags: tuple[str, ...] = ()
) -> CoverageReport:
    incorrect, deferred, correct = partition(data, thresholds)
    n = len(data)
    flags = list(extra_flags)
    if n == 0:
        flags.append("empty_dataset")
        return CoverageReport(0, 0, 0, 0, 0.0, 0.0, 0.0, tuple(flags))
    return CoverageReport(
        n_incorrect=len(incorrect),
        n_deferred=len(deferred),
        n_correct=len(correct),
        n_total=n,
        f_incorrect=len(incorrect) / n,
        f_deferred=len(deferred) / n,
        f_correct=len(correct) / n,
        flags=tuple(flags),
    )


def metrics_at(data: ScoredDataset, threshold: float) -> ClassMetrics:
    """Confusion metrics for the single-threshold rule s > T -> Correct.

    Degenerate 0/0 ratios are reported as 1.0 and flagged.
    """
    scores = data.scores()
    correct = data.correct_mask()
    pred_correct = scores > threshold
    tp = int((pred_correct & correct).sum())
    fp = int((pred_correct & ~correct).sum())
    fn = int((~pred_correct & correct).sum())
    tn = int((~pred_correct & ~correct).sum())
    flags: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            flags.append(f"vacuous_{name}")
            return 1.0
        return num / den

    return ClassMetrics(
        threshold=threshold,
        accuracy=ratio(tp + tn, len(data), "accuracy"),
        precision_correct=ratio(tp, tp + fp, "precision_correct"),
        recall_correct=ratio(tp, tp + fn, "recall_correct"),
        precision_incorrect=ratio(tn, tn + fn, "precision_incorrect"),
        recall_incorrect=ratio(tn, tn + fp, "recall_incorrect"),
        flags=tuple(flags),
    )


def accuracy_curve(data: ScoredDataset, side: Grade, n_points: int) -> list[CurvePoint]:
    """Easy-bucket accuracy and coverage on an even grid over [min s, max s]."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    if len(data) == 0:
        raise ValueError("cannot trace a curve over an empty dataset")
    scores = data.scores()
    grid = np.linspace(float(scores.min()), float(scores.max()), n_points)
    n_total = len(data)
    points = []
    for t in grid:
        acc, n = accuracy_easy(data, float(t), side)
        points.append(CurvePoint(float(t), acc, n / n_total, n))
    return points


def curve_to_csv(points: Iterable[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "accuracy", "coverage", "n"])
    for p in points:
        writer.writerow([repr(p.threshold), repr(p.accuracy), repr(p.coverage), p.n])
    return buf.getvalue()


def scored_to_dict(item: ScoredRecord) -> dict:
    out = record_to_dict(item.record)
    out["s"] = item.s
    return out


def scored_from_dict(raw: dict) -> ScoredRecord:
    payload = {k: v for k, v in raw.items() if k != "s"}
    return ScoredRecord(record=record_from_dict(payload), s=float(raw["s"]))


def dump_scored_jsonl(data: ScoredDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in data.items:
            fh.write(json.dumps(scored_to_dict(item), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_scored_jsonl(path: str, role: str = "D") -> ScoredDataset:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                items.append(scored_from_dict(json.loads(line)))
    return ScoredDataset(items=tuple(items), role=role)
