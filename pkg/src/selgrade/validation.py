"""Validation of calibrated thresholds against fresh manually graded exams.

The difficult band of an exam is graded by hand anyway, so it doubles as a
drift detector for free: compare the band's accuracy against the same band
measured on the calibration data. A drop on either side beyond the chosen
margin rejects the session; holding up on both sides with enough evidence
accepts it. The auto-graded buckets carry no manual grades, so their floors
are certified separately by a zero-failure spot check sized from the floor
itself.

Deltas are exam minus reference, one per side of the optimal threshold.
Each side only counts as evidence when the exam put at least one graded
record there, and acceptance additionally demands a minimum count per side.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .calibration import (
    AccuracyConstraints,
    ScoredDataset,
    ScoredRecord,
    Thresholds,
    accuracy_difficult,
)
from .corpus import Grade
from .grader import (
    DecisionKind,
    GradingSession,
    SessionStatus,
    open_session,
    submit_manual_grade,
)

__all__ = [
    "Verdict",
    "ReferenceProfile",
    "RiskEstimate",
    "ValidationReport",
    "SpotCheckSide",
    "SpotCheckPlan",
    "SpotCheckSideResult",
    "SpotCheckResult",
    "normal_upper_tail",
    "build_reference",
    "validate",
    "apply_verdict",
    "estimate_risk",
    "zero_failure_sample_size",
    "binomial_at_least",
    "plan_spot_check",
    "evaluate_spot_check",
    "simulate_degraded",
    "sample_exam",
    "run_validation_trials",
    "reference_to_dict",
    "reference_from_dict",
    "spot_check_plan_to_dict",
    "spot_check_plan_from_dict",
]

DEFAULT_N_MIN = 5


class Verdict(str, Enum):
    ACCEPT = "accept"
    ACCEPT_WITH_WARNING = "accept_with_warning"
    REJECT = "reject"
    INSUFFICIENT_EVIDENCE = "insufficient_evidence"


@dataclass(frozen=True)
class ReferenceProfile:
    """Difficult-band accuracies on the calibration set, plus bootstrap
    spread tables for judging exam deltas at various exam band sizes."""

    t_incorrect: float
    t_star: float
    t_correct: float
    accuracy_incorrect: float
    accuracy_correct: float
    n_incorrect: int
    n_correct: int
    sigma_incorrect: dict[int, float]
    sigma_correct: dict[int, float]

    def sigma_for(self, side: str, n: int) -> float:
        table = self.sigma_incorrect if side == "incorrect" else self.sigma_correct
        key = min(table, key=lambda k: (abs(k - n), k))
        return table[key]


@dataclass(frozen=True)
class RiskEstimate:
    violation_probability: float
    sigma: float
    z: float | None
    method: str


@dataclass(frozen=True)
class ValidationReport:
    session_id: str
    verdict: Verdict
    margin: float
    delta_incorrect: float | None
    delta_correct: float | None
    n_diff_incorrect: int
    n_diff_correct: int
    exam_accuracy_incorrect: float | None
    exam_accuracy_correct: float | None
    reference_accuracy_incorrect: float
    reference_accuracy_correct: float
    recommended_tightening: float
    risk_incorrect: RiskEstimate | None
    risk_correct: RiskEstimate | None
    violation_probability: float | None

    def to_dict(self) -> dict:
        def risk_value(risk: RiskEstimate | None) -> float | None:
            return risk.violation_probability if risk else None

        return {
            "session_id": self.session_id,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "delta_incorrect": self.delta_incorrect,
            "delta_correct": self.delta_correct,
            "n_diff_incorrect": self.n_diff_incorrect,
            "n_diff_correct": self.n_diff_correct,
            "exam_accuracy": {
                "incorrect": self.exam_accuracy_incorrect,
                "correct": self.exam_accuracy_correct,
            },
            "reference_accuracy": {
                "incorrect": self.reference_accuracy_incorrect,
                "correct": self.reference_accuracy_correct,
            },
            "recommended_tightening": self.recommended_tightening,
            "risk": {
                "violation_probability": self.violation_probability,
                "incorrect": risk_value(self.risk_incorrect),
                "correct": risk_value(self.risk_correct),
                "method": "normal_tail",
            },
        }


def normal_upper_tail(z: float) -> float:
    """P(Z > z) for standard normal Z."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def build_reference(
    scored: ScoredDataset,
    thresholds: Thresholds,
    exam_sizes: list[int],
    n_boot: int = 1000,
    seed: int = 0,
) -> ReferenceProfile:
    """Measure both difficult sub-bands on the calibration set and bootstrap
    the spread of an exam-sized resample for each anticipated exam size.

    An empty sub-band is vacuously accurate (1.0) with zero spread; exams
    will not produce evidence there either unless the data drifted.
    """
    if not exam_sizes:
        raise ValueError("exam_sizes must be non-empty")
    if any(m < 1 for m in exam_sizes):
        raise ValueError("exam sizes must be positive")
    if n_boot < 1:
        raise ValueError("n_boot must be positive")

    acc_i, n_i = accuracy_difficult(
        scored, thresholds.t_incorrect, thresholds.t_star, Grade.INCORRECT
    )
    acc_c, n_c = accuracy_difficult(
        scored, thresholds.t_star, thresholds.t_correct, Grade.CORRECT
    )

    scores = scored.scores()
    correct = scored.correct_mask()
    low = (scores >= thresholds.t_incorrect) & (scores <= thresholds.t_star)
    high = (scores >= thresholds.t_star) & (scores <= thresholds.t_correct)
    hits_low = (~correct[low]).astype(float)
    hits_high = correct[high].astype(float)

    rng = np.random.default_rng(seed)

    def sigma_table(hits: np.ndarray) -> dict[int, float]:
        table: dict[int, float] = {}
        for m in sorted(set(exam_sizes)):
            if hits.size == 0:
                table[m] = 0.0
                continue
            means = rng.choice(hits, size=(n_boot, m), replace=True).mean(axis=1)
            table[m] = float(means.std(ddof=0))
        return table

    return ReferenceProfile(
        t_incorrect=thresholds.t_incorrect,
        t_star=thresholds.t_star,
        t_correct=thresholds.t_correct,
        accuracy_incorrect=acc_i,
        accuracy_correct=acc_c,
        n_incorrect=n_i,
        n_correct=n_c,
        sigma_incorrect=sigma_table(hits_low),
        sigma_correct=sigma_table(hits_high),
    )


def estimate_risk(
    delta: float,
    sigma: float,
    method: str = "normal_tail",
    mc_samples: int = 100_000,
    seed: int = 0,
) -> RiskEstimate:
    """Probability that the true band accuracy sits below the reference,
    given the observed delta and the bootstrap spread sigma.

    Zero spread degenerates to a step: the observed sign is the answer.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if method not in ("normal_tail", "monte_carlo"):
        raise ValueError(f"unknown risk method: {method}")
    if sigma == 0.0:
        p = 0.0 if delta >= 0 else 1.0
        return RiskEstimate(violation_probability=p, sigma=0.0, z=None, method=method)
    z = delta / sigma
    if method == "normal_tail":
        p = normal_upper_tail(z)
    else:
        rng = np.random.default_rng(seed)
        p = float(np.mean(rng.normal(delta, sigma, mc_samples) < 0))
    return RiskEstimate(violation_probability=p, sigma=sigma, z=z, method=method)


def _exam_band_accuracy(
    session: GradingSession, side: str
) -> tuple[float | None, int]:
    """Manual-grade accuracy of one difficult sub-band of the exam.

    Low side [t_incorrect, t_star] scores against Incorrect, high side
    [t_star, t_correct] against Correct; a record exactly at t_star sits in
    both. Only graded deferred records count.
    """
    t = session.thresholds
    hits = 0
    n = 0
    for rid in session.queue:
        grade = session.manual_grades.get(rid)
        if grade is None:
            continue
        s = session.decisions[rid].s
        if side == "incorrect":
            if not (t.t_incorrect <= s <= t.t_star):
                continue
            hits += grade.grade is Grade.INCORRECT
        else:
            if not (t.t_star <= s <= t.t_correct):
                continue
            hits += grade.grade is Grade.CORRECT
        n += 1
    return (hits / n if n else None), n


def validate(
    session: GradingSession,
    reference: ReferenceProfile,
    margin: float = 0.0,
    n_min: int = DEFAULT_N_MIN,
) -> ValidationReport:
    """Compare the exam's difficult band against the reference profile.

    Reject if any evidenced side degrades beyond the margin. Accept only
    when every evidenced side holds up and both sides carry at least n_min
    graded records; a pass that leans on the margin (some delta below zero)
    accepts with a warning. Anything else is insufficient evidence.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    exam_i, n_i = _exam_band_accuracy(session, "incorrect")
    exam_c, n_c = _exam_band_accuracy(session, "correct")
    delta_i = exam_i - reference.accuracy_incorrect if exam_i is not None else None
    delta_c = exam_c - reference.accuracy_correct if exam_c is not None else None

    evidenced = [d for d in (delta_i, delta_c) if d is not None]
    if any(d < -margin for d in evidenced):
        verdict = Verdict.REJECT
    elif n_i >= n_min and n_c >= n_min:
        verdict = (
            Verdict.ACCEPT_WITH_WARNING
            if any(d < 0 for d in evidenced)
            else Verdict.ACCEPT
        )
    else:
        verdict = Verdict.INSUFFICIENT_EVIDENCE

    tightening = max((max(0.0, -d) for d in evidenced), default=0.0)

    risk_i = (
        estimate_risk(delta_i, reference.sigma_for("incorrect", n_i))
        if delta_i is not None
        else None
    )
    risk_c = (
        estimate_risk(delta_c, reference.sigma_for("correct", n_c))
        if delta_c is not None
        else None
    )
    per_side = [r.violation_probability for r in (risk_i, risk_c) if r is not None]
    combined = None
    if per_side:
        one_minus = 1.0
        for p in per_side:
            one_minus *= 1.0 - p
        combined = 1.0 - one_minus

    return ValidationReport(
        session_id=session.session_id,
        verdict=verdict,
        margin=margin,
        delta_incorrect=delta_i,
        delta_correct=delta_c,
        n_diff_incorrect=n_i,
        n_diff_correct=n_c,
        exam_accuracy_incorrect=exam_i,
        exam_accuracy_correct=exam_c,
        reference_accuracy_incorrect=reference.accuracy_incorrect,
        reference_accuracy_correct=reference.accuracy_correct,
        recommended_tightening=tightening,
        risk_incorrect=risk_i,
        risk_correct=risk_c,
        violation_probability=combined,
    )


def apply_verdict(session: GradingSession, verdict: Verdict) -> SessionStatus:
    """Move the session to its terminal status; insufficient evidence keeps
    it awaiting validation so a spot check or more grading can follow."""
    if verdict in (Verdict.ACCEPT, Verdict.ACCEPT_WITH_WARNING):
        session.status = SessionStatus.VALIDATED
    elif verdict is Verdict.REJECT:
        session.status = SessionStatus.REJECTED
    return session.status


def zero_failure_sample_size(c_min: float, confidence: float) -> int | None:
    """Smallest n such that a bucket at the floor c_min would show at least
    one mismatch among n samples with the requested confidence.

    c_min of 0 needs no checking; c_min of 1 cannot be certified by
    sampling at all (None: check the whole bucket). The result is exact in
    float arithmetic: the ceiling of the log ratio is verified directly
    rather than trusted, since the ratio can land a hair above an integer.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if not 0.0 <= c_min <= 1.0:
        raise ValueError("c_min must lie in [0, 1]")
    if c_min == 0.0:
        return 0
    if c_min == 1.0:
        return None
    tail = 1.0 - confidence
    n = max(1, math.ceil(math.log(tail) / math.log(c_min)) - 1)
    while c_min**n > tail:
        n += 1
    return n


def binomial_at_least(n: int, p: float, k: int) -> float:
    """P(Bin(n, p) >= k), exact combinatorial sum."""
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    return sum(
        math.comb(n, j) * p**j * (1.0 - p) ** (n - j) for j in range(k, n + 1)
    )


@dataclass(frozen=True)
class SpotCheckSide:
    side: str
    bucket_size: int
    n_planned: int
    record_ids: tuple[str, ...]
    whole_bucket: bool
    achievable_confidence: float


@dataclass(frozen=True)
class SpotCheckPlan:
    session_id: str
    confidence: float
    incorrect: SpotCheckSide
    correct: SpotCheckSide

    def all_ids(self) -> tuple[str, ...]:
        return self.incorrect.record_ids + self.correct.record_ids


@dataclass(frozen=True)
class SpotCheckSideResult:
    side: str
    n_checked: int
    n_matching: int
    accuracy: float
    passed: bool
    achieved_confidence: float


@dataclass(frozen=True)
class SpotCheckResult:
    passed: bool
    incorrect: SpotCheckSideResult
    correct: SpotCheckSideResult

    def to_dict(self) -> dict:
        def side(r: SpotCheckSideResult) -> dict:
            return {
                "n_checked": r.n_checked,
                "n_matching": r.n_matching,
                "accuracy": r.accuracy,
                "passed": r.passed,
                "achieved_confidence": r.achieved_confidence,
            }

        return {
            "passed": self.passed,
            "incorrect": side(self.incorrect),
            "correct": side(self.correct),
        }


def _plan_side(
    session: GradingSession,
    kind: DecisionKind,
    side: str,
    c_min: float,
    confidence: float,
    rng: random.Random,
) -> SpotCheckSide:
    bucket = sorted(
        rid for rid, d in session.decisions.items() if d.kind is kind
    )
    required = zero_failure_sample_size(c_min, confidence)
    whole = required is None or required > len(bucket)
    n_planned = len(bucket) if whole else required
    ids = tuple(bucket) if whole else tuple(sorted(rng.sample(bucket, n_planned)))
    if c_min == 0.0:
        achievable = 1.0
    elif c_min == 1.0:
        achievable = 1.0 if whole else 0.0
    else:
        achievable = 1.0 - c_min**n_planned
    return SpotCheckSide(
        side=side,
        bucket_size=len(bucket),
        n_planned=n_planned,
        record_ids=ids,
        whole_bucket=whole,
        achievable_confidence=achievable,
    )


def plan_spot_check(
    session: GradingSession, confidence: float, seed: int = 0
) -> SpotCheckPlan:
    """Size and select a zero-failure sample per auto-graded bucket.

    A bucket smaller than the required sample is checked whole, with the
    correspondingly lower achievable confidence. The selected ids become
    manually gradable on the session.
    """
    rng = random.Random(seed)
    incorrect = _plan_side(
        session,
        DecisionKind.AUTO_INCORRECT,
        "incorrect",
        session.constraints.c_min_incorrect,
        confidence,
        rng,
    )
    correct = _plan_side(
        session,
        DecisionKind.AUTO_CORRECT,
        "correct",
        session.constraints.c_min_correct,
        confidence,
        rng,
    )
    plan = SpotCheckPlan(
        session_id=session.session_id,
        confidence=confidence,
        incorrect=incorrect,
        correct=correct,
    )
    session.spot_check_ids = plan.all_ids()
    return plan


def _evaluate_side(
    session: GradingSession, side_plan: SpotCheckSide, expected: Grade, c_min: float
) -> SpotCheckSideResult:
    missing = [
        rid for rid in side_plan.record_ids if rid not in session.manual_grades
    ]
    if missing:
        raise ValueError(
            f"spot check incomplete: {len(missing)} {side_plan.side} record(s) ungraded"
        )
    n = len(side_plan.record_ids)
    k = sum(
        1
        for rid in side_plan.record_ids
        if session.manual_grades[rid].grade is expected
    )
    if n == 0:
        vacuous = side_plan.bucket_size == 0 or c_min == 0.0
        return SpotCheckSideResult(
            side=side_plan.side,
            n_checked=0,
            n_matching=0,
            accuracy=1.0,
            passed=True,
            achieved_confidence=1.0 if vacuous else 0.0,
        )
    accuracy = k / n
    passed = accuracy >= c_min
    if c_min == 0.0:
        achieved = 1.0
    elif c_min == 1.0:
        achieved = 1.0 if side_plan.whole_bucket and k == n else 0.0
    else:
        achieved = 1.0 - binomial_at_least(n, c_min, k)
    return SpotCheckSideResult(
        side=side_plan.side,
        n_checked=n,
        n_matching=k,
        accuracy=accuracy,
        passed=passed,
        achieved_confidence=achieved,
    )


def evaluate_spot_check(session: GradingSession, plan: SpotCheckPlan) -> SpotCheckResult:
    """Judge both buckets from the manual grades of the planned records.

    A side passes when its observed match rate clears the accuracy floor.
    Achieved confidence is the exact probability that a bucket sitting at
    the floor would have matched fewer records than observed.
    """
    incorrect = _evaluate_side(
        session, plan.incorrect, Grade.INCORRECT, session.constraints.c_min_incorrect
    )
    correct = _evaluate_side(
        session, plan.correct, Grade.CORRECT, session.constraints.c_min_correct
    )
    return SpotCheckResult(
        passed=incorrect.passed and correct.passed,
        incorrect=incorrect,
        correct=correct,
    )


def simulate_degraded(
    session: GradingSession,
    flip_fraction: float,
    seed: int = 0,
    session_id: str | None = None,
) -> GradingSession:
    """Fresh session over the same scores with some true grades flipped.

    Both strata degrade at the same rate: among records whose true grade
    currently agrees with the system's leaning (the auto decision outside
    the band, the nearer side within it), exactly floor(fraction * k) per
    stratum are flipped. Scores are untouched, so decisions and the queue
    are identical; manual grades start empty and the result is marked
    synthetic.
    """
    if not 0.0 <= flip_fraction <= 1.0:
        raise ValueError("flip_fraction must lie in [0, 1]")
    t = session.thresholds
    easy_matching: list[str] = []
    difficult_matching: list[str] = []
    for item in session.scored.items:
        rid = item.record.record_id
        kind = session.decisions[rid].kind
        grade = item.record.grade
        if kind is DecisionKind.AUTO_INCORRECT:
            if grade is Grade.INCORRECT:
                easy_matching.append(rid)
        elif kind is DecisionKind.AUTO_CORRECT:
            if grade is Grade.CORRECT:
                easy_matching.append(rid)
        else:
            leaning = Grade.INCORRECT if item.s <= t.t_star else Grade.CORRECT
            if grade is leaning:
                difficult_matching.append(rid)

    rng = random.Random(seed)
    to_flip: set[str] = set()
    for matching in (sorted(easy_matching), sorted(difficult_matching)):
        n_flip = math.floor(flip_fraction * len(matching))
        to_flip.update(rng.sample(matching, n_flip))

    items = []
    for item in session.scored.items:
        if item.record.record_id in to_flip:
            flipped = (
                Grade.CORRECT if item.record.grade is Grade.INCORRECT else Grade.INCORRECT
            )
            record = replace(item.record, grade=flipped, synthetic=False)
            items.append(ScoredRecord(record=record, s=item.s))
        else:
            items.append(item)
    degraded = ScoredDataset(items=tuple(items), role=session.scored.role)
    return open_session(
        degraded,
        session.thresholds,
        session.constraints,
        session_id or f"{session.session_id}.degraded",
        synthetic=True,
    )


def sample_exam(
    data: ScoredDataset, fraction: float, seed: int = 0, role: str = "E"
) -> ScoredDataset:
    """Draw ceil(fraction * n) records without replacement, order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    n = math.ceil(fraction * len(data.items))
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(data.items)), n))
    return ScoredDataset(items=tuple(data.items[i] for i in chosen), role=role)


def run_validation_trials(
    pool: ScoredDataset,
    thresholds: Thresholds,
    constraints: AccuracyConstraints,
    reference: ReferenceProfile,
    n_trials: int,
    exam_fraction: float,
    margin: float = 0.0,
    seed: int = 0,
    degrade_fraction: float = 0.0,
    n_min: int = DEFAULT_N_MIN,
) -> dict:
    """Repeated exam simulations, manual grading played by the true grades.

    Each trial samples an exam from the pool, optionally degrades it,
    grades the whole queue with the (possibly flipped) true grades, and
    validates. Returns verdict counts plus rates.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    counts: Counter[str] = Counter()
    trial_rng = random.Random(seed)
    for trial in range(n_trials):
        sub_seed = trial_rng.randrange(2**32)
        exam = sample_exam(pool, exam_fraction, seed=sub_seed)
        session = open_session(
            exam, thresholds, constraints, session_id=f"trial{trial}"
        )
        if degrade_fraction > 0.0:
            session = simulate_degraded(session, degrade_fraction, seed=sub_seed + 1)
        for rid in session.queue:
            truth = session.record(rid).record.grade
            submit_manual_grade(session, rid, truth, source="trial")
        report = validate(session, reference, margin=margin, n_min=n_min)
        counts[report.verdict.value] += 1
    out = {verdict.value: counts.get(verdict.value, 0) for verdict in Verdict}
    out["n_trials"] = n_trials
    out["accept_rate"] = (
        out[Verdict.ACCEPT.value] + out[Verdict.ACCEPT_WITH_WARNING.value]
    ) / n_trials
    out["reject_rate"] = out[Verdict.REJECT.value] / n_trials
    return out


def spot_check_plan_to_dict(plan: SpotCheckPlan) -> dict:
    def side(s: SpotCheckSide) -> dict:
        return {
            "side": s.side,
            "bucket_size": s.bucket_size,
            "n_planned": s.n_planned,
            "record_ids": list(s.record_ids),
            "whole_bucket": s.whole_bucket,
            "achievable_confidence": s.achievable_confidence,
        }

    return {
        "session_id": plan.session_id,
        "confidence": plan.confidence,
        "incorrect": side(plan.incorrect),
        "correct": side(plan.correct),
    }


def spot_check_plan_from_dict(payload: dict) -> SpotCheckPlan:
    def side(raw: dict) -> SpotCheckSide:
        return SpotCheckSide(
            side=raw["side"],
            bucket_size=raw["bucket_size"],
            n_planned=raw["n_planned"],
            record_ids=tuple(raw["record_ids"]),
            whole_bucket=raw["whole_bucket"],
            achievable_confidence=raw["achievable_confidence"],
        )

    return SpotCheckPlan(
        session_id=payload["session_id"],
        confidence=payload["confidence"],
        incorrect=side(payload["incorrect"]),
        correct=side(payload["correct"]),
    )


def reference_to_dict(reference: ReferenceProfile) -> dict:
    return {
        "t_incorrect": reference.t_incorrect,
        "t_star": reference.t_star,
        "t_correct": reference.t_correct,
        "accuracy_incorrect": reference.accuracy_incorrect,
        "accuracy_correct": reference.accuracy_correct,
        "n_incorrect": reference.n_incorrect,
        "n_correct": reference.n_correct,
        "sigma_incorrect": {str(k): v for k, v in sorted(reference.sigma_incorrect.items())},
        "sigma_correct": {str(k): v for k, v in sorted(reference.sigma_correct.items())},
    }


def reference_from_dict(payload: dict) -> ReferenceProfile:
    return ReferenceProfile(
        t_incorrect=payload["t_incorrect"],
        t_star=payload["t_star"],
        t_correct=payload["t_correct"],
        accuracy_incorrect=payload["accuracy_incorrect"],
        accuracy_correct=payload["accuracy_correct"],
        n_incorrect=payload["n_incorrect"],
        n_correct=payload["n_correct"],
        sigma_incorrect={int(k): v for k, v in payload["sigma_incorrect"].items()},
        sigma_correct={int(k): v for k, v in payload["sigma_correct"].items()},
    )
