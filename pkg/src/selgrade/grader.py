"""Grading sessions: apply calibrated thresholds, queue the deferred middle.

A session takes a scored exam and splits it three ways. Records outside the
deferral band are decided automatically; records inside it go onto a manual
queue ordered by ambiguity, most ambiguous first (closest to the optimal
threshold). Manual grades land in the session and, once every deferred
record has one, the session is ready for validation.

Manual grades are accepted only for queued records and for records later
singled out by a spot check. Resubmitting overwrites; the event log kept by
the service layer preserves history.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .calibration import (
    AccuracyConstraints,
    ScoredDataset,
    ScoredRecord,
    Thresholds,
    scored_to_dict,
    scored_from_dict,
)
from .corpus import Grade

__all__ = [
    "DecisionKind",
    "Decision",
    "ManualGrade",
    "SessionStatus",
    "GradingSession",
    "open_session",
    "next_deferred",
    "submit_manual_grade",
    "session_summary",
    "session_to_dict",
    "session_from_dict",
]


class DecisionKind(str, Enum):
    AUTO_INCORRECT = "auto_incorrect"
    AUTO_CORRECT = "auto_correct"
    DEFERRED = "deferred"


class SessionStatus(str, Enum):
    OPEN = "open"
    AWAITING_VALIDATION = "awaiting_validation"
    VALIDATED = "validated"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Decision:
    record_id: str
    s: float
    kind: DecisionKind


@dataclass(frozen=True)
class ManualGrade:
    record_id: str
    grade: Grade
    source: str = "manual"


@dataclass
class GradingSession:
    session_id: str
    scored: ScoredDataset
    thresholds: Thresholds
    constraints: AccuracyConstraints
    decisions: dict[str, Decision]
    queue: tuple[str, ...]
    manual_grades: dict[str, ManualGrade] = field(default_factory=dict)
    spot_check_ids: tuple[str, ...] = ()
    status: SessionStatus = SessionStatus.OPEN
    synthetic: bool = False

    def record(self, record_id: str) -> ScoredRecord:
        for item in self.scored.items:
            if item.record.record_id == record_id:
                return item
        raise KeyError(record_id)

    def gradable_ids(self) -> set[str]:
        return set(self.queue) | set(self.spot_check_ids)


def decide(s: float, thresholds: Thresholds) -> DecisionKind:
    """Three-way split; scores on either boundary defer."""
    if s < thresholds.t_incorrect:
        return DecisionKind.AUTO_INCORRECT
    if s > thresholds.t_correct:
        return DecisionKind.AUTO_CORRECT
    return DecisionKind.DEFERRED


def open_session(
    scored: ScoredDataset,
    thresholds: Thresholds,
    constraints: AccuracyConstraints,
    session_id: str,
    synthetic: bool = False,
) -> GradingSession:
    decisions: dict[str, Decision] = {}
    deferred: list[tuple[float, str]] = []
    for item in scored.items:
        rid = item.record.record_id
        if rid in decisions:
            raise ValueError(f"duplicate record_id in exam: {rid}")
        kind = decide(item.s, thresholds)
        decisions[rid] = Decision(record_id=rid, s=item.s, kind=kind)
        if kind is DecisionKind.DEFERRED:
            deferred.append((abs(item.s - thresholds.t_star), rid))
    queue = tuple(rid for _, rid in sorted(deferred))
    status = SessionStatus.OPEN if queue else SessionStatus.AWAITING_VALIDATION
    return GradingSession(
        session_id=session_id,
        scored=scored,
        thresholds=thresholds,
        constraints=constraints,
        decisions=decisions,
        queue=queue,
        status=status,
        synthetic=synthetic,
    )


def next_deferred(session: GradingSession, k: int = 1) -> list[str]:
    """The next k ungraded queue entries, most ambiguous first."""
    if k < 1:
        raise ValueError("k must be positive")
    pending = [rid for rid in session.queue if rid not in session.manual_grades]
    return pending[:k]


def submit_manual_grade(
    session: GradingSession, record_id: str, grade: Grade, source: str = "manual"
) -> GradingSession:
    """Record a human grade for a queued or spot-checked record.

    Overwrites any earlier grade for the same record. When the last queued
    record is graded an open session moves to awaiting_validation.
    """
    if record_id not in session.gradable_ids():
        raise ValueError(
            f"record {record_id!r} is not deferred or spot-checked in this session"
        )
    session.manual_grades[record_id] = ManualGrade(
        record_id=record_id, grade=grade, source=source
    )
    if session.status is SessionStatus.OPEN and not next_deferred(session, len(session.queue)):
        session.status = SessionStatus.AWAITING_VALIDATION
    return session


def session_summary(session: GradingSession) -> dict:
    kinds = [d.kind for d in session.decisions.values()]
    n = len(kinds)
    n_incorrect = sum(1 for k in kinds if k is DecisionKind.AUTO_INCORRECT)
    n_correct = sum(1 for k in kinds if k is DecisionKind.AUTO_CORRECT)
    n_deferred = sum(1 for k in kinds if k is DecisionKind.DEFERRED)
    graded = sum(1 for rid in session.queue if rid in session.manual_grades)
    return {
        "session_id": session.session_id,
        "status": session.status.value,
        "n_total": n,
        "n_auto_incorrect": n_incorrect,
        "n_auto_correct": n_correct,
        "n_deferred": n_deferred,
        "manual_graded": graded,
        "manual_remaining": n_deferred - graded,
        "workload_reduction": (n_incorrect + n_correct) / n if n else 0.0,
        "synthetic": session.synthetic,
    }


def session_to_dict(session: GradingSession) -> dict:
    return {
        "session_id": session.session_id,
        "scored": {
            "role": session.scored.role,
            "items": [scored_to_dict(item) for item in session.scored.items],
        },
        "thresholds": {
            "t_incorrect": session.thresholds.t_incorrect,
            "t_star": session.thresholds.t_star,
            "t_correct": session.thresholds.t_correct,
            "normalized": session.thresholds.normalized,
        },
        "constraints": {
            "c_min_incorrect": session.constraints.c_min_incorrect,
            "c_min_correct": session.constraints.c_min_correct,
        },
        "manual_grades": {
            rid: {"grade": mg.grade.value, "source": mg.source}
            for rid, mg in sorted(session.manual_grades.items())
        },
        "spot_check_ids": list(session.spot_check_ids),
        "status": session.status.value,
        "synthetic": session.synthetic,
    }


def session_from_dict(payload: dict) -> GradingSession:
    thresholds = Thresholds(
        t_incorrect=payload["thresholds"]["t_incorrect"],
        t_star=payload["thresholds"]["t_star"],
        t_correct=payload["thresholds"]["t_correct"],
        normalized=payload["thresholds"]["normalized"],
    )
    constraints = AccuracyConstraints(
        c_min_incorrect=payload["constraints"]["c_min_incorrect"],
        c_min_correct=payload["constraints"]["c_min_correct"],
    )
    scored = ScoredDataset(
        items=tuple(scored_from_dict(raw) for raw in payload["scored"]["items"]),
        role=payload["scored"]["role"],
    )
    session = open_session(
        scored=scored,
        thresholds=thresholds,
        constraints=constraints,
        session_id=payload["session_id"],
        synthetic=payload["synthetic"],
    )
    session.spot_check_ids = tuple(payload["spot_check_ids"])
    for rid, entry in payload["manual_grades"].items():
        session.manual_grades[rid] = ManualGrade(
            record_id=rid, grade=Grade(entry["grade"]), source=entry["source"]
        )
    session.status = SessionStatus(payload["status"])
    return session
