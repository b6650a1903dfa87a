from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from selgrade.calibration import ScoredDataset, ScoredRecord
from selgrade.corpus import Grade, GradingRecord


def make_record(
    record_id: str,
    grade: Grade,
    question_id: str = "q1",
    question: str = "what is photosynthesis",
    correct_answer: str = "conversion of light to chemical energy",
    given_answer: str = "plants make food from light",
) -> GradingRecord:
    return GradingRecord(
        record_id=record_id,
        question_id=question_id,
        question=question,
        correct_answer=correct_answer,
        given_answer=given_answer,
        grade=grade,
    )


def make_scored(pairs, role: str = "D") -> ScoredDataset:
    """pairs: iterable of (score, grade_char) with grade_char in {"c", "i"}."""
    items = []
    for i, (s, g) in enumerate(pairs):
        grade = Grade.CORRECT if g == "c" else Grade.INCORRECT
        items.append(ScoredRecord(record=make_record(f"r{i}", grade), s=float(s)))
    return ScoredDataset(items=tuple(items), role=role)


@pytest.fixture
def four_item_dataset() -> ScoredDataset:
    """The reference calibration fixture: two incorrect below two correct."""
    return make_scored([(0.1, "i"), (0.3, "i"), (0.6, "c"), (0.9, "c")])
