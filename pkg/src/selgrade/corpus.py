"""Grading-record corpus: ingestion, cleaning, balancing, and splits.

Records are (question, correct answer, given answer, grade) tuples collected
from human graders. Everything downstream (embedding, calibration, grading
sessions) consumes the `Corpus` produced here, so this module owns text
normalization, field limits, deduplication, class balancing via synthetic
negatives, and question-disjoint splits.
"""

from __future__ import annotations

import json
import random
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

__all__ = [
    "Grade",
    "Role",
    "GradingRecord",
    "Corpus",
    "FieldLimits",
    "CorpusStats",
    "IngestReport",
    "normalize_text",
    "ingest",
    "deduplicate",
    "grade_conflicts",
    "balance",
    "split_by_question",
    "compute_stats",
    "record_to_dict",
    "record_from_dict",
    "dump_corpus_jsonl",
    "load_corpus_jsonl",
]


class Grade(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


class Role(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"
    EXAM = "exam"


@dataclass(frozen=True)
class GradingRecord:
    """One graded question/answer pair.

    `synthetic` marks negatives manufactured by `balance`; those are always
    Incorrect by construction and the constructor enforces it.
    """

    record_id: str
    question_id: str
    question: str
    correct_answer: str
    given_answer: str
    grade: Grade
    language: str | None = None
    synthetic: bool = False

    def __post_init__(self) -> None:
        if self.synthetic and self.grade is not Grade.INCORRECT:
            raise ValueError("synthetic records must be graded incorrect")


@dataclass(frozen=True)
class Corpus:
    records: tuple[GradingRecord, ...]
    role: Role = Role.TRAIN

    def __post_init__(self) -> None:
        ids = [r.record_id for r in self.records]
        if len(set(ids)) != len(ids):
            dupe = next(i for i, c in Counter(ids).items() if c > 1)
            raise ValueError(f"duplicate record_id in corpus: {dupe!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[GradingRecord]:
        return iter(self.records)


@dataclass(frozen=True)
class FieldLimits:
    question_chars: int = 128
    answer_chars: int = 64


@dataclass
class CorpusStats:
    record_count: int
    question_count: int
    correct_fraction: float
    unique_answers_per_question: dict[int, int]
    answer_word_count: dict[int, int]
    records_per_language: dict[str, int]


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    rejection_reasons: dict[str, int] = field(default_factory=dict)
    duplicates_removed: int = 0
    grade_conflicts: int = 0

    def reject(self, reason: str) -> None:
        self.rejected += 1
        self.rejection_reasons[reason] = self.rejection_reasons.get(reason, 0) + 1

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
            "duplicates_removed": self.duplicates_removed,
            "grade_conflicts": self.grade_conflicts,
        }


def normalize_text(text: str) -> str:
    """NFC, lowercase, collapse runs of whitespace to single spaces."""
    text = unicodedata.normalize("NFC", text).lower()
    return " ".join(text.split())


_REQUIRED = ("question_id", "question", "correct_answer", "given_answer", "grade")


def _parse_line(raw: dict, line_number: int, limits: FieldLimits) -> GradingRecord:
    for key in _REQUIRED:
        if key not in raw:
            raise ValueError(f"missing_field:{key}")
        if not isinstance(raw[key], str):
            raise ValueError(f"invalid_type:{key}")
    grade_text = raw["grade"].strip().casefold()
    if grade_text not in (Grade.CORRECT.value, Grade.INCORRECT.value):
        raise ValueError("invalid_grade")

    question_id = raw["question_id"]
    question = normalize_text(raw["question"])[: limits.question_chars]
    correct_answer = normalize_text(raw["correct_answer"])[: limits.answer_chars]
    given_answer = normalize_text(raw["given_answer"])[: limits.answer_chars]
    if not question:
        raise ValueError("empty_question")
    if not correct_answer:
        raise ValueError("empty_correct_answer")

    record_id = raw.get("record_id")
    if record_id is None:
        record_id = f"q{question_id}#{line_number}"
    elif not isinstance(record_id, str):
        raise ValueError("invalid_type:record_id")

    language = raw.get("language")
    if language is not None and not isinstance(language, str):
        raise ValueError("invalid_type:language")

    return GradingRecord(
        record_id=record_id,
        question_id=question_id,
        question=question,
        correct_answer=correct_answer,
        given_answer=given_answer,
        grade=Grade(grade_text),
        language=language,
    )


def ingest(
    lines: Iterable[str],
    limits: FieldLimits = FieldLimits(),
    role: Role = Role.TRAIN,
) -> tuple[Corpus, IngestReport]:
    """Parse raw JSONL grading records.

    Invalid records are dropped and tallied per reason in the report rather
    than aborting the stream; unknown keys are ignored. Records without a
    record_id get "q<question_id>#<line>". A record_id colliding with an
    earlier line is itself a rejection (corpus ids must stay unique).
    """
    report = IngestReport()
    records: list[GradingRecord] = []
    seen_ids: set[str] = set()
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError:
            report.reject("invalid_json")
            continue
        if not isinstance(raw, dict):
            report.reject("invalid_json")
            continue
        try:
            record = _parse_line(raw, line_number, limits)
        except ValueError as exc:
            report.reject(str(exc))
            continue
        if record.record_id in seen_ids:
            report.reject("duplicate_record_id")
            continue
        seen_ids.add(record.record_id)
        records.append(record)
        report.accepted += 1
    return Corpus(records=tuple(records), role=role), report


def _dedup_key(r: GradingRecord) -> tuple[str, str, str, Grade]:
    return (r.question, r.correct_answer, r.given_answer, r.grade)


def deduplicate(corpus: Corpus) -> Corpus:
    """Keep the first record per distinct (question, A_correct, A_given, grade).

    Records agreeing on text but not grade are conflicting annotations, which
    are data, not duplicates; both survive. Idempotent.
    """
    seen: set[tuple] = set()
    kept = []
    for record in corpus.records:
        key = _dedup_key(record)
        if key in seen:
            continue
        seen.add(key)
        kept.append(record)
    return Corpus(records=tuple(kept), role=corpus.role)


def grade_conflicts(corpus: Corpus) -> list[tuple[GradingRecord, GradingRecord]]:
    """Pairs of records identical in text but graded differently."""
    first_by_text: dict[tuple[str, str, str], GradingRecord] = {}
    conflicts = []
    for record in corpus.records:
        key = (record.question, record.correct_answer, record.given_answer)
        prior = first_by_text.get(key)
        if prior is None:
            first_by_text[key] = record
        elif prior.grade is not record.grade:
            conflicts.append((prior, record))
    return conflicts


def balance(corpus: Corpus, seed: int) -> Corpus:
    """Equalize class counts by sampling cross-question negatives.

    For each missing Incorrect, a template record supplies the question side
    and a uniformly drawn record from a different question supplies the
    given_answer. Counts end exactly equal. Already balanced input comes
    back unchanged; more Incorrect than Correct is an error since the scheme
    only manufactures negatives.
    """
    n_correct = sum(1 for r in corpus.records if r.grade is Grade.CORRECT)
    n_incorrect = len(corpus.records) - n_correct
    if n_correct < n_incorrect:
        raise ValueError(
            f"cannot balance: {n_correct} correct < {n_incorrect} incorrect; "
            "negative sampling only adds incorrect records"
        )
    if n_correct == n_incorrect:
        return corpus
    question_ids = {r.question_id for r in corpus.records}
    if len(question_ids) < 2:
        raise ValueError("cannot balance: need at least 2 distinct question_ids")

    rng = random.Random(seed)
    existing_ids = {r.record_id for r in corpus.records}
    synthetic: list[GradingRecord] = []
    serial = 0
    for _ in range(n_correct - n_incorrect):
        template = corpus.records[rng.randrange(len(corpus.records))]
        while True:
            donor = corpus.records[rng.randrange(len(corpus.records))]
            if donor.question_id != template.question_id:
                break
        while True:
            record_id = f"{template.record_id}~syn{serial}"
            serial += 1
            if record_id not in existing_ids:
                break
        existing_ids.add(record_id)
        synthetic.append(
            GradingRecord(
                record_id=record_id,
                question_id=template.question_id,
                question=template.question,
                correct_answer=template.correct_answer,
                given_answer=donor.given_answer,
                grade=Grade.INCORRECT,
                language=template.language,
                synthetic=True,
            )
        )
    return Corpus(records=corpus.records + tuple(synthetic), role=corpus.role)


def split_by_question(
    corpus: Corpus, n_val: int, n_test: int, seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Question-disjoint train/validation/test split.

    n_val and n_test count distinct questions, not records. Question ids are
    shuffled with the seed; record order within each split follows the input.
    """
    if n_val < 0 or n_test < 0:
        raise ValueError("split sizes must be non-negative")
    question_ids = list(dict.fromkeys(r.question_id for r in corpus.records))
    if n_val + n_test >= len(question_ids) and (n_val + n_test) > 0:
        raise ValueError(
            f"split needs more than {n_val + n_test} distinct questions, "
            f"corpus has {len(question_ids)}"
        )
    rng = random.Random(seed)
    rng.shuffle(question_ids)
    val_ids = set(question_ids[:n_val])
    test_ids = set(question_ids[n_val : n_val + n_test])

    train, val, test = [], [], []
    for record in corpus.records:
        if record.question_id in val_ids:
            val.append(record)
        elif record.question_id in test_ids:
            test.append(record)
        else:
            train.append(record)
    return (
        Corpus(records=tuple(train), role=Role.TRAIN),
        Corpus(records=tuple(val), role=Role.VALIDATION),
        Corpus(records=tuple(test), role=Role.TEST),
    )


def compute_stats(corpus: Corpus) -> CorpusStats:
    records = corpus.records
    if not records:
        return CorpusStats(0, 0, 0.0, {}, {}, {})
    answers_by_question: dict[str, set[str]] = {}
    word_counts: Counter = Counter()
    languages: Counter = Counter()
    n_correct = 0
    for r in records:
        answers_by_question.setdefault(r.question_id, set()).add(r.given_answer)
        word_counts[len(r.given_answer.split())] += 1
        languages[r.language if r.language is not None else "und"] += 1
        if r.grade is Grade.CORRECT:
            n_correct += 1
    unique_hist: Counter = Counter(len(v) for v in answers_by_question.values())
    return CorpusStats(
        record_count=len(records),
        question_count=len(answers_by_question),
        correct_fraction=n_correct / len(records),
        unique_answers_per_question=dict(sorted(unique_hist.items())),
        answer_word_count=dict(sorted(word_counts.items())),
        records_per_language=dict(sorted(languages.items())),
    )


def record_to_dict(record: GradingRecord) -> dict:
    out = {
        "record_id": record.record_id,
        "question_id": record.question_id,
        "question": record.question,
        "correct_answer": record.correct_answer,
        "given_answer": record.given_answer,
        "grade": record.grade.value,
    }
    if record.language is not None:
        out["language"] = record.language
    if record.synthetic:
        out["synthetic"] = True
    return out


def record_from_dict(raw: dict) -> GradingRecord:
    return GradingRecord(
        record_id=raw["record_id"],
        question_id=raw["question_id"],
        question=raw["question"],
        correct_answer=raw["correct_answer"],
        given_answer=raw["given_answer"],
        grade=Grade(raw["grade"]),
        language=raw.get("language"),
        synthetic=bool(raw.get("synthetic", False)),
    )


def dump_corpus_jsonl(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in corpus.records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_corpus_jsonl(path: str, role: Role = Role.TRAIN) -> Corpus:
    """Load a corpus previously written by this package. Strict: raises on bad rows."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(record_from_dict(json.loads(line)))
    return Corpus(records=tuple(records), role=role)


def with_role(corpus: Corpus, role: Role) -> Corpus:
    return Corpus(records=corpus.records, role=role)
