"""Synthetic fixtures: a scored benchmark with known band structure and a
learnable text corpus for exercising projection training.

The benchmark is built around fixed thresholds rather than calibrated ones
so its band composition is exact by construction: the low difficult band is
pure Incorrect, the high difficult band is deliberately noisy, and both
easy buckets sit comfortably above typical floors. That shape makes clean
exams hover near the accept/reject boundary on the noisy side only, while
degraded exams fail loudly on both.

The text corpus clusters vocabulary into topics; right answers draw words
from the question's topic, wrong ones from another. A slice of each is
made hard (low lexical overlap for positives, partial overlap for
negatives) so an untrained head leaves room the projection can learn back.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .calibration import (
    AccuracyConstraints,
    ScoredDataset,
    ScoredRecord,
    Thresholds,
)
from .corpus import Corpus, Grade, GradingRecord, Role

__all__ = [
    "SyntheticBenchmark",
    "make_benchmark",
    "synthetic_training_corpus",
]


@dataclass(frozen=True)
class SyntheticBenchmark:
    scored: ScoredDataset
    thresholds: Thresholds
    constraints: AccuracyConstraints


# band layout: (lo, hi, mass, probability that the true grade is Correct)
_BANDS = (
    (0.02, 0.395, 0.35, 0.04),  # easy incorrect bucket, slight contamination
    (0.405, 0.5, 0.12, 0.0),  # difficult low: pure Incorrect
    (0.505, 0.65, 0.16, 0.8),  # difficult high: noisy
    (0.66, 0.99, 0.37, 0.97),  # easy correct bucket
)

_THRESHOLDS = Thresholds(t_incorrect=0.4, t_star=0.5, t_correct=0.65)
_CONSTRAINTS = AccuracyConstraints(c_min_incorrect=0.9, c_min_correct=0.8)


def make_benchmark(n: int = 3000, seed: int = 0) -> SyntheticBenchmark:
    """Scored dataset with the fixed band structure above.

    Deterministic in (n, seed). Per-band counts are the rounded masses, so
    reruns are byte-identical and the low difficult band is exactly pure.
    """
    if n < 20:
        raise ValueError("benchmark needs at least 20 records")
    rng = random.Random(seed)
    items = []
    counts = [int(mass * n) for _, _, mass, _ in _BANDS]
    counts[-1] += n - sum(counts)
    serial = 0
    for (lo, hi, _, p_correct), count in zip(_BANDS, counts):
        for _ in range(count):
            s = rng.uniform(lo, hi)
            correct = rng.random() < p_correct
            grade = Grade.CORRECT if correct else Grade.INCORRECT
            record = GradingRecord(
                record_id=f"syn{serial:05d}",
                question_id=f"sq{serial % max(1, n // 10)}",
                question=f"synthetic prompt {serial % max(1, n // 10)}",
                correct_answer="reference response",
                given_answer=f"student response {serial}",
                grade=grade,
            )
            items.append(ScoredRecord(record=record, s=s))
            serial += 1
    return SyntheticBenchmark(
        scored=ScoredDataset(items=tuple(items), role="D"),
        thresholds=_THRESHOLDS,
        constraints=_CONSTRAINTS,
    )


_SYLLABLES = (
    "ka", "lo", "mi", "ta", "re", "su", "ne", "vo", "pa", "zi",
    "del", "for", "gan", "hul", "bro", "sten", "quil", "mar",
)


def _topic_words(rng: random.Random, n_topics: int, words_per_topic: int) -> list[list[str]]:
    seen: set[str] = set()
    topics: list[list[str]] = []
    for _ in range(n_topics):
        words: list[str] = []
        while len(words) < words_per_topic:
            word = "".join(rng.choice(_SYLLABLES) for _ in range(3))
            if word not in seen:
                seen.add(word)
                words.append(word)
        topics.append(words)
    return topics


def synthetic_training_corpus(
    n_pairs: int = 2000,
    seed: int = 42,
    n_topics: int = 20,
    words_per_topic: int = 8,
    hard_fraction: float = 0.35,
) -> Corpus:
    """Topic-clustered question/answer corpus, half Correct half Incorrect.

    Each question names two topic words; the reference answer uses three
    words of the same topic. Correct given answers also draw from the
    topic (the hard ones avoid the words the question used); incorrect
    ones draw from another topic (the hard ones smuggle in one on-topic
    word). Every question appears four times, two of each grade.
    """
    if n_pairs < 8 or n_pairs % 4 != 0:
        raise ValueError("n_pairs must be a multiple of 4, at least 8")
    rng = random.Random(seed)
    topics = _topic_words(rng, n_topics, words_per_topic)
    n_questions = n_pairs // 4
    records = []
    for i in range(n_pairs):
        q_index = i % n_questions
        topic_index = q_index % n_topics
        words = topics[topic_index]
        q_rng = random.Random(f"{seed}:{q_index}")
        q_words = q_rng.sample(words, 2)
        question = f"describe {q_words[0]} {q_words[1]}"
        reference = "the answer is " + " ".join(q_rng.sample(words, 3))
        is_correct = (i // n_questions) % 2 == 0
        hard = rng.random() < hard_fraction
        if is_correct:
            pool = [w for w in words if w not in q_words] if hard else words
            given = "the answer is " + " ".join(rng.sample(pool, 3))
            grade = Grade.CORRECT
        else:
            other = topics[(topic_index + 1 + rng.randrange(n_topics - 1)) % n_topics]
            chosen = rng.sample(other, 3)
            if hard:
                chosen[rng.randrange(3)] = rng.choice(words)
            given = "the answer is " + " ".join(chosen)
            grade = Grade.INCORRECT
        records.append(
            GradingRecord(
                record_id=f"p{i:05d}",
                question_id=f"q{q_index}",
                question=question,
                correct_answer=reference,
                given_answer=given,
                grade=grade,
            )
        )
    return Corpus(records=tuple(records), role=Role.TRAIN)
