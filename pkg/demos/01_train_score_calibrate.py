"""Train a similarity head on synthetic pairs, then calibrate thresholds.

Walks the core loop end to end: build a labeled corpus, balance it, hold
out questions for testing, train the projection head, pick the single
best threshold, and finally calibrate the two-threshold deferral band
under per-class accuracy floors.

Run: python3 demos/01_train_score_calibrate.py
"""

from selgrade.calibration import (
    AccuracyConstraints,
    calibrate,
    find_optimal_threshold,
    metrics_at,
    partition,
)
from selgrade.corpus import balance, split_by_question
from selgrade.embedding import EmbedderConfig, TrainConfig, init_head, score_corpus, train_projection
from selgrade.synth import synthetic_training_corpus


def main() -> None:
    corpus = synthetic_training_corpus(2000, seed=42)
    corpus = balance(corpus, seed=0)
    train, _, test = split_by_question(corpus, n_val=0, n_test=100, seed=0)
    print(f"corpus: {len(corpus.records)} pairs, "
          f"{len(train.records)} train / {len(test.records)} test (question-disjoint)")

    config = EmbedderConfig(hash_dim=4096, projection_dim=64)

    # baseline: a random projection, no training
    untrained = init_head(config, seed=0)
    scored_train = score_corpus(train, config, untrained)
    t_star, _ = find_optimal_threshold(scored_train)
    base = metrics_at(score_corpus(test, config, untrained, role="test"), t_star)
    print(f"untrained head: T*={t_star:.3f}, test accuracy {base.accuracy:.3f}")

    head = train_projection(
        corpus=train,
        config=config,
        train_config=TrainConfig(epochs=5, learning_rate=1.0, batch_size=64, seed=0),
    )
    print("training loss by epoch:",
          " ".join(f"{loss:.3f}" for loss in head.epoch_losses))

    scored_train = score_corpus(train, config, head)
    t_star, train_acc = find_optimal_threshold(scored_train)
    trained = metrics_at(score_corpus(test, config, head, role="test"), t_star)
    print(f"trained head:   T*={t_star:.3f}, test accuracy {trained.accuracy:.3f} "
          f"(train {train_acc:.3f})")

    # a single threshold forces a call on every item; the calibrated pair
    # defers the ambiguous middle band to a human instead
    constraints = AccuracyConstraints(c_min_incorrect=0.95, c_min_correct=0.95)
    thresholds, cov = calibrate(scored_train, constraints)
    print(f"\ncalibrated under 95%/95% floors:")
    print(f"  t_incorrect={thresholds.t_incorrect:.3f}  "
          f"t_correct={thresholds.t_correct:.3f}  t*={thresholds.t_star:.3f}")
    incorrect, deferred, correct = partition(scored_train, thresholds)
    n = len(scored_train.items)
    print(f"  auto-incorrect {len(incorrect)}, deferred {len(deferred)}, "
          f"auto-correct {len(correct)}  "
          f"(coverage {(n - len(deferred)) / n:.1%})")
    if cov.flags:
        print("  flags:", ", ".join(cov.flags))


if __name__ == "__main__":
    main()
