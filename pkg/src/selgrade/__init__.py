"""Selective autograding for short free-text answers.

Score answers by embedding similarity, calibrate a pair of decision
thresholds under per-side accuracy floors, auto-grade everything outside
the deferral band, route the band to humans, and validate each exam
against a reference profile before trusting the automatic grades.
"""

from .calibration import (
    AccuracyConstraints,
    BucketAccuracy,
    ClassMetrics,
    CoverageReport,
    CurvePoint,
    ScoredDataset,
    ScoredRecord,
    Thresholds,
    accuracy_curve,
    accuracy_difficult,
    accuracy_easy,
    calibrate,
    candidate_thresholds,
    coverage,
    curve_to_csv,
    dump_scored_jsonl,
    find_optimal_threshold,
    load_scored_jsonl,
    metrics_at,
    partition,
    scored_from_dict,
    scored_to_dict,
)
from .corpus import (
    Corpus,
    CorpusStats,
    FieldLimits,
    Grade,
    GradingRecord,
    IngestReport,
    Role,
    balance,
    compute_stats,
    deduplicate,
    dump_corpus_jsonl,
    grade_conflicts,
    ingest,
    load_corpus_jsonl,
    normalize_text,
    record_from_dict,
    record_to_dict,
    split_by_question,
    with_role,
)
from .embedding import (
    DimensionMismatchError,
    EmbedderConfig,
    EmbedderKind,
    EmbeddingBackendError,
    MalformedResponseError,
    ProjectionHead,
    RemoteBackendConfig,
    TrainConfig,
    TransportError,
    cosine,
    embed_batch_remote,
    embed_pair,
    init_head,
    load_head,
    pair_loss,
    save_head,
    score_corpus,
    similarity,
    train_projection,
)
from .grader import (
    Decision,
    DecisionKind,
    GradingSession,
    ManualGrade,
    SessionStatus,
    decide,
    next_deferred,
    open_session,
    session_from_dict,
    session_summary,
    session_to_dict,
    submit_manual_grade,
)
from .service import ServiceConfig, build_calibration_payload, create_app
from .synth import SyntheticBenchmark, make_benchmark, synthetic_training_corpus
from .validation import (
    ReferenceProfile,
    RiskEstimate,
    SpotCheckPlan,
    SpotCheckResult,
    ValidationReport,
    Verdict,
    apply_verdict,
    binomial_at_least,
    build_reference,
    estimate_risk,
    evaluate_spot_check,
    normal_upper_tail,
    plan_spot_check,
    reference_from_dict,
    reference_to_dict,
    run_validation_trials,
    sample_exam,
    simulate_degraded,
    validate,
    zero_failure_sample_size,
)

__version__ = "0.1.0"
