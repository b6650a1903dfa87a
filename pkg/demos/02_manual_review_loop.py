"""Grade an exam with deferral, human review, validation and spot checks.

A small hand-scored pool calibrates the thresholds, a reference profile is
bootstrapped from it, and a five-item exam is graded: the confident tails
automatically, the deferred band by a (scripted) human. Validation then
compares the exam's difficult-band accuracy against the reference under
two margins, and a spot check audits a sample of the automatic calls.

Run: python3 demos/02_manual_review_loop.py
"""

from selgrade.calibration import AccuracyConstraints, ScoredDataset, ScoredRecord, calibrate
from selgrade.corpus import Grade, GradingRecord
from selgrade.grader import next_deferred, open_session, session_summary, submit_manual_grade
from selgrade.validation import (
    apply_verdict,
    build_reference,
    evaluate_spot_check,
    plan_spot_check,
    validate,
)

QUESTION = "What is the largest planet in the solar system?"


def scored(prefix: str, rows: list[tuple[float, str, str]], role: str) -> ScoredDataset:
    items = []
    for i, (s, answer, grade) in enumerate(rows):
        items.append(ScoredRecord(
            record=GradingRecord(
                record_id=f"{prefix}{i}",
                question_id="q1",
                question=QUESTION,
                correct_answer="Jupiter",
                given_answer=answer,
                grade=Grade(grade),
            ),
            s=s,
        ))
    return ScoredDataset(items=tuple(items), role=role)


POOL = scored("d", [
    (0.10, "Mars", "incorrect"),
    (0.20, "the sun", "incorrect"),
    (0.30, "Saturn", "incorrect"),
    (0.45, "jupiter", "correct"),
    (0.55, "satern", "incorrect"),
    (0.70, "Jupiter obviously", "correct"),
    (0.80, "jupiter.", "correct"),
    (0.90, "Jupiter", "correct"),
], role="D")

EXAM = scored("e", [
    (0.200, "venus", "incorrect"),
    (0.400, "saturn", "incorrect"),
    (0.500, "juppiter", "correct"),
    (0.800, "Jupiter!", "correct"),
    (0.375, "the big one", "incorrect"),
], role="E")

# what the scripted human says when asked
HUMAN = {r.record.record_id: r.record.grade for r in EXAM.items}


def main() -> None:
    constraints = AccuracyConstraints(c_min_incorrect=1.0, c_min_correct=1.0)
    thresholds, _ = calibrate(POOL, constraints)
    print(f"thresholds from the scored pool: "
          f"[{thresholds.t_incorrect}, {thresholds.t_correct}], t*={thresholds.t_star}")
    reference = build_reference(POOL, thresholds, exam_sizes=[5], n_boot=200, seed=0)

    session = open_session(EXAM, thresholds, constraints, session_id="demo-exam")
    summary = session_summary(session)
    n_auto = summary["n_auto_incorrect"] + summary["n_auto_correct"]
    print(f"exam opened: {n_auto} auto-graded, "
          f"{summary['n_deferred']} deferred to review "
          f"(workload reduction {summary['workload_reduction']:.0%})")

    while queue := next_deferred(session, k=1):
        record_id = queue[0]
        grade = HUMAN[record_id]
        session = submit_manual_grade(session, record_id, grade)
        print(f"  reviewer grades {record_id}: {grade.value}")

    for margin in (0.0, 0.5):
        report = validate(session, reference, margin=margin, n_min=1)
        print(f"validation at margin {margin}: {report.verdict.value} "
              f"(d_incorrect={report.delta_incorrect:+.3f}, "
              f"d_correct={report.delta_correct:+.3f})")
    status = apply_verdict(session, report.verdict)
    print(f"session status: {status.value}")
    if report.recommended_tightening:
        print(f"recommended tightening: {report.recommended_tightening:.3f}")

    plan = plan_spot_check(session, confidence=0.5, seed=0)
    ids = list(plan.incorrect.record_ids) + list(plan.correct.record_ids)
    print(f"spot check wants {len(ids)} of the automatic calls re-graded: {sorted(ids)}")
    for record_id in ids:
        session = submit_manual_grade(session, record_id, HUMAN[record_id], source="spot_check")
    result = evaluate_spot_check(session, plan)
    print(f"spot check {'passed' if result.passed else 'failed'}")


if __name__ == "__main__":
    main()
