"""Verdicts, risk estimation, spot checks, degradation, exam sampling."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record, make_scored
from oracles import (
    oracle_binomial_at_least,
    oracle_normal_upper_tail,
    oracle_zero_failure_sample_size,
)
from selgrade.calibration import AccuracyConstraints, ScoredDataset, ScoredRecord, Thresholds
from selgrade.corpus import Grade, GradingRecord
from selgrade.grader import SessionStatus, open_session, submit_manual_grade
from selgrade.synth import make_benchmark
from selgrade.validation import (
    ReferenceProfile,
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

THRESHOLDS = Thresholds(t_incorrect=0.4, t_star=0.5, t_correct=0.65)
CONSTRAINTS = AccuracyConstraints(c_min_incorrect=0.9, c_min_correct=0.8)


def reference(acc_i=0.9, acc_c=0.8, sigma=0.05) -> ReferenceProfile:
    return ReferenceProfile(
        t_incorrect=THRESHOLDS.t_incorrect,
        t_star=THRESHOLDS.t_star,
        t_correct=THRESHOLDS.t_correct,
        accuracy_incorrect=acc_i,
        accuracy_correct=acc_c,
        n_incorrect=100,
        n_correct=100,
        sigma_incorrect={10: sigma, 50: sigma / 2},
        sigma_correct={10: sigma, 50: sigma / 2},
    )


def graded_session(low_band, high_band, session_id="v1"):
    """low_band/high_band: lists of true-grade chars for deferred records
    placed in [0.4, 0.5) and (0.5, 0.65] respectively; grading is honest."""
    pairs = [(0.1, "i"), (0.9, "c")]  # anchor auto buckets
    pairs += [(0.42 + 0.005 * i, g) for i, g in enumerate(low_band)]
    pairs += [(0.52 + 0.005 * i, g) for i, g in enumerate(high_band)]
    session = open_session(make_scored(pairs), THRESHOLDS, CONSTRAINTS, session_id)
    for rid in session.queue:
        truth = session.record(rid).record.grade
        submit_manual_grade(session, rid, truth)
    return session


class TestNormalUpperTail:
    def test_anchor_values(self):
        assert normal_upper_tail(0.0) == 0.5
        assert normal_upper_tail(2.5) == pytest.approx(0.0062096653, rel=1e-6)
        assert normal_upper_tail(5.0) == pytest.approx(2.8665157e-7, rel=1e-5)
        assert normal_upper_tail(-1.0) == pytest.approx(0.8413447, rel=1e-6)

    def test_differential_against_quadrature(self):
        for z in np.linspace(-4.0, 6.0, 41):
            assert normal_upper_tail(float(z)) == pytest.approx(
                oracle_normal_upper_tail(float(z)), rel=1e-9, abs=1e-12
            )

    def test_symmetry(self):
        for z in (0.3, 1.7, 2.9):
            assert normal_upper_tail(z) + normal_upper_tail(-z) == pytest.approx(1.0)


class TestEstimateRisk:
    def test_zero_sigma_is_a_step(self):
        assert estimate_risk(0.0, 0.0).violation_probability == 0.0
        assert estimate_risk(0.02, 0.0).violation_probability == 0.0
        assert estimate_risk(-1e-9, 0.0).violation_probability == 1.0

    def test_normal_tail_matches_formula(self):
        r = estimate_risk(0.05, 0.02)
        assert r.z == pytest.approx(2.5)
        assert r.violation_probability == pytest.approx(normal_upper_tail(2.5))
        assert r.method == "normal_tail"

    def test_negative_delta_raises_risk_above_half(self):
        assert estimate_risk(-0.03, 0.05).violation_probability > 0.5

    def test_monte_carlo_agrees_with_analytic(self):
        analytic = estimate_risk(0.02, 0.02).violation_probability
        sampled = estimate_risk(0.02, 0.02, method="monte_carlo", seed=3)
        assert sampled.method == "monte_carlo"
        assert sampled.violation_probability == pytest.approx(analytic, abs=0.005)

    def test_monte_carlo_is_seeded(self):
        a = estimate_risk(0.01, 0.03, method="monte_carlo", seed=9)
        b = estimate_risk(0.01, 0.03, method="monte_carlo", seed=9)
        assert a.violation_probability == b.violation_probability

    def test_invalid_inputs(self):
        with pytest.raises(ValueError, match="sigma"):
            estimate_risk(0.1, -0.01)
        with pytest.raises(ValueError, match="method"):
            estimate_risk(0.1, 0.01, method="tea_leaves")


class TestBuildReference:
    def test_four_item_fixture_bands(self, four_item_dataset):
        mid = (0.3 + 0.6) / 2
        thresholds = Thresholds(t_incorrect=0.3, t_star=mid, t_correct=0.6)
        ref = build_reference(four_item_dataset, thresholds, exam_sizes=[10])
        # [0.3, mid] holds only the incorrect 0.3; [mid, 0.6] only the correct 0.6
        assert ref.accuracy_incorrect == 1.0
        assert ref.n_incorrect == 1
        assert ref.accuracy_correct == 1.0
        assert ref.n_correct == 1

    def test_benchmark_reference_shape(self):
        bench = make_benchmark(3000, seed=0)
        ref = build_reference(
            bench.scored, bench.thresholds, exam_sizes=[20, 200], seed=1
        )
        # the low difficult band is pure by construction
        assert ref.accuracy_incorrect == 1.0
        assert ref.n_incorrect == 360
        assert 0.7 < ref.accuracy_correct < 0.9
        # zero spread on the pure side, shrinking spread with exam size
        assert ref.sigma_incorrect == {20: 0.0, 200: 0.0}
        assert ref.sigma_correct[20] > ref.sigma_correct[200] > 0.0

    def test_deterministic(self):
        bench = make_benchmark(500, seed=2)
        a = build_reference(bench.scored, bench.thresholds, exam_sizes=[15], seed=4)
        b = build_reference(bench.scored, bench.thresholds, exam_sizes=[15], seed=4)
        assert a == b

    def test_sigma_lookup_uses_nearest_size(self):
        ref = reference()
        assert ref.sigma_for("incorrect", 12) == ref.sigma_incorrect[10]
        assert ref.sigma_for("incorrect", 49) == ref.sigma_incorrect[50]
        # equidistant ties resolve to the smaller key
        assert ref.sigma_for("correct", 30) == ref.sigma_correct[10]

    def test_input_validation(self):
        bench = make_benchmark(100, seed=0)
        with pytest.raises(ValueError, match="non-empty"):
            build_reference(bench.scored, bench.thresholds, exam_sizes=[])
        with pytest.raises(ValueError, match="positive"):
            build_reference(bench.scored, bench.thresholds, exam_sizes=[0])
        with pytest.raises(ValueError, match="n_boot"):
            build_reference(bench.scored, bench.thresholds, exam_sizes=[5], n_boot=0)

    def test_round_trip(self):
        bench = make_benchmark(400, seed=3)
        ref = build_reference(bench.scored, bench.thresholds, exam_sizes=[10, 20])
        payload = json.loads(json.dumps(reference_to_dict(ref), sort_keys=True))
        assert reference_from_dict(payload) == ref


class TestValidateVerdicts:
    def test_accept_when_both_sides_hold(self):
        session = graded_session(["i"] * 8, ["c"] * 7 + ["i"] * 2)
        # exam accs: 1.0 and 7/9 = 0.778 vs refs 0.9, 0.75
        report = validate(session, reference(acc_i=0.9, acc_c=0.75))
        assert report.verdict is Verdict.ACCEPT
        assert report.delta_incorrect == pytest.approx(0.1)
        assert report.delta_correct == pytest.approx(7 / 9 - 0.75)
        assert report.n_diff_incorrect == 8
        assert report.n_diff_correct == 9
        assert report.recommended_tightening == 0.0

    def test_reject_on_either_side(self):
        # low band degraded: 5/8 vs ref 0.9
        session = graded_session(["i"] * 5 + ["c"] * 3, ["c"] * 7)
        report = validate(session, reference(acc_i=0.9, acc_c=0.8))
        assert report.verdict is Verdict.REJECT
        assert report.delta_incorrect == pytest.approx(5 / 8 - 0.9)
        assert report.recommended_tightening == pytest.approx(0.9 - 5 / 8)

    def test_margin_shields_small_dips(self):
        # high band 7/10 = 0.7 vs ref 0.75: delta -0.05, margin 0.06
        session = graded_session(["i"] * 6, ["c"] * 7 + ["i"] * 3)
        report = validate(session, reference(acc_i=0.9, acc_c=0.75), margin=0.06)
        assert report.verdict is Verdict.ACCEPT_WITH_WARNING
        assert report.delta_correct == pytest.approx(-0.05)
        assert report.recommended_tightening == pytest.approx(0.05)

    def test_same_dip_without_margin_rejects(self):
        session = graded_session(["i"] * 6, ["c"] * 7 + ["i"] * 3)
        report = validate(session, reference(acc_i=0.9, acc_c=0.75), margin=0.0)
        assert report.verdict is Verdict.REJECT

    def test_delta_exactly_at_margin_passes(self):
        # 0.75 - 0.8125 = -0.0625 exactly in binary floats
        session = graded_session(["i"] * 6, ["c"] * 12 + ["i"] * 4)
        report = validate(session, reference(acc_i=0.9, acc_c=0.8125), margin=0.0625)
        assert report.delta_correct == -0.0625
        assert report.verdict is Verdict.ACCEPT_WITH_WARNING

    def test_insufficient_evidence_below_n_min(self):
        session = graded_session(["i"] * 8, ["c"] * 3)
        report = validate(session, reference(acc_i=0.9, acc_c=0.7))
        assert report.verdict is Verdict.INSUFFICIENT_EVIDENCE
        assert report.n_diff_correct == 3

    def test_insufficient_evidence_with_empty_side(self):
        session = graded_session(["i"] * 8, [])
        report = validate(session, reference())
        assert report.verdict is Verdict.INSUFFICIENT_EVIDENCE
        assert report.delta_correct is None
        assert report.n_diff_correct == 0

    def test_reject_beats_insufficient_evidence(self):
        # only 3 graded on the high side but they already breach the margin
        session = graded_session(["i"] * 8, ["i", "i", "c"])
        report = validate(session, reference(acc_i=0.9, acc_c=0.8))
        assert report.verdict is Verdict.REJECT

    def test_custom_n_min(self):
        session = graded_session(["i"] * 4, ["c"] * 4)
        assert validate(session, reference(acc_i=0.9, acc_c=0.7)).verdict is (
            Verdict.INSUFFICIENT_EVIDENCE
        )
        report = validate(session, reference(acc_i=0.9, acc_c=0.7), n_min=4)
        assert report.verdict is Verdict.ACCEPT

    def test_negative_margin_rejected(self):
        session = graded_session(["i"] * 6, ["c"] * 6)
        with pytest.raises(ValueError, match="margin"):
            validate(session, reference(), margin=-0.01)

    def test_record_at_t_star_counts_on_both_sides(self):
        pairs = [(0.1, "i"), (0.9, "c"), (0.5, "i")]
        session = open_session(make_scored(pairs), THRESHOLDS, CONSTRAINTS, "b1")
        submit_manual_grade(session, "r2", Grade.INCORRECT)
        report = validate(session, reference())
        assert report.n_diff_incorrect == 1
        assert report.n_diff_correct == 1
        assert report.exam_accuracy_incorrect == 1.0
        assert report.exam_accuracy_correct == 0.0

    def test_ungraded_deferred_records_are_not_evidence(self):
        pairs = [(0.1, "i"), (0.9, "c")] + [(0.42 + 0.01 * i, "i") for i in range(6)]
        session = open_session(make_scored(pairs), THRESHOLDS, CONSTRAINTS, "u1")
        for rid in session.queue[:2]:
            submit_manual_grade(session, rid, Grade.INCORRECT)
        report = validate(session, reference())
        assert report.n_diff_incorrect == 2

    def test_risk_combination(self):
        session = graded_session(["i"] * 8, ["c"] * 7 + ["i"] * 2)
        report = validate(session, reference(acc_i=0.95, acc_c=0.75))
        p_i = report.risk_incorrect.violation_probability
        p_c = report.risk_correct.violation_probability
        assert report.violation_probability == pytest.approx(
            1.0 - (1.0 - p_i) * (1.0 - p_c)
        )

    def test_report_dict_field_names(self):
        session = graded_session(["i"] * 8, ["c"] * 8)
        payload = validate(session, reference()).to_dict()
        for key in (
            "session_id",
            "verdict",
            "margin",
            "delta_incorrect",
            "delta_correct",
            "n_diff_incorrect",
            "n_diff_correct",
            "exam_accuracy",
            "reference_accuracy",
            "recommended_tightening",
            "risk",
        ):
            assert key in payload
        assert "violation_probability" in payload["risk"]
        json.dumps(payload)  # JSON-safe

    def test_apply_verdict_mapping(self):
        session = graded_session(["i"] * 6, ["c"] * 6)
        assert apply_verdict(session, Verdict.ACCEPT) is SessionStatus.VALIDATED
        session.status = SessionStatus.AWAITING_VALIDATION
        assert apply_verdict(session, Verdict.ACCEPT_WITH_WARNING) is (
            SessionStatus.VALIDATED
        )
        session.status = SessionStatus.AWAITING_VALIDATION
        assert apply_verdict(session, Verdict.REJECT) is SessionStatus.REJECTED
        session.status = SessionStatus.AWAITING_VALIDATION
        assert apply_verdict(session, Verdict.INSUFFICIENT_EVIDENCE) is (
            SessionStatus.AWAITING_VALIDATION
        )


class TestZeroFailureSampleSize:
    def test_anchors(self):
        # ln(0.125)/ln(0.5) lands a hair above 3; the guard must not round to 4
        assert zero_failure_sample_size(0.5, 0.875) == 3
        assert zero_failure_sample_size(0.9, 0.95) == 29
        assert zero_failure_sample_size(0.8, 0.95) == 14
        assert zero_failure_sample_size(0.95, 0.95) == 59
        assert zero_failure_sample_size(0.9, 0.99) == 44

    def test_edges(self):
        assert zero_failure_sample_size(0.0, 0.9) == 0
        assert zero_failure_sample_size(1.0, 0.9) is None
        with pytest.raises(ValueError, match="confidence"):
            zero_failure_sample_size(0.9, 1.0)
        with pytest.raises(ValueError, match="confidence"):
            zero_failure_sample_size(0.9, 0.0)
        with pytest.raises(ValueError, match="c_min"):
            zero_failure_sample_size(1.5, 0.9)

    @given(
        st.floats(min_value=0.05, max_value=0.99),
        st.floats(min_value=0.5, max_value=0.999),
    )
    @settings(max_examples=300, deadline=None)
    def test_differential_and_minimality(self, c_min, confidence):
        n = zero_failure_sample_size(c_min, confidence)
        assert n == oracle_zero_failure_sample_size(c_min, confidence)
        assert c_min**n <= 1.0 - confidence
        if n > 1:
            assert c_min ** (n - 1) > 1.0 - confidence


class TestBinomialAtLeast:
    def test_anchors(self):
        assert binomial_at_least(3, 0.5, 2) == pytest.approx(0.5)
        assert binomial_at_least(10, 0.3, 0) == pytest.approx(1.0)
        assert binomial_at_least(29, 0.9, 29) == pytest.approx(0.9**29)
        assert binomial_at_least(5, 0.0, 1) == 0.0
        assert binomial_at_least(5, 1.0, 5) == 1.0

    def test_bounds(self):
        with pytest.raises(ValueError):
            binomial_at_least(5, 0.5, 6)
        with pytest.raises(ValueError):
            binomial_at_least(5, 0.5, -1)

    @given(
        st.integers(min_value=1, max_value=40),
        st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_differential(self, n, p):
        for k in (0, n // 2, n):
            assert binomial_at_least(n, p, k) == pytest.approx(
                oracle_binomial_at_least(n, k, p), rel=1e-12, abs=1e-15
            )


def spot_session(n_low=60, n_high=60, session_id="sc1"):
    pairs = [(0.05 + 0.005 * i, "i") for i in range(n_low)]
    pairs += [(0.7 + 0.004 * i, "c") for i in range(n_high)]
    pairs += [(0.45, "i"), (0.55, "c")]
    return open_session(make_scored(pairs), THRESHOLDS, CONSTRAINTS, session_id)


class TestSpotCheckPlanning:
    def test_sample_sizes_follow_the_floors(self):
        session = spot_session()
        plan = plan_spot_check(session, confidence=0.95, seed=1)
        assert plan.incorrect.n_planned == 29  # c_min 0.9
        assert plan.correct.n_planned == 14  # c_min 0.8
        assert not plan.incorrect.whole_bucket
        assert plan.incorrect.achievable_confidence == pytest.approx(1 - 0.9**29)
        assert session.spot_check_ids == plan.all_ids()

    def test_planned_ids_come_from_the_right_buckets(self):
        session = spot_session()
        plan = plan_spot_check(session, confidence=0.95, seed=1)
        from selgrade.grader import DecisionKind

        for rid in plan.incorrect.record_ids:
            assert session.decisions[rid].kind is DecisionKind.AUTO_INCORRECT
        for rid in plan.correct.record_ids:
            assert session.decisions[rid].kind is DecisionKind.AUTO_CORRECT

    def test_small_bucket_checked_whole(self):
        session = spot_session(n_low=10)
        plan = plan_spot_check(session, confidence=0.95, seed=0)
        assert plan.incorrect.whole_bucket
        assert plan.incorrect.n_planned == 10
        assert plan.incorrect.achievable_confidence == pytest.approx(1 - 0.9**10)
        assert plan.incorrect.achievable_confidence < 0.95

    def test_certainty_floor_requires_whole_bucket(self):
        session = open_session(
            make_scored([(0.05, "i"), (0.1, "i"), (0.9, "c")]),
            THRESHOLDS,
            AccuracyConstraints(c_min_incorrect=1.0, c_min_correct=0.8),
            "sc2",
        )
        plan = plan_spot_check(session, confidence=0.9, seed=0)
        assert plan.incorrect.whole_bucket
        assert plan.incorrect.n_planned == 2
        assert plan.incorrect.achievable_confidence == 1.0

    def test_zero_floor_needs_no_samples(self):
        session = open_session(
            make_scored([(0.05, "i"), (0.9, "c")]),
            THRESHOLDS,
            AccuracyConstraints(c_min_incorrect=0.0, c_min_correct=0.8),
            "sc3",
        )
        plan = plan_spot_check(session, confidence=0.9, seed=0)
        assert plan.incorrect.n_planned == 0
        assert plan.incorrect.achievable_confidence == 1.0

    def test_deterministic_selection(self):
        a = plan_spot_check(spot_session(), 0.95, seed=5)
        b = plan_spot_check(spot_session(), 0.95, seed=5)
        assert a == b
        c = plan_spot_check(spot_session(), 0.95, seed=6)
        assert c.incorrect.record_ids != a.incorrect.record_ids


class TestSpotCheckEvaluation:
    def grade_all(self, session, plan, mismatches=()):
        from selgrade.grader import DecisionKind

        for rid in plan.all_ids():
            kind = session.decisions[rid].kind
            honest = (
                Grade.INCORRECT
                if kind is DecisionKind.AUTO_INCORRECT
                else Grade.CORRECT
            )
            if rid in mismatches:
                honest = (
                    Grade.CORRECT if honest is Grade.INCORRECT else Grade.INCORRECT
                )
            submit_manual_grade(session, rid, honest, source="spot_check")

    def test_all_matching_passes_with_target_confidence(self):
        session = spot_session()
        plan = plan_spot_check(session, 0.95, seed=2)
        self.grade_all(session, plan)
        result = evaluate_spot_check(session, plan)
        assert result.passed
        assert result.incorrect.accuracy == 1.0
        assert result.incorrect.achieved_confidence == pytest.approx(1 - 0.9**29)
        assert result.incorrect.achieved_confidence >= 0.95

    def test_one_mismatch_can_still_clear_the_floor(self):
        session = spot_session()
        plan = plan_spot_check(session, 0.95, seed=2)
        self.grade_all(session, plan, mismatches={plan.incorrect.record_ids[0]})
        result = evaluate_spot_check(session, plan)
        # 28/29 = 0.966 still clears the 0.9 floor, with weaker confidence
        assert result.incorrect.passed
        assert result.incorrect.n_matching == 28
        expected = 1.0 - binomial_at_least(29, 0.9, 28)
        assert result.incorrect.achieved_confidence == pytest.approx(expected)
        assert result.incorrect.achieved_confidence < 0.95

    def test_floor_breach_fails_the_side_and_the_check(self):
        session = spot_session()
        plan = plan_spot_check(session, 0.95, seed=2)
        self.grade_all(session, plan, mismatches=set(plan.incorrect.record_ids[:4]))
        result = evaluate_spot_check(session, plan)
        assert result.incorrect.accuracy == pytest.approx(25 / 29)
        assert not result.incorrect.passed
        assert not result.passed
        assert result.correct.passed

    def test_incomplete_grading_is_an_error(self):
        session = spot_session()
        plan = plan_spot_check(session, 0.95, seed=2)
        with pytest.raises(ValueError, match="incomplete"):
            evaluate_spot_check(session, plan)

    def test_empty_bucket_passes_vacuously(self):
        session = open_session(
            make_scored([(0.9, "c"), (0.85, "c"), (0.45, "i")]),
            THRESHOLDS,
            CONSTRAINTS,
            "sc4",
        )
        plan = plan_spot_check(session, 0.9, seed=0)
        assert plan.incorrect.bucket_size == 0
        self.grade_all(session, plan)
        result = evaluate_spot_check(session, plan)
        assert result.incorrect.passed
        assert result.incorrect.achieved_confidence == 1.0

    def test_result_dict_is_json_safe(self):
        session = spot_session()
        plan = plan_spot_check(session, 0.95, seed=2)
        self.grade_all(session, plan)
        payload = evaluate_spot_check(session, plan).to_dict()
        json.dumps(payload)
        assert payload["passed"] is True


class TestSimulateDegraded:
    def base_session(self):
        pairs = [(0.1, "i")] * 0  # placeholder, replaced below
        pairs = (
            [(0.05 + 0.01 * i, "i") for i in range(10)]
            + [(0.8 + 0.01 * i, "c") for i in range(10)]
            + [(0.42 + 0.005 * i, "i") for i in range(10)]
            + [(0.52 + 0.005 * i, "c") for i in range(10)]
        )
        return open_session(make_scored(pairs), THRESHOLDS, CONSTRAINTS, "d1")

    def test_zero_fraction_is_a_clean_copy(self):
        session = self.base_session()
        submit_manual_grade(session, session.queue[0], Grade.INCORRECT)
        degraded = simulate_degraded(session, 0.0, seed=1)
        assert degraded.session_id == "d1.degraded"
        assert degraded.synthetic
        assert degraded.manual_grades == {}
        assert degraded.queue == session.queue
        for a, b in zip(session.scored.items, degraded.scored.items):
            assert a.record.grade == b.record.grade
            assert a.s == b.s

    def test_exact_flip_counts_per_stratum(self):
        session = self.base_session()
        # every record matches its stratum's leaning: 20 easy, 20 difficult
        degraded = simulate_degraded(session, 0.25, seed=3)
        easy_flips = 0
        diff_flips = 0
        for a, b in zip(session.scored.items, degraded.scored.items):
            if a.record.grade != b.record.grade:
                rid = a.record.record_id
                from selgrade.grader import DecisionKind

                if session.decisions[rid].kind is DecisionKind.DEFERRED:
                    diff_flips += 1
                else:
                    easy_flips += 1
        assert easy_flips == 5  # floor(0.25 * 20)
        assert diff_flips == 5

    def test_only_matching_records_flip(self):
        # a mismatching record (true Correct in the auto-incorrect bucket)
        # is already an error and must never be flipped
        pairs = [(0.05, "c")] + [(0.1 + 0.01 * i, "i") for i in range(9)] + [(0.9, "c")]
        session = open_session(make_scored(pairs), THRESHOLDS, CONSTRAINTS, "d2")
        degraded = simulate_degraded(session, 1.0, seed=0)
        assert degraded.scored.items[0].record.grade is Grade.CORRECT
        for a, b in zip(session.scored.items[1:10], degraded.scored.items[1:10]):
            assert b.record.grade is Grade.CORRECT  # flipped from Incorrect
        assert degraded.scored.items[10].record.grade is Grade.INCORRECT

    def test_decisions_and_scores_unchanged(self):
        session = self.base_session()
        degraded = simulate_degraded(session, 0.5, seed=2)
        assert {r: d.kind for r, d in degraded.decisions.items()} == {
            r: d.kind for r, d in session.decisions.items()
        }
        assert [i.s for i in degraded.scored.items] == [
            i.s for i in session.scored.items
        ]

    def test_synthetic_source_records_can_flip(self):
        record = GradingRecord(
            record_id="syn1",
            question_id="q1",
            question="q",
            correct_answer="a",
            given_answer="b",
            grade=Grade.INCORRECT,
            synthetic=True,
        )
        scored = ScoredDataset(
            items=(
                ScoredRecord(record=record, s=0.1),
                ScoredRecord(record=make_record("r1", Grade.CORRECT), s=0.9),
            ),
            role="E",
        )
        session = open_session(scored, THRESHOLDS, CONSTRAINTS, "d3")
        degraded = simulate_degraded(session, 1.0, seed=0)
        flipped = degraded.scored.items[0].record
        assert flipped.grade is Grade.CORRECT
        assert flipped.synthetic is False

    def test_custom_session_id_and_seed_determinism(self):
        session = self.base_session()
        a = simulate_degraded(session, 0.3, seed=7, session_id="x")
        b = simulate_degraded(session, 0.3, seed=7, session_id="x")
        assert a.session_id == "x"
        assert [i.record.grade for i in a.scored.items] == [
            i.record.grade for i in b.scored.items
        ]

    def test_fraction_bounds(self):
        with pytest.raises(ValueError, match="flip_fraction"):
            simulate_degraded(self.base_session(), 1.5)


class TestSampleExam:
    def test_size_is_ceiling_of_fraction(self):
        bench = make_benchmark(100, seed=0)
        assert len(sample_exam(bench.scored, 0.25, seed=1).items) == 25
        assert len(sample_exam(bench.scored, 0.101, seed=1).items) == 11
        assert len(sample_exam(bench.scored, 1.0, seed=1).items) == 100

    def test_subsequence_of_the_pool(self):
        bench = make_benchmark(200, seed=0)
        exam = sample_exam(bench.scored, 0.2, seed=4)
        pool_ids = [i.record.record_id for i in bench.scored.items]
        exam_ids = [i.record.record_id for i in exam.items]
        positions = [pool_ids.index(r) for r in exam_ids]
        assert positions == sorted(positions)
        assert len(set(exam_ids)) == len(exam_ids)

    def test_role_and_determinism(self):
        bench = make_benchmark(100, seed=0)
        a = sample_exam(bench.scored, 0.3, seed=9)
        b = sample_exam(bench.scored, 0.3, seed=9)
        assert a.role == "E"
        assert [i.record.record_id for i in a.items] == [
            i.record.record_id for i in b.items
        ]

    def test_fraction_bounds(self):
        bench = make_benchmark(50, seed=0)
        with pytest.raises(ValueError, match="fraction"):
            sample_exam(bench.scored, 0.0)
        with pytest.raises(ValueError, match="fraction"):
            sample_exam(bench.scored, 1.2)


class TestValidationTrials:
    def test_counts_are_consistent(self):
        bench = make_benchmark(600, seed=1)
        ref = build_reference(bench.scored, bench.thresholds, exam_sizes=[10, 20])
        out = run_validation_trials(
            bench.scored,
            bench.thresholds,
            bench.constraints,
            ref,
            n_trials=25,
            exam_fraction=0.1,
            seed=3,
        )
        total = sum(out[v.value] for v in Verdict)
        assert total == 25
        assert out["n_trials"] == 25
        assert out["accept_rate"] == pytest.approx(
            (out["accept"] + out["accept_with_warning"]) / 25
        )

    def test_degradation_shifts_verdicts_toward_reject(self):
        bench = make_benchmark(600, seed=1)
        ref = build_reference(bench.scored, bench.thresholds, exam_sizes=[10, 20])
        clean = run_validation_trials(
            bench.scored, bench.thresholds, bench.constraints, ref,
            n_trials=30, exam_fraction=0.15, seed=5,
        )
        degraded = run_validation_trials(
            bench.scored, bench.thresholds, bench.constraints, ref,
            n_trials=30, exam_fraction=0.15, seed=5, degrade_fraction=0.3,
        )
        assert degraded["reject"] > clean["reject"]
        assert degraded["reject_rate"] >= 0.9

    def test_trial_count_validated(self):
        bench = make_benchmark(100, seed=0)
        ref = build_reference(bench.scored, bench.thresholds, exam_sizes=[10])
        with pytest.raises(ValueError, match="n_trials"):
            run_validation_trials(
                bench.scored, bench.thresholds, bench.constraints, ref,
                n_trials=0, exam_fraction=0.5,
            )
