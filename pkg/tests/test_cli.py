"""CLI tests: each subcommand in process, plus parity with the service.

main() is exercised directly with argv lists so stdout/stderr can be
captured cheaply; two subprocess tests confirm the installed entry point
and the usage exit code. The differential tests at the bottom pin the
contract that the CLI and the HTTP service build identical calibration
artifacts and identical default ids from identical inputs.
"""

import json
import subprocess
import sys

import pytest
from fastapi.testclient import TestClient

from selgrade.cli import main
from selgrade.corpus import load_corpus_jsonl
from selgrade.service import ServiceConfig, create_app


def make_item(rid, s, grade, question="name the largest planet"):
    return {
        "record_id": rid,
        "question_id": "q1",
        "question": question,
        "correct_answer": "jupiter",
        "given_answer": f"answer {rid}",
        "grade": grade,
        "s": s,
    }


CAL_ITEMS = [
    make_item("d0", 0.1, "incorrect"),
    make_item("d1", 0.2, "incorrect"),
    make_item("d2", 0.3, "incorrect"),
    make_item("d3", 0.45, "correct"),
    make_item("d4", 0.55, "incorrect"),
    make_item("d5", 0.7, "correct"),
    make_item("d6", 0.8, "correct"),
    make_item("d7", 0.9, "correct"),
]

EXAM_ITEMS = [
    make_item("e0", 0.2, "incorrect"),
    make_item("e1", 0.4, "incorrect"),
    make_item("e2", 0.5, "correct"),
    make_item("e3", 0.8, "correct"),
    make_item("e4", 0.375, "incorrect"),
]

HONEST = {"e0": "incorrect", "e1": "incorrect", "e2": "correct", "e3": "correct", "e4": "incorrect"}


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture()
def cal_file(tmp_path, capsys):
    scored_path = tmp_path / "scored.jsonl"
    write_jsonl(scored_path, CAL_ITEMS)
    cal_path = tmp_path / "cal.json"
    run_json(
        capsys,
        "calibrate",
        "--in", str(scored_path),
        "--out", str(cal_path),
        "--c-min-incorrect", "1.0",
        "--c-min-correct", "1.0",
        "--exam-sizes", "4",
        "--n-boot", "50",
        "--seed", "0",
    )
    return cal_path


@pytest.fixture()
def session_file(tmp_path, capsys, cal_file):
    exam_path = tmp_path / "exam.jsonl"
    write_jsonl(exam_path, EXAM_ITEMS)
    session_path = tmp_path / "session.json"
    run_json(
        capsys,
        "grade", "open",
        "--scored", str(exam_path),
        "--calibration", str(cal_file),
        "--session", str(session_path),
    )
    return session_path


class TestIngest:
    def test_parses_rejects_and_dedups(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        rows = [
            {"question_id": "q1", "question": "a?", "correct_answer": "x", "given_answer": "y", "grade": "correct"},
            {"question_id": "q1", "question": "a?", "correct_answer": "x", "given_answer": "z", "grade": "incorrect"},
            {"question_id": "q1", "question": "a?", "correct_answer": "x", "given_answer": "y", "grade": "correct"},
        ]
        with open(raw, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
            fh.write("{broken\n")
            fh.write(json.dumps({"question_id": "q2", "question": "b?", "correct_answer": "x", "given_answer": "y", "grade": "sideways"}) + "\n")
        out_path = tmp_path / "corpus.jsonl"
        report = run_json(capsys, "ingest", "--in", str(raw), "--out", str(out_path))
        assert report["accepted"] == 3
        assert report["rejected"] == 2
        assert report["duplicates_removed"] == 1
        assert report["records_written"] == 2
        assert report["rejection_reasons"] == {"invalid_grade": 1, "invalid_json": 1}
        assert len(load_corpus_jsonl(str(out_path))) == 2

    def test_missing_input_is_io_error(self, tmp_path, capsys):
        code, out, err = run_cli(
            capsys, "ingest", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")
        )
        assert code == 1
        assert out == ""
        error = json.loads(err)
        assert error["error"]["code"] == "io_error"
        assert "\n" not in err.strip()


class TestStats:
    def test_reports_counts(self, tmp_path, capsys):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [dict(make_item(f"r{i}", None, "correct"), **{"question_id": f"q{i % 2}"}) for i in range(4)])
        # make_item includes "s": None; stats reads corpus fields only
        rows = [json.loads(line) for line in open(path)]
        for row in rows:
            row.pop("s")
        write_jsonl(path, rows)
        stats = run_json(capsys, "stats", "--in", str(path))
        assert stats["record_count"] == 4
        assert stats["question_count"] == 2
        assert stats["correct_fraction"] == 1.0


class TestBalance:
    def test_adds_synthetic_negatives(self, tmp_path, capsys):
        path = tmp_path / "c.jsonl"
        rows = [
            {"record_id": f"r{i}", "question_id": f"q{i}", "question": f"q {i}?",
             "correct_answer": "x", "given_answer": f"y{i}", "grade": "correct"}
            for i in range(3)
        ]
        rows.append({"record_id": "n0", "question_id": "q0", "question": "q 0?",
                     "correct_answer": "x", "given_answer": "wrong", "grade": "incorrect"})
        write_jsonl(path, rows)
        out_path = tmp_path / "balanced.jsonl"
        report = run_json(capsys, "balance", "--in", str(path), "--out", str(out_path), "--seed", "5")
        assert report == {
            "seed": 5,
            "records_in": 4,
            "records_out": 6,
            "synthetic_added": 2,
            "output": str(out_path),
        }


class TestSplit:
    def test_question_disjoint_files(self, tmp_path, capsys):
        path = tmp_path / "c.jsonl"
        rows = [
            {"record_id": f"r{i}", "question_id": f"q{i % 5}", "question": "w?",
             "correct_answer": "x", "given_answer": f"y{i}", "grade": "correct"}
            for i in range(10)
        ]
        write_jsonl(path, rows)
        paths = {name: tmp_path / f"{name}.jsonl" for name in ("train", "val", "test")}
        report = run_json(
            capsys, "split", "--in", str(path),
            "--train", str(paths["train"]), "--val", str(paths["val"]), "--test", str(paths["test"]),
            "--n-val", "1", "--n-test", "2", "--seed", "3",
        )
        assert report["train_records"] + report["val_records"] + report["test_records"] == 10
        questions = {
            name: {json.loads(line)["question_id"] for line in open(p)}
            for name, p in paths.items()
        }
        assert not questions["train"] & questions["val"]
        assert not questions["train"] & questions["test"]
        assert not questions["val"] & questions["test"]


class TestTrainAndScore:
    def test_train_then_score_deterministically(self, tmp_path, capsys):
        corpus_path = tmp_path / "train.jsonl"
        code, out, err = run_cli(capsys, "stats", "--in", str(corpus_path))
        assert code == 1  # missing file reports, does not crash

        from selgrade.corpus import dump_corpus_jsonl
        from selgrade.synth import synthetic_training_corpus

        dump_corpus_jsonl(synthetic_training_corpus(40, seed=1), str(corpus_path))
        head_path = tmp_path / "head.npz"
        report = run_json(
            capsys, "train", "--in", str(corpus_path), "--out", str(head_path),
            "--epochs", "2", "--hash-dim", "512", "--projection-dim", "32",
            "--learning-rate", "0.5", "--seed", "4",
        )
        assert report["seed"] == 4
        assert report["epochs_trained"] == 2
        assert len(report["epoch_losses"]) == 2
        assert head_path.exists()

        scored_path = tmp_path / "scored.jsonl"
        args = [
            "score", "--in", str(corpus_path), "--out", str(scored_path),
            "--head", str(head_path), "--hash-dim", "512", "--projection-dim", "32",
        ]
        run_json(capsys, *args)
        first = scored_path.read_bytes()
        scores = [json.loads(line)["s"] for line in open(scored_path)]
        assert all(-1.0 <= s <= 1.0 for s in scores)
        run_json(capsys, *args)
        assert scored_path.read_bytes() == first

    def test_zero_epoch_flag_rejected(self, tmp_path, capsys):
        from selgrade.corpus import dump_corpus_jsonl
        from selgrade.synth import synthetic_training_corpus

        corpus_path = tmp_path / "train.jsonl"
        dump_corpus_jsonl(synthetic_training_corpus(8, seed=1), str(corpus_path))
        code, out, err = run_cli(
            capsys, "train", "--in", str(corpus_path), "--out", str(tmp_path / "h.npz"),
            "--epochs", "-1",
        )
        assert code == 1
        assert json.loads(err)["error"]["code"] == "invalid"


class TestCalibrate:
    def test_thresholds_and_stable_output_file(self, tmp_path, capsys, cal_file):
        payload = json.loads(cal_file.read_text())
        assert payload["thresholds"]["t_incorrect"] == 0.375
        assert payload["thresholds"]["t_correct"] == 0.55
        first = cal_file.read_bytes()
        run_json(
            capsys, "calibrate",
            "--in", str(tmp_path / "scored.jsonl"), "--out", str(cal_file),
            "--c-min-incorrect", "1.0", "--c-min-correct", "1.0",
            "--exam-sizes", "4", "--n-boot", "50", "--seed", "0",
        )
        assert cal_file.read_bytes() == first

    def test_bad_floor_is_domain_error(self, tmp_path, capsys):
        scored_path = tmp_path / "scored.jsonl"
        write_jsonl(scored_path, CAL_ITEMS)
        code, out, err = run_cli(
            capsys, "calibrate", "--in", str(scored_path),
            "--c-min-incorrect", "1.5", "--c-min-correct", "0.8",
        )
        assert code == 1
        assert json.loads(err)["error"]["code"] == "invalid"


class TestGradeAndValidate:
    def test_full_session_loop(self, tmp_path, capsys, cal_file, session_file):
        queue = run_json(capsys, "grade", "queue", "--session", str(session_file))
        assert [e["record_id"] for e in queue["queue"]] == ["e4", "e1", "e2"]
        assert queue["remaining"] == 3

        for rid in ("e4", "e1", "e2"):
            summary = run_json(
                capsys, "grade", "submit", "--session", str(session_file),
                "--record-id", rid, "--grade", HONEST[rid],
            )
        assert summary["status"] == "awaiting_validation"
        assert summary["manual_remaining"] == 0

        report = run_json(
            capsys, "validate", "--session", str(session_file),
            "--calibration", str(cal_file), "--apply",
        )
        assert report["verdict"] == "reject"
        assert report["status"] == "rejected"
        assert report["delta_correct"] == pytest.approx(-1 / 6)
        stored = json.loads(session_file.read_text())
        assert stored["status"] == "rejected"

    def test_margin_path_accepts_with_warning(self, tmp_path, capsys, cal_file, session_file):
        for rid in ("e4", "e1", "e2"):
            run_json(
                capsys, "grade", "submit", "--session", str(session_file),
                "--record-id", rid, "--grade", HONEST[rid],
            )
        report = run_json(
            capsys, "validate", "--session", str(session_file),
            "--calibration", str(cal_file), "--margin", "0.5", "--n-min", "1",
        )
        assert report["verdict"] == "accept_with_warning"
        assert "status" not in report  # no --apply, session untouched
        assert json.loads(session_file.read_text())["status"] == "awaiting_validation"

    def test_submit_unknown_record_fails(self, capsys, session_file):
        code, out, err = run_cli(
            capsys, "grade", "submit", "--session", str(session_file),
            "--record-id", "ghost", "--grade", "correct",
        )
        assert code == 1
        assert json.loads(err)["error"]["code"] == "invalid"

    def test_default_session_id_is_content_stable(self, tmp_path, capsys, cal_file):
        exam_path = tmp_path / "exam.jsonl"
        write_jsonl(exam_path, EXAM_ITEMS)
        ids = []
        for name in ("s1.json", "s2.json"):
            summary = run_json(
                capsys, "grade", "open",
                "--scored", str(exam_path), "--calibration", str(cal_file),
                "--session", str(tmp_path / name),
            )
            ids.append(summary["session_id"])
        assert ids[0] == ids[1]
        assert ids[0].startswith("s")


class TestSimulate:
    def test_benchmark_trials(self, capsys):
        report = run_json(
            capsys, "simulate", "--n", "300", "--n-trials", "10",
            "--exam-fraction", "0.2", "--n-boot", "50", "--seed", "7",
        )
        assert report["n_trials"] == 10
        verdicts = (
            report["accept"] + report["accept_with_warning"]
            + report["reject"] + report["insufficient_evidence"]
        )
        assert verdicts == 10
        assert report["seed"] == 7
        assert report["source"] == "benchmark(n=300, seed=0)"

    def test_data_without_calibration_fails(self, tmp_path, capsys):
        scored_path = tmp_path / "scored.jsonl"
        write_jsonl(scored_path, CAL_ITEMS)
        code, out, err = run_cli(capsys, "simulate", "--data", str(scored_path))
        assert code == 1
        assert "calibration" in json.loads(err)["error"]["message"]


class TestCurves:
    def test_writes_csv(self, tmp_path, capsys):
        scored_path = tmp_path / "scored.jsonl"
        write_jsonl(scored_path, CAL_ITEMS)
        out_path = tmp_path / "curve.csv"
        report = run_json(
            capsys, "curves", "--in", str(scored_path), "--out", str(out_path),
            "--side", "correct", "--n-points", "5",
        )
        assert report["points"] == 5
        lines = out_path.read_text().splitlines()
        assert lines[0] == "threshold,accuracy,coverage,n"
        assert len(lines) == 6


class TestEntryPoint:
    def test_installed_script_runs(self, tmp_path):
        scored_path = tmp_path / "scored.jsonl"
        write_jsonl(scored_path, CAL_ITEMS)
        result = subprocess.run(
            [sys.executable, "-m", "selgrade.cli", "calibrate",
             "--in", str(scored_path),
             "--c-min-incorrect", "1.0", "--c-min-correct", "1.0",
             "--exam-sizes", "4", "--n-boot", "20"],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr
        assert json.loads(result.stdout)["thresholds"]["t_incorrect"] == 0.375

    def test_usage_error_exits_2(self):
        result = subprocess.run(
            [sys.executable, "-m", "selgrade.cli", "no-such-command"],
            capture_output=True, text=True,
        )
        assert result.returncode == 2


class TestServiceParity:
    def test_calibration_artifact_matches_service_bytes(self, tmp_path, capsys, cal_file, monkeypatch):
        monkeypatch.delenv("SELGRADE_TOKEN", raising=False)
        client = TestClient(create_app(ServiceConfig(data_dir=str(tmp_path / "svc"))))
        response = client.post(
            "/calibrations",
            json={
                "items": CAL_ITEMS,
                "constraints": {"c_min_incorrect": 1.0, "c_min_correct": 1.0},
                "exam_sizes": [4],
                "n_boot": 50,
                "seed": 0,
            },
        )
        assert response.status_code == 201
        cid = response.json()["calibration_id"]
        assert cid == json.loads(cal_file.read_text())["calibration_id"]
        assert client.get(f"/calibrations/{cid}").content == cal_file.read_bytes()

    def test_default_session_ids_agree(self, tmp_path, capsys, cal_file, monkeypatch):
        monkeypatch.delenv("SELGRADE_TOKEN", raising=False)
        client = TestClient(create_app(ServiceConfig(data_dir=str(tmp_path / "svc"))))
        cal_payload = json.loads(cal_file.read_text())
        client.post(
            "/calibrations",
            json={
                "items": CAL_ITEMS,
                "constraints": {"c_min_incorrect": 1.0, "c_min_correct": 1.0},
                "exam_sizes": [4],
                "n_boot": 50,
                "seed": 0,
            },
        )
        service_sid = client.post(
            "/sessions",
            json={"items": EXAM_ITEMS, "calibration_id": cal_payload["calibration_id"]},
        ).json()["session_id"]

        exam_path = tmp_path / "exam.jsonl"
        write_jsonl(exam_path, EXAM_ITEMS)
        summary = run_json(
            capsys, "grade", "open",
            "--scored", str(exam_path), "--calibration", str(cal_file),
            "--session", str(tmp_path / "s.json"),
        )
        assert summary["session_id"] == service_sid
