"""Command line front end.

The subcommands compose the library stages file to file so a full pipeline
runs from a shell: ingest raw lines, split by question, train a projection
head, score, calibrate, then open and work grading sessions. Every command
prints one JSON document to stdout. Domain errors come back as a single
JSON line on stderr with exit code 1; argparse keeps its usual exit code 2
for usage mistakes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .calibration import (
    AccuracyConstraints,
    Thresholds,
    accuracy_curve,
    curve_to_csv,
    dump_scored_jsonl,
    load_scored_jsonl,
    scored_to_dict,
)
from .corpus import (
    Grade,
    FieldLimits,
    Role,
    balance,
    compute_stats,
    deduplicate,
    dump_corpus_jsonl,
    grade_conflicts,
    ingest,
    load_corpus_jsonl,
    split_by_question,
    with_role,
)
from .embedding import (
    EmbedderConfig,
    EmbedderKind,
    RemoteBackendConfig,
    TrainConfig,
    load_head,
    save_head,
    score_corpus,
    train_projection,
)
from .grader import (
    next_deferred,
    open_session,
    session_from_dict,
    session_summary,
    session_to_dict,
    submit_manual_grade,
)
from .service import (
    ServiceConfig,
    build_calibration_payload,
    canonical_json,
    content_id,
    create_app,
)
from .synth import make_benchmark
from .validation import (
    apply_verdict,
    build_reference,
    reference_from_dict,
    run_validation_trials,
    validate,
)

__all__ = ["main"]


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")


def _read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _embedder_config(args: argparse.Namespace) -> EmbedderConfig:
    remote = None
    kind = EmbedderKind.HASHED_NGRAM
    if getattr(args, "remote_url", None):
        kind = EmbedderKind.REMOTE
        remote = RemoteBackendConfig(
            url=args.remote_url,
            timeout_ms=args.remote_timeout_ms,
            batch_cap=args.remote_batch_cap,
            dim=args.remote_dim,
            bearer_token_env=args.remote_token_env,
        )
    return EmbedderConfig(
        kind=kind,
        ngram_sizes=tuple(int(n) for n in args.ngram_sizes.split(",")),
        hash_dim=args.hash_dim,
        projection_dim=args.projection_dim,
        hash_seed=args.hash_seed,
        remote=remote,
    )


def _add_embedder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hash-dim", type=int, default=2**15)
    parser.add_argument("--projection-dim", type=int, default=128)
    parser.add_argument("--ngram-sizes", default="3,4")
    parser.add_argument("--hash-seed", type=int, default=0)


def _add_remote_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--remote-url", default=None)
    parser.add_argument("--remote-timeout-ms", type=int, default=10_000)
    parser.add_argument("--remote-batch-cap", type=int, default=32)
    parser.add_argument("--remote-dim", type=int, default=None)
    parser.add_argument("--remote-token-env", default=None)


def _cmd_ingest(args: argparse.Namespace) -> None:
    limits = FieldLimits(
        question_chars=args.max_question_chars, answer_chars=args.max_answer_chars
    )
    with open(args.input, encoding="utf-8") as fh:
        corpus, report = ingest(fh, limits, Role(args.role))
    deduped = deduplicate(corpus)
    report.duplicates_removed = len(corpus) - len(deduped)
    report.grade_conflicts = len(grade_conflicts(deduped))
    dump_corpus_jsonl(deduped, args.output)
    out = report.to_dict()
    out["records_written"] = len(deduped)
    out["output"] = args.output
    _emit(out)


def _cmd_stats(args: argparse.Namespace) -> None:
    corpus = load_corpus_jsonl(args.input, Role(args.role))
    _emit(dataclasses.asdict(compute_stats(corpus)))


def _cmd_balance(args: argparse.Namespace) -> None:
    corpus = load_corpus_jsonl(args.input, Role(args.role))
    balanced = balance(corpus, args.seed)
    dump_corpus_jsonl(balanced, args.output)
    _emit(
        {
            "seed": args.seed,
            "records_in": len(corpus),
            "records_out": len(balanced),
            "synthetic_added": len(balanced) - len(corpus),
            "output": args.output,
        }
    )


def _cmd_split(args: argparse.Namespace) -> None:
    corpus = load_corpus_jsonl(args.input)
    train, val, test = split_by_question(corpus, args.n_val, args.n_test, args.seed)
    dump_corpus_jsonl(with_role(train, Role.TRAIN), args.train)
    dump_corpus_jsonl(with_role(val, Role.VALIDATION), args.val)
    dump_corpus_jsonl(with_role(test, Role.TEST), args.test)
    _emit(
        {
            "seed": args.seed,
            "train_records": len(train),
            "val_records": len(val),
            "test_records": len(test),
        }
    )


def _cmd_train(args: argparse.Namespace) -> None:
    corpus = load_corpus_jsonl(args.input, Role.TRAIN)
    config = _embedder_config(args)
    train_config = TrainConfig(
        epochs=args.epochs,
        margin=args.margin,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    head = train_projection(corpus, config, train_config)
    save_head(head, args.output)
    _emit(
        {
            "seed": args.seed,
            "records": len(corpus),
            "epochs_trained": head.epochs_trained,
            "epoch_losses": list(head.epoch_losses),
            "final_loss": head.final_loss,
            "output": args.output,
        }
    )


def _cmd_score(args: argparse.Namespace) -> None:
    corpus = load_corpus_jsonl(args.input)
    config = _embedder_config(args)
    head = load_head(args.head) if args.head else None
    scored = score_corpus(corpus, config, head, role=args.role)
    dump_scored_jsonl(scored, args.output)
    _emit(
        {
            "records": len(scored.items),
            "role": scored.role,
            "output": args.output,
        }
    )


def _cmd_calibrate(args: argparse.Namespace) -> None:
    scored = load_scored_jsonl(args.input)
    constraints = AccuracyConstraints(
        c_min_incorrect=args.c_min_incorrect, c_min_correct=args.c_min_correct
    )
    payload = build_calibration_payload(
        scored,
        constraints,
        [int(m) for m in args.exam_sizes.split(",")],
        n_boot=args.n_boot,
        seed=args.seed,
        calibration_id=args.calibration_id,
    )
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(payload))
    _emit(payload)


def _session_paths(args: argparse.Namespace) -> str:
    return args.session


def _load_session(path: str):
    return session_from_dict(_read_json(path))


def _store_session(path: str, session) -> None:
    _write_json(path, session_to_dict(session))


def _cmd_grade_open(args: argparse.Namespace) -> None:
    scored = load_scored_jsonl(args.scored, role="E")
    calibration = _read_json(args.calibration)
    basis = {
        "calibration_id": calibration["calibration_id"],
        "items": [scored_to_dict(item) for item in scored.items],
        "role": scored.role,
        "thresholds": calibration["thresholds"],
        "constraints": calibration["constraints"],
        "synthetic": args.synthetic,
    }
    session_id = args.session_id or content_id("s", basis)
    session = open_session(
        scored,
        Thresholds(**calibration["thresholds"]),
        AccuracyConstraints(**calibration["constraints"]),
        session_id,
        synthetic=args.synthetic,
    )
    _store_session(args.session, session)
    out = session_summary(session)
    out["calibration_id"] = calibration["calibration_id"]
    out["session_file"] = args.session
    _emit(out)


def _cmd_grade_queue(args: argparse.Namespace) -> None:
    session = _load_session(args.session)
    k = args.k if args.k is not None else max(1, len(session.queue))
    entries = []
    for rid in next_deferred(session, k):
        item = session.record(rid)
        entries.append(
            {
                "record_id": rid,
                "s": item.s,
                "question": item.record.question,
                "correct_answer": item.record.correct_answer,
                "given_answer": item.record.given_answer,
            }
        )
    remaining = len([r for r in session.queue if r not in session.manual_grades])
    _emit({"session_id": session.session_id, "queue": entries, "remaining": remaining})


def _cmd_grade_submit(args: argparse.Namespace) -> None:
    session = _load_session(args.session)
    submit_manual_grade(
        session, args.record_id, Grade(args.grade.casefold()), source=args.source
    )
    _store_session(args.session, session)
    _emit(session_summary(session))


def _cmd_validate(args: argparse.Namespace) -> None:
    session = _load_session(args.session)
    calibration = _read_json(args.calibration)
    reference = reference_from_dict(calibration["reference"])
    report = validate(session, reference, margin=args.margin, n_min=args.n_min)
    out = report.to_dict()
    if args.apply:
        status = apply_verdict(session, report.verdict)
        _store_session(args.session, session)
        out["status"] = status.value
    _emit(out)


def _cmd_simulate(args: argparse.Namespace) -> None:
    if args.data:
        if not args.calibration:
            raise ValueError("--calibration is required with --data")
        pool = load_scored_jsonl(args.data)
        calibration = _read_json(args.calibration)
        thresholds = Thresholds(**calibration["thresholds"])
        constraints = AccuracyConstraints(**calibration["constraints"])
        reference = reference_from_dict(calibration["reference"])
        source = args.data
    else:
        bench = make_benchmark(args.n, seed=args.benchmark_seed)
        pool, thresholds, constraints = (
            bench.scored,
            bench.thresholds,
            bench.constraints,
        )
        reference = build_reference(
            pool,
            thresholds,
            [int(m) for m in args.exam_sizes.split(",")],
            n_boot=args.n_boot,
            seed=args.seed,
        )
        source = f"benchmark(n={args.n}, seed={args.benchmark_seed})"
    results = run_validation_trials(
        pool,
        thresholds,
        constraints,
        reference,
        n_trials=args.n_trials,
        exam_fraction=args.exam_fraction,
        margin=args.margin,
        seed=args.seed,
        degrade_fraction=args.degrade,
        n_min=args.n_min,
    )
    results["seed"] = args.seed
    results["source"] = source
    _emit(results)


def _cmd_curves(args: argparse.Namespace) -> None:
    scored = load_scored_jsonl(args.input)
    points = accuracy_curve(scored, Grade(args.side), args.n_points)
    csv_text = curve_to_csv(points)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    _emit({"points": len(points), "side": args.side, "output": args.output})


def _cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    config = ServiceConfig(
        data_dir=args.data_dir,
        auth_token_env=args.auth_env,
        snapshot_every=args.snapshot_every,
        ui_dir=args.ui_dir,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="info")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selgrade",
        description="selective autograding: score, calibrate, defer, validate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw JSONL records into a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--role", default="train", choices=[r.value for r in Role])
    p.add_argument("--max-question-chars", type=int, default=128)
    p.add_argument("--max-answer-chars", type=int, default=64)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="summarize a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--role", default="train", choices=[r.value for r in Role])
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("balance", help="equalize grades with synthetic negatives")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--role", default="train", choices=[r.value for r in Role])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_balance)

    p = sub.add_parser("split", help="question-disjoint train/val/test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--n-val", type=int, required=True)
    p.add_argument("--n-test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train a projection head on a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    _add_embedder_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="similarity-score a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--head", default=None)
    p.add_argument("--role", default="D")
    _add_embedder_flags(p)
    _add_remote_flags(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("calibrate", help="pick thresholds and build a reference")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", default=None)
    p.add_argument("--c-min-incorrect", type=float, required=True)
    p.add_argument("--c-min-correct", type=float, required=True)
    p.add_argument("--exam-sizes", default="20,30,40,60")
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration-id", default=None)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("grade", help="open and work a grading session file")
    grade_sub = p.add_subparsers(dest="grade_command", required=True)

    g = grade_sub.add_parser("open", help="auto-grade an exam into a session file")
    g.add_argument("--scored", required=True)
    g.add_argument("--calibration", required=True)
    g.add_argument("--session", required=True)
    g.add_argument("--session-id", default=None)
    g.add_argument("--synthetic", action="store_true")
    g.set_defaults(func=_cmd_grade_open)

    g = grade_sub.add_parser("queue", help="show the deferred queue")
    g.add_argument("--session", required=True)
    g.add_argument("-k", type=int, default=None)
    g.set_defaults(func=_cmd_grade_queue)

    g = grade_sub.add_parser("submit", help="record a manual grade")
    g.add_argument("--session", required=True)
    g.add_argument("--record-id", required=True)
    g.add_argument("--grade", required=True)
    g.add_argument("--source", default="manual")
    g.set_defaults(func=_cmd_grade_submit)

    p = sub.add_parser("validate", help="compare a session against its reference")
    p.add_argument("--session", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--n-min", type=int, default=5)
    p.add_argument("--apply", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate", help="run repeated exam validation trials")
    p.add_argument("--data", default=None)
    p.add_argument("--calibration", default=None)
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--benchmark-seed", type=int, default=0)
    p.add_argument("--exam-sizes", default="20,30,40,60")
    p.add_argument("--n-boot", type=int, default=300)
    p.add_argument("--n-trials", type=int, default=100)
    p.add_argument("--exam-fraction", type=float, default=0.1)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--n-min", type=int, default=5)
    p.add_argument("--degrade", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("curves", help="trace an accuracy/coverage curve to CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--side", required=True, choices=[g.value for g in Grade])
    p.add_argument("--n-points", type=int, default=50)
    p.set_defaults(func=_cmd_curves)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--auth-env", default="SELGRADE_TOKEN")
    p.add_argument("--snapshot-every", type=int, default=20)
    p.add_argument("--ui-dir", default=None, help="serve a built webui at /ui")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except json.JSONDecodeError as exc:
        return _fail("bad_input", str(exc))
    except (ValueError, KeyError) as exc:
        code = "invalid" if isinstance(exc, ValueError) else "bad_input"
        return _fail(code, str(exc))
    except OSError as exc:
        return _fail("io_error", str(exc))
    return 0


def _fail(code: str, message: str) -> int:
    print(json.dumps({"error": {"code": code, "message": message}}), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
