"""Command-line pipeline driver.

Subcommands: synth, extract, train, eval, predict, judge, arbitrate, plan,
report, review, serve. Every subcommand reads one --config TOML/JSON file
(section named after the subcommand) with flags taking precedence. Exit
codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .. import classifier, features, ingest, planner, trace_model
from ..arbitration import ReviewQueue, arbitrate
from ..errors import VeritraceError
from ..judge import (
    DocumentStore,
    VerdictCategory,
    answer_category,
    judge_answer,
    retrieve_context,
)
from ..providers import MockDecomposer, MockJudgeProvider
from . import config as run_config


def _load_cfg(args) -> tuple[dict, str]:
    cfg = run_config.load_config(args.config) if args.config else {}
    return cfg, run_config.config_hash(cfg)


def _write_meta(out_path, command: str, cfg_hash: str, **extra) -> None:
    meta = {"command": command, "config_hash": cfg_hash, **extra}
    with open(str(out_path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _schema_sidecar_path(corpus_path) -> Path:
    return Path(str(corpus_path) + ".schema.json")


def _write_schema_sidecar(schema, corpus_path) -> None:
    payload = {
        "schema_id": schema.schema_id,
        "model_ids": list(schema.model_ids),
        "k": schema.k,
        "pairs": [list(p) for p in schema.pairs],
        "names": list(schema.names),
    }
    with open(_schema_sidecar_path(corpus_path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_schema_sidecar(corpus_path):
    path = _schema_sidecar_path(corpus_path)
    if not path.is_file():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return features.feature_schema(
        payload["model_ids"], payload["k"], [tuple(p) for p in payload["pairs"]]
    )


def _read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rows.append(json.loads(raw))
            except json.JSONDecodeError as exc:
                raise VeritraceError(f"{path} line {lineno}: invalid JSON: {exc}") from exc
    return rows


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "synth")
    mix_args = args.phenotype or sec.get("phenotypes") or ["factual=100"]
    mix = {}
    for entry in mix_args:
        if isinstance(entry, str) and "=" in entry:
            name, _, count = entry.partition("=")
            mix[name.strip()] = int(count)
        else:
            raise VeritraceError(f"--phenotype expects name=count, got {entry!r}")
    seed = int(run_config.pick(args.seed, sec, "seed", 0))
    k = int(run_config.pick(args.k, sec, "k", 50))
    n_models = int(run_config.pick(args.models, sec, "models", 3))
    lo = int(run_config.pick(args.min_len, sec, "min_len", 24))
    hi = int(run_config.pick(args.max_len, sec, "max_len", 48))
    traces = ingest.generate_mixture(mix, n_models=n_models, k=k, seed=seed, length_range=(lo, hi))
    trace_model.write_trace_file(traces, args.out)
    _write_meta(args.out, "synth", cfg_hash, seed=seed, k=k, models=n_models, mix=mix)
    print(f"wrote {len(traces)} traces -> {args.out}")
    return 0


def cmd_extract(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "extract")
    feature_config = features.FeatureConfig(
        residual=run_config.pick(args.residual, sec, "residual", "bucket"),
        alignment=run_config.pick(args.alignment, sec, "alignment", "strict"),
        epsilon=float(run_config.pick(args.epsilon, sec, "epsilon", features.DEFAULT_EPSILON)),
    )
    schema = None
    count = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for trace in trace_model.iter_trace_file(args.traces):
            if schema is None:
                ks = {mt.k for mt in trace.model_traces}
                if len(ks) != 1:
                    raise VeritraceError(f"models disagree on k: {sorted(ks)}")
                schema = features.feature_schema(sorted(trace.model_ids), ks.pop())
            vector = features.assemble_feature_vector(trace, schema, feature_config)
            rec = {
                "answer_id": vector.answer_id,
                "schema_id": vector.schema_id,
                "label": vector.label,
                "values": [float(x) for x in vector.values],
                "warnings": vector.warnings,
            }
            out.write(json.dumps(rec, separators=(",", ":")) + "\n")
            count += 1
    if schema is None:
        raise VeritraceError(f"no traces found in {args.traces}")
    _write_schema_sidecar(schema, args.out)
    _write_meta(args.out, "extract", cfg_hash, schema_id=schema.schema_id,
                residual=feature_config.residual, alignment=feature_config.alignment)
    print(f"extracted {count} vectors (schema {schema.schema_id}) -> {args.out}")
    return 0


def _stacking_config(args, sec) -> classifier.StackingConfig:
    seed = int(run_config.pick(args.seed, sec, "seed", 42))
    return classifier.StackingConfig(
        rf=classifier.RfConfig(
            n_trees=int(run_config.pick(args.rf_trees, sec, "rf_trees", 1000)),
        ),
        lr=classifier.LrConfig(
            max_iterations=int(run_config.pick(args.lr_max_iter, sec, "lr_max_iter", 1000)),
        ),
        gbt=classifier.GbtConfig(
            n_estimators=int(run_config.pick(args.gbt_estimators, sec, "gbt_estimators", 5000)),
            learning_rate=float(run_config.pick(args.gbt_learning_rate, sec, "gbt_learning_rate", 0.005)),
            max_depth=int(run_config.pick(args.gbt_depth, sec, "gbt_depth", 3)),
            feature_subsample_per_tree=float(
                run_config.pick(args.gbt_colsample, sec, "gbt_colsample", 0.8)
            ),
            seed=seed,
        ),
        cv_folds=int(run_config.pick(args.cv_folds, sec, "cv_folds", 5)),
        seed=seed,
    )


def _dataset_to_corpus_rows(data) -> list[dict]:
    rows = []
    for i, answer_id in enumerate(data.ids):
        rows.append(
            {
                "answer_id": answer_id,
                "schema_id": data.schema_id,
                "label": classifier.CODE_TO_LABEL[int(data.y[i])],
                "values": [float(x) for x in data.x[i]],
                "warnings": [],
            }
        )
    return rows


def cmd_train(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "train")
    data = ingest.load_labeled_dataset(args.features)
    stacking_config = _stacking_config(args, sec)
    holdout = run_config.pick(args.holdout, sec, "holdout", None)
    if holdout is not None:
        if not args.holdout_out:
            raise VeritraceError("--holdout needs --holdout-out for the test corpus")
        split_seed = int(run_config.pick(args.split_seed, sec, "split_seed", 42))
        data, test = classifier.stratified_split(data, 1.0 - float(holdout), split_seed)
        _write_jsonl(args.holdout_out, _dataset_to_corpus_rows(test))
        schema = _read_schema_sidecar(args.features)
        if schema is not None:
            _write_schema_sidecar(schema, args.holdout_out)
        print(f"held out {len(test)} rows -> {args.holdout_out}")
    model = classifier.train_stacking(data, stacking_config)
    schema = _read_schema_sidecar(args.features)
    if schema is not None:
        model.metadata["schema"] = {
            "model_ids": list(schema.model_ids),
            "k": schema.k,
            "pairs": [list(p) for p in schema.pairs],
        }
    model.metadata["config_hash"] = cfg_hash
    classifier.save_model(model, args.out)
    counts = data.class_counts()
    print(
        f"trained on {len(data)} rows (fact={counts['fact']}, "
        f"hallucination={counts['hallucination']}), schema {model.schema_id} -> {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "eval")
    threshold = float(run_config.pick(args.threshold, sec, "threshold", 0.5))
    model = classifier.load_model(args.model)
    data = ingest.load_labeled_dataset(args.features)
    report = classifier.evaluate(model, data, threshold=threshold,
                                 meta={"config_hash": cfg_hash})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(indent=2) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    (out_dir / "roc.csv").write_text(report.roc_csv(), encoding="utf-8")
    print(report.to_text())
    print(f"\nauc={report.auc_hallucination:.6f} accuracy={report.accuracy:.6f}")
    return 0


def cmd_predict(args) -> int:
    _, cfg_hash = _load_cfg(args)
    model = classifier.load_model(args.model)
    vectors = features.read_feature_corpus(args.features)
    if not vectors:
        raise VeritraceError(f"empty corpus: {args.features}")
    rows = []
    for v in vectors:
        probability = classifier.predict_proba(model, v)
        rows.append(
            {
                "answer_id": v.answer_id,
                "hallucination_probability": probability,
                "label": v.label,
            }
        )
    _write_jsonl(args.out, rows)
    _write_meta(args.out, "predict", cfg_hash, model_schema=model.schema_id)
    print(f"scored {len(rows)} vectors -> {args.out}")
    return 0


def cmd_judge(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "judge")
    granularity = run_config.pick(args.granularity, sec, "granularity", "paragraph")
    retries = int(run_config.pick(args.retries, sec, "retries", 3))
    store = DocumentStore.from_path(args.store)
    fixture_path = run_config.pick(args.provider_fixture, sec, "provider_fixture", None)
    if fixture_path is None:
        raise VeritraceError("a --provider-fixture file is required (mock judge sets)")
    with open(fixture_path, "r", encoding="utf-8") as fh:
        fixture = json.load(fh)
    provider = MockJudgeProvider(
        facts=fixture.get("facts", ()), contradicted=fixture.get("contradicted", ())
    )
    decomposer = MockDecomposer(mapping=fixture.get("claims", {}))
    transcript = open(args.transcript, "w", encoding="utf-8") if args.transcript else None
    rows = []
    try:
        for rec in _read_jsonl(args.answers):
            for key in ("answer_id", "context_key", "answer"):
                if key not in rec:
                    raise VeritraceError(f"answers file record missing '{key}'")
            context = retrieve_context(store, rec["context_key"], fallback=args.fallback)
            judgement = judge_answer(
                rec["answer"], context.text, granularity, provider,
                decomposer=decomposer, retries=retries, transcript=transcript,
            )
            rows.append(
                {
                    "answer_id": rec["answer_id"],
                    "context_key": context.key,
                    "category": answer_category(judgement).value,
                    **judgement.to_json(),
                }
            )
    finally:
        if transcript is not None:
            transcript.close()
    _write_jsonl(args.out, rows)
    _write_meta(args.out, "judge", cfg_hash, granularity=granularity)
    print(f"judged {len(rows)} answers -> {args.out}")
    return 0


def cmd_arbitrate(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "arbitrate")
    threshold = float(run_config.pick(args.threshold, sec, "threshold", 0.5))
    scores = {r["answer_id"]: float(r["hallucination_probability"])
              for r in _read_jsonl(args.scores)}
    outcomes = []
    queue = ReviewQueue(args.queue) if args.queue else None
    n_escalated = 0
    for rec in _read_jsonl(args.verdicts):
        answer_id = rec["answer_id"]
        if answer_id not in scores:
            raise VeritraceError(f"no classifier score for answer {answer_id!r}")
        outcome = arbitrate(
            VerdictCategory(rec["category"]), scores[answer_id],
            threshold=threshold, answer_id=answer_id,
        )
        if outcome.escalate and queue is not None:
            queue.enqueue(outcome)
            n_escalated += 1
        outcomes.append(outcome.to_json())
    _write_jsonl(args.out, outcomes)
    _write_meta(args.out, "arbitrate", cfg_hash, threshold=threshold)
    print(f"arbitrated {len(outcomes)} answers ({n_escalated} escalated) -> {args.out}")
    return 0


def _ranked_items(rows, need_correct=False) -> list[planner.RankedItem]:
    items = []
    for rec in rows:
        correct = rec.get("correct")
        if need_correct and correct is None:
            raise VeritraceError(
                f"scores row for {rec.get('answer_id')!r} is missing 'correct'"
            )
        items.append(
            planner.RankedItem(
                id=rec["answer_id"],
                hallucination_probability=float(rec["hallucination_probability"]),
                correct=correct,
            )
        )
    return items


def cmd_plan(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "plan")
    fraction = float(run_config.pick(args.fraction, sec, "fraction", 0.4))
    kind = run_config.pick(args.action, sec, "action", "majority_vote")
    samples = int(run_config.pick(args.samples, sec, "samples", 12))
    items = _ranked_items(_read_jsonl(args.scores))
    provenance = {"config_hash": cfg_hash}
    if args.model:
        provenance["model_hash"] = classifier.model_file_hash(args.model)
    action = planner.Action(kind=kind, samples=samples if kind == "majority_vote" else 0)
    plan = planner.build_plan(items, fraction, action, provenance=provenance)
    planner.save_plan(plan, args.out)
    print(
        f"plan: {len(plan.selected)} escalated ({action.kind}), "
        f"{len(plan.accepted)} accepted -> {args.out}"
    )
    return 0


def cmd_report(args) -> int:
    cfg, cfg_hash = _load_cfg(args)
    sec = run_config.section(cfg, "report")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    percentiles = run_config.pick(args.percentiles, sec, "percentiles", None)
    if percentiles is not None:
        if not args.scores:
            raise VeritraceError("--percentiles needs --scores with 'correct' flags")
        items = _ranked_items(_read_jsonl(args.scores), need_correct=True)
        rows = planner.accuracy_by_bin(items, int(percentiles))
        (out_dir / "percentiles.csv").write_text(
            planner.accuracy_table_csv(rows), encoding="utf-8"
        )
        wrote.append("percentiles.csv")
    if args.model and args.features:
        model = classifier.load_model(args.model)
        data = ingest.load_labeled_dataset(args.features)
        report = classifier.evaluate(model, data, meta={"config_hash": cfg_hash})
        (out_dir / "roc.csv").write_text(report.roc_csv(), encoding="utf-8")
        (out_dir / "report.json").write_text(report.to_json(indent=2) + "\n", encoding="utf-8")
        wrote.extend(["roc.csv", "report.json"])
    if args.pca:
        if not args.features:
            raise VeritraceError("--pca needs --features")
        data = ingest.load_labeled_dataset(args.features)
        coords, ratios = classifier.pca_projection(data.x, components=2)
        lines = ["answer_id,label,pc1,pc2"]
        for i, answer_id in enumerate(data.ids):
            label = classifier.CODE_TO_LABEL[int(data.y[i])]
            lines.append(f"{answer_id},{label},{coords[i, 0]!r},{coords[i, 1]!r}")
        (out_dir / "pca.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"pca explained variance ratios: {ratios[0]:.4f}, {ratios[1]:.4f}")
        wrote.append("pca.csv")
    if not wrote:
        raise VeritraceError(
            "nothing to report: pass --percentiles/--scores, --model/--features, or --pca"
        )
    print(f"wrote {', '.join(wrote)} -> {out_dir}")
    return 0


def cmd_review(args) -> int:
    queue = ReviewQueue(args.queue)
    if args.review_command == "list":
        items = queue.pending() if args.pending else queue.items()
        for item in items:
            print(
                f"{item.item_id}  {item.answer_id}  {item.final_status}  "
                f"p={item.clf_probability:.3f}  label={item.label}"
            )
        print(f"{len(items)} items")
        return 0
    if args.review_command == "resolve":
        record = queue.resolve(args.item, args.label)
        print(f"resolved {record.item_id} ({record.answer_id}) as {record.label}")
        return 0
    raise VeritraceError(f"unknown review command {args.review_command!r}")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app_from_files

    cfg, _ = _load_cfg(args)
    sec = run_config.section(cfg, "serve")
    host = run_config.pick(args.host, sec, "host", "127.0.0.1")
    port = int(run_config.pick(args.port, sec, "port", 8080))
    app = app_from_files(args.model)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="veritrace",
        description="hallucination verification pipeline: trace features, "
        "stacking classifier, database judging, arbitration, escalation planning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON run config file")

    p = sub.add_parser("synth", help="generate synthetic phenotype traces")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--phenotype", action="append",
                   help="name=count (repeatable): factual, confused, confabulated, contamination")
    p.add_argument("--models", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-len", type=int, dest="min_len")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="traces -> feature vector corpus")
    common(p)
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--residual", choices=["bucket", "renormalize"])
    p.add_argument("--alignment", choices=["strict", "positional"])
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the stacking classifier")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--rf-trees", type=int, dest="rf_trees")
    p.add_argument("--lr-max-iter", type=int, dest="lr_max_iter")
    p.add_argument("--gbt-estimators", type=int, dest="gbt_estimators")
    p.add_argument("--gbt-learning-rate", type=float, dest="gbt_learning_rate")
    p.add_argument("--gbt-depth", type=int, dest="gbt_depth")
    p.add_argument("--gbt-colsample", type=float, dest="gbt_colsample")
    p.add_argument("--cv-folds", type=int, dest="cv_folds")
    p.add_argument("--holdout", type=float,
                   help="stratified holdout fraction split off before training")
    p.add_argument("--holdout-out", dest="holdout_out",
                   help="where to write the holdout feature corpus")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a labeled corpus")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score a feature corpus")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("judge", help="database-driven factual/counterfactual judging")
    common(p)
    p.add_argument("--store", required=True, help="context store: directory of <key>.txt or JSON map")
    p.add_argument("--answers", required=True, help="JSONL: answer_id, context_key, answer")
    p.add_argument("--out", required=True)
    p.add_argument("--granularity", choices=list(("paragraph", "sentence", "atomic_claim")))
    p.add_argument("--provider-fixture", dest="provider_fixture",
                   help="JSON file with 'facts' and 'contradicted' statement sets")
    p.add_argument("--transcript", help="judge transcript log (JSONL)")
    p.add_argument("--retries", type=int)
    p.add_argument("--fallback", action="store_true",
                   help="keyword-overlap fallback when the context key is absent")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("arbitrate", help="fuse database verdicts with classifier scores")
    common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--verdicts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--queue", help="review queue log; escalations are enqueued")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_arbitrate)

    p = sub.add_parser("plan", help="build a selective-intervention plan")
    common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float)
    p.add_argument("--action", choices=["majority_vote", "human_review", "web_verify"])
    p.add_argument("--samples", type=int)
    p.add_argument("--model", help="model file; its hash is stamped into the plan")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("report", help="ROC CSV, percentile table, PCA coordinates")
    common(p)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--scores", help="scored ground-truthed JSONL (needs 'correct')")
    p.add_argument("--percentiles", type=int)
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--pca", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("review", help="review queue operations")
    review_sub = p.add_subparsers(dest="review_command", required=True)
    p_list = review_sub.add_parser("list", help="list review items")
    p_list.add_argument("--queue", required=True)
    p_list.add_argument("--pending", action="store_true")
    p_list.set_defaults(func=cmd_review)
    p_resolve = review_sub.add_parser("resolve", help="record a human label")
    p_resolve.add_argument("--queue", required=True)
    p_resolve.add_argument("--item", required=True)
    p_resolve.add_argument(
        "--label", required=True,
        choices=["fact", "hallucination", "confusion", "confabulation", "contamination"],
    )
    p_resolve.set_defaults(func=cmd_review)

    p = sub.add_parser("serve", help="run the HTTP scoring service")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (VeritraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
