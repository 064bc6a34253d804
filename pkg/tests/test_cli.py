"""CLI subcommands: pipeline wiring, config files, exit codes."""
import json
from pathlib import Path

import pytest

from veritrace.app.cli import main

FAST_TRAIN = [
    "--rf-trees", "30",
    "--gbt-estimators", "40",
    "--gbt-learning-rate", "0.1",
]


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> extract -> train (with holdout) once for the module."""
    root = tmp_path_factory.mktemp("pipeline")
    traces = root / "traces.jsonl"
    corpus = root / "features.jsonl"
    test_corpus = root / "test.jsonl"
    model = root / "model.json"
    assert _run(
        "synth", "--out", traces,
        "--phenotype", "factual=40", "--phenotype", "confused=20",
        "--phenotype", "confabulated=20",
        "--models", "2", "--k", "10", "--seed", "3",
        "--min-len", "6", "--max-len", "12",
    ) == 0
    assert _run("extract", "--traces", traces, "--out", corpus) == 0
    assert _run(
        "train", "--features", corpus, "--out", model,
        "--holdout", "0.2", "--holdout-out", test_corpus, "--split-seed", "42",
        *FAST_TRAIN,
    ) == 0
    return root


class TestPipeline:
    def test_artifacts_exist(self, pipeline):
        assert (pipeline / "traces.jsonl").exists()
        assert (pipeline / "features.jsonl").exists()
        assert (pipeline / "features.jsonl.schema.json").exists()
        assert (pipeline / "features.jsonl.meta.json").exists()
        assert (pipeline / "model.json").exists()
        assert (pipeline / "test.jsonl").exists()

    def test_eval_writes_reports(self, pipeline, capsys):
        out_dir = pipeline / "eval"
        assert _run(
            "eval", "--model", pipeline / "model.json",
            "--features", pipeline / "test.jsonl", "--out-dir", out_dir,
        ) == 0
        assert (out_dir / "report.json").exists()
        assert (out_dir / "report.txt").exists()
        assert (out_dir / "roc.csv").exists()
        report = json.loads((out_dir / "report.json").read_text())
        assert report["auc"]["hallucination"] >= 0.9
        assert "auc=" in capsys.readouterr().out

    def test_predict_scores_every_row(self, pipeline):
        scores = pipeline / "scores.jsonl"
        assert _run(
            "predict", "--model", pipeline / "model.json",
            "--features", pipeline / "test.jsonl", "--out", scores,
        ) == 0
        rows = [json.loads(l) for l in scores.read_text().splitlines()]
        test_rows = (pipeline / "test.jsonl").read_text().splitlines()
        assert len(rows) == len(test_rows)
        assert all(0.0 <= r["hallucination_probability"] <= 1.0 for r in rows)

    def test_predict_schema_mismatch_exits_1(self, pipeline, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({
            "answer_id": "x", "schema_id": "wrong", "label": "fact",
            "values": [0.0, 1.0], "warnings": [],
        }) + "\n")
        code = _run("predict", "--model", pipeline / "model.json",
                    "--features", bad, "--out", tmp_path / "out.jsonl")
        assert code == 1
        assert "schema" in capsys.readouterr().err

    def test_plan_from_scores(self, pipeline):
        scores = pipeline / "scores.jsonl"
        plan_path = pipeline / "plan.json"
        assert _run(
            "plan", "--scores", scores, "--out", plan_path,
            "--fraction", "0.4", "--action", "majority_vote", "--samples", "12",
            "--model", pipeline / "model.json",
        ) == 0
        plan = json.loads(plan_path.read_text())
        n = len(plan["selected"]) + len(plan["accepted"])
        assert len(plan["selected"]) == -(-n * 2 // 5)  # ceil(0.4 n)
        assert plan["action"] == {"kind": "majority_vote", "samples": 12}
        assert plan["provenance"]["model_hash"]

    def test_report_percentiles_row_count(self, pipeline, tmp_path):
        # attach correctness to the predictions, then ask for a 5-bin table
        scores = pipeline / "scores.jsonl"
        scored = tmp_path / "scored.jsonl"
        rows = [json.loads(l) for l in scores.read_text().splitlines()]
        for row in rows:
            row["correct"] = row["label"] == "fact"
        scored.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        out_dir = tmp_path / "report"
        assert _run("report", "--out-dir", out_dir, "--scores", scored,
                    "--percentiles", "5") == 0
        lines = (out_dir / "percentiles.csv").read_text().splitlines()
        assert lines[0] == "bin,count,accuracy"
        assert len(lines) == 6

    def test_report_pca(self, pipeline, tmp_path, capsys):
        out_dir = tmp_path / "pca"
        assert _run("report", "--out-dir", out_dir,
                    "--features", pipeline / "features.jsonl", "--pca") == 0
        lines = (out_dir / "pca.csv").read_text().splitlines()
        assert lines[0] == "answer_id,label,pc1,pc2"
        assert len(lines) == 81
        assert "explained variance" in capsys.readouterr().out


class TestJudgeArbitrateReview:
    @pytest.fixture()
    def judge_setup(self, tmp_path):
        store = {"NCT00003468": "The trial enrolled 11 patients."}
        store_path = tmp_path / "store.json"
        store_path.write_text(json.dumps(store))
        answers = [
            {"answer_id": "good", "context_key": "NCT00003468",
             "answer": "The trial enrolled 11 patients."},
            {"answer_id": "bad", "context_key": "NCT00003468",
             "answer": "The trial enrolled 99 patients."},
            {"answer_id": "gap", "context_key": "NCT00003468",
             "answer": "The sponsor was unnamed."},
        ]
        answers_path = tmp_path / "answers.jsonl"
        answers_path.write_text("\n".join(json.dumps(a) for a in answers) + "\n")
        fixture = {
            "facts": ["The trial enrolled 11 patients."],
            "contradicted": ["The trial enrolled 99 patients."],
        }
        fixture_path = tmp_path / "fixture.json"
        fixture_path.write_text(json.dumps(fixture))
        return tmp_path, store_path, answers_path, fixture_path

    def test_judge_arbitrate_review_flow(self, judge_setup, capsys):
        tmp_path, store_path, answers_path, fixture_path = judge_setup
        verdicts = tmp_path / "verdicts.jsonl"
        assert _run(
            "judge", "--store", store_path, "--answers", answers_path,
            "--out", verdicts, "--granularity", "paragraph",
            "--provider-fixture", fixture_path,
            "--transcript", tmp_path / "transcript.jsonl",
        ) == 0
        by_id = {r["answer_id"]: r for r in map(json.loads, verdicts.read_text().splitlines())}
        assert by_id["good"]["category"] == "Fact"
        assert by_id["bad"]["category"] == "Hallucination"
        assert by_id["gap"]["category"] == "CoverageGap"
        assert (tmp_path / "transcript.jsonl").read_text().count("\n") == 3

        scores = tmp_path / "scores.jsonl"
        rows = [
            {"answer_id": "good", "hallucination_probability": 0.05},
            {"answer_id": "bad", "hallucination_probability": 0.1},  # contamination suspect
            {"answer_id": "gap", "hallucination_probability": 0.9},
        ]
        scores.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        outcomes = tmp_path / "outcomes.jsonl"
        queue = tmp_path / "queue.jsonl"
        assert _run(
            "arbitrate", "--scores", scores, "--verdicts", verdicts,
            "--out", outcomes, "--queue", queue,
        ) == 0
        by_id = {r["answer_id"]: r for r in map(json.loads, outcomes.read_text().splitlines())}
        assert by_id["good"]["final_status"] == "Confirmed"
        assert by_id["bad"]["final_status"] == "EscalatedContaminationSuspect"
        assert by_id["gap"]["final_status"] == "ClassifierAdjudicated"

        assert _run("review", "list", "--queue", queue) == 0
        listing = capsys.readouterr().out
        assert "rev-000000" in listing and "2 items" in listing
        assert _run("review", "resolve", "--queue", queue,
                    "--item", "rev-000000", "--label", "contamination") == 0
        assert _run("review", "list", "--queue", queue, "--pending") == 0
        assert "1 items" in capsys.readouterr().out


class TestConfigAndExitCodes:
    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["nonsense-command"])
        assert err.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["extract", "--traces", "x"])
        assert err.value.code == 2

    def test_domain_error_exits_1(self, tmp_path, capsys):
        code = _run("extract", "--traces", tmp_path / "missing.jsonl",
                    "--out", tmp_path / "out.jsonl")
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_toml_config_drives_synth(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text(
            '[synth]\nseed = 11\nk = 6\nmodels = 2\nmin_len = 4\nmax_len = 6\n'
            'phenotypes = ["factual=5"]\n'
        )
        out = tmp_path / "traces.jsonl"
        assert _run("synth", "--config", config, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5
        rec = json.loads(lines[0])
        assert rec["models"][0]["k"] == 6
        meta = json.loads((tmp_path / "traces.jsonl.meta.json").read_text())
        assert meta["seed"] == 11 and meta["config_hash"]

    def test_flag_overrides_config(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"synth": {"seed": 11, "phenotypes": ["factual=5"],
                                                "k": 6, "models": 2,
                                                "min_len": 4, "max_len": 6}}))
        out = tmp_path / "traces.jsonl"
        assert _run("synth", "--config", config, "--out", out, "--phenotype",
                    "confused=2") == 0
        assert len(out.read_text().splitlines()) == 2

    def test_synth_determinism_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert _run("synth", "--out", out, "--phenotype", "factual=5",
                        "--models", "2", "--k", "6", "--seed", "4",
                        "--min-len", "4", "--max-len", "6") == 0
        assert a.read_bytes() == b.read_bytes()
