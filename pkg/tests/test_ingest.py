"""Trial parsing, prompt rendering, dataset loading, synthetic generation."""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from veritrace.errors import VeritraceError
from veritrace.features import (
    assemble_feature_vector,
    feature_schema,
    interaction_features,
    token_features,
    write_feature_corpus,
)
from veritrace.ingest import (
    PhenotypeSpec,
    generate_mixture,
    generate_synthetic_traces,
    has_results,
    load_labeled_dataset,
    load_trial,
    load_trial_directory,
    parse_trial,
    render_prompt,
    template_ids,
    template_slots,
)

FIXTURES = Path(__file__).parent / "fixtures" / "trials"


class TestParseTrial:
    def test_full_fixture(self):
        record = load_trial(FIXTURES / "NCT00003468.json")
        assert record.nct_id == "NCT00003468"
        assert record.results is not None
        assert record.derived is not None
        assert record.extras == {"hasResults": True}

    def test_missing_results_is_not_an_error(self):
        record = load_trial(FIXTURES / "NCT00818961.json")
        assert record.results is None

    def test_missing_protocol_rejected(self):
        with pytest.raises(VeritraceError, match="protocol section required"):
            parse_trial({"resultsSection": {}})

    def test_malformed_nct_id_rejected(self):
        with pytest.raises(VeritraceError, match="malformed nct id"):
            parse_trial({"protocolSection": {"identificationModule": {"nctId": "NCT123"}}})

    def test_lossless_round_trip(self):
        for path in sorted(FIXTURES.glob("*.json")):
            raw = json.loads(path.read_text())
            assert parse_trial(raw).to_raw() == raw

    def test_directory_loader_sorted(self):
        records = load_trial_directory(FIXTURES)
        assert [r.nct_id for r in records] == [
            "NCT00003468", "NCT00818961", "NCT01234567",
        ]


class TestHasResults:
    def test_three_fixture_truth_values(self):
        by_id = {r.nct_id: r for r in load_trial_directory(FIXTURES)}
        assert has_results(by_id["NCT00003468"]) is True
        assert has_results(by_id["NCT00818961"]) is False  # absent
        assert has_results(by_id["NCT01234567"]) is False  # present but empty


class TestPrompts:
    def test_twenty_templates_present(self):
        ids = template_ids()
        assert len(ids) == 20
        assert {"overview", "results", "conclusions", "umls_factual",
                "umls_counterfactual"} <= set(ids)
        assert all(f"question_{i}" in ids for i in range(1, 16))

    def test_overview_substitution(self):
        rendered = render_prompt("overview", {"section": "SECTION-PAYLOAD"})
        assert "SECTION-PAYLOAD" in rendered
        assert "{section}" not in rendered
        assert rendered.count("SECTION-PAYLOAD") == 1

    def test_question_7_names_primary_outcome(self):
        rendered = render_prompt("question_7", {"context": "CTX"})
        assert "Describe the primary outcome measured." in rendered
        assert "CTX" in rendered

    def test_missing_slot_named_in_error(self):
        with pytest.raises(VeritraceError, match="factual_text"):
            render_prompt("umls_counterfactual", {"term_question": "migraine + definition"})

    def test_unknown_template_rejected(self):
        with pytest.raises(VeritraceError, match="unknown template_id"):
            render_prompt("nonexistent", {})

    def test_idempotent_and_no_rewriting(self):
        slots = {"context": "same {braces} stay", "question": "Q?"}
        a = render_prompt("umls_factual", slots)
        b = render_prompt("umls_factual", slots)
        assert a == b
        assert "same {braces} stay" in a

    def test_all_templates_render_with_zero_unresolved_slots(self):
        for template_id in template_ids():
            slots = {name: f"<{name.upper()}>" for name in template_slots(template_id)}
            rendered = render_prompt(template_id, slots)
            for name in slots:
                assert "{" + name + "}" not in rendered
                assert f"<{name.upper()}>" in rendered


class TestLoadLabeledDataset:
    def _write_corpus(self, tmp_path, labels):
        schema = feature_schema(["m00", "m01"], k=3)
        rows = []
        for i, label in enumerate(labels):
            rows.append({
                "answer_id": f"a{i}",
                "schema_id": schema.schema_id,
                "label": label,
                "values": [float(i)] * len(schema),
                "warnings": [],
            })
        path = tmp_path / "corpus.jsonl"
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return path

    def test_class_counts_80_20(self, tmp_path):
        path = self._write_corpus(tmp_path, ["fact"] * 8 + ["hallucination"] * 2)
        data = load_labeled_dataset(path)
        assert data.class_counts() == {"fact": 8, "hallucination": 2}

    def test_null_label_rejected(self, tmp_path):
        path = self._write_corpus(tmp_path, ["fact", None])
        with pytest.raises(VeritraceError, match="unlabeled"):
            load_labeled_dataset(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(VeritraceError, match="empty dataset"):
            load_labeled_dataset(path)

    def test_mixed_schema_rejected(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps({"answer_id": "a", "schema_id": "s1",
                                 "label": "fact", "values": [1.0]}) + "\n")
            fh.write(json.dumps({"answer_id": "b", "schema_id": "s2",
                                 "label": "fact", "values": [1.0]}) + "\n")
        with pytest.raises(VeritraceError, match="mixed schema"):
            load_labeled_dataset(path)


class TestPhenotypeSpec:
    def test_regime_defaults(self):
        spec = PhenotypeSpec.for_phenotype("confused", seed=1)
        assert spec.entropy_level == "high" and spec.divergence_level == "low"
        assert spec.label == "hallucination"

    def test_invalid_regime_ordering_rejected(self):
        with pytest.raises(VeritraceError, match="regime ordering"):
            PhenotypeSpec(phenotype="factual", entropy_level="high",
                          divergence_level="low")

    def test_contamination_mimics_factual_but_labeled_hallucination(self):
        spec = PhenotypeSpec.for_phenotype("contamination", seed=3)
        assert (spec.entropy_level, spec.divergence_level) == ("low", "low")
        traces = generate_synthetic_traces(spec, n_models=2, n_answers=3)
        assert all(t.label == "hallucination" for t in traces)


class TestGenerate:
    def _mean_entropy(self, traces):
        values = []
        for t in traces:
            for mt in t.model_traces:
                values.extend(token_features(mt).values[:, 0])
        return float(np.mean(values))

    def _mean_kl(self, traces):
        values = []
        for t in traces:
            for series in interaction_features(t):
                values.extend(series.values)
        return float(np.mean(values))

    def test_factual_low_cross_model_kl(self):
        spec = PhenotypeSpec.for_phenotype("factual", seed=5, k=20, length_range=(8, 16))
        traces = generate_synthetic_traces(spec, n_models=2, n_answers=10)
        assert self._mean_kl(traces) < 0.05
        assert all(t.label == "fact" for t in traces)

    def test_confused_entropy_near_ln_k(self):
        spec = PhenotypeSpec.for_phenotype("confused", seed=5, k=50, length_range=(8, 16))
        traces = generate_synthetic_traces(spec, n_models=2, n_answers=10)
        assert self._mean_entropy(traces) > 0.9 * math.log(50)

    def test_confabulated_high_kl(self):
        spec = PhenotypeSpec.for_phenotype("confabulated", seed=5, k=20, length_range=(8, 16))
        traces = generate_synthetic_traces(spec, n_models=3, n_answers=10)
        assert self._mean_kl(traces) > 1.0

    def test_same_seed_identical_traces(self):
        spec = PhenotypeSpec.for_phenotype("confused", seed=7, k=10, length_range=(4, 8))
        a = generate_synthetic_traces(spec, n_models=2, n_answers=5)
        b = generate_synthetic_traces(spec, n_models=2, n_answers=5)
        assert a == b

    def test_statistical_separation_between_classes(self):
        kwargs = dict(k=20, length_range=(8, 16))
        factual = generate_synthetic_traces(
            PhenotypeSpec.for_phenotype("factual", seed=2, **kwargs), 2, 10)
        confused = generate_synthetic_traces(
            PhenotypeSpec.for_phenotype("confused", seed=2, **kwargs), 2, 10)
        confab = generate_synthetic_traces(
            PhenotypeSpec.for_phenotype("confabulated", seed=2, **kwargs), 2, 10)
        assert self._mean_entropy(confused) > 3 * self._mean_entropy(factual)
        assert self._mean_kl(confab) > 20 * self._mean_kl(factual)

    def test_mixture_counts_and_labels(self):
        traces = generate_mixture(
            {"factual": 4, "confused": 3, "confabulated": 2},
            n_models=2, k=10, seed=1, length_range=(4, 8),
        )
        assert len(traces) == 9
        labels = [t.label for t in traces]
        assert labels.count("fact") == 4
        assert labels.count("hallucination") == 5
        ids = [t.answer_id for t in traces]
        assert len(set(ids)) == 9
