"""Decomposition, the four-outcome verdict algebra, dual checks, retrieval."""
import io
import json

import pytest

from veritrace.errors import ContextNotFoundError, ProviderError, VeritraceError
from veritrace.judge import (
    DocumentStore,
    Statement,
    VerdictCategory,
    answer_category,
    categorize,
    counterfactual_check,
    decompose,
    factual_check,
    judge_answer,
    retrieve_context,
    split_sentences,
)
from veritrace.providers import (
    AlwaysFailJudge,
    FailingDecomposer,
    FlakyProvider,
    MockDecomposer,
    MockJudgeProvider,
)


class TestCategorize:
    def test_fact(self):
        v = categorize(True, False)
        assert v.category is VerdictCategory.FACT and v.score == 1.0

    def test_hallucination(self):
        v = categorize(False, True)
        assert v.category is VerdictCategory.HALLUCINATION and v.score == 0.0

    def test_judgment_error_and_coverage_gap(self):
        both = categorize(True, True)
        neither = categorize(False, False)
        assert both.category is VerdictCategory.JUDGMENT_ERROR and both.score == 0.5
        assert neither.category is VerdictCategory.COVERAGE_GAP and neither.score == 0.5

    def test_total_over_boolean_square(self):
        seen = set()
        for supported in (False, True):
            for contradicted in (False, True):
                v = categorize(supported, contradicted)
                assert v.score in (0.0, 0.5, 1.0)
                assert (v.supported, v.contradicted) == (supported, contradicted)
                seen.add(v.category)
        assert seen == {
            VerdictCategory.FACT,
            VerdictCategory.HALLUCINATION,
            VerdictCategory.JUDGMENT_ERROR,
            VerdictCategory.COVERAGE_GAP,
        }


SPLIT_FIXTURES = [
    ("One sentence.", ["One sentence."]),
    ("First one. Second one!", ["First one.", "Second one!"]),
    ("What? Yes. No!", ["What?", "Yes.", "No!"]),
    # initials are not boundaries
    ("A. B. works. It runs.", ["A. B. works.", "It runs."]),
    # abbreviation guard
    ("Dr. Smith arrived. The trial began.", ["Dr. Smith arrived.", "The trial began."]),
    # decimal guard
    ("The dose was 2.5 mg daily. Survival was 81.8% at 12 months.",
     ["The dose was 2.5 mg daily.", "Survival was 81.8% at 12 months."]),
    # trailing text without terminal punctuation still becomes a sentence
    ("Complete sentence. trailing fragment", ["Complete sentence. trailing fragment"]),
    ("Ellipsis... And then? done.", ["Ellipsis...", "And then? done."]),
    ('He said "stop." Then left.', ['He said "stop."', "Then left."]),
]


class TestSentenceSplitter:
    @pytest.mark.parametrize("text,expected", SPLIT_FIXTURES)
    def test_fixture_corpus(self, text, expected):
        spans = split_sentences(text)
        assert [text[s:e] for s, e in spans] == expected

    def test_spans_are_exact_slices_and_non_overlapping(self):
        text = "Dr. Lee measured 2.5 mg. The cohort had 11 patients! Seizures occurred in 4. Done."
        statements = decompose(text, "sentence")
        previous_end = -1
        for st in statements:
            s, e = st.span
            assert st.text == text[s:e]
            assert s > previous_end
            previous_end = e


class TestDecompose:
    def test_paragraph_level_identity(self):
        answer = "A single-arm study enrolled 11 patients."
        statements = decompose(answer, "paragraph")
        assert len(statements) == 1
        assert statements[0].text == answer
        assert statements[0].span == (0, len(answer))

    def test_empty_answer_rejected(self):
        with pytest.raises(VeritraceError, match="non-empty"):
            decompose("   ", "sentence")

    def test_atomic_claims_two_per_sentence(self):
        answer = "First fact here. Second fact there."
        decomposer = MockDecomposer(fn=lambda s: [f"{s} (part 1)", f"{s} (part 2)"])
        statements = decompose(answer, "atomic_claim", decomposer)
        assert len(statements) == 4
        assert all(s.granularity == "atomic_claim" for s in statements)

    def test_atomic_claims_deduplicated(self):
        answer = "Alpha. Beta."
        decomposer = MockDecomposer(fn=lambda s: ["same claim", "Same  claim."])
        statements = decompose(answer, "atomic_claim", decomposer)
        assert len(statements) == 1

    def test_decomposer_failure_falls_back_to_sentence(self, caplog):
        answer = "Alpha works. Beta fails."
        with caplog.at_level("WARNING"):
            statements = decompose(answer, "atomic_claim", FailingDecomposer())
        assert [s.granularity for s in statements] == ["sentence", "sentence"]
        assert "falling back" in caplog.text

    def test_claim_spans_point_at_source_sentence(self):
        answer = "Alpha works. Beta fails."
        decomposer = MockDecomposer(fn=lambda s: [f"claim about {s!r}"])
        statements = decompose(answer, "atomic_claim", decomposer)
        sentence_spans = [st.span for st in decompose(answer, "sentence")]
        assert [s.span for s in statements] == sentence_spans


CONTEXT = "The trial enrolled 11 patients. Antineoplastin was given by IV infusion."


def _statement(text):
    return Statement(text=text, granularity="sentence", span=(0, len(text)))


class TestChecks:
    def test_factual_hit_and_miss(self):
        provider = MockJudgeProvider(facts=["The trial enrolled 11 patients."])
        hit = factual_check(_statement("The trial enrolled 11 patients."), CONTEXT, provider)
        miss = factual_check(_statement("The trial enrolled 99 patients."), CONTEXT, provider)
        assert hit.decision is True and miss.decision is False
        assert hit.justification

    def test_counterfactual_hit_and_miss(self):
        provider = MockJudgeProvider(contradicted=["The trial enrolled 99 patients."])
        hit = counterfactual_check(_statement("The trial enrolled 99 patients."), CONTEXT, provider)
        miss = counterfactual_check(_statement("The sky is blue."), CONTEXT, provider)
        assert hit.decision is True and miss.decision is False

    def test_empty_context_rejected(self):
        provider = MockJudgeProvider()
        with pytest.raises(VeritraceError, match="empty context"):
            counterfactual_check(_statement("Anything."), "  ", provider)

    def test_retries_then_success(self):
        provider = FlakyProvider(MockJudgeProvider(facts=["X."]), fail_times=3)
        call = factual_check(_statement("X."), CONTEXT, provider, retries=3)
        assert call.decision is True
        assert provider.calls == 4

    def test_retries_exhausted_is_error_not_false(self):
        provider = AlwaysFailJudge()
        with pytest.raises(ProviderError, match="after 4 attempts"):
            factual_check(_statement("X."), CONTEXT, provider, retries=3)
        assert provider.calls == 4


class TestJudgeAnswer:
    def test_all_facts(self):
        answer = "Alpha works. Beta helps."
        provider = MockJudgeProvider(facts=["Alpha works.", "Beta helps."])
        judgement = judge_answer(answer, CONTEXT, "sentence", provider)
        assert judgement.mean_score == 1.0
        assert judgement.histogram["Fact"] == 2

    def test_half_fact_half_hallucination(self):
        answer = "Alpha works. Beta harms."
        provider = MockJudgeProvider(facts=["Alpha works."], contradicted=["Beta harms."])
        judgement = judge_answer(answer, CONTEXT, "sentence", provider)
        assert judgement.mean_score == pytest.approx(0.5)
        assert judgement.histogram["Fact"] == 1
        assert judgement.histogram["Hallucination"] == 1

    def test_histogram_counts_sum_to_statement_count(self):
        answer = "One. Two. Three. Four."
        provider = MockJudgeProvider(facts=["One.", "Two."], contradicted=["Three."])
        judgement = judge_answer(answer, CONTEXT, "sentence", provider)
        assert sum(judgement.histogram.values()) == 4

    def test_mean_score_matches_manual_mean(self):
        answer = "One. Two. Three."
        provider = MockJudgeProvider(facts=["One."], contradicted=["Two."])
        judgement = judge_answer(answer, CONTEXT, "sentence", provider)
        # Fact(1.0) + Hallucination(0.0) + CoverageGap(0.5)
        assert judgement.mean_score == pytest.approx((1.0 + 0.0 + 0.5) / 3, abs=1e-12)

    def test_statement_error_recorded_without_aborting(self):
        class FailOn:
            def __init__(self, bad):
                self.bad = bad

            def judge(self, statement, context, mode):
                if statement == self.bad:
                    raise ProviderError("boom")
                return (mode == "factual"), "ok"

        answer = "Good one. Bad one."
        judgement = judge_answer(answer, CONTEXT, "sentence", FailOn("Bad one."), retries=0)
        assert judgement.histogram["Error"] == 1
        assert judgement.histogram["Fact"] == 1
        # error statements are excluded from the mean
        assert judgement.mean_score == 1.0

    def test_reproducible_with_deterministic_mock(self):
        answer = "Alpha works. Beta harms. Gamma unknown."
        provider = MockJudgeProvider(facts=["Alpha works."], contradicted=["Beta harms."])
        a = judge_answer(answer, CONTEXT, "sentence", provider, max_concurrency=4)
        b = judge_answer(answer, CONTEXT, "sentence", provider, max_concurrency=1)
        assert a.to_json() == b.to_json()

    def test_transcript_log_lines(self):
        answer = "Alpha works. Beta harms."
        provider = MockJudgeProvider(facts=["Alpha works."], contradicted=["Beta harms."])
        buffer = io.StringIO()
        judge_answer(answer, CONTEXT, "sentence", provider, transcript=buffer, max_concurrency=1)
        lines = [json.loads(l) for l in buffer.getvalue().splitlines()]
        assert len(lines) == 2
        assert {"statement", "factual", "counterfactual", "latency_s", "error"} <= set(lines[0])

    def test_answer_category_severity(self):
        answer = "Alpha works. Beta harms."
        provider = MockJudgeProvider(facts=["Alpha works."], contradicted=["Beta harms."])
        judgement = judge_answer(answer, CONTEXT, "sentence", provider)
        assert answer_category(judgement) is VerdictCategory.HALLUCINATION


class TestRetrieveContext:
    def _store(self):
        return DocumentStore(
            {
                "NCT00003468": "Antineoplastin therapy in children with low-grade astrocytoma.",
                "NCT00818961": "Donor stem cell transplant for high-risk hematologic cancer.",
            }
        )

    def test_exact_key(self):
        doc = retrieve_context(self._store(), "NCT00003468")
        assert doc.score == 1.0
        assert "astrocytoma" in doc.text

    def test_absent_key_without_fallback(self):
        with pytest.raises(ContextNotFoundError):
            retrieve_context(self._store(), "NCT99999999")

    def test_fallback_token_overlap(self):
        doc = retrieve_context(
            self._store(), "donor stem cell transplant", fallback=True
        )
        assert doc.key == "NCT00818961"
        # oracle: all 4 query tokens appear in the document
        assert doc.score == pytest.approx(1.0)

    def test_fallback_partial_overlap_score(self):
        doc = retrieve_context(self._store(), "astrocytoma outcomes", fallback=True)
        assert doc.key == "NCT00003468"
        assert doc.score == pytest.approx(0.5)  # 1 of 2 query tokens present

    def test_directory_and_json_stores(self, tmp_path):
        (tmp_path / "store").mkdir()
        (tmp_path / "store" / "k1.txt").write_text("alpha beta", encoding="utf-8")
        store = DocumentStore.from_path(tmp_path / "store")
        assert retrieve_context(store, "k1").text == "alpha beta"
        json_path = tmp_path / "store.json"
        json_path.write_text(json.dumps({"k2": "gamma"}), encoding="utf-8")
        store2 = DocumentStore.from_path(json_path)
        assert retrieve_context(store2, "k2").text == "gamma"
