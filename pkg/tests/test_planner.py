"""Percentile binning, top-fraction selection, majority voting, plan files."""
import math

import numpy as np
import pytest

from veritrace.errors import VeritraceError
from veritrace.planner import (
    Action,
    RankedItem,
    accuracy_by_bin,
    build_plan,
    load_plan,
    majority_vote,
    percentile_bins,
    save_plan,
    select_top_fraction,
)


def _items(probs, correct=None, ids=None):
    out = []
    for i, probability in enumerate(probs):
        out.append(
            RankedItem(
                id=ids[i] if ids else f"it{i:04d}",
                hallucination_probability=probability,
                correct=None if correct is None else correct[i],
            )
        )
    return out


class TestPercentileBins:
    def test_one_item_per_bin(self):
        items = _items([i / 10 for i in range(10)])
        bins = percentile_bins(items, 10)
        assert bins == list(range(10))

    def test_seven_items_two_bins_floor_boundaries(self):
        # boundaries: floor(7*0/2)=0, floor(7*1/2)=3, floor(7*2/2)=7 -> sizes 3, 4
        items = _items([i / 7 for i in range(7)])
        bins = percentile_bins(items, 2)
        assert bins == [0, 0, 0, 1, 1, 1, 1]

    def test_all_equal_probabilities_tie_break_by_id(self):
        items = _items([0.5] * 4, ids=["d", "c", "b", "a"])
        bins = percentile_bins(items, 2)
        # sorted by id: a, b -> bin 0; c, d -> bin 1
        assert bins == [1, 1, 0, 0]
        assert bins == percentile_bins(items, 2)

    def test_partition_exact_and_monotone(self, rng):
        items = _items(rng.uniform(0, 1, size=103).tolist())
        n_bins = 10
        bins = percentile_bins(items, n_bins)
        counts = np.bincount(bins, minlength=n_bins)
        assert counts.sum() == 103
        assert counts.max() - counts.min() <= 1
        order = sorted(range(103), key=lambda i: (items[i].hallucination_probability, items[i].id))
        assert [bins[i] for i in order] == sorted(bins)

    def test_fewer_items_than_bins_rejected(self):
        with pytest.raises(VeritraceError, match="at least"):
            percentile_bins(_items([0.1, 0.2]), 3)


class TestAccuracyByBin:
    def test_all_correct(self):
        items = _items([i / 20 for i in range(20)], correct=[True] * 20)
        rows = accuracy_by_bin(items, 10)
        assert all(row["accuracy"] == 1.0 for row in rows)
        assert sum(row["count"] for row in rows) == 20

    def test_missing_correctness_rejected(self):
        items = _items([0.1, 0.2, 0.3])
        with pytest.raises(VeritraceError, match="correctness"):
            accuracy_by_bin(items, 3)

    def test_bernoulli_calibration_decreasing(self):
        rng = np.random.default_rng(11)
        probs = rng.uniform(0, 1, size=10_000)
        correct = rng.uniform(0, 1, size=10_000) > probs  # P(correct) = 1 - p
        items = _items(probs.tolist(), correct=correct.tolist())
        rows = accuracy_by_bin(items, 10)
        accuracies = [row["accuracy"] for row in rows]
        for earlier, later in zip(accuracies, accuracies[1:]):
            assert later <= earlier + 0.03


class TestSelectTopFraction:
    def test_top_40_percent_of_ten(self):
        items = _items([i / 10 for i in range(10)])
        assert select_top_fraction(items, 0.4) == ["it0009", "it0008", "it0007", "it0006"]

    def test_full_fraction_is_permutation(self, rng):
        items = _items(rng.uniform(0, 1, size=23).tolist())
        ids = select_top_fraction(items, 1.0)
        assert sorted(ids) == sorted(item.id for item in items)

    def test_ceiling_rule(self):
        items = _items([0.1, 0.5, 0.9])
        assert len(select_top_fraction(items, 0.4)) == math.ceil(0.4 * 3) == 2

    def test_prefix_property(self, rng):
        items = _items(rng.uniform(0, 1, size=40).tolist())
        full = select_top_fraction(items, 1.0)
        for fraction in (0.1, 0.25, 0.5, 0.9):
            part = select_top_fraction(items, fraction)
            assert part == full[: len(part)]

    def test_tie_break_by_id(self):
        items = _items([0.5, 0.5, 0.5], ids=["c", "a", "b"])
        assert select_top_fraction(items, 2 / 3) == ["a", "b"]

    def test_empty_rejected(self):
        with pytest.raises(VeritraceError, match="no items"):
            select_top_fraction([], 0.5)

    def test_zero_fraction_rejected(self):
        with pytest.raises(VeritraceError, match="fraction"):
            select_top_fraction(_items([0.5]), 0.0)


class TestMajorityVote:
    def test_simple_majority(self):
        assert majority_vote(["A", "B", "A"]) == "A"

    def test_tie_earliest_first_occurrence(self):
        assert majority_vote(["A", "B"]) == "A"
        assert majority_vote(["B", "A", "A", "B"]) == "B"

    def test_twelve_samples(self):
        answers = ["C"] * 7 + ["D"] * 3 + ["E"] * 2
        assert majority_vote(answers) == "C"

    def test_permutation_invariant_with_strict_majority(self, rng):
        answers = ["X"] * 5 + ["Y"] * 3 + ["Z"] * 2
        for _ in range(20):
            perm = [answers[i] for i in rng.permutation(len(answers))]
            assert majority_vote(perm) == "X"

    def test_empty_rejected(self):
        with pytest.raises(VeritraceError, match="at least one"):
            majority_vote([])


class TestBuildPlan:
    def test_counts_for_paper_configuration(self, rng):
        items = _items(rng.uniform(0, 1, size=100).tolist())
        plan = build_plan(items, 0.4, Action("majority_vote", samples=12))
        assert len(plan.selected) == 40
        assert len(plan.accepted) == 60
        assert plan.action.samples == 12
        assert set(plan.selected).isdisjoint(plan.accepted)

    def test_accept_action_rejected(self):
        with pytest.raises(VeritraceError, match="cannot be 'accept'"):
            build_plan(_items([0.5]), 0.5, Action("accept"))

    def test_majority_vote_needs_samples(self):
        with pytest.raises(VeritraceError, match="samples"):
            Action("majority_vote", samples=0)

    def test_round_trip(self, tmp_path, rng):
        items = _items(rng.uniform(0, 1, size=17).tolist())
        plan = build_plan(
            items, 0.3, Action("human_review"), provenance={"model_hash": "abc123"}
        )
        path = tmp_path / "plan.json"
        save_plan(plan, path)
        back = load_plan(path)
        assert back.to_json() == plan.to_json()

    def test_pipeline_determinism(self, rng):
        probs = rng.uniform(0, 1, size=30).tolist()
        a = build_plan(_items(probs), 0.4, Action("web_verify"))
        b = build_plan(_items(probs), 0.4, Action("web_verify"))
        assert a.to_json() == b.to_json()
