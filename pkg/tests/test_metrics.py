"""Judging, reuse-rate metrics, utility, histograms, and seed sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_library, make_tool
from toolevo.errors import EmptyLibrary, LengthMismatch, UnparseableNumber
from toolevo.metrics import (
    JUDGE_NUMERIC,
    JUDGE_PROVIDER,
    JUDGE_SYMBOLIC,
    EvalRecord,
    binned_histogram,
    cumulative_utility,
    extract_last_number,
    hit_histogram,
    judge,
    judge_numeric,
    stratified_seed_sample,
    trr_at_k,
    trr_stratified,
)
from toolevo.providers import ScriptedProvider
from toolevo.registry import ORIGIN_EVOLVED, ORIGIN_PREDEFINED


class TestJudgeNumeric:
    def test_exact_match(self):
        assert judge_numeric(169.0, 169.0)

    def test_relative_tolerance_boundary(self):
        gold = 1000.0
        assert judge_numeric(gold * (1 + 9e-6), gold)
        assert not judge_numeric(gold * (1 + 2e-5), gold)

    def test_absolute_floor_near_zero(self):
        assert judge_numeric(5e-9, 0.0)
        assert not judge_numeric(5e-8, 0.0)

    def test_string_inputs_parse(self):
        assert judge_numeric("1.5e2", 150)
        assert judge_numeric(" 42 ", 42.0)

    @pytest.mark.parametrize("bad", ["abc", "", None, True, [1], "1.2.3"])
    def test_unparseable_rejected(self, bad):
        with pytest.raises(UnparseableNumber):
            judge_numeric(bad, 1.0)

    @given(gold=st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False),
           rel=st.floats(min_value=-2e-5, max_value=2e-5))
    @settings(max_examples=80, deadline=None)
    def test_tolerance_definition(self, gold, rel):
        pred = gold + rel * abs(gold)
        expected = abs(pred - gold) <= max(1e-5 * abs(gold), 1e-8)
        assert judge_numeric(pred, gold) == expected


class TestExtractLastNumber:
    @pytest.mark.parametrize("text,value", [
        ("the answer is 42", 42.0),
        ("first 1 then 2 then 3.5", 3.5),
        ("scientific 1.2e-3 works", 1.2e-3),
        ("negative -7", -7.0),
        ("value: .5", 0.5),
        ("Case 2 resolved with value 6.0.", 6.0),
    ])
    def test_extraction(self, text, value):
        assert extract_last_number(text) == pytest.approx(value)

    def test_no_number(self):
        with pytest.raises(UnparseableNumber):
            extract_last_number("no digits here")


class TestJudge:
    def test_numeric_gold_uses_last_number(self):
        record = judge("p1", "The mass is approximately 169.0 g/mol.",
                       {"kind": "numeric", "value": 169.0})
        assert record.correct
        assert record.judge_mode == JUDGE_NUMERIC

    def test_numeric_gold_wrong_value(self):
        record = judge("p1", "The mass is 170.1 g/mol.",
                       {"kind": "numeric", "value": 169.0})
        assert not record.correct
        assert record.diagnostic is None

    def test_numeric_gold_unparseable_prediction(self):
        record = judge("p1", "I could not compute it.",
                       {"kind": "numeric", "value": 169.0})
        assert not record.correct
        assert "no numeric token" in record.diagnostic

    def test_none_prediction(self):
        record = judge("p1", None, {"kind": "numeric", "value": 1.0})
        assert not record.correct
        assert record.diagnostic == "no prediction"

    def test_text_gold_normalized_exact(self):
        gold = {"kind": "text", "value": "Sodium Chloride"}
        assert judge("p1", "  sodium   chloride ", gold).correct
        assert not judge("p1", "potassium chloride", gold).correct
        assert judge("p1", "x", gold).judge_mode == JUDGE_SYMBOLIC

    def test_provider_judge(self):
        provider = ScriptedProvider()
        from toolevo.metrics import _PROVIDER_JUDGE_PROMPT
        prompt = (_PROVIDER_JUDGE_PROMPT
                  .replace("{gold}", "water")
                  .replace("{predicted}", "H2O"))
        provider.add(prompt, "yes")
        record = judge("p1", "H2O", {"kind": "text", "value": "water"},
                       mode=JUDGE_PROVIDER, provider=provider)
        assert record.correct

    def test_provider_judge_without_provider(self):
        record = judge("p1", "x", {"kind": "text", "value": "x"},
                       mode=JUDGE_PROVIDER)
        assert not record.correct
        assert "without a provider" in record.diagnostic

    def test_unknown_mode(self):
        record = judge("p1", "x", {"kind": "text", "value": "x"}, mode="Vibes")
        assert not record.correct
        assert "unknown judge mode" in record.diagnostic


def usage_library(spec: dict[str, tuple[int, str]]):
    return make_library([
        make_tool(name, usage=usage, origin=origin, axis=i)
        for i, (name, (usage, origin)) in enumerate(spec.items())
    ])


class TestReuseRates:
    def test_fraction_at_threshold(self):
        library = usage_library({
            "a": (0, ORIGIN_EVOLVED),
            "b": (1, ORIGIN_EVOLVED),
            "c": (3, ORIGIN_EVOLVED),
            "d": (5, ORIGIN_EVOLVED),
        })
        assert trr_at_k(library, 1) == pytest.approx(0.75)
        assert trr_at_k(library, 2) == pytest.approx(0.5)
        assert trr_at_k(library, 5) == pytest.approx(0.25)
        assert trr_at_k(library, 6) == pytest.approx(0.0)

    def test_empty_library_undefined(self):
        with pytest.raises(EmptyLibrary):
            trr_at_k(make_library(), 1)

    def test_k_validated(self):
        library = usage_library({"a": (1, ORIGIN_EVOLVED)})
        with pytest.raises(ValueError):
            trr_at_k(library, 0)

    def test_stratified_split(self):
        library = usage_library({
            "evolved_hit": (2, ORIGIN_EVOLVED),
            "evolved_cold": (0, ORIGIN_EVOLVED),
            "seeded": (2, ORIGIN_PREDEFINED),
        })
        out = trr_stratified(library, 1)
        assert out == {"trr_evol": pytest.approx(0.5),
                       "trr_trans": pytest.approx(1.0)}

    def test_stratified_empty_stratum_is_none(self):
        library = usage_library({"only_evolved": (1, ORIGIN_EVOLVED)})
        out = trr_stratified(library, 1)
        assert out["trr_evol"] == pytest.approx(1.0)
        assert out["trr_trans"] is None

    @given(usages=st.lists(st.integers(min_value=0, max_value=20),
                           min_size=1, max_size=30),
           k=st.integers(min_value=1, max_value=20))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force(self, usages, k):
        library = usage_library({
            f"t{i}": (u, ORIGIN_EVOLVED) for i, u in enumerate(usages)})
        brute = sum(1 for u in usages if u >= k) / len(usages)
        assert trr_at_k(library, k) == pytest.approx(brute)


def record(correct: bool) -> EvalRecord:
    return EvalRecord("p", "x", {"kind": "text", "value": "x"}, correct,
                      JUDGE_SYMBOLIC)


class TestCumulativeUtility:
    def test_pure_accuracy_when_lam_zero(self):
        records = [record(True), record(False), record(True)]
        assert cumulative_utility(records, [3, 5, 7]) == pytest.approx(2.0)

    def test_size_penalty(self):
        records = [record(True), record(True)]
        assert cumulative_utility(records, [10, 20], lam=0.01) == \
            pytest.approx(2.0 - 0.3)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            cumulative_utility([record(True)], [1, 2])

    def test_empty_stream(self):
        assert cumulative_utility([], []) == 0.0


class TestHistograms:
    def test_exact_counts(self):
        library = usage_library({
            "a": (0, ORIGIN_EVOLVED), "b": (0, ORIGIN_EVOLVED),
            "c": (3, ORIGIN_EVOLVED), "d": (7, ORIGIN_PREDEFINED),
        })
        histogram = hit_histogram(library)
        assert histogram.counts == {0: 2, 3: 1, 7: 1}
        assert histogram.total_tools == 4

    def test_binned_view(self):
        library = usage_library({
            "a": (0, ORIGIN_EVOLVED), "b": (1, ORIGIN_EVOLVED),
            "c": (2, ORIGIN_EVOLVED), "d": (4, ORIGIN_EVOLVED),
            "e": (9, ORIGIN_EVOLVED), "f": (30, ORIGIN_EVOLVED),
            "g": (75, ORIGIN_EVOLVED),
        })
        binned = binned_histogram(hit_histogram(library))
        assert binned == {"0": 1, "1-2": 2, "3-4": 1, "5-9": 1,
                          "10-49": 1, "50+": 1}

    @given(usages=st.lists(st.integers(min_value=0, max_value=100),
                           min_size=0, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_bins_partition_all_tools(self, usages):
        if not usages:
            return
        library = usage_library({
            f"t{i}": (u, ORIGIN_EVOLVED) for i, u in enumerate(usages)})
        binned = binned_histogram(hit_histogram(library))
        assert sum(binned.values()) == len(usages)


class TestStratifiedSeedSample:
    def two_blob_items(self, n_per_blob=20, dim=4, seed=7):
        rng = np.random.default_rng(seed)
        items = []
        for i in range(n_per_blob):
            items.append((f"left-{i}", rng.normal(-5.0, 0.1, dim)))
        for i in range(n_per_blob):
            items.append((f"right-{i}", rng.normal(5.0, 0.1, dim)))
        return items

    def test_draws_from_both_blobs(self):
        items = self.two_blob_items()
        sampled = stratified_seed_sample(items, n_clusters=2, per_cluster=3,
                                         seed=0)
        assert len(sampled) == 6
        sides = {name.split("-")[0] for name in sampled}
        assert sides == {"left", "right"}

    def test_deterministic_for_fixed_seed(self):
        items = self.two_blob_items()
        a = stratified_seed_sample(items, 2, 3, seed=11)
        b = stratified_seed_sample(items, 2, 3, seed=11)
        assert a == b

    def test_seed_changes_sample(self):
        items = self.two_blob_items()
        draws = {tuple(stratified_seed_sample(items, 2, 5, seed=s))
                 for s in range(6)}
        assert len(draws) > 1

    def test_small_cluster_returned_whole(self):
        items = [("a", np.zeros(2)), ("b", np.ones(2) * 9)]
        sampled = stratified_seed_sample(items, n_clusters=2, per_cluster=5,
                                         seed=0)
        assert sorted(sampled) == ["a", "b"]

    def test_fewer_items_than_clusters(self):
        items = [("a", np.zeros(2))]
        assert stratified_seed_sample(items, n_clusters=8, per_cluster=2,
                                      seed=0) == ["a"]

    def test_no_duplicates_within_cluster_draw(self):
        items = self.two_blob_items(n_per_blob=4)
        sampled = stratified_seed_sample(items, 2, 4, seed=3)
        assert len(sampled) == len(set(sampled))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stratified_seed_sample([], 2, 2, seed=0)

    def test_bad_params_rejected(self):
        items = [("a", np.zeros(2))]
        with pytest.raises(ValueError):
            stratified_seed_sample(items, 0, 1, seed=0)
        with pytest.raises(ValueError):
            stratified_seed_sample(items, 1, 0, seed=0)
