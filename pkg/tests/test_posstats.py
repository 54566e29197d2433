import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsign.posstats import (compare_sources, format_p, format_pos_report,
                               pos_counts, tag_total, two_proportion_z)

# Occurrence counts from the weather-corpus POS analysis: gloss vs text
# over NOUN/VERB/ADV/ADJ, with per-source four-tag sums as denominators.
GLOSS_COUNTS = {"NOUN": 20927, "VERB": 6407, "ADV": 17718, "ADJ": 648}
TEXT_COUNTS = {"NOUN": 25952, "VERB": 7638, "ADV": 24755, "ADJ": 5628}
GLOSS_TOTAL = 45700
TEXT_TOTAL = 63973


class TestPosCounts:
    def test_single_noun(self):
        assert pos_counts([[("regen", "NOUN")]])["NOUN"] == 1

    def test_empty_corpus_all_zeros(self):
        counts = pos_counts([])
        assert all(v == 0 for v in counts.values())

    def test_unknown_tag_counted_under_other(self):
        counts = pos_counts([[("und", "CONJ"), ("schnell", "ADJ")]])
        assert counts["OTHER"] == 1 and counts["ADJ"] == 1

    def test_fixture_corpus_matches_hand_tally(self):
        # 20 sentences, tallied by hand: 7 NOUN, 5 VERB, 4 ADV, 3 ADJ, 1 OTHER
        sentences = (
            [[("a", "NOUN")]] * 7 + [[("b", "VERB")]] * 5
            + [[("c", "ADV")]] * 4 + [[("d", "ADJ")]] * 3
            + [[("e", "PUNCT")]])
        counts = pos_counts(sentences)
        assert counts == {"NOUN": 7, "VERB": 5, "ADV": 4, "ADJ": 3, "OTHER": 1}
        assert tag_total(counts) == 19

    def test_permutation_invariant_over_sentence_order(self, rng):
        sentences = [[("w", t)] for t in
                     ["NOUN", "ADJ", "ADV", "VERB", "NOUN", "X"]]
        shuffled = [sentences[i] for i in rng.permutation(len(sentences))]
        assert pos_counts(sentences) == pos_counts(shuffled)

    def test_totals_consistency(self):
        assert sum(GLOSS_COUNTS.values()) == GLOSS_TOTAL
        assert sum(TEXT_COUNTS.values()) == TEXT_TOTAL


class TestTwoProportionZ:
    def test_equal_proportions_give_zero(self):
        z, p = two_proportion_z(3, 10, 6, 20)
        assert z == 0.0 and p == 1.0

    def test_textbook_case_matches_high_precision_oracle(self):
        # (1 of 10) vs (9 of 10); frozen from a 50-digit computation
        z, p = two_proportion_z(1, 10, 9, 10)
        assert z == pytest.approx(3.5777087639996635, rel=1e-12)
        assert p == pytest.approx(3.46619351135e-4, rel=1e-9)

    def test_secondary_oracle_case(self):
        z, p = two_proportion_z(25, 100, 40, 100)
        assert z == pytest.approx(2.2645540682891915, rel=1e-12)
        assert p == pytest.approx(0.0235400582612, rel=1e-9)

    def test_adjective_gap_is_significant(self):
        # ADJ counts over four-tag totals; frozen from a 50-digit computation
        z, p = two_proportion_z(GLOSS_COUNTS["ADJ"], GLOSS_TOTAL,
                                TEXT_COUNTS["ADJ"], TEXT_TOTAL)
        assert z == pytest.approx(51.87270541789203, rel=1e-12)
        assert p < 0.05
        assert format_p(p) == "< 1e-300"

    def test_direction_sign(self):
        z, _ = two_proportion_z(1, 10, 9, 10)
        assert z > 0  # second proportion larger gives positive z
        z, _ = two_proportion_z(9, 10, 1, 10)
        assert z < 0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            two_proportion_z(1, 0, 1, 10)
        with pytest.raises(ValueError):
            two_proportion_z(11, 10, 1, 10)
        with pytest.raises(ValueError):
            two_proportion_z(-1, 10, 1, 10)

    def test_degenerate_all_or_nothing(self):
        assert two_proportion_z(0, 5, 0, 9) == (0.0, 1.0)
        assert two_proportion_z(5, 5, 9, 9) == (0.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 10000), st.integers(1, 10000),
           st.integers(0, 10000), st.integers(0, 10000))
    def test_antisymmetry(self, n1, n2, a, b):
        x1, x2 = min(a, n1), min(b, n2)
        z_fwd, p_fwd = two_proportion_z(x1, n1, x2, n2)
        z_rev, p_rev = two_proportion_z(x2, n2, x1, n1)
        assert z_fwd == -z_rev
        assert p_fwd == p_rev

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 500), st.integers(1, 500),
           st.integers(0, 500), st.integers(0, 500), st.integers(2, 50))
    def test_sqrt_k_scaling(self, n1, n2, a, b, k):
        x1, x2 = min(a, n1), min(b, n2)
        z_base, _ = two_proportion_z(x1, n1, x2, n2)
        z_scaled, _ = two_proportion_z(k * x1, k * n1, k * x2, k * n2)
        assert abs(z_scaled - math.sqrt(k) * z_base) < 1e-9 * max(
            1.0, abs(z_scaled))


class TestFormatP:
    def test_underflow_reported_as_bound(self):
        assert format_p(0.0) == "< 1e-300"
        assert format_p(5e-301) == "< 1e-300"

    def test_regular_values_formatted(self):
        assert format_p(0.0235400582612).startswith("0.02354")


class TestCompareSources:
    def _sentences(self, counts):
        return [[("tok", tag)] * n for tag, n in counts.items()]

    def test_full_table_analysis(self):
        result = compare_sources(self._sentences(GLOSS_COUNTS),
                                 self._sentences(TEXT_COUNTS))
        assert result["totals"] == {"gloss": GLOSS_TOTAL, "text": TEXT_TOTAL}
        assert result["tests"]["ADJ"]["significant"]
        assert result["tests"]["ADJ"]["p_display"] == "< 1e-300"
        assert "denominators" in result["note"]

    def test_report_renders_counts_and_note(self):
        result = compare_sources(self._sentences(GLOSS_COUNTS),
                                 self._sentences(TEXT_COUNTS))
        text = format_pos_report(result)
        assert "20927" in text and "5628" in text
        assert "note:" in text
        assert "significant" in text
