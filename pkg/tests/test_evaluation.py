import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from rdime.evaluation import (
    JB_CRITICAL,
    MetricReport,
    apply_holm,
    average_precision,
    compare,
    evaluate,
    holm_bonferroni,
    jarque_bera,
    ndcg_at_k,
    paired_t_test,
    retained_fraction_summary,
    select_test,
    wilcoxon_signed_rank,
)
from rdime.selection import SelectionMask
from rdime.store import Qrels, RunEntry, RunRanking


def _run(qid, doc_ids):
    return RunRanking(qid, tuple(RunEntry(d, float(len(doc_ids) - i), i + 1) for i, d in enumerate(doc_ids)))


def _brute_wilcoxon_greater(d):
    """P(W+ >= observed) by enumerating every sign pattern over midranks."""
    d = np.asarray([v for v in d if v != 0], dtype=float)
    ranks = stats.rankdata(np.abs(d))
    obs = ranks[d > 0].sum()
    hits = sum(
        1 for signs in itertools.product((0, 1), repeat=d.size) if np.dot(signs, ranks) >= obs - 1e-9
    )
    return hits / 2**d.size


class TestNdcg:
    def test_ideal(self):
        q = Qrels({("q", "a"): 3, ("q", "b"): 2, ("q", "c"): 0})
        assert ndcg_at_k(_run("q", ["a", "b", "c"]), q) == 1.0

    def test_hand_example(self):
        q = Qrels({("q", "a"): 3})
        assert ndcg_at_k(_run("q", ["x", "a"]), q) == pytest.approx(0.6309297535714575, abs=1e-12)

    def test_no_relevant(self):
        assert ndcg_at_k(_run("q", ["a"]), Qrels({("q", "a"): 0})) == 0.0
        assert ndcg_at_k(_run("q", ["a"]), Qrels({})) == 0.0

    def test_graded_reference(self):
        # DCG = 1/log2(2) + 7/log2(4); ideal = 7/log2(2) + 1/log2(3)
        q = Qrels({("q", "a"): 1, ("q", "b"): 3})
        expected = (1 + 7 / 2) / (7 + 1 / math.log2(3))
        assert ndcg_at_k(_run("q", ["a", "x", "b"]), q) == pytest.approx(expected, rel=1e-14)

    def test_cutoff(self):
        q = Qrels({("q", "r"): 1})
        docs = [f"n{i}" for i in range(10)] + ["r"]
        assert ndcg_at_k(_run("q", docs), q, k=10) == 0.0
        assert ndcg_at_k(_run("q", docs), q, k=11) > 0

    def test_permuting_below_k(self):
        rng = np.random.default_rng(0)
        docs = [f"d{i}" for i in range(30)]
        q = Qrels({("q", d): int(rng.integers(0, 4)) for d in docs})
        base = ndcg_at_k(_run("q", docs), q)
        for _ in range(20):
            tail = list(rng.permutation(docs[10:]))
            assert ndcg_at_k(_run("q", docs[:10] + tail), q) == base


class TestAp:
    def test_hand_example(self):
        q = Qrels({("q", "a"): 1, ("q", "b"): 1})
        assert average_precision(_run("q", ["a", "x", "b"]), q) == pytest.approx(0.8333333333333333, abs=1e-12)

    def test_ideal(self):
        q = Qrels({("q", "a"): 2, ("q", "b"): 1})
        assert average_precision(_run("q", ["b", "a", "x"]), q) == 1.0

    def test_nothing_retrieved(self):
        q = Qrels({("q", "a"): 1})
        assert average_precision(_run("q", ["x", "y"]), q) == 0.0

    def test_unretrieved_relevant_counts_in_denominator(self):
        q = Qrels({("q", "a"): 1, ("q", "b"): 1})
        assert average_precision(_run("q", ["a"]), q) == 0.5


class TestEvaluate:
    def test_mean_and_range(self):
        q = Qrels({("q1", "a"): 1, ("q2", "b"): 1})
        rep = evaluate([_run("q1", ["a"]), _run("q2", ["x", "b"])], q, "ap")
        assert rep.metric_name == "ap"
        assert rep.per_query == {"q1": 1.0, "q2": 0.5}
        assert rep.mean == 0.75

    def test_name(self):
        assert evaluate([], Qrels({}), "ndcg", 10).metric_name == "ndcg@10"

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            evaluate([], Qrels({}), "mrr")

    def test_empty_mean(self):
        assert MetricReport("ap", {}).mean == 0.0


class TestTTest:
    def test_hand_example(self):
        r = paired_t_test([1, 2, 3], [0, 0, 0])
        assert r.statistic == pytest.approx(3.4641016151377544, abs=1e-12)
        assert r.p_value == pytest.approx(0.07417990022744853, abs=1e-12)
        assert r.extra["df"] == 2

    def test_identical_samples(self):
        r = paired_t_test([1, 2, 3], [1, 2, 3])
        assert r.degenerate and r.p_value == 1.0

    def test_constant_shift(self):
        r = paired_t_test([2, 3, 4], [1, 2, 3])
        assert r.degenerate and r.p_value == 0.0

    def test_needs_two_pairs(self):
        with pytest.raises(ValueError):
            paired_t_test([1], [0])

    @pytest.mark.parametrize("alternative", ["two-sided", "greater", "less"])
    def test_against_scipy(self, alternative):
        rng = np.random.default_rng(1)
        for n in (3, 10, 50):
            x, y = rng.normal(size=n), rng.normal(0.2, 1, size=n)
            ref = stats.ttest_rel(x, y, alternative=alternative)
            got = paired_t_test(x, y, alternative)
            assert got.statistic == pytest.approx(ref.statistic, rel=1e-12)
            assert got.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.integers(2, 20), elements=st.floats(-1, 1)), st.data())
    def test_antisymmetric(self, x, data):
        y = data.draw(arrays(np.float64, x.size, elements=st.floats(-1, 1)))
        a, b = paired_t_test(x, y), paired_t_test(y, x)
        assert a.statistic == -b.statistic
        assert 0 <= a.p_value <= 1


class TestWilcoxon:
    def test_hand_example(self):
        r = wilcoxon_signed_rank([1, 2, 3], [0, 0, 0])
        assert r.p_value == 0.125
        assert r.extra["w_minus"] == 0

    def test_all_negative(self):
        assert wilcoxon_signed_rank([-1, -2, -3], [0, 0, 0]).p_value == 1.0

    def test_all_zero(self):
        r = wilcoxon_signed_rank([0, 0], [0, 0])
        assert r.degenerate and r.p_value == 1.0

    def test_exact_with_ties_matches_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            n = int(rng.integers(1, 12))
            d = rng.integers(-3, 4, size=n).astype(float)
            if not np.any(d):
                continue
            got = wilcoxon_signed_rank(d, np.zeros(n)).p_value
            assert got == pytest.approx(_brute_wilcoxon_greater(d), abs=1e-15)

    @pytest.mark.parametrize("alternative", ["greater", "less", "two-sided"])
    def test_exact_matches_scipy_without_ties(self, alternative):
        rng = np.random.default_rng(3)
        for n in (5, 12, 20):
            d = rng.normal(0.3, 1, size=n)
            ref = stats.wilcoxon(d, alternative=alternative, method="exact")
            assert wilcoxon_signed_rank(d, np.zeros(n), alternative).p_value == pytest.approx(ref.pvalue, rel=1e-12)

    def test_normal_approximation_matches_scipy(self):
        rng = np.random.default_rng(4)
        d = np.round(rng.normal(0.2, 1, size=60), 1)
        ref = stats.wilcoxon(d, alternative="greater", method="approx", correction=True, zero_method="wilcox")
        got = wilcoxon_signed_rank(d, np.zeros(d.size))
        assert got.extra["method"] == "normal"
        assert got.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.integers(1, 25), elements=st.floats(-1, 1)), st.data())
    def test_antisymmetric(self, x, data):
        y = data.draw(arrays(np.float64, x.size, elements=st.floats(-1, 1)))
        a, b = wilcoxon_signed_rank(x, y), wilcoxon_signed_rank(y, x)
        assert a.statistic == -b.statistic
        assert 0 <= a.p_value <= 1


class TestHolm:
    def test_both_reject(self):
        assert holm_bonferroni([0.01, 0.04]) == [True, True]

    def test_stop_early(self):
        assert holm_bonferroni([0.03, 0.04]) == [False, False]

    def test_boundary(self):
        assert holm_bonferroni([0.05]) == [True]

    def test_input_order_preserved(self):
        assert holm_bonferroni([0.04, 0.001, 0.9]) == [False, True, False]

    def test_invalid(self):
        with pytest.raises(ValueError):
            holm_bonferroni([1.2])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
    def test_monotone(self, p):
        flags = holm_bonferroni(p)
        for i, fi in enumerate(flags):
            for j in range(len(p)):
                if fi and p[j] <= p[i]:
                    assert flags[j]

    def test_apply_holm_sets_flags(self):
        results = [paired_t_test([1, 2, 3, 4], [0, 0, 0, 0]), paired_t_test([1, 2], [1, 2])]
        flagged = apply_holm(results)
        assert [r.corrected_reject for r in flagged] == holm_bonferroni([r.p_value for r in results])


class TestRouting:
    def test_critical_value(self):
        assert JB_CRITICAL == pytest.approx(stats.chi2.ppf(0.95, 2), rel=1e-12)

    def test_normal_sample(self):
        x = np.random.default_rng(0).standard_normal(50)
        assert jarque_bera(x) == pytest.approx(stats.jarque_bera(x).statistic, rel=1e-12)
        assert select_test(x) == "t-test"

    def test_heavy_tailed_mixture(self):
        rng = np.random.default_rng(0)
        x = np.where(rng.random(50) < 0.05, -10.0, 0.1)
        assert (x == -10).any()
        assert select_test(x) == "wilcoxon"

    def test_small_sample_guard(self):
        assert select_test([0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2]) == "wilcoxon"

    def test_zero_variance_routes_to_t(self):
        assert select_test(np.zeros(10)) == "t-test"

    def test_compare_dispatch(self):
        x = np.random.default_rng(0).standard_normal(30)
        assert compare(x + 0.5, x * 0.0).test_name == "t-test"
        assert compare([1, 2, 3], [0, 0, 0]).test_name == "wilcoxon"


class TestRetainedSummary:
    def test_two_masks(self):
        s = retained_fraction_summary([SelectionMask(768, np.arange(384), "t"), SelectionMask.full(768)])
        np.testing.assert_array_equal(s.fractions, [0.5, 1.0])
        assert s.mean == 0.75
        assert (s.q1, s.median, s.q3) == (0.625, 0.75, 0.875)

    def test_all_full(self):
        s = retained_fraction_summary([SelectionMask.full(4)] * 3)
        assert (s.median, s.q1, s.q3, s.min, s.max, s.mean) == (1.0,) * 6

    def test_single(self):
        s = retained_fraction_summary([SelectionMask(768, np.arange(460), "t")])
        for v in (s.median, s.q1, s.q3, s.min, s.max, s.mean):
            assert v == pytest.approx(0.59896, abs=1e-5)

    def test_empty(self):
        with pytest.raises(ValueError):
            retained_fraction_summary([])
