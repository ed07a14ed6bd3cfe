import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rdime.selection import (
    Baseline,
    Oracle,
    RDime,
    SelectionMask,
    TopKFraction,
    brute_force_optimal,
    estimate_noise,
    oracle_select,
    oracle_set,
    parse_policy,
    rdime_select,
    risk,
    risk_of_indices,
    select,
    threshold_select,
    topk_count,
    topk_select,
)

scores = st.integers(1, 40).flatmap(
    lambda p: arrays(np.float64, p, elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False))
)


class TestTopK:
    def test_two_of_three(self):
        assert topk_select([0.5, 0.9, 0.1], 2 / 3).as_set() == {0, 1}

    def test_tie_goes_to_lower_index(self):
        assert topk_select([0.5, 0.5, 0.1], 1 / 3).as_set() == {0}

    @pytest.mark.parametrize("k, expected", [(0.4, 307), (0.6, 460), (0.8, 614)])
    def test_grid_counts_at_768(self, k, expected):
        u = np.random.default_rng(0).normal(size=768)
        assert topk_select(u, k).size == expected

    def test_count_floor_of_one(self):
        assert topk_count(0.01, 10) == 1
        assert topk_select([3.0, 1.0], 0.01).as_set() == {0}

    def test_raw_not_absolute(self):
        assert topk_select([-5.0, 1.0], 0.5).as_set() == {1}
        assert topk_select([-5.0, 1.0], 0.5, absolute=True).as_set() == {0}

    @pytest.mark.parametrize("k", [0.0, -0.1, 1.01])
    def test_k_out_of_range(self, k):
        with pytest.raises(ValueError):
            topk_select([1.0, 2.0], k)

    @settings(max_examples=80, deadline=None)
    @given(u=scores)
    def test_k_one_keeps_everything(self, u):
        assert topk_select(u, 1.0).is_full

    @settings(max_examples=80, deadline=None)
    @given(u=scores, k=st.floats(0.001, 1.0), c=st.floats(1e-3, 1e3))
    def test_positive_scaling_invariance(self, u, k, c):
        assert topk_select(u, k).as_set() == topk_select(c * u, k).as_set()

    @settings(max_examples=80, deadline=None)
    @given(u=scores, k=st.floats(0.001, 1.0))
    def test_size_rule(self, u, k):
        assert topk_select(u, k).size == max(1, int(np.floor(round(k * u.size, 9))))


class TestNoise:
    def test_hand_example(self):
        assert estimate_noise([2, 0.1], [3.9, 0.02]).epsilon_sq_raw == pytest.approx(0.045, abs=1e-15)

    def test_self_estimate_is_zero(self):
        q = np.array([0.3, -1.7, 2.2])
        assert estimate_noise(q, q * q).epsilon_sq_raw == 0.0

    def test_clamp(self):
        n = estimate_noise([1, 1], [2, 2])
        assert n.epsilon_sq_raw == -1.0
        assert n.epsilon_sq_clamped == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            estimate_noise([1, 2], [1])


class TestRdime:
    def test_hand_example(self):
        m = rdime_select([2, 0.1], [3.9, 0.02])
        assert m.as_set() == {0}
        assert m.policy_tag == "rdime"

    def test_all_negative_falls_back(self):
        m = rdime_select([1.0, 2.0, 3.0], [-1.0, -2.0, -0.5])
        assert m.is_full
        assert m.policy_tag == "rdime-fallback"

    def test_zero_threshold_keeps_positive(self):
        assert rdime_select([1, 1], [1, 1]).as_set() == {0, 1}

    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_set_identity(self, data):
        p = data.draw(st.integers(1, 30))
        el = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
        q = data.draw(arrays(np.float64, p, elements=el))
        u = data.draw(arrays(np.float64, p, elements=el))
        expected = set(np.flatnonzero(u > estimate_noise(q, u).epsilon_sq_clamped).tolist())
        got = rdime_select(q, u)
        if expected:
            assert got.as_set() == expected
        else:
            assert got.is_full

    @settings(max_examples=60, deadline=None)
    @given(u=scores, a=st.floats(0, 5), b=st.floats(0, 5))
    def test_threshold_monotone(self, u, a, b):
        lo, hi = sorted((a, b))
        strict_hi = set(np.flatnonzero(u > hi).tolist())
        strict_lo = set(np.flatnonzero(u > lo).tolist())
        assert strict_hi <= strict_lo
        if strict_hi:
            assert threshold_select(u, hi, "t").as_set() <= threshold_select(u, lo, "t").as_set()


class TestOracle:
    def test_hand_example(self):
        assert oracle_select([2, 0.5], 1).as_set() == {0}

    def test_zero_noise_keeps_nonzero(self):
        assert oracle_select([0.1, -3, 2], 0).is_full

    def test_boundary_falls_back(self):
        m = oracle_select([1, 1], 1)
        assert m.is_full and m.policy_tag == "oracle-fallback"
        assert oracle_set([1, 1], 1).size == 0

    def test_negative_epsilon(self):
        with pytest.raises(ValueError):
            oracle_select([1.0], -0.1)


class TestRisk:
    def test_hand_example(self):
        assert risk(SelectionMask(2, [0], "t"), [2, 0.5], 1) == 1.25

    def test_full_set(self):
        assert risk(SelectionMask.full(3), [5, -1, 2], 0.5) == 3 * 0.25

    def test_empty_set(self):
        assert risk_of_indices([], [2, 0.5], 1) == 4.25

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            risk(SelectionMask.full(3), [1, 2], 1)


class TestBruteForce:
    def test_hand_enumeration(self):
        chosen, r = brute_force_optimal([2, 0.5], 1)
        assert chosen == {0} and r == 1.25
        subsets = {(): 4.25, (1,): 5.0, (0, 1): 2.0}
        for s, expected in subsets.items():
            assert risk_of_indices(s, [2, 0.5], 1) == expected

    def test_zero_noise(self):
        chosen, r = brute_force_optimal([1.0, -2.0, 0.3], 0)
        assert chosen == {0, 1, 2} and r == 0.0

    def test_boundary_tie_prefers_oracle_set(self):
        chosen, r = brute_force_optimal([1.0], 1.0)
        assert chosen == frozenset() and r == 1.0

    def test_guard(self):
        with pytest.raises(ValueError, match="guard"):
            brute_force_optimal(np.ones(21), 1.0)

    def test_agrees_with_itertools_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = int(rng.integers(1, 8))
            theta, eps = rng.normal(0, 2, p), rng.uniform(0.1, 2)
            ref = min(
                sum(eps**2 if i in s else theta[i] ** 2 for i in range(p))
                for r in range(p + 1)
                for s in map(set, itertools.combinations(range(p), r))
            )
            assert brute_force_optimal(theta, eps)[1] == pytest.approx(ref, rel=1e-12)

    def test_chosen_set_is_oracle_set(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            p = int(rng.integers(1, 10))
            theta, eps = rng.normal(0, 2, p), rng.uniform(0.1, 2)
            assert brute_force_optimal(theta, eps)[0] == set(oracle_set(theta, eps).tolist())


class TestPolicies:
    @pytest.mark.parametrize(
        "text, expected",
        [("topk:0.4", TopKFraction(0.4)), ("rdime", RDime()), ("oracle", Oracle()), ("baseline", Baseline())],
    )
    def test_parse(self, text, expected):
        assert parse_policy(text) == expected

    @pytest.mark.parametrize("text", ["topk:2", "topk:x", "bm25"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            parse_policy(text)

    def test_name(self):
        assert TopKFraction(0.6).name == "topk:0.6"

    def test_select_dispatch(self):
        q, u = np.array([2, 0.1]), np.array([3.9, 0.02])
        assert select(RDime(), q, u).as_set() == {0}
        assert select(TopKFraction(0.5), q, u).as_set() == {0}
        assert select(Baseline(), q, u).is_full
        with pytest.raises(ValueError):
            select(Oracle(), q, u)


class TestMask:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            SelectionMask(3, [], "t")

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SelectionMask(3, [2, 1], "t")

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SelectionMask(3, [0, 3], "t")

    def test_fraction(self):
        assert SelectionMask(768, np.arange(460), "t").fraction == 460 / 768
