import numpy as np
import pytest

from rdime.retrieval import (
    MissingDocumentError,
    ScoringConfig,
    Similarity,
    first_stage_topM,
    masked_query,
    masked_score,
    parallel_map,
    pseudo_relevant_from_run,
    rank_all,
    score_corpus,
)
from rdime.selection import SelectionMask
from rdime.store import EmbeddingMatrix, RunEntry, RunRanking


@pytest.fixture
def two_docs():
    return EmbeddingMatrix(("dA", "dB"), [[1, 0], [0, 1]])


@pytest.fixture
def random_corpus():
    rng = np.random.default_rng(4)
    return EmbeddingMatrix(tuple(f"d{i:04d}" for i in range(3000)), rng.normal(size=(3000, 32)))


def _ranked(run):
    return [(e.doc_id, e.score) for e in run.entries]


class TestMaskedScore:
    def test_subset(self):
        assert masked_score([1, 2, 3], [1, 1, 1], SelectionMask(3, [0, 2], "t")) == 4.0

    def test_full(self):
        assert masked_score([1, 2, 3], [1, 1, 1], SelectionMask.full(3)) == 6.0
        assert masked_score([1, 2, 3], [1, 1, 1]) == 6.0

    def test_orthogonal_on_kept_dim(self):
        assert masked_score([1, 2, 3], [5, 0, 7], SelectionMask(3, [1], "t")) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            masked_score([1, 2], [1, 2, 3])

    def test_masked_query_equivalence(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q, d = rng.normal(size=20), rng.normal(size=20).astype(np.float32)
            mask = SelectionMask(20, np.sort(rng.choice(20, size=int(rng.integers(1, 21)), replace=False)), "t")
            assert masked_score(masked_query(q, mask), d) == masked_score(q, d, mask)


class TestRankAll:
    def test_full_mask(self, two_docs):
        run = rank_all([1, 0.5], two_docs, None, ScoringConfig(top_n=2))
        assert _ranked(run) == [("dA", 1.0), ("dB", 0.5)]
        assert [e.rank for e in run.entries] == [1, 2]

    def test_mask_flips_order(self, two_docs):
        run = rank_all([1, 0.5], two_docs, SelectionMask(2, [1], "t"), ScoringConfig(top_n=2))
        assert _ranked(run) == [("dB", 0.5), ("dA", 0.0)]

    def test_ties_by_id(self):
        corpus = EmbeddingMatrix(("c", "a", "b"), [[1.0], [1.0], [1.0]])
        assert rank_all([1.0], corpus).doc_ids == ["a", "b", "c"]

    def test_ties_across_cutoff(self):
        corpus = EmbeddingMatrix(("z", "y", "x", "w"), [[2.0], [1.0], [1.0], [1.0]])
        assert rank_all([1.0], corpus, None, ScoringConfig(top_n=2)).doc_ids == ["z", "w"]

    def test_full_mask_bit_identical(self, random_corpus):
        q = np.random.default_rng(1).normal(size=32)
        cfg = ScoringConfig(top_n=100)
        a = rank_all(q, random_corpus, None, cfg)
        b = rank_all(q, random_corpus, SelectionMask.full(32), cfg)
        assert _ranked(a) == _ranked(b)

    def test_matches_brute_force_reference(self, random_corpus):
        rng = np.random.default_rng(2)
        q = rng.normal(size=32)
        mask = SelectionMask(32, np.arange(0, 32, 3), "t")
        run = rank_all(q, random_corpus, mask, ScoringConfig(top_n=50))
        ref = random_corpus.rows.astype(np.float64)[:, mask.retained] @ q[mask.retained]
        order = sorted(range(random_corpus.n), key=lambda i: (-ref[i], random_corpus.ids[i]))[:50]
        assert run.doc_ids == [random_corpus.ids[i] for i in order]
        np.testing.assert_allclose([e.score for e in run.entries], ref[order], rtol=1e-12)

    def test_cosine_equals_dot_on_normalized(self, random_corpus):
        rows = random_corpus.rows.astype(np.float64)
        unit = EmbeddingMatrix(random_corpus.ids, rows / np.linalg.norm(rows, axis=1, keepdims=True))
        q = np.random.default_rng(3).normal(size=32)
        q /= np.linalg.norm(q)
        dot = score_corpus(q, unit, None, Similarity.DOT)
        cos = score_corpus(q, unit, None, Similarity.COSINE)
        np.testing.assert_allclose(cos, dot, atol=1e-12)

    def test_deterministic_under_threads(self, random_corpus, monkeypatch):
        rng = np.random.default_rng(5)
        queries = rng.normal(size=(8, 32))
        single = parallel_map(lambda q: _ranked(rank_all(q, random_corpus)), list(queries), threads=1)
        multi = parallel_map(lambda q: _ranked(rank_all(q, random_corpus)), list(queries), threads=4)
        assert single == multi

    def test_top_n_must_be_positive(self):
        with pytest.raises(ValueError):
            ScoringConfig(top_n=0)


class TestFeedback:
    @pytest.fixture
    def corpus(self):
        return EmbeddingMatrix(("dA", "dB", "dC"), [[1, 0], [3, 0], [2, 0]])

    def test_top_two(self, corpus):
        fb = first_stage_topM([1, 0], corpus, 2)
        assert fb.ids == ("dB", "dC")
        np.testing.assert_array_equal(fb.vectors, [[3, 0], [2, 0]])

    def test_whole_corpus(self, corpus):
        assert first_stage_topM([1, 0], corpus, 3).ids == ("dB", "dC", "dA")

    def test_m_too_large(self, corpus):
        with pytest.raises(ValueError):
            first_stage_topM([1, 0], corpus, 4)

    def test_from_run(self, corpus):
        run = RunRanking("q", (RunEntry("dB", 2.0, 1), RunEntry("dA", 1.0, 2)))
        fb = pseudo_relevant_from_run(run, corpus, 1)
        assert fb.ids == ("dB",)
        np.testing.assert_array_equal(fb.vectors, [[3, 0]])

    def test_from_run_too_short(self, corpus):
        run = RunRanking("q", (RunEntry("dB", 2.0, 1),))
        with pytest.raises(ValueError):
            pseudo_relevant_from_run(run, corpus, 2)

    def test_from_run_unknown_id(self, corpus):
        run = RunRanking("q", (RunEntry("ghost", 2.0, 1),))
        with pytest.raises(MissingDocumentError, match="ghost"):
            pseudo_relevant_from_run(run, corpus, 1)
