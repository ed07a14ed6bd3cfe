"""Exact inner-product search with per-query dimension masks.

Masking is realized by zeroing the dropped query coordinates and scoring the
full corpus, so a full mask reproduces unmasked scores bit for bit. Corpus
rows are promoted to float64 one block at a time; a block's scores depend
only on the block, never on thread scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .selection import SelectionMask
from .store import EmbeddingMatrix, RunEntry, RunRanking

BLOCK_ROWS = 16384
THREADS_ENV = "RDIME_THREADS"

T = TypeVar("T")
R = TypeVar("R")


class MissingDocumentError(LookupError):
    pass


class Similarity(str, Enum):
    DOT = "dot"
    COSINE = "cosine"


@dataclass(frozen=True)
class ScoringConfig:
    similarity: Similarity = Similarity.DOT
    top_n: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "similarity", Similarity(self.similarity))
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    return max(1, n)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> list[R]:
    """Order-preserving map; results never depend on the thread count."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def masked_query(q, mask: SelectionMask | None) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if mask is None or mask.is_full:
        if mask is not None and mask.dim != q.size:
            raise ValueError(f"mask dim {mask.dim} != query dim {q.size}")
        return q.copy()
    if mask.dim != q.size:
        raise ValueError(f"mask dim {mask.dim} != query dim {q.size}")
    out = np.zeros_like(q)
    out[mask.retained] = q[mask.retained]
    return out


def _block_scores(block: np.ndarray, qv: np.ndarray) -> np.ndarray:
    return block.astype(np.float64) @ qv


def masked_score(q, d, mask: SelectionMask | None = None) -> float:
    """Inner product restricted to the retained dimensions."""
    d = np.asarray(d).reshape(1, -1)
    qv = masked_query(q, mask)
    if d.shape[1] != qv.size:
        raise ValueError(f"document dim {d.shape[1]} != query dim {qv.size}")
    return float(_block_scores(d, qv)[0])


def _corpus_norms(corpus: EmbeddingMatrix) -> np.ndarray:
    norms = corpus.__dict__.get("_norms")
    if norms is None:
        r = corpus.rows.astype(np.float64)
        norms = np.sqrt(np.einsum("ij,ij->i", r, r))
        norms = np.where(norms == 0, 1.0, norms)
        corpus.__dict__["_norms"] = norms
    return norms


def _id_order(corpus: EmbeddingMatrix) -> np.ndarray:
    """Position of every row in ascending-id order, for tie-breaking."""
    order = corpus.__dict__.get("_id_rank")
    if order is None:
        ids = np.array(corpus.ids, dtype=object)
        order = np.empty(corpus.n, dtype=np.int64)
        order[np.argsort(ids, kind="stable")] = np.arange(corpus.n)
        corpus.__dict__["_id_rank"] = order
    return order


def score_corpus(q, corpus: EmbeddingMatrix, mask: SelectionMask | None = None,
                 similarity: Similarity = Similarity.DOT) -> np.ndarray:
    qv = masked_query(q, mask)
    if qv.size != corpus.dim:
        raise ValueError(f"query dim {qv.size} != corpus dim {corpus.dim}")
    if Similarity(similarity) is Similarity.COSINE:
        qn = float(np.sqrt(qv @ qv))
        qv = qv / qn if qn > 0 else qv
    out = np.empty(corpus.n, dtype=np.float64)
    for start in range(0, corpus.n, BLOCK_ROWS):
        stop = min(start + BLOCK_ROWS, corpus.n)
        out[start:stop] = _block_scores(corpus.rows[start:stop], qv)
    if Similarity(similarity) is Similarity.COSINE:
        out /= _corpus_norms(corpus)
    return out


def top_indices(scores: np.ndarray, n: int, id_rank: np.ndarray) -> np.ndarray:
    """Indices of the ``n`` best scores, descending, ties by ascending id."""
    total = scores.size
    n = min(n, total)
    if n < total:
        cutoff = np.partition(scores, total - n)[total - n]
        cand = np.flatnonzero(scores >= cutoff)
    else:
        cand = np.arange(total)
    order = np.lexsort((id_rank[cand], -scores[cand]))
    return cand[order[:n]]


def rank_all(q, corpus: EmbeddingMatrix, mask: SelectionMask | None = None,
             config: ScoringConfig | None = None, query_id: str = "", tag: str = "run") -> RunRanking:
    if corpus.n == 0:
        raise ValueError("cannot rank an empty corpus")
    config = config or ScoringConfig()
    scores = score_corpus(q, corpus, mask, config.similarity)
    top = top_indices(scores, config.top_n, _id_order(corpus))
    entries = tuple(
        RunEntry(corpus.ids[i], float(scores[i]), r) for r, i in enumerate(top.tolist(), start=1)
    )
    return RunRanking(query_id, entries, tag)


@dataclass(frozen=True, eq=False)
class FeedbackDocs:
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def first_stage_topM(q, corpus: EmbeddingMatrix, m: int) -> FeedbackDocs:
    """Top-``m`` documents by full-dimensional inner product."""
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    if m > corpus.n:
        raise ValueError(f"M={m} exceeds corpus size {corpus.n}")
    run = rank_all(q, corpus, None, ScoringConfig(Similarity.DOT, m))
    return _gather(run.doc_ids, corpus)


def pseudo_relevant_from_run(run: RunRanking, corpus: EmbeddingMatrix, m: int) -> FeedbackDocs:
    """Vectors of the top-``m`` documents of an external first-stage run."""
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    if m > len(run):
        raise ValueError(f"M={m} exceeds run length {len(run)} for query {run.query_id!r}")
    ids = run.doc_ids[:m]
    for did in ids:
        if did not in corpus.index:
            raise MissingDocumentError(f"document {did!r} from run for query {run.query_id!r} is not in the corpus")
    return _gather(ids, corpus)


def _gather(ids: Iterable[str], corpus: EmbeddingMatrix) -> FeedbackDocs:
    ids = tuple(ids)
    rows = np.stack([corpus.rows[corpus.index[i]] for i in ids])
    return FeedbackDocs(ids, rows)
