"""Synthetic retrieval collection drawn from the Gaussian query/document model.

Each query has a latent signal with half of its coordinates strong and half
near zero. A handful of relevant documents per query are noisy copies of that
signal; the remainder of the corpus is unrelated standard normal noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store import EmbeddingMatrix, Qrels, save_embeddings
from .synthetic import mix_seed


@dataclass(frozen=True, eq=False)
class RetrievalFixture:
    queries: EmbeddingMatrix
    corpus: EmbeddingMatrix
    qrels: Qrels
    thetas: np.ndarray
    epsilon: float


def make_retrieval_fixture(
    n_queries: int = 50,
    p: int = 128,
    n_docs: int = 5000,
    relevant_per_query: int = 10,
    strong_fraction: float = 0.5,
    strong: float = 1.0,
    weak: float = 0.05,
    epsilon: float = 0.3,
    sigma: float = 0.3,
    seed: int = 0,
) -> RetrievalFixture:
    n_rel = n_queries * relevant_per_query
    if n_rel > n_docs:
        raise ValueError(f"{n_rel} relevant documents do not fit in a corpus of {n_docs}")
    rng = np.random.default_rng(mix_seed(seed, 0))
    n_strong = int(round(strong_fraction * p))
    thetas = np.empty((n_queries, p))
    for i in range(n_queries):
        mag = np.full(p, weak)
        mag[rng.choice(p, size=n_strong, replace=False)] = strong
        thetas[i] = mag * rng.choice([-1.0, 1.0], size=p)
    queries = thetas + epsilon * rng.standard_normal((n_queries, p))

    docs = rng.standard_normal((n_docs, p))
    owner = np.full(n_docs, -1)
    slots = rng.permutation(n_docs)[:n_rel]
    for i in range(n_queries):
        rows = slots[i * relevant_per_query : (i + 1) * relevant_per_query]
        docs[rows] = thetas[i] + sigma * rng.standard_normal((relevant_per_query, p))
        owner[rows] = i

    qids = [f"q{i:03d}" for i in range(n_queries)]
    dids = [f"d{j:05d}" for j in range(n_docs)]
    judgments = {(qids[o], dids[j]): 1 for j, o in enumerate(owner) if o >= 0}
    return RetrievalFixture(
        EmbeddingMatrix(tuple(qids), queries),
        EmbeddingMatrix(tuple(dids), docs),
        Qrels(judgments),
        thetas,
        epsilon,
    )


def write_fixture(fx: RetrievalFixture, out_dir: str | Path, estimator: str = "prf", m: int = 2) -> Path:
    """Write EMB1 files, qrels and a ready-to-run experiment config; returns the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(fx.queries, out / "queries.emb")
    save_embeddings(fx.corpus, out / "corpus.emb")
    lines = [f"{q} 0 {d} {g}\n" for (q, d), g in sorted(fx.qrels.judgments.items())]
    (out / "qrels.txt").write_text("".join(lines), encoding="utf-8")
    config = {
        "queries": "queries.emb",
        "corpus": "corpus.emb",
        "qrels": "qrels.txt",
        "estimator": {"name": estimator},
        "M": m,
        "policies": ["topk:0.4", "topk:0.6", "topk:0.8", "rdime"],
        "cutoff": 10,
        "top_n": 100,
        "seed": 0,
        "alpha": 0.05,
        "model": "synthetic",
        "collection": "gauss",
    }
    path = out / "config.json"
    path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return path
