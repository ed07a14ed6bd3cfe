"""Query-wise embedding dimension selection for dense retrieval."""

from .dime import (
    DimeScores,
    InverseVariance,
    RBF,
    Sigmoid,
    SingleDoc,
    SoftmaxScores,
    Uniform,
    WeightVector,
    inverse_variance_weights,
    kernel_dime,
    kernel_weights,
    prf_dime,
    single_doc_dime,
    swc_dime,
)
from .selection import (
    NoiseEstimate,
    SelectionMask,
    brute_force_optimal,
    estimate_noise,
    oracle_select,
    rdime_select,
    risk,
    topk_select,
)
from .store import EmbeddingMatrix, Qrels, RunRanking, load_embeddings, load_qrels, save_embeddings, write_run

__version__ = "0.1.0"
