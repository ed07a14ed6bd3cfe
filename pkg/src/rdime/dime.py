"""Dimension importance estimators.

Every estimator returns ``u = q * c`` where ``c`` is a (weighted) combination
of one or more feedback document embeddings. Weight schemes decide how the
documents are mixed; all arithmetic is float64 regardless of input dtype.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

SIGMOID_FLOOR = 1e-12
_SUM_TOL = 1e-12


class KernelDegenerateError(ValueError):
    """Raised when kernel values cannot be normalized into weights."""


@dataclass(frozen=True)
class Uniform:
    pass


@dataclass(frozen=True)
class SoftmaxScores:
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class SingleDoc:
    """All weight on the first (top-ranked) document."""


@dataclass(frozen=True)
class InverseVariance:
    sigmas: tuple[float, ...]

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        if not sigmas or any(not s > 0 for s in sigmas):
            raise ValueError("sigmas must be non-empty and strictly positive")
        object.__setattr__(self, "sigmas", sigmas)


@dataclass(frozen=True)
class RBF:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class Sigmoid:
    a: float = 1.0
    c: float = 0.0


WeightScheme = Union[Uniform, SoftmaxScores, SingleDoc, InverseVariance, RBF, Sigmoid]


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise ValueError("empty weight vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        return cls(np.full(m, 1.0 / m))


@dataclass(frozen=True, eq=False)
class DimeScores:
    query_id: str
    scores: np.ndarray
    estimator_tag: str

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        if s.size == 0 or np.any(~np.isfinite(s)):
            raise ValueError("scores must be a non-empty finite vector")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @property
    def dim(self) -> int:
        return self.scores.size

    def __len__(self) -> int:
        return self.scores.size


def _as_vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _as_docs(docs, dim: int) -> np.ndarray:
    d = np.asarray(docs, dtype=np.float64)
    if d.ndim == 1:
        d = d[None, :]
    if d.ndim != 2 or d.shape[0] == 0:
        raise ValueError("need a non-empty list of documents")
    if d.shape[1] != dim:
        raise ValueError(f"document dimension {d.shape[1]} != query dimension {dim}")
    return d


def single_doc_dime(q, p_doc, query_id: str = "", tag: str = "single") -> DimeScores:
    q, p_doc = _as_vec(q), _as_vec(p_doc)
    if q.shape != p_doc.shape:
        raise ValueError(f"length mismatch: query {q.size}, document {p_doc.size}")
    return DimeScores(query_id, q * p_doc, tag)


def softmax(scores, temperature: float = 1.0) -> np.ndarray:
    """Max-subtracted softmax of ``scores / temperature``."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    z = _as_vec(scores) / temperature
    e = np.exp(z - z.max())
    return e / e.sum()


def _normalize(k: np.ndarray) -> np.ndarray:
    total = k.sum()
    if not total > 0 or not np.isfinite(total):
        raise KernelDegenerateError("kernel values sum to zero; cannot normalize")
    return k / total


def kernel_weights(q, docs, scheme: WeightScheme) -> WeightVector:
    q = _as_vec(q)
    d = _as_docs(docs, q.size)
    m = d.shape[0]
    if isinstance(scheme, Uniform):
        w = np.full(m, 1.0 / m)
    elif isinstance(scheme, SingleDoc):
        w = np.zeros(m)
        w[0] = 1.0
    elif isinstance(scheme, SoftmaxScores):
        w = softmax(d @ q, scheme.temperature)
    elif isinstance(scheme, InverseVariance):
        if len(scheme.sigmas) != m:
            raise ValueError(f"{len(scheme.sigmas)} sigmas for {m} documents")
        w = inverse_variance_weights(scheme.sigmas).weights
    elif isinstance(scheme, RBF):
        # normalized in log space so far-away documents cannot underflow to 0/0
        sq = ((d - q) ** 2).sum(axis=1)
        w = softmax(-scheme.gamma * sq)
    elif isinstance(scheme, Sigmoid):
        k = np.tanh(scheme.a * (d @ q) + scheme.c)
        if np.all(k <= SIGMOID_FLOOR):
            raise KernelDegenerateError("every sigmoid kernel value is at or below the floor")
        w = _normalize(np.maximum(k, SIGMOID_FLOOR))
    else:
        raise TypeError(f"unknown weight scheme {scheme!r}")
    return WeightVector(w)


def inverse_variance_weights(sigmas: Sequence[float]) -> WeightVector:
    """Weights proportional to ``1 / sigma_i**2``; the minimizer of sum(sigma^2 w^2) on the simplex."""
    s = _as_vec(sigmas)
    if s.size == 0 or np.any(s <= 0):
        raise ValueError("sigmas must be non-empty and strictly positive")
    inv = 1.0 / (s * s)
    return WeightVector(inv / inv.sum())


def kernel_dime(q, docs, weights: WeightVector, query_id: str = "", tag: str = "kernel") -> DimeScores:
    q = _as_vec(q)
    d = _as_docs(docs, q.size)
    if len(weights) != d.shape[0]:
        raise ValueError(f"{len(weights)} weights for {d.shape[0]} documents")
    centroid = weights.weights @ d
    return DimeScores(query_id, q * centroid, tag)


def prf_dime(q, docs, query_id: str = "") -> DimeScores:
    """Uniformly weighted centroid of pseudo-relevant documents."""
    d = _as_docs(docs, _as_vec(q).size)
    return kernel_dime(q, d, WeightVector.uniform(d.shape[0]), query_id, tag="prf")


def swc_dime(q, docs, temperature: float = 1.0, query_id: str = "") -> DimeScores:
    w = kernel_weights(q, docs, SoftmaxScores(temperature))
    return kernel_dime(q, docs, w, query_id, tag="swc")


def scheme_from_config(name: str, params: dict | None = None, m: int | None = None) -> WeightScheme:
    """Build a scheme from a config entry such as ``{"name": "swc", "temperature": 1.0}``."""
    params = dict(params or {})
    name = name.lower()
    if name in ("prf", "uniform"):
        scheme: WeightScheme = Uniform()
    elif name in ("swc", "softmax"):
        scheme = SoftmaxScores(float(params.pop("temperature", 1.0)))
    elif name in ("llm", "single"):
        scheme = SingleDoc()
    elif name in ("inverse_variance", "ivw"):
        scheme = InverseVariance(tuple(params.pop("sigmas")))
        if m is not None and len(scheme.sigmas) != m:
            raise ValueError(f"inverse_variance needs {m} sigmas, got {len(scheme.sigmas)}")
    elif name == "rbf":
        scheme = RBF(float(params.pop("gamma")))
    elif name == "sigmoid":
        scheme = Sigmoid(float(params.pop("a", 1.0)), float(params.pop("c", 0.0)))
    else:
        raise ValueError(f"unknown estimator {name!r}")
    if params:
        raise ValueError(f"unexpected parameters for {name}: {sorted(params)}")
    return scheme
