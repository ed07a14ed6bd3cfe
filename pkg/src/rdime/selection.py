"""Retained-dimension sets: fixed-fraction Top-k, the risk rule, and its oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .dime import DimeScores

BRUTE_FORCE_MAX_DIM = 20
_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class SelectionMask:
    dim: int
    retained: np.ndarray
    policy_tag: str

    def __post_init__(self):
        idx = np.array(self.retained, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise ValueError("a selection mask must retain at least one dimension")
        if idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0):
            raise ValueError("retained indices must be strictly increasing and within [0, dim)")
        idx.setflags(write=False)
        object.__setattr__(self, "retained", idx)

    @classmethod
    def full(cls, dim: int, policy_tag: str = "full") -> "SelectionMask":
        return cls(dim, np.arange(dim), policy_tag)

    @property
    def size(self) -> int:
        return self.retained.size

    @property
    def fraction(self) -> float:
        return self.retained.size / self.dim

    @property
    def is_full(self) -> bool:
        return self.retained.size == self.dim

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=bool)
        out[self.retained] = True
        return out

    def as_set(self) -> set[int]:
        return set(self.retained.tolist())


@dataclass(frozen=True)
class NoiseEstimate:
    epsilon_sq_raw: float

    @property
    def epsilon_sq_clamped(self) -> float:
        return max(self.epsilon_sq_raw, 0.0)


@dataclass(frozen=True)
class TopKFraction:
    k: float

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError(f"k must lie in (0, 1], got {self.k}")

    @property
    def name(self) -> str:
        return f"topk:{self.k:g}"


@dataclass(frozen=True)
class RDime:
    name: str = "rdime"


@dataclass(frozen=True)
class Oracle:
    name: str = "oracle"


@dataclass(frozen=True)
class Baseline:
    """Full dimensionality; kept as its own policy so tables get a baseline row."""

    name: str = "baseline"


SelectionPolicy = Union[TopKFraction, RDime, Oracle, Baseline]


def parse_policy(text: str) -> SelectionPolicy:
    t = text.strip().lower()
    if t.startswith("topk:"):
        try:
            return TopKFraction(float(t[5:]))
        except ValueError as exc:
            raise ValueError(f"bad policy {text!r}: {exc}") from None
    if t == "rdime":
        return RDime()
    if t == "oracle":
        return Oracle()
    if t in ("baseline", "full"):
        return Baseline()
    raise ValueError(f"unknown policy {text!r} (expected topk:<k>, rdime, oracle or baseline)")


def topk_count(k: float, p: int) -> int:
    # k*p is rounded to 9 places first so that e.g. 0.57*100 counts 57, not 56
    return max(1, math.floor(round(k * p, 9)))


def _scores(u) -> np.ndarray:
    return u.scores if isinstance(u, DimeScores) else np.asarray(u, dtype=np.float64).reshape(-1)


def topk_select(u, k: float, absolute: bool = False) -> SelectionMask:
    """Keep the ``max(1, floor(k*p))`` highest-scoring dimensions.

    Ranks raw scores unless ``absolute`` is set. Ties go to the lower index.
    """
    if not 0 < k <= 1:
        raise ValueError(f"k must lie in (0, 1], got {k}")
    s = _scores(u)
    p = s.size
    m = topk_count(k, p)
    key = -np.abs(s) if absolute else -s
    order = np.argsort(key, kind="stable")
    return SelectionMask(p, np.sort(order[:m]), f"topk:{k:g}")


def estimate_noise(q, u) -> NoiseEstimate:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    s = _scores(u)
    if q.size != s.size:
        raise ValueError(f"length mismatch: query {q.size}, scores {s.size}")
    return NoiseEstimate(float(np.sum(q * q - s) / q.size))


def threshold_select(u, threshold: float, tag: str) -> SelectionMask:
    """Dimensions with score strictly above ``threshold``; all of them if none qualify."""
    s = _scores(u)
    keep = np.flatnonzero(s > threshold)
    if keep.size == 0:
        return SelectionMask.full(s.size, f"{tag}-fallback")
    return SelectionMask(s.size, keep, tag)


def rdime_select(q, u) -> SelectionMask:
    noise = estimate_noise(q, u)
    return threshold_select(u, noise.epsilon_sq_clamped, "rdime")


def oracle_set(theta, epsilon: float) -> np.ndarray:
    """``{i : theta_i^2 > epsilon^2}`` exactly, possibly empty."""
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    return np.flatnonzero(theta * theta > epsilon * epsilon)


def oracle_select(theta, epsilon: float) -> SelectionMask:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    keep = oracle_set(theta, epsilon)
    if keep.size == 0:
        return SelectionMask.full(theta.size, "oracle-fallback")
    return SelectionMask(theta.size, keep, "oracle")


def _risk_rows(selected: np.ndarray, theta_sq: np.ndarray, eps_sq: float) -> np.ndarray:
    # shared by risk() and brute_force_optimal() so both sum identical terms in identical order
    return np.where(selected, eps_sq, theta_sq).sum(axis=-1)


def risk_of_indices(indices: Iterable[int], theta, epsilon: float) -> float:
    """``|S| eps^2 + sum_{i not in S} theta_i^2`` for an arbitrary (possibly empty) index set."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    sel = np.zeros((1, theta.size), dtype=bool)
    idx = list(indices)
    if idx and (min(idx) < 0 or max(idx) >= theta.size):
        raise ValueError("index out of range")
    sel[0, idx] = True
    return float(_risk_rows(sel, theta * theta, float(epsilon) ** 2)[0])


def risk(mask: SelectionMask, theta, epsilon: float) -> float:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if mask.dim != theta.size:
        raise ValueError(f"mask dim {mask.dim} != len(theta) {theta.size}")
    return risk_of_indices(mask.retained.tolist(), theta, epsilon)


def brute_force_optimal(theta, epsilon: float) -> tuple[frozenset[int], float]:
    """Exhaustive search over all 2**p index sets.

    Among minimizers the smallest set wins, then the lowest bitmask.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    p = theta.size
    if p > BRUTE_FORCE_MAX_DIM:
        raise ValueError(f"p={p} exceeds the enumeration guard of {BRUTE_FORCE_MAX_DIM}")
    theta_sq = theta * theta
    eps_sq = float(epsilon) ** 2
    bits = np.arange(p, dtype=np.int64)
    best_risk = math.inf
    best_key: tuple[int, int] | None = None
    for start in range(0, 1 << p, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << p), dtype=np.int64)
        sel = ((masks[:, None] >> bits) & 1).astype(bool)
        r = _risk_rows(sel, theta_sq, eps_sq)
        lo = r.min()
        if lo > best_risk:
            continue
        cand = np.flatnonzero(r == lo)
        sizes = sel[cand].sum(axis=1)
        j = cand[np.lexsort((masks[cand], sizes))[0]]
        key = (int(sel[j].sum()), int(masks[j]))
        if lo < best_risk or key < best_key:
            best_risk, best_key = float(lo), key
    assert best_key is not None
    chosen = frozenset(int(i) for i in range(p) if (best_key[1] >> i) & 1)
    return chosen, best_risk


def select(policy: SelectionPolicy, q, u, theta=None, epsilon: float | None = None) -> SelectionMask:
    p = _scores(u).size
    if isinstance(policy, TopKFraction):
        return topk_select(u, policy.k)
    if isinstance(policy, RDime):
        return rdime_select(q, u)
    if isinstance(policy, Baseline):
        return SelectionMask.full(p, "baseline")
    if isinstance(policy, Oracle):
        if theta is None or epsilon is None:
            raise ValueError("the oracle policy needs the latent signal and noise level")
        return oracle_select(theta, epsilon)
    raise TypeError(f"unknown policy {policy!r}")
