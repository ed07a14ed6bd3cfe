"""Gaussian query/document model and Monte Carlo checks of the DIME estimators.

Queries are ``q = theta + epsilon * z`` and the i-th feedback document is
``d_i = theta + sigma_i * z_i`` with independent standard normal noise.
Monte Carlo runs are split into fixed-size blocks; block ``b`` draws from its
own generator seeded by ``mix_seed(seed, b)``, and block statistics are merged
in block order, so results depend only on ``(params, seed, trials)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dime import Uniform, WeightScheme, WeightVector
from .selection import SelectionMask, oracle_select, rdime_select

MC_BLOCK = 4096
_MASK64 = (1 << 64) - 1


def mix_seed(seed: int, index: int) -> int:
    """SplitMix64 finalizer applied to ``seed`` advanced by ``index`` golden-ratio steps."""
    z = (int(seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True, eq=False)
class NoiseModelParams:
    theta: np.ndarray
    epsilon: float
    sigmas: tuple[float, ...]

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        sigmas = tuple(float(s) for s in self.sigmas)
        if theta.size == 0:
            raise ValueError("theta must be non-empty")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not sigmas or any(not s > 0 for s in sigmas):
            raise ValueError("sigmas must be non-empty and strictly positive")
        if any(b < a for a, b in zip(sigmas, sigmas[1:])):
            raise ValueError("sigmas must be non-decreasing")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def p(self) -> int:
        return self.theta.size

    @property
    def m(self) -> int:
        return len(self.sigmas)


@dataclass(frozen=True, eq=False)
class SyntheticDraw:
    q: np.ndarray
    docs: np.ndarray
    z_query: np.ndarray
    z_docs: np.ndarray
    seed: int


def gen_draw(params: NoiseModelParams, seed: int) -> SyntheticDraw:
    rng = np.random.default_rng(seed)
    z_q = rng.standard_normal(params.p)
    z_d = rng.standard_normal((params.m, params.p))
    s = np.asarray(params.sigmas)[:, None]
    q = params.theta + params.epsilon * z_q
    docs = params.theta + s * z_d
    return SyntheticDraw(q, docs, z_q, z_d, seed)


def _draw_block(params: NoiseModelParams, rng: np.random.Generator, n: int):
    z_q = rng.standard_normal((n, params.p))
    z_d = rng.standard_normal((n, params.m, params.p))
    q = params.theta + params.epsilon * z_q
    docs = params.theta + np.asarray(params.sigmas)[None, :, None] * z_d
    return q, docs


def _blocks(trials: int):
    for b, start in enumerate(range(0, trials, MC_BLOCK)):
        yield b, min(MC_BLOCK, trials - start)


class _Moments:
    """Per-dimension running mean and M2, merged with Chan's update."""

    def __init__(self, p: int):
        self.n = 0
        self.mean = np.zeros(p)
        self.m2 = np.zeros(p)

    def add(self, x: np.ndarray) -> None:
        nb = x.shape[0]
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.n * nb / n)
        self.n = n

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.mean, np.nan)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


@dataclass(frozen=True, eq=False)
class McReport:
    trials: int
    per_dim_mean: np.ndarray
    per_dim_stderr: np.ndarray
    empirical_mse: np.ndarray
    closed_form_mse: np.ndarray | None = None
    mse_stderr: np.ndarray | None = None


def _kernel_dime_batch(q: np.ndarray, docs: np.ndarray, w: np.ndarray) -> np.ndarray:
    return q * np.einsum("m,nmp->np", w, docs)


def mc_unbiasedness(params: NoiseModelParams, trials: int, seed: int = 0,
                    scheme: WeightScheme = Uniform()) -> McReport:
    """Monte Carlo mean of uniform-weight Kernel DIME scores, per dimension."""
    if not isinstance(scheme, Uniform):
        raise ValueError("unbiasedness is only established for uniform weights")
    if trials < 2:
        raise ValueError("need at least two trials")
    w = np.full(params.m, 1.0 / params.m)
    target = params.theta**2
    u_mom, err_mom = _Moments(params.p), _Moments(params.p)
    for b, n in _blocks(trials):
        rng = np.random.default_rng(mix_seed(seed, b))
        q, docs = _draw_block(params, rng, n)
        u = _kernel_dime_batch(q, docs, w)
        u_mom.add(u)
        err_mom.add((u - target) ** 2)
    return McReport(trials, u_mom.mean, u_mom.stderr(), err_mom.mean, None, err_mom.stderr())


def mse_closed_form(theta_j: float, epsilon: float, sigmas: Sequence[float], weights: WeightVector) -> float:
    """``(theta_j^2 + eps^2) * sum(sigma_i^2 w_i^2) + eps^2 theta_j^2`` for fixed weights."""
    s = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    if s.size != len(weights):
        raise ValueError(f"{s.size} sigmas for {len(weights)} weights")
    spread = float(np.sum(s**2 * weights.weights**2))
    t2, e2 = float(theta_j) ** 2, float(epsilon) ** 2
    return (t2 + e2) * spread + e2 * t2


def mc_mse(params: NoiseModelParams, weights: WeightVector, trials: int, seed: int = 0) -> McReport:
    """Empirical per-dimension MSE of Kernel DIME against theta^2 under fixed weights.

    The noise stream depends on ``(params, seed)`` only, so two calls that
    differ only in ``weights`` see identical draws.
    """
    if len(weights) != params.m:
        raise ValueError(f"{len(weights)} weights for {params.m} documents")
    if trials < 2:
        raise ValueError("need at least two trials")
    w = weights.weights
    target = params.theta**2
    u_mom, err_mom = _Moments(params.p), _Moments(params.p)
    for b, n in _blocks(trials):
        rng = np.random.default_rng(mix_seed(seed, b))
        q, docs = _draw_block(params, rng, n)
        u = _kernel_dime_batch(q, docs, w)
        u_mom.add(u)
        err_mom.add((u - target) ** 2)
    closed = np.array([mse_closed_form(t, params.epsilon, params.sigmas, weights) for t in params.theta])
    return McReport(trials, u_mom.mean, u_mom.stderr(), err_mom.mean, closed, err_mom.stderr())


@dataclass(frozen=True)
class RecoveryStats:
    trials: int
    precision: float
    recall: float
    f1: float
    exact_matches: int
    degenerate_trials: int
    mean_retained_fraction: float


def set_scores(estimated: set[int], target: set[int]) -> tuple[float, float, float]:
    hit = len(estimated & target)
    precision = hit / len(estimated) if estimated else 0.0
    recall = hit / len(target) if target else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def recovery_experiment(p: int, support_size: int, theta_magnitude: float, epsilon: float,
                        sigmas, m: int, trials: int, seed: int = 0,
                        selector=rdime_select) -> RecoveryStats:
    """Compare the estimated retained set against the oracle set on fresh draws.

    Each trial draws a random support with random signs, then ``m`` documents
    and a query from the Gaussian model, and applies ``selector`` to the
    uniform-weight Kernel DIME scores. ``sigmas`` may be a scalar shared by all
    documents. Trials where the oracle set falls back to all dimensions are
    counted as degenerate.
    """
    if not 0 <= support_size <= p:
        raise ValueError("support_size must lie in [0, p]")
    if np.ndim(sigmas) == 0:
        sig = (float(sigmas),) * m
    else:
        sig = tuple(float(s) for s in sigmas)
        if len(sig) != m:
            raise ValueError(f"{len(sig)} sigmas for M={m}")
    prec, rec, f1s = [], [], []
    exact = degenerate = 0
    fractions = []
    w = np.full(m, 1.0 / m)
    for t in range(trials):
        rng = np.random.default_rng(mix_seed(seed, t))
        theta = np.zeros(p)
        support = rng.choice(p, size=support_size, replace=False)
        theta[support] = theta_magnitude * rng.choice([-1.0, 1.0], size=support_size)
        draw = gen_draw(NoiseModelParams(theta, epsilon, sig), int(rng.integers(0, 2**63)))
        u = draw.q * (w @ draw.docs)
        est: SelectionMask = selector(draw.q, u)
        oracle = oracle_select(theta, epsilon)
        if oracle.policy_tag.endswith("fallback"):
            degenerate += 1
        a, b = est.as_set(), oracle.as_set()
        exact += a == b
        pr, rc, f = set_scores(a, b)
        prec.append(pr)
        rec.append(rc)
        f1s.append(f)
        fractions.append(est.fraction)
    return RecoveryStats(
        trials,
        float(np.mean(prec)),
        float(np.mean(rec)),
        float(np.mean(f1s)),
        exact,
        degenerate,
        float(np.mean(fractions)),
    )
