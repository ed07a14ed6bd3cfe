"""Oracle and Monte Carlo suites backing the ``validate`` subcommand.

Each suite returns a :class:`SuiteResult` and the rows of its CSV artifact.
Everything is a deterministic function of the master seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dime import WeightVector, inverse_variance_weights
from .selection import (
    SelectionMask,
    brute_force_optimal,
    estimate_noise,
    oracle_set,
    rdime_select,
    risk_of_indices,
    threshold_select,
    topk_count,
    topk_select,
)
from .synthetic import NoiseModelParams, mc_mse, mc_unbiasedness, mix_seed, recovery_experiment

FAULTS = ("flip-noise-sign",)

Selector = Callable[[np.ndarray, np.ndarray], SelectionMask]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    failures: int
    detail: str


@dataclass
class ValidationOutcome:
    suites: list[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)


def _flipped_selector(q, u) -> SelectionMask:
    raw = -estimate_noise(q, u).epsilon_sq_raw
    return threshold_select(u, max(raw, 0.0), "rdime")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def oracle_risk_suite(seed: int, instances: int = 200):
    """Oracle set vs exhaustive subset search on random Gaussian signals."""
    rows, bad = [], 0
    for i in range(instances):
        rng = np.random.default_rng(mix_seed(seed, 1000 + i))
        p = int(rng.integers(1, 13))
        theta = rng.normal(0.0, 2.0, size=p)
        eps = float(rng.uniform(0.1, 2.0))
        # pre-fallback set: an empty optimum is legitimate here
        r_oracle = risk_of_indices(oracle_set(theta, eps).tolist(), theta, eps)
        _, r_brute = brute_force_optimal(theta, eps)
        ok = r_oracle == r_brute
        bad += not ok
        rows.append([i, p, eps, r_oracle, r_brute, ok])
    header = ["instance", "p", "epsilon", "oracle_risk", "brute_force_risk", "match"]
    res = SuiteResult("oracle_risk", bad == 0, instances, bad, f"{instances - bad}/{instances} exact matches")
    return res, header, rows


def unbiasedness_suite(seed: int, trials: int = 100_000, p: int = 16, ms=(2, 8)):
    """Uniform-weight Kernel DIME mean against theta^2, 4-stderr band per dimension."""
    rows, failures, details = [], 0, []
    theta = np.random.default_rng(mix_seed(seed, 2000)).normal(0.0, 1.0, size=p)
    for m in ms:
        params = NoiseModelParams(theta, 0.5, tuple(np.linspace(0.3, 1.0, m)))
        within = 0
        for attempt in range(2):
            rep = mc_unbiasedness(params, trials, mix_seed(seed, 2100 + 10 * m + attempt))
            z = (rep.per_dim_mean - theta**2) / rep.per_dim_stderr
            within = int(np.sum(np.abs(z) <= 4))
            if within >= p - 1:
                break
        ok = within >= p - 1
        failures += not ok
        details.append(f"M={m}: {within}/{p}")
        for j in range(p):
            rows.append([m, attempt, j, theta[j] ** 2, rep.per_dim_mean[j], rep.per_dim_stderr[j], z[j], abs(z[j]) <= 4])
    header = ["M", "rerun", "dim", "theta_sq", "mean", "stderr", "z", "within_4se"]
    return SuiteResult("unbiasedness", failures == 0, len(ms), failures, "; ".join(details)), header, rows


MSE_CONFIGS = (
    ("uniform-equal", (1.0,), 0.5, (1.0, 1.0), "uniform"),
    ("ivw-hetero", (0.5, -2.0), 0.3, (0.5, 1.0, 2.0), "inverse"),
    ("uniform-hetero", (1.5,), 1.0, (1.0, 2.0, 4.0), "uniform"),
)


def _weights(kind: str, sigmas) -> WeightVector:
    return inverse_variance_weights(sigmas) if kind == "inverse" else WeightVector.uniform(len(sigmas))


def mse_suite(seed: int, trials: int = 200_000):
    """Empirical MSE against the fixed-weight closed form, plus the large-M trend."""
    rows, checks, bad = [], 0, 0
    for c, (name, theta, eps, sigmas, kind) in enumerate(MSE_CONFIGS):
        params = NoiseModelParams(np.array(theta), eps, sigmas)
        rep = mc_mse(params, _weights(kind, sigmas), trials, mix_seed(seed, 3000 + c))
        for j in range(params.p):
            tol = max(0.03 * rep.closed_form_mse[j], 5 * rep.mse_stderr[j])
            ok = abs(rep.empirical_mse[j] - rep.closed_form_mse[j]) <= tol
            checks += 1
            bad += not ok
            rows.append([name, j, theta[j], eps, " ".join(map(str, sigmas)), kind,
                         rep.empirical_mse[j], rep.mse_stderr[j], rep.closed_form_mse[j], tol, ok])
    trend = []
    for m in (1, 2, 4):
        params = NoiseModelParams(np.array([1.0]), 0.5, (1.0,) * m)
        rep = mc_mse(params, WeightVector.uniform(m), trials, mix_seed(seed, 3100 + m))
        trend.append(float(rep.empirical_mse[0]))
        rows.append([f"trend-M{m}", 0, 1.0, 0.5, " ".join(["1.0"] * m), "uniform",
                     rep.empirical_mse[0], rep.mse_stderr[0], rep.closed_form_mse[0], "", ""])
    decreasing = trend[0] > trend[1] > trend[2] > 0.25
    checks += 1
    bad += not decreasing
    header = ["config", "dim", "theta_j", "epsilon", "sigmas", "weights", "empirical_mse",
              "mse_stderr", "closed_form_mse", "tolerance", "pass"]
    detail = f"{checks - bad}/{checks} checks; uniform MSE for M=1,2,4: " + ", ".join(f"{t:.4f}" for t in trend)
    return SuiteResult("mse_closed_form", bad == 0, checks, bad, detail), header, rows


def optimal_weights_suite(seed: int, reps: int = 5, trials: int = 20_000, simplex_points: int = 1000):
    """Inverse-variance weights beat uniform on paired draws and minimize sum(sigma^2 w^2)."""
    sigmas = (1.0, 2.0, 4.0)
    theta = np.array([1.0, 0.5, -2.0])
    w_star = inverse_variance_weights(sigmas)
    w_unif = WeightVector.uniform(3)
    rows, bad = [], 0
    for r in range(reps):
        params = NoiseModelParams(theta, 0.5, sigmas)
        s = mix_seed(seed, 4000 + r)
        star = mc_mse(params, w_star, trials, s)
        unif = mc_mse(params, w_unif, trials, s)
        ok = bool(np.all(star.empirical_mse < unif.empirical_mse))
        bad += not ok
        for j in range(theta.size):
            rows.append(["paired-mse", r, j, star.empirical_mse[j], unif.empirical_mse[j], ok])
    sig2 = np.square(sigmas)
    f_star = float(np.sum(sig2 * w_star.weights**2))
    rng = np.random.default_rng(mix_seed(seed, 4100))
    pts = rng.dirichlet(np.ones(3), size=simplex_points)
    f_pts = (sig2 * pts**2).sum(axis=1)
    simplex_ok = bool(np.all(f_pts >= f_star))
    bad += not simplex_ok
    rows.append(["simplex-min", simplex_points, "", f_star, float(f_pts.min()), simplex_ok])
    header = ["check", "rep", "dim", "optimal", "alternative", "pass"]
    detail = f"paired wins in {reps - (bad - (not simplex_ok))}/{reps} reps; simplex minimum holds: {simplex_ok}"
    return SuiteResult("optimal_weights", bad == 0, reps + 1, bad, detail), header, rows


# Regime where the noise estimate concentrates: sqrt(sum theta^2) is small
# next to epsilon * p, and every support coordinate dominates epsilon.
RECOVERY_REGIME = dict(p=256, support_size=8, theta_magnitude=2.0, epsilon=0.25, sigmas=0.01, m=4, trials=100)


def recovery_suite(seed: int, selector: Selector = rdime_select):
    stats = recovery_experiment(**RECOVERY_REGIME, seed=mix_seed(seed, 5000), selector=selector)
    ok = stats.exact_matches == stats.trials
    header = ["p", "support", "magnitude", "epsilon", "sigma", "M", "trials", "exact", "precision",
              "recall", "f1", "degenerate", "mean_retained_fraction"]
    g = RECOVERY_REGIME
    row = [g["p"], g["support_size"], g["theta_magnitude"], g["epsilon"], g["sigmas"], g["m"], stats.trials,
           stats.exact_matches, stats.precision, stats.recall, stats.f1, stats.degenerate_trials,
           stats.mean_retained_fraction]
    detail = f"{stats.exact_matches}/{stats.trials} exact, F1={stats.f1:.4f}"
    return SuiteResult("threshold_recovery", ok, stats.trials, stats.trials - stats.exact_matches, detail), header, [row]


def selection_contracts_suite(seed: int, selector: Selector = rdime_select, n: int = 100):
    rows, bad = [], 0
    for k, expected in ((0.4, 307), (0.6, 460), (0.8, 614)):
        size = topk_select(np.arange(768.0), k).size
        ok = size == expected == topk_count(k, 768)
        bad += not ok
        rows.append(["topk-size", k, size, expected, ok])
    rng = np.random.default_rng(mix_seed(seed, 6000))
    scale_bad = ident_bad = 0
    for i in range(n):
        p = int(rng.integers(1, 200))
        u = rng.normal(size=p)
        k = float(rng.uniform(0.01, 1.0))
        c = float(rng.uniform(1e-3, 1e3))
        scale_bad += not np.array_equal(topk_select(u, k).retained, topk_select(c * u, k).retained)
        q = rng.normal(size=p)
        uu = q * (q + rng.normal(scale=0.5, size=p))
        mask = selector(q, uu)
        expect = np.flatnonzero(uu > estimate_noise(q, uu).epsilon_sq_clamped)
        if expect.size:
            ident_bad += not np.array_equal(mask.retained, expect)
    rows.append(["topk-scale-invariance", n, n - scale_bad, n, scale_bad == 0])
    rows.append(["rdime-set-identity", n, n - ident_bad, n, ident_bad == 0])
    bad += (scale_bad > 0) + (ident_bad > 0)
    header = ["check", "param", "observed", "expected", "pass"]
    return SuiteResult("selection_contracts", bad == 0, 5, bad, f"{5 - bad}/5 checks"), header, rows


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def run_validate(out_dir: str | Path, seed: int = 0, fault: str | None = None) -> ValidationOutcome:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    selector = _flipped_selector if fault == "flip-noise-sign" else rdime_select
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suites = [
        ("oracle_risk", lambda: oracle_risk_suite(seed)),
        ("selection_contracts", lambda: selection_contracts_suite(seed, selector)),
        ("threshold_recovery", lambda: recovery_suite(seed, selector)),
        ("unbiasedness", lambda: unbiasedness_suite(seed)),
        ("mse_closed_form", lambda: mse_suite(seed)),
        ("optimal_weights", lambda: optimal_weights_suite(seed)),
    ]
    results = []
    for name, fn in suites:
        res, header, rows = fn()
        _write_csv(out / f"{name}.csv", header, rows)
        results.append(res)
    _write_csv(
        out / "summary.csv",
        ["suite", "passed", "checks", "failures", "detail"],
        [[r.name, r.passed, r.checks, r.failures, r.detail] for r in results],
    )
    return ValidationOutcome(results)
