"""End-to-end retrieval comparison of selection policies on user-supplied embeddings."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dime import SingleDoc, kernel_dime, kernel_weights, scheme_from_config
from .evaluation import (
    MetricReport,
    SigTestResult,
    apply_holm,
    compare,
    evaluate,
    metric_name,
    retained_fraction_summary,
)
from .retrieval import (
    ScoringConfig,
    Similarity,
    first_stage_topM,
    parallel_map,
    pseudo_relevant_from_run,
    rank_all,
)
from .selection import Oracle, RDime, SelectionMask, TopKFraction, parse_policy, select
from .store import load_embeddings, load_qrels, read_run, write_run

log = logging.getLogger(__name__)

ESTIMATOR_LABELS = {"prf": "u_PRF", "uniform": "u_PRF", "swc": "u_SWC", "softmax": "u_SWC", "llm": "u_LLM"}
METRICS = ("ndcg", "ap")


class ConfigError(ValueError):
    pass


def estimator_label(name: str) -> str:
    name = name.lower()
    return ESTIMATOR_LABELS.get(name, f"u_{name.upper()}")


def canonical_policies(policies) -> list[str]:
    """Configured policies in canonical spelling, with the baseline appended."""
    names = []
    for p in policies:
        name = parse_policy(p).name
        if name not in names:
            names.append(name)
    if "baseline" not in names:
        names.append("baseline")
    return names


@dataclass(frozen=True)
class ExperimentConfig:
    queries: str
    corpus: str
    qrels: str
    estimator: dict = field(default_factory=lambda: {"name": "prf"})
    M: int = 2
    policies: tuple[str, ...] = ("topk:0.4", "topk:0.6", "topk:0.8", "rdime")
    first_stage_run: str | None = None
    synthetic_docs: str | None = None
    cutoff: int = 10
    top_n: int = 1000
    seed: int = 0
    alpha: float = 0.05
    model: str = "model"
    collection: str = "collection"
    similarity: str = "dot"
    t_alternative: str = "two-sided"
    wilcoxon_alternative: str = "greater"

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: str | Path = ".") -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in ("queries", "corpus", "qrels") if k not in data]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        base = Path(base_dir)
        values = dict(data)
        for key in ("queries", "corpus", "qrels", "first_stage_run", "synthetic_docs"):
            if values.get(key) is not None:
                values[key] = str((base / values[key]).resolve())
        if "policies" in values:
            values["policies"] = tuple(values["policies"])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
        return cls.from_dict(data, path.parent)

    def validate(self) -> None:
        for key in ("queries", "corpus", "qrels", "first_stage_run", "synthetic_docs"):
            value = getattr(self, key)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{key}: file not found: {value}")
        if not isinstance(self.M, int) or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.cutoff < 1 or self.top_n < 1:
            raise ConfigError("cutoff and top_n must be positive")
        if not isinstance(self.estimator, dict) or "name" not in self.estimator:
            raise ConfigError('estimator must be an object with a "name" field')
        name = str(self.estimator["name"]).lower()
        if name == "llm" and self.synthetic_docs is None:
            raise ConfigError("the llm estimator needs synthetic_docs")
        try:
            scheme_from_config(name, self.estimator_params, self.M)
            parsed = [parse_policy(p) for p in self.policies]
            Similarity(self.similarity)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if any(isinstance(p, Oracle) for p in parsed):
            raise ConfigError("the oracle policy needs the latent signal and is only available in the synthetic lab")
        if not any(isinstance(p, RDime) for p in parsed):
            raise ConfigError("policies must include rdime")
        if not any(isinstance(p, TopKFraction) for p in parsed):
            raise ConfigError("policies must include at least one topk:<k>")

    @property
    def estimator_name(self) -> str:
        return str(self.estimator["name"]).lower()

    @property
    def estimator_params(self) -> dict:
        return {k: v for k, v in self.estimator.items() if k != "name"}

    @property
    def estimator_label(self) -> str:
        return estimator_label(self.estimator_name)

    def policy_names(self) -> list[str]:
        return canonical_policies(self.policies)


@dataclass
class QueryOutcome:
    query_id: str
    scores: np.ndarray
    masks: dict[str, SelectionMask]
    runs: dict


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    query_ids: list[str]
    policies: list[str]
    masks: dict[str, list[SelectionMask]]
    runs: dict[str, list]
    metrics: dict[tuple[str, str], MetricReport]
    significance: list[tuple[str, SigTestResult]]
    best_topk: dict[str, str]

    def mean(self, policy: str, metric: str) -> float:
        return self.metrics[(policy, metric)].mean

    def mean_fraction(self, policy: str) -> float:
        return float(np.mean([m.fraction for m in self.masks[policy]]))

    def delta_pct(self, metric: str) -> float:
        best = self.mean(self.best_topk[metric], metric)
        return delta_pct(self.mean("rdime", metric), best)


def delta_pct(rdime_value: float, best_topk_value: float) -> float:
    if best_topk_value == 0:
        return 0.0 if rdime_value == 0 else float("inf")
    return 100.0 * (rdime_value - best_topk_value) / best_topk_value


def policy_filename(policy: str) -> str:
    return policy.replace(":", "-") + ".run"


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    queries = load_embeddings(config.queries)
    corpus = load_embeddings(config.corpus)
    qrels = load_qrels(config.qrels)
    if queries.dim != corpus.dim:
        raise ConfigError(f"query dim {queries.dim} != corpus dim {corpus.dim}")
    synthetic = load_embeddings(config.synthetic_docs) if config.synthetic_docs else None
    if synthetic is not None and synthetic.dim != corpus.dim:
        raise ConfigError(f"synthetic-document dim {synthetic.dim} != corpus dim {corpus.dim}")
    first_stage = None
    if config.first_stage_run:
        first_stage = {r.query_id: r for r in read_run(config.first_stage_run, strict=False)}

    policy_names = config.policy_names()
    policies = {name: parse_policy(name) for name in policy_names}
    scheme = scheme_from_config(config.estimator_name, config.estimator_params, config.M)
    scoring = ScoringConfig(Similarity(config.similarity), config.top_n)

    def one_query(i: int) -> QueryOutcome:
        qid = queries.ids[i]
        q = queries.rows[i].astype(np.float64)
        if synthetic is not None and config.estimator_name in ("llm", "single"):
            if qid not in synthetic.index:
                raise ConfigError(f"synthetic_docs has no embedding for query {qid!r}")
            docs = synthetic.vector(qid)[None, :]
            w = kernel_weights(q, docs, SingleDoc())
        else:
            if first_stage is not None:
                if qid not in first_stage:
                    raise ConfigError(f"first-stage run has no ranking for query {qid!r}")
                fb = pseudo_relevant_from_run(first_stage[qid], corpus, config.M)
            else:
                fb = first_stage_topM(q, corpus, config.M)
            docs = fb.vectors
            w = kernel_weights(q, docs, scheme)
        u = kernel_dime(q, docs, w, qid, config.estimator_label)
        masks, runs = {}, {}
        for name, policy in policies.items():
            mask = select(policy, q, u)
            masks[name] = mask
            runs[name] = rank_all(q, corpus, mask, scoring, qid, name)
        return QueryOutcome(qid, u.scores, masks, runs)

    outcomes = parallel_map(one_query, list(range(queries.n)))
    qids = [o.query_id for o in outcomes]
    masks = {name: [o.masks[name] for o in outcomes] for name in policy_names}
    runs = {name: [o.runs[name] for o in outcomes] for name in policy_names}
    metrics = {
        (name, metric_name(m, config.cutoff)): evaluate(runs[name], qrels, m, config.cutoff)
        for name in policy_names
        for m in METRICS
    }

    topk_names = [n for n in policy_names if isinstance(policies[n], TopKFraction)]
    significance: list[tuple[str, SigTestResult]] = []
    best_topk: dict[str, str] = {}
    for m in METRICS:
        mname = metric_name(m, config.cutoff)
        best = max(topk_names, key=lambda n: metrics[(n, mname)].mean)
        best_topk[mname] = best
        x = metrics[("rdime", mname)].values(qids)
        comparisons = [n for n in policy_names if n != "rdime"]
        tests = []
        labels = []
        for other in comparisons + ["best-topk"]:
            target = best if other == "best-topk" else other
            y = metrics[(target, mname)].values(qids)
            tests.append(compare(x, y, config.t_alternative, config.wilcoxon_alternative))
            labels.append(f"{mname}:rdime-vs-{other}")
        significance.extend(zip(labels, apply_holm(tests, config.alpha)))

    result = ExperimentResult(config, qids, policy_names, masks, runs, metrics, significance, best_topk)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    cfg = result.config
    snapshot = asdict(cfg)
    snapshot["policies"] = list(cfg.policies)
    (out / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    for name in result.policies:
        write_run(out / "runs" / policy_filename(name), result.runs[name], name)

    rows = []
    for (policy, mname), report in result.metrics.items():
        rows.extend([policy, mname, q, _fmt(report.per_query[q])] for q in result.query_ids)
        rows.append([policy, mname, "all", _fmt(report.mean)])
    _write_csv(out / "metrics.csv", ["policy", "metric", "query_id", "value"], rows)

    _write_csv(
        out / "significance.csv",
        ["comparison", "test", "statistic", "p", "reject"],
        [
            [label, r.test_name, _fmt(r.statistic), _fmt(r.p_value), str(r.corrected_reject).lower()]
            for label, r in result.significance
        ],
    )

    _write_csv(
        out / "masks.csv",
        ["policy", "query_id", "retained", "dim", "fraction"],
        [
            [name, q, m.size, m.dim, _fmt(m.fraction)]
            for name in result.policies
            for q, m in zip(result.query_ids, result.masks[name])
        ],
    )

    summary_rows = []
    for name in result.policies:
        s = retained_fraction_summary(result.masks[name])
        summary_rows.append(
            [name, len(s.fractions)] + [_fmt(v) for v in (s.mean, s.median, s.q1, s.q3, s.min, s.max)]
        )
    _write_csv(out / "retained.csv", ["policy", "n", "mean", "median", "q1", "q3", "min", "max"], summary_rows)

    ndcg = metric_name("ndcg", cfg.cutoff)
    _write_csv(
        out / "results.csv",
        ["model", "estimator", "collection", "policy", ndcg, "retained_fraction"],
        [
            [cfg.model, cfg.estimator_label, cfg.collection, name,
             f"{result.mean(name, ndcg):.3f}", f"{result.mean_fraction(name):.2f}"]
            for name in result.policies
        ],
    )

    _write_csv(
        out / "delta.csv",
        ["metric", "best_topk", "best_topk_value", "rdime_value", "delta_pct"],
        [
            [m, result.best_topk[m], _fmt(result.mean(result.best_topk[m], m)),
             _fmt(result.mean("rdime", m)), f"{result.delta_pct(m):.2f}"]
            for m in result.best_topk
        ],
    )
    log.info("wrote experiment outputs to %s", out)
