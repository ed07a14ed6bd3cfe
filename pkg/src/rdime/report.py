"""Aggregate experiment directories into comparison tables and figures."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from . import plotting
from .experiment import canonical_policies, delta_pct, estimator_label, metric_name


class ReportError(ValueError):
    pass


@dataclass
class ExperimentSummary:
    path: Path
    model: str
    collection: str
    estimator: str
    policies: list[str]
    means: dict[tuple[str, str], float]
    fractions: dict[str, list[float]]
    cutoff: int


@dataclass
class ReportRow:
    model: str
    collection: str
    estimator: str
    metric: str
    topk: dict[str, float]
    rdime: float
    rdime_fraction: float
    baseline: float | None
    best_topk: str
    delta_pct: float


@dataclass
class Report:
    rows: list[ReportRow]
    text: str
    csv_path: Path
    text_path: Path
    figures: list[Path]


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def find_experiments(results_dir: Path) -> list[Path]:
    found = [p.parent for p in sorted(results_dir.rglob("metrics.csv")) if (p.parent / "config.json").is_file()]
    return sorted(set(found))


def load_summary(exp_dir: Path) -> ExperimentSummary:
    cfg = json.loads((exp_dir / "config.json").read_text(encoding="utf-8"))
    policies = canonical_policies(cfg.get("policies", []))
    means: dict[tuple[str, str], float] = {}
    for row in _read_csv(exp_dir / "metrics.csv"):
        if row["query_id"] == "all":
            means[(row["policy"], row["metric"])] = float(row["value"])
    fractions: dict[str, list[float]] = defaultdict(list)
    masks = exp_dir / "masks.csv"
    if masks.is_file():
        for row in _read_csv(masks):
            fractions[row["policy"]].append(float(row["fraction"]))
    present = {p for p, _ in means}
    for pol in policies:
        if pol not in present:
            raise ReportError(f"{exp_dir}: no metric rows for policy {pol!r}")
    if not any(p.startswith("topk:") for p in present):
        raise ReportError(f"{exp_dir}: no Top-k policy rows (expected at least one topk:<k>)")
    if "rdime" not in present:
        raise ReportError(f"{exp_dir}: no metric rows for policy 'rdime'")
    name = str(cfg.get("estimator", {}).get("name", "?"))
    return ExperimentSummary(
        exp_dir,
        str(cfg.get("model", "model")),
        str(cfg.get("collection", "collection")),
        estimator_label(name),
        policies,
        means,
        dict(fractions),
        int(cfg.get("cutoff", 10)),
    )


def _rows(summary: ExperimentSummary) -> list[ReportRow]:
    rows = []
    metrics = sorted({m for _, m in summary.means}, key=lambda m: (not m.startswith("ndcg"), m))
    for metric in metrics:
        topk = {
            p: summary.means[(p, metric)]
            for p in sorted((p for p, m in summary.means if m == metric and p.startswith("topk:")),
                            key=lambda p: float(p[5:]))
        }
        best = max(topk, key=topk.get)
        rd = summary.means[("rdime", metric)]
        frac = summary.fractions.get("rdime", [])
        rows.append(ReportRow(
            summary.model, summary.collection, summary.estimator, metric, topk, rd,
            sum(frac) / len(frac) if frac else float("nan"),
            summary.means.get(("baseline", metric)), best, delta_pct(rd, topk[best]),
        ))
    return rows


def _format_text(rows: list[ReportRow], topk_cols: list[str]) -> str:
    blocks = []
    groups: dict[tuple[str, str], list[ReportRow]] = defaultdict(list)
    for r in rows:
        groups[(r.model, r.collection)].append(r)
    header = ["estimator", "metric"] + topk_cols + ["RDIME (frac)", "baseline", "delta%"]
    for (model, coll), grp in groups.items():
        table = [header]
        for r in grp:
            cells = [r.estimator, r.metric]
            for c in topk_cols:
                v = r.topk.get(c)
                cell = "-" if v is None else f"{v:.3f}"
                cells.append(cell + ("*" if c == r.best_topk else ""))
            cells.append(f"{r.rdime:.3f} ({r.rdime_fraction:.2f})")
            cells.append("-" if r.baseline is None else f"{r.baseline:.3f}")
            cells.append(f"{r.delta_pct:.2f}")
            table.append(cells)
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = [f"{model} / {coll}"]
        for k, row in enumerate(table):
            lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        blocks.append("\n".join(lines))
    note = "* best Top-k for the row; delta% = 100 * (RDIME - best Top-k) / best Top-k"
    return "\n\n".join(blocks) + "\n\n" + note + "\n"


def _figures(summaries: list[ExperimentSummary], out: Path) -> list[Path]:
    paths = []
    groups: dict[tuple[str, str], list[ExperimentSummary]] = defaultdict(list)
    for s in summaries:
        groups[(s.model, s.collection)].append(s)
    for (model, coll), grp in groups.items():
        fig, (ax_bar, ax_box) = plotting.new_figure(9.0, 3.4, ncols=2)
        ndcg = metric_name("ndcg", grp[0].cutoff)
        values = {
            s.estimator: {p: s.means[(p, ndcg)] for p in s.policies if (p, ndcg) in s.means}
            for s in grp
        }
        plotting.policy_bars(ax_bar, values, ndcg, f"{model} / {coll}")
        fractions = {s.estimator: s.fractions.get("rdime", []) for s in grp if s.fractions.get("rdime")}
        if fractions:
            plotting.retained_boxplot(ax_box, fractions, "RDIME retained dimensions per query")
        safe = f"{model}_{coll}".replace("/", "_").replace(" ", "_")
        paths.append(plotting.save(fig, out / "figures" / f"{safe}.png"))
    return paths


def run_report(results_dir: str | Path, figures: bool = True) -> Report:
    root = Path(results_dir)
    if not root.is_dir():
        raise ReportError(f"results directory not found: {root}")
    exps = find_experiments(root)
    if not exps:
        raise ReportError(f"{root}: no experiment results (metrics.csv + config.json) found")
    summaries = [load_summary(e) for e in exps]
    rows = [r for s in summaries for r in _rows(s)]
    topk_cols = sorted({c for r in rows for c in r.topk}, key=lambda p: float(p[5:]))

    csv_path = root / "report.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "collection", "estimator", "metric"] + topk_cols
                   + ["rdime", "rdime_fraction", "baseline", "best_topk", "delta_pct"])
        for r in rows:
            w.writerow([r.model, r.collection, r.estimator, r.metric]
                       + [repr(r.topk[c]) if c in r.topk else "" for c in topk_cols]
                       + [repr(r.rdime), repr(r.rdime_fraction),
                          "" if r.baseline is None else repr(r.baseline), r.best_topk, f"{r.delta_pct:.2f}"])
    text = _format_text(rows, topk_cols)
    text_path = root / "report.txt"
    text_path.write_text(text, encoding="utf-8")
    figs = _figures(summaries, root) if figures else []
    return Report(rows, text, csv_path, text_path, figs)
