"""Command-line entry point.

Exit codes: 0 success, 1 a validation suite failed, 2 usage or I/O error.
Set ``RDIME_THREADS`` to process queries on several threads.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2

log = logging.getLogger("rdime")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdime", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="run the oracle and Monte Carlo suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", type=Path, default=Path("validation"))
    v.add_argument("--fault", choices=["flip-noise-sign"], help=argparse.SUPPRESS)

    e = sub.add_parser("experiment", help="compare selection policies on embedding files")
    e.add_argument("--config", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("report", help="aggregate experiment directories into tables and figures")
    r.add_argument("--in", dest="results", type=Path, required=True)
    r.add_argument("--no-figures", action="store_true")

    f = sub.add_parser("fixture", help="write the synthetic retrieval collection and a config")
    f.add_argument("--out", type=Path, required=True)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--queries", type=int, default=50)
    f.add_argument("--docs", type=int, default=5000)
    f.add_argument("--dim", type=int, default=128)
    return parser


def _validate(args) -> int:
    from .validate import run_validate

    outcome = run_validate(args.out, seed=args.seed, fault=args.fault)
    for s in outcome.suites:
        print(f"{'PASS' if s.passed else 'FAIL'}  {s.name:<22} {s.detail}")
    print(f"reports written to {args.out}")
    return EXIT_OK if outcome.passed else EXIT_VALIDATION


def _experiment(args) -> int:
    from .experiment import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load(args.config)
    result = run_experiment(cfg, args.out)
    for name in result.policies:
        ndcg = f"ndcg@{cfg.cutoff}"
        print(f"{name:<12} {ndcg}={result.mean(name, ndcg):.4f}  ap={result.mean(name, 'ap'):.4f}  "
              f"retained={result.mean_fraction(name):.3f}")
    print(f"outputs written to {args.out}")
    return EXIT_OK


def _report(args) -> int:
    from .report import run_report

    rep = run_report(args.results, figures=not args.no_figures)
    print(rep.text, end="")
    for fig in rep.figures:
        print(f"figure: {fig}")
    return EXIT_OK


def _fixture(args) -> int:
    from .fixture import make_retrieval_fixture, write_fixture

    fx = make_retrieval_fixture(n_queries=args.queries, n_docs=args.docs, p=args.dim, seed=args.seed)
    path = write_fixture(fx, args.out)
    print(f"config written to {path}")
    return EXIT_OK


COMMANDS = {"validate": _validate, "experiment": _experiment, "report": _report, "fixture": _fixture}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, LookupError) as exc:
        print(f"rdime {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
