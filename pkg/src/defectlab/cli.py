"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import OUT_ENV, load_config
from .dataset import SUITES
from .errors import ConfigError, DefectLabError

logger = logging.getLogger("defectlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise _UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help=f"output root (overrides ${OUT_ENV} and the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="defectlab", description="Class-level metrics, defect mining and defect prediction for Java projects.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine", parents=[common], help="release windows, fix commits and defect labels of a git clone")
    p.add_argument("repo")
    p.add_argument("--project", help="project name (default: repository directory name)")
    p.add_argument("--issues", help="issues.ndjson with id and created per line")

    p = sub.add_parser("metrics", parents=[common], help="metrics.csv for a source tree or a mined project")
    p.add_argument("snapshot", help="source directory, or the project name of a mined project")
    p.add_argument("-o", "--output", help="write the table here instead of stdout (source-tree mode)")

    p = sub.add_parser("dataset", parents=[common], help="join metrics and labels of a project")
    p.add_argument("project")

    p = sub.add_parser("evaluate", parents=[common], help="10-fold cross-validation of every configured model")
    p.add_argument("dataset")
    p.add_argument("--suite", action="append", choices=[*SUITES, "all"], required=True)
    p.add_argument("--project")

    p = sub.add_parser("importance", parents=[common], help="VIF screening and permutation importance")
    p.add_argument("dataset")
    p.add_argument("--project")

    p = sub.add_parser("report", parents=[common], help="summaries, tests and figures over a run directory")
    p.add_argument("run_dir", nargs="?", help="defaults to the output root")

    p = sub.add_parser("pipeline", parents=[common], help="every stage for every configured project, then report")
    p.add_argument("--jobs", type=int, default=1, help="projects processed in parallel")
    return parser


def _dispatch(args) -> None:
    config = load_config(args.config)
    out = config.output_root(args.out)
    if args.command == "mine":
        repo = Path(args.repo)
        target = pipeline.run_mine(repo, args.project or repo.resolve().name, out, config, args.issues)
        print(target)
    elif args.command == "metrics":
        source = Path(args.snapshot)
        if source.is_dir():
            table, diagnostics = pipeline.snapshot_metrics(source)
            for line in diagnostics.splitlines():
                logger.warning(line)
            if args.output:
                pipeline.write_atomic(args.output, table)
            else:
                sys.stdout.write(table)
        else:
            print(pipeline.run_metrics(out, args.snapshot))
    elif args.command == "dataset":
        print(pipeline.run_dataset(out, args.project, config))
    elif args.command == "evaluate":
        suites = list(SUITES) if "all" in args.suite else list(dict.fromkeys(args.suite))
        for suite in suites:
            print(pipeline.run_evaluate(args.dataset, suite, out, config, args.project))
    elif args.command == "importance":
        outcome = pipeline.run_importance(args.dataset, out, config, args.project)
        if outcome.screening.project_excluded:
            logger.warning("project excluded from importance analysis: %s", outcome.reason)
        print(outcome.path)
    elif args.command == "report":
        print(pipeline.run_report(Path(args.run_dir) if args.run_dir else out, config))
    elif args.command == "pipeline":
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        print(pipeline.run_pipeline(config, out, args.jobs))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"defectlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DefectLabError, OSError) as exc:
        print(f"defectlab: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        logger.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
