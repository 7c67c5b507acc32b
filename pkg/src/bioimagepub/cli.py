"""Command-line entry point wiring the pipeline into `bioimagepub
inspect|publish|validate`, with stable exit codes per failure class."""

import argparse
import logging
import os
import sys

from . import pipeline
from .errors import (
    BioimagePubError,
    BudgetBlocked,
    ConfigInvalid,
    ConversionError,
    HubError,
    MetadataError,
    SourceError,
)

#: documented CLI exit codes; 0 = success, 1 = validation violations
EXIT_CODES = (
    (ConfigInvalid, 2),
    (SourceError, 3),
    (ConversionError, 4),
    (MetadataError, 5),
    (HubError, 6),
    (BudgetBlocked, 7),
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bioimagepub",
        description="Convert bioimaging datasets and publish them to a hub.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="pipeline config JSON file")
        p.add_argument("--verbose", action="store_true", help="enable debug logging")

    p_inspect = sub.add_parser(
        "inspect", help="summarize the source without fetching image contents"
    )
    common(p_inspect)

    p_publish = sub.add_parser(
        "publish", help="convert, document and upload the dataset"
    )
    common(p_publish)
    p_publish.add_argument(
        "--dry-run", action="store_true",
        help="stop after materializing the local repo layout",
    )
    p_publish.add_argument(
        "--ack-large-dataset", action="store_true",
        help="proceed past the 1 TB size budget",
    )
    p_publish.add_argument(
        "--workers", type=int, default=4,
        help="conversion and upload parallelism (default 4)",
    )
    p_publish.add_argument(
        "--answers", help="key=value file answering dataset card prompts"
    )

    p_validate = sub.add_parser(
        "validate", help="re-check a previously materialized workdir"
    )
    common(p_validate)
    return parser


def _exit_code_for(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    token = os.environ.get("BIOIMAGEPUB_TOKEN")
    try:
        config = pipeline.PipelineConfig.from_file(args.config, token=token)
        if args.command == "inspect":
            for line in pipeline.run_inspect(config).lines():
                print(line)
        elif args.command == "publish":
            report = pipeline.run_publish(
                config,
                dry_run=args.dry_run,
                workers=args.workers,
                answers_path=args.answers,
                acknowledge_large=args.ack_large_dataset,
            )
            for line in report.lines():
                print(line)
        else:
            violations = pipeline.run_validate(config.workdir)
            for violation in violations:
                print(f"violation: {violation}")
            if violations:
                return 1
            print("workdir layout is sound")
        return 0
    except BioimagePubError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    raise SystemExit(main())
