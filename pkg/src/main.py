#!/usr/bin/env python

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from drn.data import SplitSpec
from drn.errors import ArgumentError, DrnError
from handlers.handler_factory import HandlerFactory

logger = logging.getLogger("drn")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2


class CliParser(argparse.ArgumentParser):
    """Usage errors are exit code 1 like every other input problem (argparse would use 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--debug", action="store_true", help="Log a summary of the request after the chain runs.")

    parser = CliParser(description="Tensor normal priors for multi-task networks: fit, train, evaluate, export.")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("tnd-fit", parents=[common], help="Fit a tensor normal distribution to samples.")
    fit.add_argument("samples", help='JSON file {"dims": [d1, d2, d3], "samples": [[...], ...]}.')
    fit.add_argument("--out", help="Write the fit JSON here instead of standard output.")

    train = commands.add_parser("train", parents=[common], help="Train a multi-task network from a config.")
    train.add_argument("--config", required=True, help="Experiment config JSON.")
    train.add_argument("--seed", type=int, help="Override the training, split and synthetic data seeds.")
    train.add_argument("--out", help="Output directory (default: DRN_OUTPUT_DIR or ./runs).")
    train.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="JSONPATH=VALUE",
        help="Override a config field, e.g. --set '$.train.epochs=5'. Repeatable.",
    )
    train.add_argument("--timings", action="store_true", help="Add wall-clock columns to report.csv.")

    evaluate = commands.add_parser("eval", parents=[common], help="Per-task accuracy of a trained model.")
    evaluate.add_argument("--model", required=True, help="model.json or the run directory holding it.")
    evaluate.add_argument("--data", required=True, help="Dataset manifest JSON.")
    evaluate.add_argument("--split-fraction", type=float, help="Per-task training fraction to hold out.")
    evaluate.add_argument("--split-size", type=int, help="Per-task training count to hold out.")
    evaluate.add_argument("--split-seed", type=int, default=0)
    evaluate.add_argument("--stratified", action="store_true")
    evaluate.add_argument("--folds", type=int, help="Use a k-fold partition instead of a split.")
    evaluate.add_argument("--fold", type=int, help="Validation fold index, 0-based (with --folds).")
    evaluate.add_argument("--subset", choices=["test", "train"], default="test")

    export = commands.add_parser(
        "export-relationship", parents=[common], help="Emit a learned task correlation matrix."
    )
    export.add_argument("--model-dir", required=True, help="Run directory written by train.")
    export.add_argument("--layer", required=True, help="Layer id, or 'shared'.")
    export.add_argument("--format", choices=["json", "csv"], default="json")
    export.add_argument("--out", help="Write here instead of standard output.")

    synthesize = commands.add_parser(
        "synthesize", parents=[common], help="Write the config's synthetic dataset as CSV files and a manifest."
    )
    synthesize.add_argument("--config", required=True)
    synthesize.add_argument("--seed", type=int)
    synthesize.add_argument("--set", dest="overrides", action="append", default=[], metavar="JSONPATH=VALUE")
    synthesize.add_argument("--out", required=True, help="Output directory.")

    return parser


def construct_chain(args):
    """Returns (head of the handler chain, initial request) for the parsed command."""

    if args.command == "tnd-fit":
        names = ["TensorSamplesReaderHandler", "FlipFlopFitHandler"]
        names.append("LocalFileWriterHandler" if args.out else "StdoutWriterHandler")
        request = {"path": args.samples, "write_file_path": args.out}

    elif args.command == "train":
        names = [
            "ExperimentConfigReaderHandler",
            "DatasetReaderHandler",
            "DatasetSplitHandler",
            "DrnTrainerHandler",
            "ModelCheckpointWriterHandler",
            "TrainReportWriterHandler",
            "RelationshipWriterHandler",
        ]
        request = {
            "config_path": args.config,
            "seed": args.seed,
            "overrides": args.overrides,
            "output_dir": args.out or os.getenv("DRN_OUTPUT_DIR", "./runs"),
            "timings": args.timings,
        }

    elif args.command == "eval":
        names = [
            "CheckpointReaderHandler",
            "DatasetReaderHandler",
            "DatasetSplitHandler",
            "EvaluationHandler",
            "StdoutWriterHandler",
        ]
        request = {"model_path": args.model, "manifest": args.data, "subset": args.subset}
        if args.folds is not None or args.fold is not None:
            if args.folds is None or args.fold is None:
                raise ArgumentError("--folds and --fold go together")
            request.update({"fold": (args.fold, args.folds), "fold_seed": args.split_seed})
        elif args.split_fraction is not None or args.split_size is not None:
            request["split"] = SplitSpec(args.split_fraction, args.split_size, args.stratified, args.split_seed)

    elif args.command == "export-relationship":
        names = ["RelationshipReaderHandler", "RelationshipExportHandler"]
        names.append("LocalFileWriterHandler" if args.out else "StdoutWriterHandler")
        request = {"model_dir": args.model_dir, "layer": args.layer, "format": args.format, "write_file_path": args.out}

    elif args.command == "synthesize":
        names = ["ExperimentConfigReaderHandler", "DatasetReaderHandler", "DatasetCsvWriterHandler"]
        request = {"config_path": args.config, "seed": args.seed, "overrides": args.overrides, "output_dir": args.out}

    else:
        raise ArgumentError(f"unknown command {args.command!r}")

    if args.debug:
        names.append("PrintContextHandler")

    return HandlerFactory.chain(*names), request


def configure_logging():
    level_name = os.getenv("DRN_LOG_LEVEL", "INFO").upper()
    level = getattr(logging, level_name, None)
    logging.basicConfig(
        stream=sys.stderr,
        level=level if isinstance(level, int) else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not isinstance(level, int):
        logger.warning("Unknown DRN_LOG_LEVEL %r, using INFO", level_name)


def exit_code(request: dict) -> int:
    if request.get("status") is False:
        logger.error("Output failed: %s", request.get("error"))
        return EXIT_USAGE
    if request.get("converged") is False:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    # Load environment variables from .env file
    load_dotenv()
    configure_logging()

    try:
        args = build_parser().parse_args(argv)
        HandlerFactory.discover_handlers()
        handler_chain, request = construct_chain(args)
        result = handler_chain.handle(request)
    except DrnError as e:
        logger.error("%s", e)
        return e.exit_code
    except json.JSONDecodeError as e:
        logger.error("malformed JSON at line %d, column %d: %s", e.lineno, e.colno, e.msg)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK

    return exit_code(result)


if __name__ == "__main__":
    sys.exit(main())
