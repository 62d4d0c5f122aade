# coding:utf-8
"""
Command-line surface.

    vcnet [-q | -v] [--config PATH] [--seed N] [--out DIR] [--data CSV] [--schema JSON] COMMAND ...

Commands: train, posthoc-train, explain, evaluate, synth, report, suite.
Exit status 0 on success, 1 with a one-line `error: ...` diagnostic, 2 on usage errors.
"""
import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from ..common.config import ExperimentConfig, builtin_config, load_config
from ..common.exception_handler import ContractViolation, ModelFileError, VCNetError
from ..common.logger import Logger, setConsoleLevel
from ..common.setting import APP_NAME, VERSION
from ..common.utils import writeJson
from ..services.counterfactual_service import (generate_batch, read_records_file, records_to_frame,
                                               write_records_csv, write_records_json)
from ..services.data_service import FeatureSchema, load_csv, transform
from ..services.experiment_service import run_benchmark, run_posthoc_benchmark, run_suite, run_synth_study
from ..services.metrics_service import evaluate_counterfactuals
from ..services.vcnet_model import read_model_file
from .report_view import FORMATS, load_reports, render, render_text

logger = Logger("cli", printConsole=False)


def _globalOptions(parser: argparse.ArgumentParser, default):
    parser.add_argument("--config", metavar="PATH", default=default, help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="override the config seed")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory")
    parser.add_argument("--data", metavar="CSV", default=default, help="dataset CSV (overrides csv_path)")
    parser.add_argument("--schema", metavar="JSON", default=default, help="schema declaration (overrides schema_path)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcnet", description=f"{APP_NAME} {VERSION}")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors on stderr")
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug output on stderr")
    _globalOptions(parser, None)

    # the same options are accepted after the command; unset ones keep the global value
    common = argparse.ArgumentParser(add_help=False)
    _globalOptions(common, argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    train = sub.add_parser("train", parents=[common], help="joint training + benchmark report")
    train.add_argument("--dataset", help="bundled config name when --config is not given")
    train.add_argument("--progress", action="store_true", help="show epoch progress bars")

    posthoc = sub.add_parser("posthoc-train", parents=[common], help="joint vs post-hoc comparison")
    posthoc.add_argument("--dataset", help="bundled config name when --config is not given")
    posthoc.add_argument("--progress", action="store_true", help="show epoch progress bars")

    explain = sub.add_parser("explain", parents=[common], help="counterfactuals for raw rows")
    explain.add_argument("--model", required=True, metavar="PATH")
    explain.add_argument("--input", required=True, metavar="CSV")
    explain.add_argument("--target-class", dest="target_class", metavar="CLASS",
                         help="requested counterfactual class (name or index)")
    explain.add_argument("--output", metavar="CSV", help="write here instead of stdout")

    evaluate = sub.add_parser("evaluate", parents=[common], help="recompute a report from stored records")
    evaluate.add_argument("--model", required=True, metavar="PATH")
    evaluate.add_argument("--records", required=True, metavar="PATH", help="counterfactuals.json")

    synth = sub.add_parser("synth", parents=[common], help="synthetic disentanglement study")
    synth.add_argument("--progress", action="store_true", help="show epoch progress bars")
    synth.add_argument("--strict", action="store_true", help="exit with an error when a study check fails")

    report = sub.add_parser("report", parents=[common], help="render a stored report")
    report.add_argument("path", metavar="PATH")
    report.add_argument("--format", choices=FORMATS, default="text")
    report.add_argument("--reference", action="store_true", help="add the published comparison columns")

    suite = sub.add_parser("suite", parents=[common], help="run several experiments concurrently")
    suite.add_argument("configs", nargs="+", metavar="CONFIG")
    suite.add_argument("--posthoc", action="store_true", help="run the post-hoc comparison for each")
    suite.add_argument("--workers", type=int, metavar="N", help="thread pool size")

    return parser


def _experimentConfig(args, default: str) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = builtin_config(getattr(args, "dataset", None) or default)
    return config.withOverrides(args.seed, args.out, args.data, args.schema).validate()


def _cmdTrain(args) -> int:
    result = run_benchmark(_experimentConfig(args, "breast_cancer"), progress=args.progress)
    print(render_text([result.report]))
    return 0


def _cmdPosthoc(args) -> int:
    result = run_posthoc_benchmark(_experimentConfig(args, "breast_cancer"), progress=args.progress)
    print(render_text([result.joint.report, result.posthoc.report]))
    return 0


def _targetIndex(value: Optional[str], schema: FeatureSchema) -> Optional[int]:
    if value is None:
        return None
    if value in schema.label_classes:
        return schema.label_classes.index(value)
    if value.isdigit() and int(value) < schema.n_classes:
        return int(value)
    raise ContractViolation(f"unknown target class '{value}', expected one of {list(schema.label_classes)}")


def _cmdExplain(args) -> int:
    model, schema = read_model_file(args.model)
    if schema is None:
        raise ModelFileError(f"{args.model} carries no schema, raw rows cannot be encoded")

    dataset = transform(load_csv(args.input, schema, requireLabel=False), schema, name=Path(args.input).name)
    records = generate_batch(model, dataset.examples, _targetIndex(args.target_class, schema), dataset.labels)

    if args.output or args.out:
        path = Path(args.output) if args.output else Path(args.out) / "explanations.csv"
        write_records_csv(records, schema, path)
        write_records_json(records, path.with_suffix(".json"), schema, dataset=Path(args.input).stem,
                           method="posthoc" if model.isPosthoc else "vcnet", seed=args.seed or 0)
    else:
        sys.stdout.write(records_to_frame(records, schema).to_csv(index=False, float_format="%.17g"))
    return 0


def _cmdEvaluate(args) -> int:
    model, schema = read_model_file(args.model)
    records, meta = read_records_file(args.records)
    if schema is not None and meta.get("schema_hash") not in (None, schema.hash()):
        raise ModelFileError("records were produced for a different schema than the model's")

    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    report = evaluate_counterfactuals(model, records, meta.get("dataset", "unknown"),
                                      meta.get("method", "vcnet"), seed)
    if args.out:
        writeJson(Path(args.out) / "report.json", report.to_dict())
    print(render_text([report]))
    return 0


def _cmdSynth(args) -> int:
    result = run_synth_study(_experimentConfig(args, "synthetic"), progress=args.progress, strict=args.strict)
    summary = result.summary
    print(f"validity: {summary['validity']:.4f}")
    if summary["targeted_validity"] is not None:
        print(f"targeted validity: {summary['targeted_validity']:.4f}")
    print(f"pairs with increasing distance: {summary['increasing_pairs']} of {len(summary['pairs'])}")
    checks = (f"{name} {'ok' if passed else 'FAILED'}" for name, passed in summary["checks"].items())
    print(f"checks: {', '.join(checks)}")
    folder = result.files[0].parent
    for name in ("synth_curves.csv", "synth_points.csv", "synth_summary.json"):
        print(folder / name)
    return 0


def _cmdReport(args) -> int:
    print(render(load_reports(args.path), args.format, args.reference))
    return 0


def _cmdSuite(args) -> int:
    configs = []
    for path in args.configs:
        config = load_config(path)
        out = str(Path(args.out) / Path(path).stem) if args.out else None
        configs.append(config.withOverrides(args.seed, out))

    results = run_suite(configs, posthoc=args.posthoc, maxWorkers=args.workers)
    for outDir, result in results.items():
        print(f"{'ok' if result is not None else 'FAILED'}  {outDir}")
    return 0 if all(r is not None for r in results.values()) else 1


COMMANDS = {
    "train": _cmdTrain,
    "posthoc-train": _cmdPosthoc,
    "explain": _cmdExplain,
    "evaluate": _cmdEvaluate,
    "synth": _cmdSynth,
    "report": _cmdReport,
    "suite": _cmdSuite,
}


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.quiet or args.verbose:
        setConsoleLevel(logging.WARNING if args.quiet else logging.DEBUG)

    try:
        return COMMANDS[args.command](args)
    except VCNetError as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error(f"{args.command}: {e.__class__.__name__}: {traceback.format_exc()}")
        print(f"error: unexpected {e.__class__.__name__}: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))
