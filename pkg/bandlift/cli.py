"""
Command-line interface.

Subcommands: train, infer, eval, degrade, plot-spec and abx-export. Every command returns
an exit code: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import NoReturn, Optional

from bandlift.audio import read_wav, write_wav
from bandlift.cache import get_degradation_cache
from bandlift.config import (
    PRESETS,
    get_config,
    initialize_config,
    load_experiment_config,
    load_preset,
)
from bandlift.dataset import SuperResolutionDataset, degrade
from bandlift.dsp import eval_filter_spec
from bandlift.errors import (
    EXIT_OK,
    EXIT_USAGE,
    AudioFileError,
    UsageError,
    handle_common_errors,
    show_error_with_help,
)
from bandlift.evaluator import PassThroughResolver, Resolver, SuperResolver, evaluate, infer
from bandlift.exporter import (
    ExportManager,
    emit_spectrogram_plot,
    export_abx_pairs,
    format_table,
)
from bandlift.models import TARGET_RATE, ExperimentConfig, FilterSpec
from bandlift.trainer import Trainer

logger = logging.getLogger(__name__)

UNPROCESSED = "unprocessed"


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports misuse as UsageError instead of exiting with 2."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message, user_message=f"{self.prog}: {message}")


def parse_rates(text: str) -> list[int]:
    """Parse "4000,8000,16000" into a list of rates."""
    try:
        rates = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"Invalid rate list '{text}'") from e
    if not rates:
        raise UsageError("At least one rate is required")
    return rates


def resolve_experiment(spec: str) -> ExperimentConfig:
    """A YAML path, or the name of a shipped preset."""
    path = Path(spec)
    if path.exists():
        return load_experiment_config(path)
    if spec in PRESETS:
        return load_preset(spec)
    raise UsageError(
        f"Config '{spec}' is neither a file nor a preset",
        suggestions=[f"Use one of the presets {', '.join(PRESETS)} or a YAML path"],
    )


def resolver_for(spec: str, device: str) -> Resolver:
    if spec.lower() == UNPROCESSED:
        return PassThroughResolver()
    return SuperResolver.from_checkpoint(Path(spec), device)


@handle_common_errors
def cmd_train(args: argparse.Namespace) -> int:
    app_config = get_config()
    config = resolve_experiment(args.config)
    if args.manifest is not None:
        config = config.model_copy(
            update={"data": config.data.model_copy(update={"manifest": args.manifest})}
        )
    if config.data.manifest is None:
        raise UsageError("No training manifest: set data.manifest or pass --manifest")

    run_dir = args.run_dir or app_config.runs_dir / config.name
    dataset = SuperResolutionDataset.from_manifest(config)
    trainer = Trainer(config, dataset, run_dir, device=args.device, app_config=app_config)
    if args.resume is not None:
        trainer.resume(args.resume)
    written = trainer.train(total_steps=args.steps)
    print(f"Wrote {len(written)} checkpoint(s); latest: {written[-1] if written else '-'}")
    return EXIT_OK


@handle_common_errors
def cmd_infer(args: argparse.Namespace) -> int:
    app_config = get_config()
    device = args.device or app_config.resolve_device()
    out = infer(args.ckpt, args.input, args.output, subtype=args.subtype, device=device)
    print(out)
    return EXIT_OK


@handle_common_errors
def cmd_eval(args: argparse.Namespace) -> int:
    app_config = get_config()
    device = args.device or app_config.resolve_device()
    rates = parse_rates(args.rates)
    workers = args.workers or app_config.eval_workers
    cache = None if args.no_cache else get_degradation_cache(app_config)

    resolvers: list[Resolver] = []
    if args.baseline == UNPROCESSED:
        resolvers.append(PassThroughResolver())
    if args.ckpt is not None:
        resolvers.append(SuperResolver.from_checkpoint(args.ckpt, device))
    if not resolvers:
        raise UsageError("Nothing to evaluate: pass --ckpt or --baseline unprocessed")

    reports = [
        evaluate(resolver, args.manifest, rates, workers=workers, cache=cache)
        for resolver in resolvers
    ]
    print(format_table(reports))
    if args.report is not None:
        written = ExportManager(config=app_config).export_report(reports, args.report)
        for path in written:
            print(f"Wrote {path}")
    return EXIT_OK


@handle_common_errors
def cmd_degrade(args: argparse.Namespace) -> int:
    hi = read_wav(args.input)
    if hi.sample_rate != TARGET_RATE:
        raise AudioFileError(
            f"{args.input} is sampled at {hi.sample_rate} Hz; degrade expects 48 kHz input"
        )
    if args.filter is None:
        spec = eval_filter_spec(args.rate)
    else:
        spec = FilterSpec(family=args.filter, order=args.order, cutoff=args.rate / 2)
    write_wav(args.output, degrade(hi, args.rate, spec), subtype=args.subtype)
    print(args.output)
    return EXIT_OK


@handle_common_errors
def cmd_plot_spec(args: argparse.Namespace) -> int:
    print(emit_spectrogram_plot(args.input, args.output))
    return EXIT_OK


@handle_common_errors
def cmd_abx_export(args: argparse.Namespace) -> int:
    app_config = get_config()
    device = args.device or app_config.resolve_device()
    listing = export_abx_pairs(
        resolver_for(args.ckpt_a, device),
        resolver_for(args.ckpt_b, device),
        args.manifest,
        args.rate,
        args.output,
        args.n,
        args.seed,
    )
    print(listing)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="bandlift",
        description="Speech super-resolution to 48 kHz: training, inference and evaluation.",
    )
    parser.add_argument("--env", type=Path, default=None, help="Optional .env file")
    subparsers = parser.add_subparsers(
        dest="command", required=True, parser_class=_ArgumentParser
    )

    train = subparsers.add_parser("train", help="Train a model")
    train.add_argument(
        "--config", required=True, help=f"Experiment YAML or a preset ({', '.join(PRESETS)})"
    )
    train.add_argument("--resume", type=Path, default=None, help="Checkpoint to resume")
    train.add_argument("--manifest", type=Path, default=None, help="Override data.manifest")
    train.add_argument("--run-dir", type=Path, default=None, help="Output directory")
    train.add_argument("--steps", type=int, default=None, help="Override train.total_steps")
    train.add_argument("--device", default=None, help="Torch device (default: from env)")
    train.set_defaults(func=cmd_train)

    infer_p = subparsers.add_parser("infer", help="Super-resolve one WAV file")
    infer_p.add_argument("--ckpt", type=Path, required=True)
    infer_p.add_argument("--in", dest="input", type=Path, required=True)
    infer_p.add_argument("--out", dest="output", type=Path, required=True)
    infer_p.add_argument("--subtype", choices=["PCM_16", "FLOAT"], default="PCM_16")
    infer_p.add_argument("--device", default=None)
    infer_p.set_defaults(func=cmd_infer)

    eval_p = subparsers.add_parser("eval", help="Per-rate LSD over a manifest")
    eval_p.add_argument("--ckpt", type=Path, default=None)
    eval_p.add_argument("--manifest", type=Path, required=True)
    eval_p.add_argument("--rates", default="4000,8000,16000,24000")
    eval_p.add_argument(
        "--report", type=Path, default=None, help="Report file (.csv, .json or .xlsx)"
    )
    eval_p.add_argument("--baseline", choices=[UNPROCESSED, "none"], default=UNPROCESSED)
    eval_p.add_argument("--workers", type=int, default=None)
    eval_p.add_argument("--no-cache", action="store_true", help="Skip the degradation cache")
    eval_p.add_argument("--device", default=None)
    eval_p.set_defaults(func=cmd_eval)

    degrade_p = subparsers.add_parser("degrade", help="Simulate a low-rate recording")
    degrade_p.add_argument("--in", dest="input", type=Path, required=True)
    degrade_p.add_argument("--rate", type=int, required=True)
    degrade_p.add_argument("--out", dest="output", type=Path, required=True)
    degrade_p.add_argument(
        "--filter",
        choices=["windowed-sinc", "butterworth", "chebyshev-1"],
        default=None,
        help="Low-pass family (default: the evaluation filter)",
    )
    degrade_p.add_argument("--order", type=int, default=8)
    degrade_p.add_argument("--subtype", choices=["PCM_16", "FLOAT"], default="FLOAT")
    degrade_p.set_defaults(func=cmd_degrade)

    plot = subparsers.add_parser("plot-spec", help="Render a log-magnitude spectrogram")
    plot.add_argument("--in", dest="input", type=Path, required=True)
    plot.add_argument("--out", dest="output", type=Path, required=True)
    plot.set_defaults(func=cmd_plot_spec)

    abx = subparsers.add_parser("abx-export", help="Export blinded A/B listening pairs")
    abx.add_argument("--ckpt-a", required=True, help=f"Checkpoint or '{UNPROCESSED}'")
    abx.add_argument("--ckpt-b", required=True, help=f"Checkpoint or '{UNPROCESSED}'")
    abx.add_argument("--manifest", type=Path, required=True)
    abx.add_argument("--rate", type=int, required=True)
    abx.add_argument("--n", type=int, required=True)
    abx.add_argument("--seed", type=int, default=0)
    abx.add_argument("--out", dest="output", type=Path, required=True)
    abx.add_argument("--device", default=None)
    abx.set_defaults(func=cmd_abx_export)

    return parser


def configure_logging(level: str, debug: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if debug else getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point of the ``bandlift`` command."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        show_error_with_help(e.error_type, e.user_message)
        return EXIT_USAGE

    config = initialize_config(args.env)
    configure_logging(config.log_level, config.debug_mode)
    for warning in config.validate_configuration():
        logger.warning(f"Configuration: {warning}")

    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
