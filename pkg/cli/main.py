"""
GroundKit Command Line
Subcommands synth, curate, train, infer, eval and selftest; commands compose through files
"""

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from shared.constants import BodyRegion, Config, Modality, TaskKind
from shared.datamodel import ImageSample
from shared.logging_config import get_cli_logger, set_console_level
from shared.manifest_io import load_manifest, save_manifest, write_mask_png
from curation.curate import curate_directory
from curation.preprocess import CtWindow, parse_size, resize_pair
from curation.volume_io import read_image_2d
from ai_engine.checkpoint import load_checkpoint, save_checkpoint
from ai_engine.interpreter import forward_grounded, predict_samples
from ai_engine.model import build_model
from ml.synthgen import gen_mixed_dataset, gen_task_dataset
from ml.train_model import build_vocabulary, longest_answer, read_step_log, train
from evaluation.evaluate import TextMetricOptions, evaluate_runs, read_predictions, write_predictions
from evaluation.plots import plot_class_dice, plot_loss_curves
from evaluation.reports import ReportGenerator
from cli.config import RunConfig, settings
from cli.selftest import run_selftest

logger = get_cli_logger()

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_BAD_INPUT = 2

CHECKPOINT_NAME = "model.gkc"
STEP_LOG_NAME = "train.jsonl"


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {"command": args.command, "seed": args.seed}
    if args.config:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ValueError(f"missing input: pass {flag} or set input in the run config")
    return value


def _write_json(document: dict, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


# ==================== SYNTH / CURATE ====================

def cmd_synth(args: argparse.Namespace, run: RunConfig) -> int:
    tasks = [TaskKind(t) for t in args.task]
    size = parse_size(args.size)
    out_dir = args.out or run.output or "synth"
    if len(tasks) == 1:
        manifest = gen_task_dataset(tasks[0], args.volumes, run.seed, args.depth, size, n_jobs=settings.THREADS)
    else:
        manifest = gen_mixed_dataset(tasks, args.volumes, run.seed, args.depth, size, n_jobs=settings.THREADS)
    path = save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    print(f"✅ {len(manifest.samples)} samples written to {path}")
    return EXIT_OK


def cmd_curate(args: argparse.Namespace, run: RunConfig) -> int:
    modality = Modality(args.modality)
    window = None
    if args.window:
        low, high = (float(v) for v in args.window.split(","))
        window = CtWindow(low=low, high=high)
    elif args.body_region:
        window = CtWindow.for_region(BodyRegion(args.body_region))
    manifest = curate_directory(
        _require(args.input or run.input, "--input"), modality, TaskKind(args.task), parse_size(args.size),
        window=window, label=args.label, seed=run.seed,
    )
    path = save_manifest(manifest, args.out or run.output or "manifest.json")
    print(f"✅ {len(manifest.samples)} samples written to {path}")
    return EXIT_OK


# ==================== TRAIN ====================

def cmd_train(args: argparse.Namespace, run: RunConfig) -> int:
    manifest = load_manifest(_require(args.manifest or run.input, "--manifest"))
    samples = manifest.train_samples()
    train_config = run.train
    updates = {k: v for k, v in (("epochs", args.epochs), ("lr", args.lr)) if v is not None}
    if updates:
        train_config = train_config.model_copy(update=updates)

    vocab = build_vocabulary(manifest.samples)
    model_config = run.build_model_config(vocab, longest_answer(samples, vocab))
    model = build_model(model_config, seed=run.seed, device=settings.DEVICE)
    out_dir = args.out or run.output or "run"
    log_path = os.path.join(out_dir, STEP_LOG_NAME)

    print(f"🚀 Training on {len(samples)} samples ({model.count_parameters(trainable_only=True)} trainable parameters)")
    train(model, samples, train_config, log_path=log_path, threads=settings.THREADS)

    checkpoint = save_checkpoint(model, os.path.join(out_dir, CHECKPOINT_NAME))
    plot_loss_curves(read_step_log(log_path), os.path.join(out_dir, "loss_curves.svg"))
    _write_json(run.model_copy(update={"train": train_config}).model_dump(mode="json"),
                os.path.join(out_dir, "run_config.json"))
    print(f"✅ Checkpoint saved to {checkpoint}")
    return EXIT_OK


# ==================== INFER ====================

def cmd_infer(args: argparse.Namespace, run: RunConfig) -> int:
    """Single image -> answer.txt, mask.png, record.json; --manifest -> predictions.jsonl"""
    model = load_checkpoint(args.checkpoint, device=settings.DEVICE)
    out_dir = args.out or run.output or "infer"

    if args.manifest:
        manifest = load_manifest(args.manifest)
        samples = manifest.test_samples() if not args.all_samples else list(manifest.samples)
        path = write_predictions(predict_samples(model, samples), out_dir)
        print(f"✅ {len(samples)} predictions written to {path}")
        return EXIT_OK

    if not args.image or args.question is None:
        raise ValueError("infer needs --image and --question (or --manifest)")
    image = ImageSample(pixels=read_image_2d(args.image), modality=Modality(args.modality))
    image, _ = resize_pair(image, None, model.config.image_size)
    output = forward_grounded(model, image, args.question)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "answer.txt"), "w", encoding="utf-8") as f:
        f.write(output.answer + "\n")
    record = {"image": os.path.basename(args.image), "question": args.question,
              "answer": output.answer, "has_mask": output.has_mask}
    if output.has_mask:
        write_mask_png(output.mask, os.path.join(out_dir, "mask.png"))
        record["mask_path"] = "mask.png"
    _write_json(record, os.path.join(out_dir, "record.json"))
    print(f"✅ {output.answer}")
    return EXIT_OK


# ==================== EVAL ====================

def cmd_eval(args: argparse.Namespace, run: RunConfig) -> int:
    manifest = load_manifest(_require(args.manifest or run.input, "--manifest"))
    runs = [read_predictions(path) for path in args.predictions]
    baselines = [read_predictions(path) for path in args.baseline or []]
    options = TextMetricOptions(meteor_mode=args.meteor_mode, bleu_smoothing=args.bleu_smoothing)
    report = evaluate_runs(manifest, runs, baselines, options)

    out_dir = args.out or run.output or "eval"
    generator = ReportGenerator(out_dir)
    paths = generator.generate_all(report)
    if report.per_class_dice:
        plot_class_dice(report.per_class_dice, os.path.join(out_dir, "class_dice.svg"))
    print(generator.render_table(report))
    print(f"✅ Reports written to {', '.join(sorted(paths.values()))}")
    return EXIT_OK


# ==================== SELFTEST ====================

def cmd_selftest(args: argparse.Namespace, run: RunConfig) -> int:
    report = run_selftest(only=args.only)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    for entry in report["checks"]:
        print(f"{'✅' if entry['passed'] else '❌'} {entry['name']}: {entry['detail']}")
    print(f"\n{report['passed']} passed, {report['failed']} failed")
    return EXIT_OK if report["failed"] == 0 else EXIT_SELFTEST_FAILED


COMMANDS = {
    "synth": cmd_synth,
    "curate": cmd_curate,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "selftest": cmd_selftest,
}


# ==================== PARSER ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundkit", description="GroundKit grounded biomedical VLM toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON or TOML run config")
    common.add_argument("--seed", type=int, default=None, help=f"Run seed (default {Config.SEED})")
    common.add_argument("--out", default=None, help="Output path")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug output on the console")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    sub = parser.add_subparsers(dest="command", required=True)
    tasks = [t.value for t in TaskKind]

    synth = sub.add_parser("synth", parents=[common], help="Generate a synthetic grounded dataset")
    synth.add_argument("--task", nargs="+", choices=tasks, default=[TaskKind.SEGMENTATION.value])
    synth.add_argument("--volumes", type=int, default=20)
    synth.add_argument("--depth", type=int, default=4)
    synth.add_argument("--size", default="x".join(str(v) for v in Config.IMAGE_SIZE))

    curate = sub.add_parser("curate", parents=[common], help="Curate raw volumes / images into a manifest")
    curate.add_argument("--input", default=None, help="Directory of .gkv volumes or .png images")
    curate.add_argument("--modality", required=True, choices=[m.value for m in Modality])
    curate.add_argument("--body-region", choices=[r.value for r in BodyRegion], default=None)
    curate.add_argument("--window", default=None, help="User CT window LOW,HIGH for other regions")
    curate.add_argument("--task", required=True, choices=tasks)
    curate.add_argument("--size", default="x".join(str(v) for v in Config.IMAGE_SIZE))
    curate.add_argument("--label", default="Abnormality", help="Class / finding text of the masks")

    train_cmd = sub.add_parser("train", parents=[common], help="Train a model on a manifest's train split")
    train_cmd.add_argument("--manifest", default=None)
    train_cmd.add_argument("--epochs", type=int, default=None)
    train_cmd.add_argument("--lr", type=float, default=None)

    infer = sub.add_parser("infer", parents=[common], help="Answer and ground a question about an image")
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--image", default=None, help="PNG or .npy image")
    infer.add_argument("--modality", default=Modality.CT.value, choices=[m.value for m in Modality])
    infer.add_argument("--question", default=None)
    infer.add_argument("--manifest", default=None, help="Batch mode over the manifest's test split")
    infer.add_argument("--all-samples", action="store_true", help="Batch mode over every sample")

    evaluate = sub.add_parser("eval", parents=[common], help="Score predictions against a manifest")
    evaluate.add_argument("--manifest", default=None)
    evaluate.add_argument("--predictions", nargs="+", required=True, help="One predictions JSONL per trial")
    evaluate.add_argument("--baseline", nargs="*", default=None, help="Baseline trials for significance")
    evaluate.add_argument("--meteor-mode", choices=["precision", "standard"], default="precision",
                          help="precision: best unigram precision per gold sentence; standard: F-mean with fragmentation penalty")
    evaluate.add_argument("--bleu-smoothing", action="store_true", help="Add-one smoothing of BLEU n-gram precisions")

    selftest = sub.add_parser("selftest", parents=[common], help="Run metric oracles, gradchecks and invariants")
    selftest.add_argument("--only", nargs="*", default=None, help="Run only these checks")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch, and map errors to exit codes"""
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_console_level(logging.DEBUG)
    elif args.quiet:
        set_console_level(logging.WARNING)
    try:
        run = _run_config(args)
        return COMMANDS[args.command](args, run)
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
