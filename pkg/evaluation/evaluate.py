"""
Prediction Scoring
Reads predictions JSONL files, scores them against a manifest per task / modality,
and aggregates trials into a MetricReport
"""

import json
import os
import re
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from shared.constants import Config, MASK_TASKS, TaskKind
from shared.datamodel import DatasetManifest, GroundedOutput, VqaSample, normalize_answer
from shared.logging_config import get_eval_logger
from shared.manifest_io import read_mask_png, write_mask_png
from evaluation.metrics import TextPair, accuracy, bleu, dice_score, meteor_precision, meteor_standard, rouge_l
from evaluation.reports import MetricReport
from evaluation.stats import TrialSet, compare_trials, trial_range

logger = get_eval_logger()

GROUNDING_PHRASE = re.compile(r"(sure,\s*)?it is \[SEG\]\s*\.?", re.IGNORECASE)
CLASSIFICATION_TASKS = (TaskKind.DISEASE_RECOGNITION, TaskKind.ROI_CLASSIFICATION)
REPORT_TASKS = (TaskKind.REGION_REPORT, TaskKind.GROUNDED_REPORT)


@dataclass(frozen=True)
class Prediction:
    answer: str
    mask: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TextMetricOptions:
    """Report-metric variants: precision-style or standard METEOR, add-one BLEU smoothing"""
    meteor_mode: Literal["precision", "standard"] = "precision"
    bleu_smoothing: bool = False

    def __post_init__(self):
        if self.meteor_mode not in ("precision", "standard"):
            raise ValueError(f"unknown METEOR mode: {self.meteor_mode}")


def strip_grounding(answer: str) -> str:
    """Drop the "It is [SEG]." phrase, leaving the class label or report text"""
    return normalize_answer(GROUNDING_PHRASE.sub(" ", answer))


def dataset_key(sample: VqaSample) -> str:
    return f"{sample.task.value}/{sample.image.modality.value}"


# ==================== PREDICTION FILES ====================

def _mask_filename(sample_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "__", sample_id) + ".png"


def write_predictions(results: Sequence[Tuple[VqaSample, GroundedOutput]], out_dir: str) -> str:
    """
    Write predictions.jsonl ({id, answer, mask_path?}) and masks/<id>.png.

    Returns:
        Path of the JSONL file
    """
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(mask_dir, exist_ok=True)
    path = os.path.join(out_dir, "predictions.jsonl")
    with open(path, "w", encoding="utf-8") as f:
        for sample, output in results:
            record = {"id": sample.sample_id, "answer": output.answer}
            if output.has_mask:
                relative = os.path.join("masks", _mask_filename(sample.sample_id))
                write_mask_png(output.mask, os.path.join(out_dir, relative))
                record["mask_path"] = relative
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def read_predictions(path: str) -> Dict[str, Prediction]:
    """Load a predictions JSONL; mask paths resolve relative to the file"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Predictions not found: {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    predictions: Dict[str, Prediction] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            mask = None
            if record.get("mask_path"):
                mask = read_mask_png(os.path.join(base_dir, record["mask_path"]))
            predictions[record["id"]] = Prediction(answer=record["answer"], mask=mask)
    return predictions


# ==================== SCORING ====================

def _text_scores(hypotheses: List[str], references: List[str], options: TextMetricOptions) -> Dict[str, float]:
    scores = {f"BLEU-{n}": [] for n in range(1, 5)}
    scores.update({"METEOR": [], "ROUGE-L": []})
    for hyp, ref in zip(hypotheses, references):
        pair = TextPair.of(hyp, ref)
        for n in range(1, 5):
            scores[f"BLEU-{n}"].append(bleu(pair, n, smoothing=options.bleu_smoothing))
        if options.meteor_mode == "standard":
            scores["METEOR"].append(meteor_standard(pair))
        else:
            scores["METEOR"].append(meteor_precision([ref], [hyp]))
        scores["ROUGE-L"].append(rouge_l(pair)[2])
    return {name: float(np.mean(values)) for name, values in scores.items()}


def score_run(
    manifest: DatasetManifest,
    predictions: Dict[str, Prediction],
    options: TextMetricOptions = TextMetricOptions()
) -> Tuple[Dict[str, Dict[str, float]], Dict[str, float], Dict[str, int]]:
    """
    Score one prediction run; every test-split sample needs a prediction.

    Returns:
        (dataset key -> metric -> value, class label -> mean Dice, dataset key -> sample count)
    """
    samples = manifest.by_id()
    unknown = sorted(set(predictions) - set(samples))
    if unknown:
        raise ValueError(f"predictions for unknown sample ids: {unknown[:5]}")
    missing = sorted({s.sample_id for s in manifest.test_samples()} - set(predictions))
    if missing:
        raise ValueError(f"missing predictions for {len(missing)} test samples: {missing[:5]}")

    groups: Dict[str, List[Tuple[VqaSample, Prediction]]] = {}
    for sample_id in sorted(predictions):
        sample = samples[sample_id]
        groups.setdefault(dataset_key(sample), []).append((sample, predictions[sample_id]))

    results: Dict[str, Dict[str, float]] = {}
    class_dice: Dict[str, List[float]] = {}
    counts: Dict[str, int] = {}
    for key, pairs in sorted(groups.items()):
        task = pairs[0][0].task
        metrics: Dict[str, float] = {}
        if task in MASK_TASKS:
            dices = []
            for sample, prediction in pairs:
                pred_mask = prediction.mask if prediction.mask is not None else np.zeros_like(sample.target_mask)
                dice = dice_score(pred_mask, sample.target_mask)
                dices.append(dice)
                if task != TaskKind.GROUNDED_REPORT:
                    class_dice.setdefault(strip_grounding(sample.answer), []).append(dice)
            metrics["Dice"] = float(np.mean(dices))
        if task in CLASSIFICATION_TASKS:
            metrics["Accuracy"] = accuracy(
                [strip_grounding(p.answer) for _, p in pairs],
                [strip_grounding(s.answer) for s, _ in pairs],
            )
        if task in REPORT_TASKS:
            metrics.update(_text_scores(
                [strip_grounding(p.answer) for _, p in pairs],
                [strip_grounding(s.answer) for s, _ in pairs],
                options,
            ))
        results[key] = metrics
        counts[key] = len(pairs)
    return results, {label: float(np.mean(v)) for label, v in class_dice.items()}, counts


def _ranges(runs: List[Dict[str, Dict[str, float]]]) -> Dict[str, Dict[str, Tuple[float, float, float]]]:
    ranges = {}
    for key in sorted(runs[0]):
        ranges[key] = {}
        for metric in sorted(runs[0][key]):
            values = [run[key][metric] for run in runs]
            if len(values) == Config.N_TRIALS:
                ranges[key][metric] = trial_range(TrialSet(tuple(values)))
            else:
                ranges[key][metric] = (float(np.mean(values)), float(min(values)), float(max(values)))
    return ranges


def evaluate_runs(
    manifest: DatasetManifest,
    runs: Sequence[Dict[str, Prediction]],
    baseline_runs: Sequence[Dict[str, Prediction]] = (),
    options: TextMetricOptions = TextMetricOptions()
) -> MetricReport:
    """
    Aggregate one or more prediction runs (trials) into a MetricReport.

    With five runs and five baseline runs, every shared metric gets a paired comparison.
    """
    if not runs:
        raise ValueError("need at least one prediction run")
    scored = [score_run(manifest, run, options) for run in runs]
    run_metrics = [s[0] for s in scored]
    per_class: Dict[str, List[float]] = {}
    for _, class_dice, _ in scored:
        for label, value in class_dice.items():
            per_class.setdefault(label, []).append(value)

    significance = {}
    if baseline_runs:
        if len(runs) != Config.N_TRIALS or len(baseline_runs) != Config.N_TRIALS:
            raise ValueError("significance testing needs five runs and five baseline runs")
        baseline_metrics = [score_run(manifest, run, options)[0] for run in baseline_runs]
        for key in sorted(run_metrics[0]):
            for metric in sorted(run_metrics[0][key]):
                if key not in baseline_metrics[0] or metric not in baseline_metrics[0][key]:
                    continue
                ours = TrialSet(tuple(r[key][metric] for r in run_metrics))
                theirs = TrialSet(tuple(r[key][metric] for r in baseline_metrics))
                try:
                    significance[f"{key}:{metric}"] = compare_trials(ours, theirs)
                except ValueError as e:
                    logger.warning(f"Skipping comparison {key}:{metric}: {e}")

    report = MetricReport(
        datasets=_ranges(run_metrics),
        significance=significance,
        per_class_dice={label: float(np.mean(v)) for label, v in per_class.items()},
        sample_counts=scored[0][2],
        n_trials=len(runs),
    )
    logger.info(f"Evaluated {len(runs)} run(s) over {sum(report.sample_counts.values())} samples")
    return report
