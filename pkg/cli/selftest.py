"""
GroundKit Self-Test
Metric oracles, loss identities, gradient checks and model invariants as a check registry
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch
from scipy import stats

from shared.constants import BodyRegion, Modality, SPECIAL_TOKEN_STRINGS, SpecialToken, Split, TaskKind
from shared.datamodel import (
    DatasetManifest, ImageSample, VqaSample, has_seg_token, is_no_findings, split_dataset,
)
from shared.logging_config import get_cli_logger
from curation.preprocess import CtWindow, Volume3D, window_ct
from ai_engine.interpreter import forward_grounded
from ai_engine.model import GroundedInterpreter, ModelConfig, build_model
from ai_engine.vocab import detokenize, tokenize
from ml.gradcheck import embedding_row_coordinates, gradcheck
from ml.losses import LossWeights, loss_bce, loss_dice, loss_total
from ml.synthgen import gen_mixed_dataset
from ml.train_model import TrainConfig, TrainState, batch_losses, build_vocabulary, train_step
from evaluation.metrics import TextPair, accuracy, bleu, dice_score, meteor_precision, rouge_l
from evaluation.stats import TrialSet, format_cell, paired_t_test, trial_range

logger = get_cli_logger()

ABS_TOL = 1e-9
GRAD_TOL_F64 = 1e-6
GRAD_TOL_END_TO_END = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


Check = Callable[[dict], Tuple[bool, str]]
CHECKS: List[Tuple[str, Check]] = []


def check(name: str):
    """Register a check under name"""
    def register(fn: Check) -> Check:
        CHECKS.append((name, fn))
        return fn
    return register


def _close(value: float, expected: float, tol: float = ABS_TOL) -> Tuple[bool, str]:
    return abs(value - expected) <= tol, f"got {value:.12g}, expected {expected:.12g}"


# ==================== METRIC ORACLES ====================

@check("dice_identity")
def _dice_identity(ctx):
    mask = np.zeros((4, 4), np.uint8)
    mask[1:3, 1:3] = 1
    return _close(ctx["dice_score"](mask, mask), 1.0)


@check("dice_disjoint")
def _dice_disjoint(ctx):
    a = np.zeros((4, 4), np.uint8)
    b = np.zeros((4, 4), np.uint8)
    a[0, :2] = 1
    b[3, 2:] = 1
    return _close(ctx["dice_score"](a, b), 0.0)


@check("dice_half_overlap")
def _dice_half(ctx):
    a = np.zeros((4, 4), np.uint8)
    b = np.zeros((4, 4), np.uint8)
    a[0, 0:2] = 1
    b[0, 1:3] = 1
    return _close(ctx["dice_score"](a, b), 0.5)


@check("accuracy_three_of_four")
def _accuracy(ctx):
    value = ctx["accuracy"](["Lesion a", "lesion B", "no  findings", "organ a"],
                            ["lesion a", "Lesion b", "No findings", "lesion a"])
    return _close(value, 0.75)


@check("bleu_brevity_penalty")
def _bleu_brevity(ctx):
    return _close(ctx["bleu"](TextPair.of("the cat", "the cat sat"), 1), math.exp(-0.5))


@check("bleu_identity")
def _bleu_identity(ctx):
    pair = TextPair.of("lesion a with high intensity and oval shape", "lesion a with high intensity and oval shape")
    return _close(min(ctx["bleu"](pair, n) for n in range(1, 5)), 1.0)


@check("bleu_zero_overlap")
def _bleu_zero(ctx):
    return _close(max(ctx["bleu"](TextPair.of("x y z", "a b c"), n) for n in range(1, 5)), 0.0)


@check("meteor_best_precision")
def _meteor(ctx):
    return _close(ctx["meteor_precision"](["a b"], ["a x", "y b c"]), 0.5)


@check("rouge_l_lcs")
def _rouge(ctx):
    _, _, f_score = ctx["rouge_l"](TextPair.of("a b c d", "a c d"), 1.2)
    return _close(f_score, 2.44 * 0.75 / (1 + 1.44 * 0.75))


@check("paired_t_test_oracle")
def _paired_t(ctx):
    a, b = [1, 2, 3, 4, 5], [0, 2, 2, 4, 4]
    t, p = ctx["paired_t_test"](a, b)
    oracle = stats.ttest_rel(a, b)
    ok = abs(t - float(oracle.statistic)) <= ABS_TOL and abs(p - float(oracle.pvalue)) <= ABS_TOL
    return ok, f"t={t:.9f} p={p:.9f}"


@check("paired_t_test_degenerate")
def _paired_t_degenerate(ctx):
    try:
        ctx["paired_t_test"]([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    except ValueError as e:
        return "degenerate" in str(e), str(e)
    return False, "no error for identical inputs"


@check("trial_range_cell")
def _trial_cell(ctx):
    cell = format_cell(*trial_range(TrialSet((96.0, 96.1, 96.2, 96.3, 96.5))))
    return cell == "96.2(96.0,96.5)", cell


# ==================== LOSSES ====================

@check("loss_bce_uniform")
def _bce_uniform(ctx):
    probs = torch.full((8, 8), 0.5, dtype=torch.float64)
    target = (torch.arange(64).reshape(8, 8) % 3 == 0).double()
    return _close(float(loss_bce(probs, target)), math.log(2.0), 1e-6)


@check("loss_dice_analytic")
def _dice_analytic(ctx):
    value = float(loss_dice(torch.zeros(10, 10, dtype=torch.float64), torch.ones(10, 10, dtype=torch.float64)))
    return _close(value, 1.0 - 1.0 / 101.0, 1e-6)


@check("loss_total_composition")
def _total(ctx):
    rng = np.random.default_rng(0)
    worst = 0.0
    for l_text, l_bce, l_dice in rng.uniform(0.0, 5.0, size=(100, 3)):
        parts = [torch.tensor(v, dtype=torch.float64) for v in (l_text, l_bce, l_dice)]
        total = float(loss_total(TaskKind.SEGMENTATION, *parts)["L"])
        worst = max(worst, abs(total - (l_text + 2.0 * l_bce + 0.5 * l_dice)))
    return worst <= ABS_TOL, f"max deviation {worst:.3e}"


# ==================== GRADIENT CHECKS ====================

def _random_mask_instance(seed: int, size: int = 8):
    generator = torch.Generator().manual_seed(seed)
    probs = (0.05 + 0.9 * torch.rand(size, size, generator=generator, dtype=torch.float64)).requires_grad_(True)
    target = (torch.rand(size, size, generator=generator, dtype=torch.float64) > 0.5).double()
    return probs, target


@check("gradcheck_bce")
def _grad_bce(ctx):
    probs, target = _random_mask_instance(1)
    result = gradcheck(lambda: loss_bce(probs, target), [probs], h=1e-5)
    return result.passed(GRAD_TOL_F64), f"max rel error {result.max_rel_error:.3e} at {result.worst}"


@check("gradcheck_dice")
def _grad_dice(ctx):
    probs, target = _random_mask_instance(2)
    result = gradcheck(lambda: loss_dice(probs, target), [probs], h=1e-5)
    return result.passed(GRAD_TOL_F64), f"max rel error {result.max_rel_error:.3e} at {result.worst}"


@check("gradcheck_seg_embedding")
def _grad_end_to_end(ctx):
    model, samples = toy_setup()
    model = model.double()
    batch = [s for s in samples if s.task == TaskKind.SEGMENTATION][:1]
    weight = model.lm.token_embed.weight
    result = gradcheck(
        lambda: batch_losses(model, batch, LossWeights())["L"],
        [weight],
        h=1e-6,
        candidates=embedding_row_coordinates(weight, int(SpecialToken.SEG)),
    )
    return (result.passed(GRAD_TOL_END_TO_END),
            f"max rel error {result.max_rel_error:.3e} at [SEG] coordinate {result.worst[1]}")


# ==================== INVARIANTS ====================

@check("seg_mask_biconditional")
def _biconditional(ctx):
    model, _ = toy_setup()
    model.eval()
    words = [t for t in model.vocab.tokens if t not in SPECIAL_TOKEN_STRINGS.values()]
    threshold = model.config.mask_threshold
    rng = np.random.default_rng(3)
    head_bias = model.lm.head.bias
    original = head_bias.detach().clone()
    violations = seg_answers = bare_answers = 0
    try:
        # plain weights, then [SEG] and [EOS] pushed to the top of every step
        for boost in (None, int(SpecialToken.SEG), int(SpecialToken.EOS)):
            with torch.no_grad():
                head_bias.copy_(original)
                if boost is not None:
                    head_bias[boost] += 50.0
            for _ in range(40):
                image = ImageSample(rng.random(model.config.image_size), Modality.CT)
                question = " ".join(rng.choice(words, size=int(rng.integers(1, 8))))
                ids = model.generate(image, tokenize(question, model.vocab))
                output = forward_grounded(model, image, question)
                emitted_seg = int(SpecialToken.SEG) in ids
                expects_mask = emitted_seg or is_no_findings(output.answer)
                seg_answers += emitted_seg
                bare_answers += not expects_mask
                if output.has_mask != expects_mask or output.answer != detokenize(ids, model.vocab):
                    violations += 1
                elif output.has_mask:
                    if output.mask.shape != image.shape or not np.isin(output.mask, (0, 1)).all():
                        violations += 1
                    elif emitted_seg and not np.array_equal(
                            output.mask, (1.0 / (1.0 + np.exp(-output.mask_logits.astype(np.float64))) >= threshold)):
                        violations += 1
                    elif not emitted_seg and output.mask.any():
                        violations += 1
    finally:
        with torch.no_grad():
            head_bias.copy_(original)
    passed = violations == 0 and seg_answers > 0 and bare_answers > 0
    return passed, f"{violations} violations over 120 inferences ({seg_answers} with [SEG], {bare_answers} without mask)"


@check("forward_grounded_contract")
def _forward_contract(ctx):
    model, samples = toy_setup()
    violations = 0
    for sample in samples[:10]:
        output = forward_grounded(model, sample.image, sample.question)
        expects_mask = has_seg_token(output.answer) or is_no_findings(output.answer)
        if output.has_mask != expects_mask:
            violations += 1
        elif output.has_mask and output.mask.shape != sample.image.shape:
            violations += 1
    return violations == 0, f"{violations} violations over 10 inferences"


@check("ct_window_bounds")
def _windows(ctx):
    ok = True
    for region, (low, high) in ((BodyRegion.CHEST, (-1000.0, 500.0)), (BodyRegion.ABDOMEN, (-175.0, 250.0))):
        window = CtWindow.for_region(region)
        volume = Volume3D(voxels=np.array([[[low - 50, low, high, high + 50]]]), modality=Modality.CT)
        ok &= (window.low, window.high) == (low, high)
        ok &= window_ct(volume, window).voxels.ravel().tolist() == [0.0, 0.0, 1.0, 1.0]
    return bool(ok), "chest (-1000, 500), abdomen (-175, 250)"


@check("volume_split_80_20")
def _split(ctx):
    samples = [
        VqaSample(image=ImageSample(np.zeros((2, 2)), Modality.CT, volume_id=f"v{i}", slice_index=0),
                  question="q", answer="No findings", task=TaskKind.DISEASE_RECOGNITION,
                  sample_id=f"v{i}_s0")
        for i in range(10)
    ]
    manifest = split_dataset(DatasetManifest(samples=samples), seed=42)
    n_test = sum(1 for v in manifest.split.values() if v == Split.TEST)
    return n_test == 2, f"{n_test} of 10 volumes in test"


@check("frozen_encoders_and_task_gating")
def _frozen(ctx):
    model, samples = toy_setup()
    frozen_before = {k: v.clone() for k, v in model.state_dict().items()
                     if k.startswith(("vision_encoder.", "seg_encoder."))}
    state = TrainState.create(model, TrainConfig(lr=1e-2, warmup_steps=0), total_steps=100)

    roi = [s for s in samples if s.task == TaskKind.ROI_CLASSIFICATION][:4]
    seg = [s for s in samples if s.task == TaskKind.SEGMENTATION][:4]
    branch_before = [p.detach().clone() for p in model.mask_branch_parameters()]
    for _ in range(10):
        train_step(roi, state)
    gated = all(torch.equal(a, b) for a, b in zip(branch_before, model.mask_branch_parameters()))
    for _ in range(90):
        train_step(seg, state)
    moved = not all(torch.equal(a, b) for a, b in zip(branch_before, model.mask_branch_parameters()))
    frozen = all(torch.equal(v, model.state_dict()[k]) for k, v in frozen_before.items())
    return gated and moved and frozen, f"gated={gated} mask-branch-moved={moved} encoders-frozen={frozen}"


# ==================== TOY SETUP ====================

def toy_setup(seed: int = 42) -> Tuple[GroundedInterpreter, List[VqaSample]]:
    """16x16 synthetic segmentation + ROI samples and a tiny seeded model"""
    manifest = gen_mixed_dataset(
        [TaskKind.SEGMENTATION, TaskKind.ROI_CLASSIFICATION], n_volumes=2, seed=seed, depth=2, size=(16, 16)
    )
    samples = list(manifest.samples)
    config = ModelConfig.for_vocab(
        build_vocabulary(samples), image_size=(16, 16), patch_size=4, d_model=16, n_heads=2,
        n_layers_vision=1, n_layers_lm=1, n_layers_mask_decoder=1, max_answer_len=4,
        max_seq_len=96, adapter_rank=2,
    )
    return build_model(config, seed=seed), samples


# ==================== RUNNER ====================

def default_context() -> Dict[str, Callable]:
    return {
        "dice_score": dice_score,
        "accuracy": accuracy,
        "bleu": bleu,
        "meteor_precision": meteor_precision,
        "rouge_l": rouge_l,
        "paired_t_test": paired_t_test,
    }


def run_selftest(overrides: Optional[Dict[str, Callable]] = None, only: Optional[List[str]] = None) -> dict:
    """
    Run every registered check.

    Args:
        overrides: Replacement metric functions (mutation testing)
        only: Restrict to these check names

    Returns:
        {"checks": [{name, passed, detail}], "passed": int, "failed": int}
    """
    torch.manual_seed(0)
    ctx = default_context()
    ctx.update(overrides or {})
    results: List[CheckResult] = []
    for name, fn in CHECKS:
        if only and name not in only:
            continue
        try:
            passed, detail = fn(ctx)
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name=name, passed=bool(passed), detail=detail))
        if not passed:
            logger.error(f"Self-test check failed: {name}: {detail}")

    n_passed = sum(r.passed for r in results)
    return {
        "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
        "passed": n_passed,
        "failed": len(results) - n_passed,
    }
