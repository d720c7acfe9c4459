"""
Grounded Inference
Generates an answer and, when it carries [SEG], decodes and thresholds the mask
"""

import time
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
import torch

from shared.constants import SpecialToken
from shared.datamodel import GroundedOutput, ImageSample, VqaSample, has_seg_token, is_no_findings
from shared.logging_config import get_model_logger
from ai_engine.model import GroundedInterpreter
from ai_engine.vocab import detokenize, tokenize

logger = get_model_logger()


def resolve_mask(
    answer: str,
    compute_logits: Callable[[], np.ndarray],
    shape: Tuple[int, int],
    threshold: float
) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Decide the mask that goes with an answer.

    [SEG] in the answer -> sigmoid(logits) >= threshold; "No findings" -> all-zero mask;
    anything else -> no mask. compute_logits is only called for [SEG] answers.

    Returns:
        (mask or None, logits or None)
    """
    if has_seg_token(answer):
        logits = np.asarray(compute_logits(), dtype=np.float32)
        if logits.shape != tuple(shape):
            raise ValueError(f"shape mismatch: mask logits {logits.shape} vs image {tuple(shape)}")
        probs = 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
        return (probs >= threshold).astype(np.uint8), logits
    if is_no_findings(answer):
        return np.zeros(shape, dtype=np.uint8), None
    return None, None


@torch.no_grad()
def forward_grounded(model: GroundedInterpreter, image: ImageSample, question: str) -> GroundedOutput:
    """
    Answer a question about an image and ground it.

    Args:
        model: Interpreter (put in eval mode by the caller or here)
        image: Normalized image of the configured size
        question: Instruction text

    Returns:
        GroundedOutput whose mask is present iff the answer has [SEG] or is "No findings"
    """
    model.eval()
    started = time.perf_counter()
    question_ids = tokenize(question, model.vocab) or [int(SpecialToken.UNK)]
    answer_ids = model.generate(image, question_ids)
    answer = detokenize(answer_ids, model.vocab)

    def compute_logits() -> np.ndarray:
        lang = model.build_language_embeddings(question_ids, answer_ids, image)
        return model.decode_mask(image, lang).float().cpu().numpy()

    mask, logits = resolve_mask(answer, compute_logits, image.shape, model.config.mask_threshold)
    logger.debug(f"Inference took {(time.perf_counter() - started) * 1000:.1f} ms: {answer!r}")
    return GroundedOutput(answer=answer, mask=mask, mask_logits=logits)


def predict_samples(
    model: GroundedInterpreter,
    samples: Iterable[VqaSample]
) -> List[Tuple[VqaSample, GroundedOutput]]:
    """Run forward_grounded over samples in order, logging mean latency"""
    results = []
    started = time.perf_counter()
    for sample in samples:
        results.append((sample, forward_grounded(model, sample.image, sample.question)))
    if results:
        mean_ms = (time.perf_counter() - started) * 1000 / len(results)
        logger.info(f"Predicted {len(results)} samples ({mean_ms:.1f} ms/sample)")
    return results
