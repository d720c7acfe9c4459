"""
Evaluation Metrics
Dice, answer accuracy, BLEU-1..4, METEOR (as-defined and standard) and ROUGE-L,
all computed from scratch on lowercase word/punctuation tokens
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from shared.constants import Config
from shared.datamodel import is_binary, normalize_answer
from ai_engine.vocab import split_words

Tokens = List[str]


def metric_tokens(text: str) -> Tokens:
    """Lowercase, punctuation split off into separate tokens"""
    return split_words(text)


def _as_tokens(value: Union[str, Sequence[str]]) -> Tokens:
    if isinstance(value, str):
        return metric_tokens(value)
    return [str(t).lower() for t in value]


@dataclass(frozen=True)
class TextPair:
    """One hypothesis and its (at least one) references, tokenized"""
    hypothesis: Tuple[str, ...]
    references: Tuple[Tuple[str, ...], ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError("TextPair needs at least one reference")

    @classmethod
    def of(cls, hypothesis: Union[str, Sequence[str]], *references: Union[str, Sequence[str]]) -> "TextPair":
        return cls(tuple(_as_tokens(hypothesis)), tuple(tuple(_as_tokens(r)) for r in references))


# ==================== SEGMENTATION ====================

def dice_score(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """
    2|P & G| / (|P| + |G|); two empty masks score 1.0.

    Raises:
        ValueError: shape mismatch or non-binary masks
    """
    pred_mask = np.asarray(pred_mask)
    gt_mask = np.asarray(gt_mask)
    if pred_mask.shape != gt_mask.shape:
        raise ValueError(f"shape mismatch: {pred_mask.shape} vs {gt_mask.shape}")
    if not (is_binary(pred_mask) and is_binary(gt_mask)):
        raise ValueError("dice_score needs binary masks")
    pred = pred_mask.astype(bool)
    gt = gt_mask.astype(bool)
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


# ==================== CLASSIFICATION ====================

def accuracy(preds: Sequence[str], labels: Sequence[str]) -> float:
    """Fraction of exact matches after lowercasing and whitespace collapse"""
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise ValueError("accuracy needs at least one prediction")
    hits = sum(normalize_answer(p) == normalize_answer(l) for p, l in zip(preds, labels))
    return hits / len(preds)


# ==================== BLEU ====================

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(pair: TextPair, n: int) -> Tuple[int, int]:
    """(clipped n-gram matches, hypothesis n-gram count)"""
    hyp_counts = _ngrams(pair.hypothesis, n)
    max_ref: Counter = Counter()
    for reference in pair.references:
        for gram, count in _ngrams(reference, n).items():
            max_ref[gram] = max(max_ref[gram], count)
    clipped = sum(min(count, max_ref[gram]) for gram, count in hyp_counts.items())
    return clipped, sum(hyp_counts.values())


def closest_reference_length(pair: TextPair) -> int:
    """Reference length closest to the hypothesis length (shorter wins ties)"""
    c = len(pair.hypothesis)
    return min((len(r) for r in pair.references), key=lambda r: (abs(r - c), r))


def bleu(pair: TextPair, n: int = 4, smoothing: bool = False) -> float:
    """
    BLEU-n with uniform 1/n weights and brevity penalty min(1, exp(1 - r/c)).

    Any zero modified precision gives 0 unless add-one smoothing is on.
    """
    if n not in (1, 2, 3, 4):
        raise ValueError(f"BLEU order must be 1..4, got {n}")
    c = len(pair.hypothesis)
    if c == 0:
        return 0.0

    log_precision = 0.0
    for k in range(1, n + 1):
        clipped, total = modified_precision(pair, k)
        if smoothing:
            precision = (clipped + 1.0) / (total + 1.0)
        elif clipped == 0:
            return 0.0
        else:
            precision = clipped / total
        log_precision += math.log(precision) / n

    r = closest_reference_length(pair)
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_precision)


# ==================== METEOR ====================

def unigram_precision(gold: Sequence[str], hyp: Sequence[str]) -> float:
    """Clipped unigram matches / |hyp|"""
    if not hyp:
        return 0.0
    matches = sum((Counter(gold) & Counter(hyp)).values())
    return matches / len(hyp)


def meteor_precision(golds: Sequence[Union[str, Sequence[str]]], hyps: Sequence[Union[str, Sequence[str]]]) -> float:
    """
    Mean over gold sentences of the best unigram precision against any hypothesis.

    Raises:
        ValueError: no gold sentences
    """
    if not golds:
        raise ValueError("meteor_precision needs at least one gold sentence")
    gold_tokens = [_as_tokens(g) for g in golds]
    hyp_tokens = [_as_tokens(h) for h in hyps]
    total = 0.0
    for gold in gold_tokens:
        total += max((unigram_precision(gold, hyp) for hyp in hyp_tokens), default=0.0)
    return total / len(gold_tokens)


def _align(reference: Sequence[str], hypothesis: Sequence[str]) -> List[Tuple[int, int]]:
    used = set()
    alignment = []
    for h_index, token in enumerate(hypothesis):
        for r_index, ref_token in enumerate(reference):
            if r_index not in used and ref_token == token:
                used.add(r_index)
                alignment.append((h_index, r_index))
                break
    return alignment


def meteor_standard(
    pair: TextPair,
    alpha: float = 0.9,
    beta: float = 3.0,
    gamma: float = 0.5
) -> float:
    """
    Exact-match METEOR: Fmean = P*R / (alpha*P + (1-alpha)*R) times
    (1 - gamma * (chunks / matches) ** beta), best over references.
    """
    best = 0.0
    hypothesis = pair.hypothesis
    for reference in pair.references:
        alignment = _align(reference, hypothesis)
        matches = len(alignment)
        if matches == 0:
            continue
        precision = matches / len(hypothesis)
        recall = matches / len(reference)
        fmean = precision * recall / (alpha * precision + (1.0 - alpha) * recall)
        chunks = 1
        for (h0, r0), (h1, r1) in zip(alignment, alignment[1:]):
            if not (h1 == h0 + 1 and r1 == r0 + 1):
                chunks += 1
        penalty = gamma * (chunks / matches) ** beta
        best = max(best, fmean * (1.0 - penalty))
    return best


# ==================== ROUGE-L ====================

def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length by dynamic programming"""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, 1):
            current.append(previous[j - 1] + 1 if token == other else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(pair: TextPair, beta: float = Config.ROUGE_BETA) -> Tuple[float, float, float]:
    """
    (R, P, F) with R = LCS/|ref|, P = LCS/|hyp|, F = (1+b^2)RP / (R + b^2 P).

    With several references the triple with the best F is returned; empty inputs give zeros.
    """
    hypothesis = pair.hypothesis
    best = (0.0, 0.0, 0.0)
    if not hypothesis:
        return best
    for reference in pair.references:
        lcs = lcs_length(hypothesis, reference)
        if lcs == 0 or not reference:
            continue
        recall = lcs / len(reference)
        precision = lcs / len(hypothesis)
        f_score = (1 + beta ** 2) * recall * precision / (recall + beta ** 2 * precision)
        if f_score > best[2]:
            best = (recall, precision, f_score)
    return best
