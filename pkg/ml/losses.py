"""
Composite Training Loss
Token cross-entropy for answers plus weighted BCE and Dice for [SEG] masks
"""

import os
import sys
from typing import Dict, Optional

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from shared.constants import Config, MASK_TASKS, SpecialToken, TaskKind


class LossWeights(BaseModel):
    """Mask loss weights; text loss always has weight 1"""
    lambda_bce: float = Field(default=Config.LAMBDA_BCE, gt=0.0)
    lambda_dice: float = Field(default=Config.LAMBDA_DICE, gt=0.0)


# ==================== COMPONENTS ====================

def loss_text(logits: torch.Tensor, targets: torch.Tensor, pad_id: int = SpecialToken.PAD) -> torch.Tensor:
    """
    Mean token cross-entropy over non-padding positions.

    Args:
        logits: (B, T, V) next-token logits
        targets: (B, T) target ids, pad_id where unsupervised

    Returns:
        Scalar loss
    """
    if logits.shape[:2] != targets.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} vs targets {tuple(targets.shape)}")
    if not bool((targets != pad_id).any()):
        raise ValueError("no supervised positions: every target is padding")
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        targets.reshape(-1),
        ignore_index=int(pad_id),
        reduction="mean",
    )


def loss_bce(probs: torch.Tensor, target: torch.Tensor, clamp: float = Config.BCE_CLAMP) -> torch.Tensor:
    """
    Pixel-mean binary cross-entropy per sample, averaged over the batch.

    Probabilities are clamped to [clamp, 1 - clamp] so the loss stays finite.

    Args:
        probs: (B, H, W) or (H, W) mask probabilities (sigmoid of the mask logits)
        target: Same-shape binary target
    """
    probs, target = _mask_pair(probs, target)
    probs = probs.clamp(clamp, 1.0 - clamp)
    per_pixel = -(target * torch.log(probs) + (1.0 - target) * torch.log(1.0 - probs))
    return per_pixel.flatten(1).mean(dim=1).mean()


def loss_dice(probs: torch.Tensor, target: torch.Tensor, eps: float = Config.DICE_EPS) -> torch.Tensor:
    """
    Soft Dice loss: 1 - (2 * sum(p * y) + eps) / (sum(p) + sum(y) + eps), averaged over the batch.

    Args:
        probs: (B, H, W) or (H, W) mask probabilities
        target: Same-shape binary target
    """
    probs, target = _mask_pair(probs, target)
    probs = probs.flatten(1)
    target = target.flatten(1)
    overlap = (probs * target).sum(dim=1)
    dice = (2.0 * overlap + eps) / (probs.sum(dim=1) + target.sum(dim=1) + eps)
    return (1.0 - dice).mean()


def _mask_pair(probs: torch.Tensor, target: torch.Tensor):
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs target {tuple(target.shape)}")
    if probs.dim() == 2:
        probs = probs.unsqueeze(0)
        target = target.unsqueeze(0)
    return probs, target.to(probs.dtype)


# ==================== TOTAL ====================

def loss_total(
    task: TaskKind,
    l_text: torch.Tensor,
    l_bce: Optional[torch.Tensor] = None,
    l_dice: Optional[torch.Tensor] = None,
    weights: Optional[LossWeights] = None
) -> Dict[str, torch.Tensor]:
    """
    Combine the components for one task-pure batch.

    Mask tasks: L = L_text + lambda_bce * L_bce + lambda_dice * L_dice.
    Text-only tasks (RoiClassification, RegionReport): L = L_text.

    Returns:
        Dict with keys L, L_text and, for mask tasks only, L_bce and L_dice
    """
    weights = weights or LossWeights()
    task = TaskKind(task)
    if task in MASK_TASKS:
        if l_bce is None or l_dice is None:
            raise ValueError(f"{task.value} batches need BCE and Dice terms")
        total = l_text + weights.lambda_bce * l_bce + weights.lambda_dice * l_dice
        return {"L": total, "L_text": l_text, "L_bce": l_bce, "L_dice": l_dice}

    return {"L": l_text, "L_text": l_text}
