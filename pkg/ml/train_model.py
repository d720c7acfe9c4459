"""
Grounded Interpreter Training
Task-pure batching, warmup-cosine AdamW steps on the composite loss, and the JSONL step log
"""

import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from shared.constants import Config, MASK_TASKS, TaskKind
from shared.datamodel import VqaSample
from shared.logging_config import get_train_logger
from ai_engine.model import GroundedInterpreter, collate_text
from ai_engine.vocab import Vocabulary, tokenize
from ml.losses import LossWeights, loss_bce, loss_dice, loss_text, loss_total

logger = get_train_logger()


# ==================== CONFIGURATION ====================

class TrainConfig(BaseModel):
    """Optimizer, schedule and loss settings for one training run"""
    batch_size: int = Field(default=Config.BATCH_SIZE, ge=1)
    epochs: int = Field(default=Config.EPOCHS, ge=1)
    optimizer: Literal["AdamW"] = "AdamW"
    lr: float = Field(default=Config.LEARNING_RATE, ge=0.0)
    weight_decay: float = Field(default=Config.WEIGHT_DECAY, ge=0.0)
    schedule: Literal["WarmupCosine"] = "WarmupCosine"
    warmup_steps: Optional[int] = Field(default=None, ge=0)
    seed: int = Config.SEED
    weights: LossWeights = Field(default_factory=LossWeights)
    eps_dice: float = Field(default=Config.DICE_EPS, gt=0.0)
    tasks: Optional[List[TaskKind]] = None
    log_every: int = Field(default=20, ge=1)

    def resolve_warmup(self, total_steps: int) -> int:
        """Configured warmup, or 3% of the total steps"""
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, int(round(Config.WARMUP_FRACTION * total_steps)))


def warmup_cosine_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup over warmup_steps, then cosine decay to zero at total_steps"""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    decay_steps = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / decay_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# ==================== STATE ====================

@dataclass
class TrainState:
    """Model, optimizer and step counter of a run"""
    model: GroundedInterpreter
    optimizer: torch.optim.Optimizer
    config: TrainConfig
    total_steps: int
    warmup_steps: int
    step: int = 0
    history: List[dict] = field(default_factory=list)

    @classmethod
    def create(cls, model: GroundedInterpreter, config: TrainConfig, total_steps: int) -> "TrainState":
        optimizer = torch.optim.AdamW(
            model.trainable_parameters(), lr=config.lr, weight_decay=config.weight_decay
        )
        return cls(model=model, optimizer=optimizer, config=config, total_steps=max(1, total_steps),
                   warmup_steps=config.resolve_warmup(max(1, total_steps)))

    def current_lr(self) -> float:
        return warmup_cosine_lr(self.step, self.total_steps, self.warmup_steps, self.config.lr)


def configure_determinism(seed: int, threads: int = 1) -> None:
    """Seed torch / numpy and pin the intra-op thread count"""
    torch.manual_seed(seed)
    np.random.seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    torch.set_num_threads(max(1, threads))


def build_vocabulary(samples: Sequence[VqaSample]) -> Vocabulary:
    """Vocabulary over every question and answer"""
    return Vocabulary.build(text for s in samples for text in (s.question, s.answer))


def longest_answer(samples: Sequence[VqaSample], vocab: Vocabulary) -> int:
    """Token count of the longest answer, without [EOS]"""
    return max((len(tokenize(s.answer, vocab)) for s in samples), default=0)


# ==================== BATCHING ====================

def make_batches(samples: Sequence[VqaSample], batch_size: int, seed: int) -> List[List[VqaSample]]:
    """
    Split samples into task-pure batches in a seeded order.

    Every task pool is shuffled and chunked, then all batches are shuffled together,
    so each pool is visited in proportion to its size.
    """
    rng = np.random.default_rng(seed)
    pools: Dict[TaskKind, List[VqaSample]] = {}
    for sample in samples:
        pools.setdefault(sample.task, []).append(sample)

    batches: List[List[VqaSample]] = []
    for task in sorted(pools, key=lambda t: t.value):
        pool = pools[task]
        order = rng.permutation(len(pool))
        for start in range(0, len(pool), batch_size):
            batches.append([pool[i] for i in order[start:start + batch_size]])
    return [batches[i] for i in rng.permutation(len(batches))]


def mask_targets(model: GroundedInterpreter, batch: Sequence[VqaSample]) -> torch.Tensor:
    if any(s.target_mask is None for s in batch):
        raise ValueError(f"missing target mask for a {batch[0].task.value} sample")
    stacked = np.stack([s.target_mask for s in batch], axis=0)
    return torch.as_tensor(stacked, dtype=model.dtype, device=model.device)


def batch_losses(
    model: GroundedInterpreter,
    batch: Sequence[VqaSample],
    weights: LossWeights,
    eps_dice: float = Config.DICE_EPS
) -> Dict[str, torch.Tensor]:
    """
    Forward one task-pure batch and return the loss breakdown.

    Text-only tasks skip the segmentation forward pass entirely.
    """
    if not batch:
        raise ValueError("batch is empty")
    task = batch[0].task
    if any(s.task != task for s in batch):
        raise ValueError("batches must be task-pure")

    vocab = model.vocab
    text = collate_text(
        [tokenize(s.question, vocab) for s in batch],
        [tokenize(s.answer, vocab) for s in batch],
        device=model.device,
    )
    pixels = model.image_tensor([s.image for s in batch])
    with_mask = task in MASK_TASKS
    target = mask_targets(model, batch) if with_mask else None

    outputs = model(pixels, text, with_mask=with_mask)
    l_text = loss_text(outputs["logits"], text.targets)
    if not with_mask:
        return loss_total(task, l_text, weights=weights)
    probs = torch.sigmoid(outputs["mask_logits"])
    return loss_total(task, l_text, loss_bce(probs, target), loss_dice(probs, target, eps_dice), weights)


# ==================== TRAINING ====================

def train_step(batch: Sequence[VqaSample], state: TrainState) -> Tuple[TrainState, dict]:
    """
    One AdamW update on a task-pure batch.

    Gradients are reset to None before the step, so parameters that the batch's loss
    does not reach (the mask branch on text-only batches) are left untouched.

    Returns:
        (state, step record {step, lr, L, L_text, L_bce, L_dice, task})
    """
    model = state.model
    lr = state.current_lr()
    for group in state.optimizer.param_groups:
        group["lr"] = lr

    model.train()
    state.optimizer.zero_grad(set_to_none=True)
    breakdown = batch_losses(model, batch, state.config.weights, state.config.eps_dice)
    breakdown["L"].backward()
    state.optimizer.step()
    state.step += 1

    record = {
        "step": state.step,
        "lr": lr,
        "L": float(breakdown["L"].item()),
        "L_text": float(breakdown["L_text"].item()),
        "L_bce": float(breakdown["L_bce"].item()) if "L_bce" in breakdown else None,
        "L_dice": float(breakdown["L_dice"].item()) if "L_dice" in breakdown else None,
        "task": batch[0].task.value,
    }
    state.history.append(record)
    return state, record


def train(
    model: GroundedInterpreter,
    samples: Sequence[VqaSample],
    config: TrainConfig,
    log_path: Optional[str] = None,
    threads: int = 1
) -> TrainState:
    """
    Train for config.epochs over task-pure batches.

    Args:
        model: Model to train in place
        samples: Training samples (filtered to config.tasks when set)
        config: Training configuration
        log_path: Optional JSONL step-log path
        threads: torch intra-op threads (1 = deterministic mode)

    Returns:
        Final TrainState
    """
    configure_determinism(config.seed, threads)
    if config.tasks:
        allowed = {TaskKind(t) for t in config.tasks}
        samples = [s for s in samples if s.task in allowed]
    if not samples:
        raise ValueError("no training samples")

    batches_per_epoch = len(make_batches(samples, config.batch_size, config.seed))
    state = TrainState.create(model, config, batches_per_epoch * config.epochs)
    logger.info(
        f"Training on {len(samples)} samples: {config.epochs} epochs x {batches_per_epoch} batches, "
        f"{model.count_parameters(trainable_only=True)} trainable parameters"
    )

    log_file = None
    if log_path:
        os.makedirs(os.path.dirname(os.path.abspath(log_path)), exist_ok=True)
        log_file = open(log_path, "w", encoding="utf-8")
    try:
        for epoch in range(config.epochs):
            epoch_losses = []
            for batch in make_batches(samples, config.batch_size, config.seed + epoch):
                state, record = train_step(batch, state)
                epoch_losses.append(record["L"])
                if log_file is not None:
                    log_file.write(json.dumps(record) + "\n")
                if state.step % config.log_every == 0:
                    logger.info(f"step {state.step}/{state.total_steps} lr={record['lr']:.2e} "
                                f"L={record['L']:.4f} ({record['task']})")
            logger.info(f"Epoch {epoch + 1}/{config.epochs}: mean L = {np.mean(epoch_losses):.4f}")
    finally:
        if log_file is not None:
            log_file.close()
    return state


def read_step_log(path: str) -> List[dict]:
    """Load a JSONL step log"""
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
