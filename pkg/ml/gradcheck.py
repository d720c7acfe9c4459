"""
Finite-Difference Gradient Check
Compares backprop gradients with central differences on sampled coordinates
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from shared.constants import Config

Coordinate = Tuple[int, int]


@dataclass(frozen=True)
class GradcheckResult:
    """Worst relative error over the checked coordinates"""
    max_rel_error: float
    worst: Coordinate
    n_coords: int

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def relative_error(g_fd: float, g_bp: float, floor: float = 1e-8) -> float:
    """|g_fd - g_bp| / max(|g_fd|, |g_bp|, floor)"""
    return abs(g_fd - g_bp) / max(abs(g_fd), abs(g_bp), floor)


def gradcheck(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    h: float = Config.GRADCHECK_H,
    max_coords: int = Config.GRADCHECK_COORDS,
    candidates: Optional[Sequence[Coordinate]] = None,
    seed: int = Config.SEED
) -> GradcheckResult:
    """
    Check d(loss)/d(params) by central differences.

    Args:
        loss_fn: Recomputes the scalar loss from the current parameter values
        params: Leaf tensors with requires_grad set
        h: Finite-difference step
        max_coords: Maximum number of coordinates checked
        candidates: (param index, flat index) pairs to sample from; all coordinates by default
        seed: Coordinate-sampling seed

    Returns:
        GradcheckResult with the worst coordinate
    """
    params = list(params)
    backprop = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    backprop = [torch.zeros_like(p) if g is None else g.detach() for p, g in zip(params, backprop)]

    if candidates is None:
        candidates = [(pi, i) for pi, p in enumerate(params) for i in range(p.numel())]
    candidates = list(candidates)
    rng = np.random.default_rng(seed)
    n = min(max_coords, len(candidates))
    chosen: List[Coordinate] = [candidates[i] for i in sorted(rng.choice(len(candidates), n, replace=False))]

    worst_error, worst = 0.0, chosen[0] if chosen else (0, 0)
    with torch.no_grad():
        for pi, index in chosen:
            flat = params[pi].view(-1)
            original = flat[index].item()
            flat[index] = original + h
            f_plus = float(loss_fn().item())
            flat[index] = original - h
            f_minus = float(loss_fn().item())
            flat[index] = original
            g_fd = (f_plus - f_minus) / (2.0 * h)
            g_bp = float(backprop[pi].view(-1)[index].item())
            error = relative_error(g_fd, g_bp)
            if error > worst_error:
                worst_error, worst = error, (pi, index)
    return GradcheckResult(max_rel_error=worst_error, worst=worst, n_coords=n)


def embedding_row_coordinates(weight: torch.Tensor, row: int) -> List[Coordinate]:
    """Flat coordinates of one embedding-table row, for params=[weight]"""
    width = weight.shape[1]
    return [(0, row * width + j) for j in range(width)]
