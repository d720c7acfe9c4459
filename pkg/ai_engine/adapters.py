"""
Low-Rank Adapters
Frozen base linear layers plus trainable B @ A updates for language-model fine-tuning
"""

import math
from typing import Optional

import torch
import torch.nn as nn


class LowRankAdapter(nn.Module):
    """
    Trainable low-rank update: effective weight = base + B @ A.

    A is (rank, in) with small random values, B is (out, rank) and starts at zero,
    so a fresh adapter leaves the base layer unchanged.
    """

    def __init__(self, in_features: int, out_features: int, rank: int):
        super().__init__()
        if rank < 1:
            raise ValueError(f"adapter rank must be >= 1, got {rank}")
        self.in_features = in_features
        self.out_features = out_features
        self.rank = rank
        self.A = nn.Parameter(torch.randn(rank, in_features) / math.sqrt(in_features))
        self.B = nn.Parameter(torch.zeros(out_features, rank))

    @property
    def base_shape(self):
        return (self.out_features, self.in_features)

    def delta(self) -> torch.Tensor:
        """B @ A, the (out, in) weight update"""
        return self.B @ self.A

    def parameter_count(self) -> int:
        return self.rank * (self.in_features + self.out_features)


def apply_adapter(base_weight: torch.Tensor, adapter: LowRankAdapter, x: torch.Tensor) -> torch.Tensor:
    """
    base @ x + B @ (A @ x), batched over the leading dimensions of x.

    Args:
        base_weight: (out, in) base matrix
        adapter: Adapter of the same shape
        x: (..., in) inputs

    Returns:
        (..., out) outputs
    """
    if tuple(base_weight.shape) != adapter.base_shape:
        raise ValueError(
            f"shape mismatch: base weight {tuple(base_weight.shape)} vs adapter {adapter.base_shape}"
        )
    if x.shape[-1] != adapter.in_features:
        raise ValueError(f"shape mismatch: input width {x.shape[-1]} vs {adapter.in_features}")
    return x @ base_weight.T + (x @ adapter.A.T) @ adapter.B.T


class AdaptedLinear(nn.Module):
    """
    Linear layer with an optional adapter.

    With rank set, the base weight and bias are frozen and only the adapter trains.
    """

    def __init__(self, in_features: int, out_features: int, rank: Optional[int] = None, bias: bool = True):
        super().__init__()
        self.base = nn.Linear(in_features, out_features, bias=bias)
        self.adapter = None
        if rank is not None:
            self.adapter = LowRankAdapter(in_features, out_features, rank)
            self.base.weight.requires_grad_(False)
            if self.base.bias is not None:
                self.base.bias.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.adapter is None:
            return self.base(x)
        out = apply_adapter(self.base.weight, self.adapter, x)
        if self.base.bias is not None:
            out = out + self.base.bias
        return out

    def effective_weight(self) -> torch.Tensor:
        if self.adapter is None:
            return self.base.weight
        return self.base.weight + self.adapter.delta()
