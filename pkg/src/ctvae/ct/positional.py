"""Sinusoidal positions over the flattened latent node index."""
from __future__ import annotations

import math

import torch


def sinusoidal_positions(num_positions: int, dim: int) -> torch.Tensor:
    """(num_positions, dim) table; even dims sine, odd dims cosine."""
    position = torch.arange(num_positions, dtype=torch.float32).unsqueeze(1)
    half = torch.arange(0, dim, 2, dtype=torch.float32)
    freq = torch.exp(-math.log(10000.0) * half / dim)
    angles = position * freq.unsqueeze(0)
    table = torch.zeros(num_positions, dim)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return table
