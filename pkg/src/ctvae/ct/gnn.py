"""Attention-based message passing over the sampled transition graph."""
from __future__ import annotations

import torch
import torch.nn as nn


class GraphAttentionLayer(nn.Module):
    """Multi-head attention layer with the post-combination scoring order
    (the attention vector is applied after the nonlinearity, so scores stay
    input-dependent rather than globally static). Head outputs concatenate.

    Row i of the adjacency lists the parents of node i. Every node also
    attends to itself regardless of the adjacency, so an empty parent row
    degrades to a self-update instead of a dead node.
    """

    def __init__(self, in_dim: int, out_dim: int, heads: int = 1,
                 negative_slope: float = 0.2):
        super().__init__()
        if out_dim % heads != 0:
            raise ValueError(f"out_dim {out_dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = out_dim // heads
        self.src = nn.Linear(in_dim, out_dim)
        self.dst = nn.Linear(in_dim, out_dim)
        self.att = nn.Parameter(torch.empty(heads, self.head_dim))
        nn.init.xavier_uniform_(self.att)
        self.negative_slope = negative_slope

    def forward(self, feats: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        """(B, N, in_dim) features, (B, N, N) adjacency -> (B, N, out_dim)."""
        b, n, _ = feats.shape
        if adjacency.shape[-1] != n:
            raise ValueError(
                f"adjacency size {tuple(adjacency.shape)} does not match {n} nodes"
            )
        source = self.src(feats).reshape(b, n, self.heads, self.head_dim)
        target = self.dst(feats).reshape(b, n, self.heads, self.head_dim)
        combined = torch.nn.functional.leaky_relu(
            target.unsqueeze(2) + source.unsqueeze(1), self.negative_slope
        )  # (B, N_dst, N_src, H, D)
        scores = (combined * self.att.reshape(1, 1, 1, self.heads, self.head_dim)).sum(-1)
        # self edge always active; keeps the softmax denominator positive
        eye = torch.eye(n, device=feats.device, dtype=adjacency.dtype)
        gate = (adjacency * (1.0 - eye) + eye).unsqueeze(-1)
        weights = gate * torch.exp(scores - scores.max(dim=2, keepdim=True).values)
        attn = weights / weights.sum(dim=2, keepdim=True)
        out = torch.einsum("bijh,bjhd->bihd", attn, source)
        return out.reshape(b, n, self.heads * self.head_dim)


class TransitionGnn(nn.Module):
    """Stack of attention layers and a per-node classification head over the
    codebook vocabulary."""

    def __init__(self, node_dim: int, hidden: int, num_classes: int,
                 depth: int = 3, heads: int = 1):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        dims = [node_dim] + [hidden] * depth
        self.layers = nn.ModuleList(
            GraphAttentionLayer(dims[i], dims[i + 1], heads) for i in range(depth)
        )
        self.head = nn.Linear(hidden, num_classes)

    def forward(self, feats: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        """Returns (B, N, num_classes) logits."""
        h = feats
        for layer in self.layers:
            h = torch.relu(layer(h, adjacency))
        return self.head(h)
