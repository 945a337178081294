"""Multi-codebook vector quantization with a straight-through gradient."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass
class CodeGrid:
    """Quantized latent state: per-cell, per-book codebook indices.

    ``indices``: (B, H, W, C) long tensor, each entry in [0, K).
    ``embedded``: (B, H, W, D) float tensor; exact concatenated table lookup
    of ``indices`` (carries the straight-through gradient when produced by a
    forward pass with gradients enabled).

    Node ordering used everywhere downstream: node ``n`` is
    ``(h * W + w) * C + c`` (position major, book minor), so the node count
    is ``H * W * C``.
    """

    indices: torch.Tensor
    embedded: torch.Tensor

    @property
    def batch(self) -> int:
        return self.indices.shape[0]

    @property
    def grid_size(self) -> tuple[int, int]:
        return self.indices.shape[1], self.indices.shape[2]

    @property
    def num_books(self) -> int:
        return self.indices.shape[3]

    @property
    def num_nodes(self) -> int:
        b, h, w, c = self.indices.shape
        return h * w * c

    def flat_indices(self) -> torch.Tensor:
        """(B, N) node-ordered indices."""
        return self.indices.reshape(self.batch, -1)

    def flat_embedded(self) -> torch.Tensor:
        """(B, N, sub_dim) node-ordered sub-vectors."""
        b, h, w, d = self.embedded.shape
        c = self.num_books
        return self.embedded.reshape(b, h * w, c, d // c).reshape(b, h * w * c, d // c)

    def detach(self) -> "CodeGrid":
        return CodeGrid(self.indices.detach(), self.embedded.detach())


class _PassThrough(torch.autograd.Function):
    """Forward the quantized values untouched; route the incoming gradient
    to the pre-quantization features unchanged."""

    @staticmethod
    def forward(ctx, features, quantized):
        return quantized

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output, None


class MultiCodebookQuantizer(nn.Module):
    """Nearest-neighbor quantizer over C independent codebooks.

    The feature vector of each latent cell is split into C sub-vectors of
    size D / C; sub-vector c is replaced by the nearest row of table c
    (squared Euclidean distance, ties to the lowest index).
    """

    def __init__(self, num_codebooks: int, codebook_size: int, embedding_dim: int):
        super().__init__()
        if embedding_dim % num_codebooks != 0:
            raise ValueError(
                f"embedding_dim {embedding_dim} not divisible by num_codebooks {num_codebooks}"
            )
        self.num_codebooks = num_codebooks
        self.codebook_size = codebook_size
        self.embedding_dim = embedding_dim
        self.sub_dim = embedding_dim // num_codebooks
        init = 1.0 / codebook_size
        tables = torch.empty(num_codebooks, codebook_size, self.sub_dim)
        tables.uniform_(-init, init)
        self.tables = nn.Parameter(tables)

    @torch.no_grad()
    def init_from_samples(self, features: torch.Tensor, generator=None) -> None:
        """Seed each table with sub-vectors drawn from real encoder output.

        The tiny uniform default leaves every row inside one Voronoi cell of
        typical encoder activations, which collapses the codebook; drawing
        rows from data spreads them over the populated region.
        """
        b, h, w, d = features.shape
        flat = features.reshape(-1, self.num_codebooks, self.sub_dim)
        n = flat.shape[0]
        for c in range(self.num_codebooks):
            picks = torch.randint(0, n, (self.codebook_size,), generator=generator)
            jitter = 0.01 * torch.randn(
                self.codebook_size, self.sub_dim, generator=generator
            )
            self.tables[c].copy_(flat[picks, c] + jitter)

    def nearest_indices(self, features: torch.Tensor) -> torch.Tensor:
        """(B, H, W, D) features -> (B, H, W, C) indices."""
        if not torch.isfinite(features).all():
            raise ValueError("non-finite features passed to quantizer")
        b, h, w, d = features.shape
        if d != self.embedding_dim:
            raise ValueError(f"feature dim {d} != embedding dim {self.embedding_dim}")
        sub = features.reshape(b, h, w, self.num_codebooks, self.sub_dim)
        with torch.no_grad():
            # direct squared differences; argmin picks the first (lowest) index on ties
            diff = sub.unsqueeze(4) - self.tables.reshape(
                1, 1, 1, self.num_codebooks, self.codebook_size, self.sub_dim
            )
            dists = diff.pow(2).sum(dim=-1)
            indices = dists.argmin(dim=-1)
        return indices

    def embed(self, indices: torch.Tensor) -> torch.Tensor:
        """(B, H, W, C) indices -> (B, H, W, D) exact table lookup."""
        b, h, w, c = indices.shape
        parts = [self.tables[k][indices[..., k]] for k in range(self.num_codebooks)]
        return torch.cat(parts, dim=-1).reshape(b, h, w, self.embedding_dim)

    def forward(self, features: torch.Tensor) -> CodeGrid:
        indices = self.nearest_indices(features)
        quantized = self.embed(indices)
        embedded = _PassThrough.apply(features, quantized)
        return CodeGrid(indices=indices, embedded=embedded)

    def grid_from_indices(self, indices: torch.Tensor) -> CodeGrid:
        """Rebuild a CodeGrid (pure lookup, no gradient path) from indices."""
        return CodeGrid(indices=indices, embedded=self.embed(indices))
