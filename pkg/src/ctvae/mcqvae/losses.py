"""Quantization training objective."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ctvae.mcqvae.quantizer import CodeGrid, MultiCodebookQuantizer

PRETRAIN_COMMITMENT_WEIGHT = 0.25
FINETUNE_COMMITMENT_WEIGHT = 0.1


@dataclass
class VqLossReport:
    reconstruction: torch.Tensor
    codebook: torch.Tensor
    commitment: torch.Tensor
    commitment_weight: float

    def total(self) -> torch.Tensor:
        return self.reconstruction + self.codebook + self.commitment_weight * self.commitment

    def to_dict(self) -> dict:
        return {
            "reconstruction": float(self.reconstruction.detach()),
            "codebook": float(self.codebook.detach()),
            "commitment": float(self.commitment.detach()),
            "commitment_weight": self.commitment_weight,
        }


def vq_losses(
    features: torch.Tensor,
    code: CodeGrid,
    recon: torch.Tensor,
    target: torch.Tensor,
    quantizer: MultiCodebookQuantizer,
    commitment_weight: float = PRETRAIN_COMMITMENT_WEIGHT,
) -> VqLossReport:
    """Mean squared pixel error plus the two quantization pull terms.

    The codebook term moves table rows toward gradient-stopped features;
    the commitment term moves features toward gradient-stopped table rows.
    """
    if recon.shape != target.shape:
        raise ValueError(f"reconstruction shape {tuple(recon.shape)} != target {tuple(target.shape)}")
    lookup = quantizer.embed(code.indices)
    reconstruction = F.mse_loss(recon, target)
    codebook = F.mse_loss(lookup, features.detach())
    commitment = F.mse_loss(features, lookup.detach())
    return VqLossReport(reconstruction, codebook, commitment, commitment_weight)
