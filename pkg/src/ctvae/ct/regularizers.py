"""Graph penalties: divergence from the uniform edge prior, edge-count norm,
and the no-dependency penalty."""
from __future__ import annotations

import torch


def kl_graph(probs: torch.Tensor) -> torch.Tensor:
    """Sum over entries of the Bernoulli divergence from an unbiased coin.

    ``sum_ij p log(p / 0.5) + (1 - p) log((1 - p) / 0.5)`` with the
    ``0 * log 0 = 0`` convention; accepts any leading batch shape.
    """
    if probs.min() < 0 or probs.max() > 1:
        raise ValueError("edge probabilities must lie in [0, 1]")
    kl = torch.special.xlogy(probs, 2.0 * probs) + torch.special.xlogy(
        1.0 - probs, 2.0 * (1.0 - probs)
    )
    return kl.sum()


def graph_regularizers(sample: torch.Tensor, probs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(norm_term, dependency_term) for one graph draw.

    ``norm_term`` is the squared Frobenius norm of the sampled matrix;
    ``dependency_term`` sums, per output node, the squared probability of
    having no parent at all.
    """
    if probs.min() < 0 or probs.max() > 1:
        raise ValueError("edge probabilities must lie in [0, 1]")
    norm_term = sample.pow(2).sum()
    no_parent = (1.0 - probs).prod(dim=-1)
    dependency_term = no_parent.pow(2).sum()
    return norm_term, dependency_term
