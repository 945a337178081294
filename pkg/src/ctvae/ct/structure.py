"""Action-conditioned edge scoring and binary graph sampling.

Edge logits live in an (N_out, N_in) matrix: row i scores the dependencies
of output variable i on every input variable j. One pair network exists per
action plus one for the null action; a learned binary gate decides, per
action and per output variable, which of the two networks fills that row.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn


def bernoulli_straight_through(
    logits: torch.Tensor,
    temperature: float = 1.0,
    hard: bool = True,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Binary relaxation sample: hard 0/1 forward, sigmoid-relaxed gradient.

    Uses logistic noise so the sample follows Bernoulli(sigmoid(logits)) at
    temperature 1.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    u = torch.rand(logits.shape, generator=generator, device=logits.device,
                   dtype=logits.dtype)
    eps = torch.finfo(logits.dtype).tiny
    noise = torch.log(u + eps) - torch.log1p(-u + eps)
    soft = torch.sigmoid((logits + noise) / temperature)
    if not hard:
        return soft
    sample = (soft > 0.5).to(logits.dtype)
    return sample + (soft - soft.detach())


@dataclass
class CausalGraphSample:
    """One draw of the transition graph for a batch.

    ``alpha``: (B, N, N) edge logits; ``probs``: sigmoid(alpha);
    ``adjacency``: the sampled matrix (binary forward values when drawn with
    ``hard=True``, carrying the relaxed gradient).
    """

    alpha: torch.Tensor
    probs: torch.Tensor
    adjacency: torch.Tensor

    @property
    def num_nodes(self) -> int:
        return self.alpha.shape[-1]

    def detach(self) -> "CausalGraphSample":
        return CausalGraphSample(self.alpha.detach(), self.probs.detach(), self.adjacency.detach())


OFF_DIAGONAL_BIAS = -2.0
DIAGONAL_BIAS = 4.0


class PairScorer(nn.Module):
    """Two-layer pair network producing one edge logit per (row, column).

    The first layer is evaluated as shared row/column transforms (equal to a
    single linear layer on the concatenated pair, at per-node instead of
    per-pair cost); the second layer maps the hidden activation to the logit.

    Scores start near an identity graph: a negative output bias keeps edges
    sparse and a learnable diagonal bias keeps each variable's own-parent
    edge likely, so early training is not drowned in graph-sampling noise.
    """

    def __init__(self, node_dim: int, hidden: int):
        super().__init__()
        self.row = nn.Linear(node_dim, hidden)
        self.col = nn.Linear(node_dim, hidden, bias=False)
        self.out = nn.Linear(hidden, 1)
        nn.init.constant_(self.out.bias, OFF_DIAGONAL_BIAS)
        self.diag_bias = nn.Parameter(torch.tensor(DIAGONAL_BIAS))

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        """(B, N, node_dim) -> (B, N, N) logits; rows index output variables."""
        r = self.row(feats)
        c = self.col(feats)
        hidden = torch.relu(r.unsqueeze(2) + c.unsqueeze(1))
        logits = self.out(hidden).squeeze(-1)
        eye = torch.eye(feats.shape[1], device=feats.device, dtype=logits.dtype)
        return logits + self.diag_bias * eye


class StructureModel(nn.Module):
    """Per-action edge scorers plus the learned intervention gate.

    ``mask_logits`` holds one Bernoulli parameter per (action, variable);
    the null action has no learned row and never selects an intervention
    network. ``masked=False`` replicates the ablation where every row is
    scored by the null network regardless of action.
    """

    def __init__(self, num_actions: int, num_nodes: int, node_dim: int,
                 hidden: int, masked: bool = True):
        super().__init__()
        self.num_actions = num_actions
        self.num_nodes = num_nodes
        self.masked = masked
        self.null_scorer = PairScorer(node_dim, hidden)
        self.action_scorers = nn.ModuleList(
            PairScorer(node_dim, hidden) for _ in range(num_actions)
        )
        self.mask_logits = nn.Parameter(torch.zeros(num_actions, num_nodes))

    def mask_probs(self) -> torch.Tensor:
        return torch.sigmoid(self.mask_logits)

    def sample_mask_row(
        self,
        action: int,
        mode: str = "sample",
        generator: Optional[torch.Generator] = None,
        temperature: float = 1.0,
    ) -> torch.Tensor:
        """(N,) gate row for one action: sampled (training) or thresholded."""
        logits = self.mask_logits[action]
        if mode == "sample":
            return bernoulli_straight_through(logits, temperature, True, generator)
        if mode == "threshold":
            return (logits > 0).to(logits.dtype)
        raise ValueError(f"unknown mask mode {mode!r}")

    def edge_logits(
        self,
        feats: torch.Tensor,
        action_ids: torch.Tensor,
        mask_mode: str = "sample",
        generator: Optional[torch.Generator] = None,
        mask_override: Optional[dict[int, torch.Tensor]] = None,
    ) -> torch.Tensor:
        """(B, N, N) logits for a batch whose sample b took action_ids[b].

        ``action_ids`` uses -1 for the null action. Rows whose gate is 0 are
        exactly the null network's rows (bit-identical given shared
        parameters); rows whose gate is 1 come from the action's network.
        """
        alpha = self.null_scorer(feats)
        if not self.masked:
            return alpha
        for action in action_ids.unique().tolist():
            if action < 0:
                continue  # the null action never selects an intervention network
            idx = (action_ids == action).nonzero(as_tuple=True)[0]
            if mask_override is not None and action in mask_override:
                gate = mask_override[action].to(alpha.dtype)
            else:
                gate = self.sample_mask_row(action, mask_mode, generator)
            gate = gate.reshape(1, -1, 1)
            alpha_a = self.action_scorers[action](feats[idx])
            # arithmetic mix so the gate keeps a gradient path; with a hard
            # 0/1 gate the forward rows equal one network's rows bit-for-bit
            mixed = gate * alpha_a + (1.0 - gate) * alpha[idx]
            alpha = alpha.index_put((idx,), mixed)
        return alpha
