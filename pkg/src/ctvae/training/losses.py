"""The combined transition objective and its per-mode pieces.

Every piece is reported per instance: cross-entropies average over nodes,
matrix penalties sum over entries, and all are then averaged over the
batch. The divergence from the edge prior is averaged per sample per edge.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from ctvae.ct.layer import CausalTransitionLayer
from ctvae.ct.regularizers import graph_regularizers, kl_graph
from ctvae.mcqvae.quantizer import CodeGrid

MODES = ("standard", "action", "causal")

PART_KEYS = ("l_x", "l_y", "l_a", "l_id_y", "l_id_m", "kl", "graph_norm", "dependency")


@dataclass
class LossWeights:
    """Weights of the combined objective.

    ``ct_scale`` balances the whole transition objective against the
    quantizer losses; ``identity`` scales the two identity anchors; the last
    three scale the graph penalties.
    """

    ct_scale: float = 1.5
    identity: float = 0.01
    kl: float = 0.4
    graph_norm: float = 0.01
    dependency: float = 0.1

    def __post_init__(self):
        for name, value in self.to_dict().items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")

    def to_dict(self) -> dict:
        return {
            "ct_scale": self.ct_scale,
            "identity": self.identity,
            "kl": self.kl,
            "graph_norm": self.graph_norm,
            "dependency": self.dependency,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LossWeights":
        return cls(**data)


def _graph_parts(adjacency: torch.Tensor, probs: torch.Tensor) -> dict:
    batch = probs.shape[0]
    norm, dep = graph_regularizers(adjacency, probs)
    return {
        "kl": kl_graph(probs) / probs.numel(),
        "graph_norm": norm / batch,
        "dependency": dep / batch,
    }


def loss_standard(
    layer: CausalTransitionLayer,
    code: CodeGrid,
    generator: Optional[torch.Generator] = None,
) -> dict:
    """Null-action pass: reproduce the input codes and pull the graph toward
    the identity matrix."""
    batch = code.batch
    ids = torch.full((batch,), -1, dtype=torch.long, device=code.indices.device)
    target = code.flat_indices()

    graph = layer.discover_structure(code, ids, generator=generator)
    pred = layer.infer_transition(code, ids, graph.adjacency, generator)
    l_x = pred.cross_entropy(target)

    eye = layer.identity_adjacency(batch)
    pred_id = layer.infer_transition(code, ids, eye, generator)
    l_id_y = pred_id.cross_entropy(target)
    l_id_m = (graph.adjacency - eye).pow(2).sum() / batch

    parts = {"l_x": l_x, "l_id_y": l_id_y, "l_id_m": l_id_m}
    parts.update(_graph_parts(graph.adjacency, graph.probs))
    return parts


def loss_action(
    layer: CausalTransitionLayer,
    x_code: CodeGrid,
    y_code: CodeGrid,
    action_ids: torch.Tensor,
    generator: Optional[torch.Generator] = None,
) -> dict:
    """Real-action pass: predict the output codes under the action's graph."""
    if (action_ids < 0).any():
        raise ValueError("action mode requires a real action for every sample")
    graph = layer.discover_structure(x_code, action_ids, generator=generator)
    pred = layer.infer_transition(x_code, action_ids, graph.adjacency, generator)
    parts = {"l_y": pred.cross_entropy(y_code.flat_indices())}
    parts.update(_graph_parts(graph.adjacency, graph.probs))
    return parts


def loss_causal(
    layer: CausalTransitionLayer,
    x_code: CodeGrid,
    y_code: CodeGrid,
    action_ids: torch.Tensor,
    samples_per_action: int = 1,
    generator: Optional[torch.Generator] = None,
) -> dict:
    """Attribution pass: the per-action likelihood vector should put its
    mass on the true action. No decoding happens here."""
    if (action_ids < 0).any():
        raise ValueError("causal mode requires a real action for every sample")
    result = layer.attribute_action(
        x_code, y_code,
        samples_per_action=samples_per_action,
        generator=generator,
        mask_mode="sample",
        return_graphs=True,
    )
    log_q = torch.log_softmax(result.scores, dim=-1)
    positions = torch.tensor(
        [result.candidates.index(int(a)) for a in action_ids],
        device=log_q.device,
    )
    l_a = -log_q.gather(-1, positions.unsqueeze(-1)).mean()

    parts = {"l_a": l_a}
    # regularize each sample's graph under its true action
    adj_all = torch.stack([g.adjacency for g in result.graphs])
    prob_all = torch.stack([g.probs for g in result.graphs])
    batch_idx = torch.arange(x_code.batch, device=log_q.device)
    adjacency = adj_all[positions, batch_idx]
    probs = prob_all[positions, batch_idx]
    parts.update(_graph_parts(adjacency, probs))
    return parts


def total_ct_loss(mode: str, parts: dict, weights: LossWeights) -> torch.Tensor:
    """Weighted sum of the active parts; missing parts contribute zero."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    zero = torch.tensor(0.0)

    def part(key):
        return parts.get(key, zero)

    return weights.ct_scale * (
        part("l_x") + part("l_y") + part("l_a")
        + weights.identity * (part("l_id_y") + part("l_id_m"))
        + weights.kl * part("kl")
        + weights.graph_norm * part("graph_norm")
        + weights.dependency * part("dependency")
    )
