"""Causal transition layer: graph discovery, node classification, and
action attribution over quantized latent variables."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from ctvae.mcqvae.quantizer import CodeGrid
from ctvae.ct.gnn import TransitionGnn
from ctvae.ct.positional import sinusoidal_positions
from ctvae.ct.structure import CausalGraphSample, StructureModel, bernoulli_straight_through

NOISE_MODES = ("none", "endogenous", "exogenous")


@dataclass
class NoiseConfig:
    """Unlabelled-cause wiring: absent, one shared draw, or per-node draws."""

    mode: str = "none"
    scale: float = 0.1

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"noise mode must be one of {NOISE_MODES}, got {self.mode!r}")


@dataclass
class CtConfig:
    num_actions: int
    num_nodes: int
    sub_dim: int
    codebook_size: int
    pair_hidden: int = 64
    gnn_hidden: int = 128
    gnn_depth: int = 3
    gnn_heads: int = 4
    temperature: float = 1.0
    samples_per_action: int = 4
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    masked: bool = True

    def to_dict(self) -> dict:
        return {
            "num_actions": self.num_actions,
            "num_nodes": self.num_nodes,
            "sub_dim": self.sub_dim,
            "codebook_size": self.codebook_size,
            "pair_hidden": self.pair_hidden,
            "gnn_hidden": self.gnn_hidden,
            "gnn_depth": self.gnn_depth,
            "gnn_heads": self.gnn_heads,
            "temperature": self.temperature,
            "samples_per_action": self.samples_per_action,
            "noise": {"mode": self.noise.mode, "scale": self.noise.scale},
            "masked": self.masked,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CtConfig":
        data = dict(data)
        noise = data.pop("noise", {"mode": "none", "scale": 0.1})
        return cls(noise=NoiseConfig(**noise), **data)


@dataclass
class TransitionPrediction:
    """Per-node distributions over codebook indices for one graph draw."""

    logits: torch.Tensor  # (B, N, K)
    grid_shape: tuple[int, int, int]  # (H, W, C)

    def predicted_flat(self) -> torch.Tensor:
        """(B, N) argmax indices; ties resolve to the lowest index."""
        return self.logits.argmax(dim=-1)

    def predicted_grid(self) -> torch.Tensor:
        b = self.logits.shape[0]
        return self.predicted_flat().reshape(b, *self.grid_shape)

    def log_likelihood(self, target_flat: torch.Tensor) -> torch.Tensor:
        """(B,) mean per-node log-probability of the target indices."""
        logp = F.log_softmax(self.logits, dim=-1)
        picked = logp.gather(-1, target_flat.unsqueeze(-1)).squeeze(-1)
        return picked.mean(dim=-1)

    def cross_entropy(self, target_flat: torch.Tensor) -> torch.Tensor:
        """Scalar mean per-node cross-entropy against target indices."""
        return -self.log_likelihood(target_flat).mean()


@dataclass
class AttributionResult:
    """Per-candidate transition scores converted to a probability vector."""

    candidates: tuple[int, ...]
    scores: torch.Tensor  # (B, num_candidates) mean log-likelihoods
    q: torch.Tensor  # (B, num_candidates) softmax of scores
    graphs: Optional[list[CausalGraphSample]] = None  # last draw per candidate

    @property
    def chosen(self) -> torch.Tensor:
        """(B,) argmax candidate position; ties resolve to the lowest index."""
        return self.q.argmax(dim=-1)

    def chosen_actions(self) -> list[int]:
        return [self.candidates[i] for i in self.chosen.tolist()]


def action_ids_to_one_hot(action_ids: torch.Tensor, num_actions: int,
                          dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(B,) ids with -1 for the null action -> (B, A) one-hot (null = zeros)."""
    out = torch.zeros(action_ids.shape[0], num_actions, dtype=dtype,
                      device=action_ids.device)
    real = action_ids >= 0
    if real.any():
        out[real] = F.one_hot(action_ids[real], num_actions).to(dtype)
    return out


class CausalTransitionLayer(nn.Module):
    def __init__(self, cfg: CtConfig):
        super().__init__()
        self.cfg = cfg
        self.structure = StructureModel(
            num_actions=cfg.num_actions,
            num_nodes=cfg.num_nodes,
            node_dim=2 * cfg.sub_dim,
            hidden=cfg.pair_hidden,
            masked=cfg.masked,
        )
        self.gnn = TransitionGnn(cfg.sub_dim, cfg.gnn_hidden, cfg.codebook_size,
                                 cfg.gnn_depth, cfg.gnn_heads)
        self.action_proj = nn.Linear(cfg.num_actions, cfg.sub_dim)
        if cfg.noise.mode == "endogenous":
            self.noise_embed = nn.Parameter(torch.full((cfg.sub_dim,), cfg.noise.scale))
        self.register_buffer("positions", sinusoidal_positions(cfg.num_nodes, cfg.sub_dim))

    def _check_code(self, code: CodeGrid) -> None:
        if code.num_nodes != self.cfg.num_nodes:
            raise ValueError(
                f"code grid has {code.num_nodes} nodes, layer expects {self.cfg.num_nodes}"
            )

    def structure_features(self, code: CodeGrid) -> torch.Tensor:
        """(B, N, 2 * sub_dim): sub-vector embedding joined with its position."""
        emb = code.flat_embedded()
        pos = self.positions.unsqueeze(0).expand(emb.shape[0], -1, -1)
        return torch.cat([emb, pos], dim=-1)

    def gnn_features(
        self,
        code: CodeGrid,
        action_ids: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        """Node features: embedding + position + projected action broadcast,
        plus the configured noise contribution."""
        emb = code.flat_embedded()
        feats = emb + self.positions.unsqueeze(0)
        one_hot = action_ids_to_one_hot(action_ids, self.cfg.num_actions, dtype=emb.dtype)
        feats = feats + self.action_proj(one_hot).unsqueeze(1)
        noise = self.cfg.noise
        if noise.mode == "endogenous":
            z = torch.randn(emb.shape[0], 1, 1, generator=generator, device=emb.device)
            feats = feats + z * self.noise_embed.reshape(1, 1, -1)
        elif noise.mode == "exogenous":
            eps = torch.randn(emb.shape, generator=generator, device=emb.device)
            feats = feats + noise.scale * eps
        return feats

    def discover_structure(
        self,
        code: CodeGrid,
        action_ids: torch.Tensor,
        temperature: Optional[float] = None,
        hard: bool = True,
        generator: Optional[torch.Generator] = None,
        mask_mode: str = "sample",
        mask_override: Optional[dict[int, torch.Tensor]] = None,
    ) -> CausalGraphSample:
        """Score every candidate edge and draw one binary graph."""
        self._check_code(code)
        if (action_ids >= self.cfg.num_actions).any():
            raise ValueError("unknown action id in batch")
        feats = self.structure_features(code)
        alpha = self.structure.edge_logits(
            feats, action_ids, mask_mode=mask_mode, generator=generator,
            mask_override=mask_override,
        )
        probs = torch.sigmoid(alpha)
        temp = self.cfg.temperature if temperature is None else temperature
        adjacency = bernoulli_straight_through(alpha, temp, hard, generator)
        return CausalGraphSample(alpha=alpha, probs=probs, adjacency=adjacency)

    def identity_adjacency(self, batch: int) -> torch.Tensor:
        eye = torch.eye(self.cfg.num_nodes, device=self.positions.device,
                        dtype=self.positions.dtype)
        return eye.unsqueeze(0).expand(batch, -1, -1)

    def infer_transition(
        self,
        code: CodeGrid,
        action_ids: torch.Tensor,
        adjacency: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> TransitionPrediction:
        """Classify each output node over the codebook vocabulary."""
        self._check_code(code)
        if adjacency.shape[-2:] != (self.cfg.num_nodes, self.cfg.num_nodes):
            raise ValueError(
                f"adjacency shape {tuple(adjacency.shape)} does not match "
                f"{self.cfg.num_nodes} nodes"
            )
        feats = self.gnn_features(code, action_ids, generator)
        logits = self.gnn(feats, adjacency)
        b, h, w, c = code.indices.shape
        return TransitionPrediction(logits=logits, grid_shape=(h, w, c))

    def attribute_action(
        self,
        x_code: CodeGrid,
        y_code: CodeGrid,
        candidates: Optional[Sequence[int]] = None,
        samples_per_action: Optional[int] = None,
        generator: Optional[torch.Generator] = None,
        mask_mode: str = "threshold",
        return_graphs: bool = False,
    ) -> AttributionResult:
        """Score each candidate action by the likelihood it assigns to the
        observed output codes, averaged over graph draws."""
        self._check_code(x_code)
        self._check_code(y_code)
        if x_code.indices.shape != y_code.indices.shape:
            raise ValueError("input and output code grids must share dimensions")
        if candidates is None:
            candidates = tuple(range(self.cfg.num_actions))
        else:
            candidates = tuple(int(c) for c in candidates)
        if not candidates:
            raise ValueError("candidate action set is empty")
        draws = self.cfg.samples_per_action if samples_per_action is None else samples_per_action
        target = y_code.flat_indices()
        batch = x_code.batch
        num = len(candidates)

        # one pass over a candidate-major mega-batch instead of a per-action loop
        rep_code = CodeGrid(
            indices=x_code.indices.repeat(num, 1, 1, 1),
            embedded=x_code.embedded.repeat(num, 1, 1, 1),
        )
        ids = torch.tensor(candidates, dtype=torch.long,
                           device=target.device).repeat_interleave(batch)
        rep_target = target.repeat(num, 1)

        total = None
        graph = None
        for _ in range(draws):
            graph = self.discover_structure(
                rep_code, ids, generator=generator, mask_mode=mask_mode
            )
            pred = self.infer_transition(rep_code, ids, graph.adjacency, generator)
            ll = pred.log_likelihood(rep_target)
            total = ll if total is None else total + ll
        score_mat = (total / draws).reshape(num, batch).transpose(0, 1)
        q = torch.softmax(score_mat, dim=-1)

        graphs = None
        if return_graphs:
            graphs = [
                CausalGraphSample(
                    alpha=graph.alpha[i * batch:(i + 1) * batch],
                    probs=graph.probs[i * batch:(i + 1) * batch],
                    adjacency=graph.adjacency[i * batch:(i + 1) * batch],
                )
                for i in range(num)
            ]
        return AttributionResult(
            candidates=candidates, scores=score_mat, q=q, graphs=graphs,
        )
