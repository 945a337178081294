"""Checkpoint layout: ``weights.pt`` plus a ``checkpoint.json`` sidecar."""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ctvae.schema import FactorSchema, action_set
from ctvae.mcqvae.model import McqVae, McqVaeConfig, images_to_tensor
from ctvae.mcqvae.quantizer import CodeGrid
from ctvae.ct.layer import CausalTransitionLayer, CtConfig
from ctvae.training.losses import LossWeights


def state_dict_digest(module: torch.nn.Module) -> str:
    """Stable content hash of all parameters and buffers, bit-exact."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state.keys()):
        digest.update(key.encode())
        digest.update(state[key].detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(
    out_dir: Path,
    stage: str,
    schema: FactorSchema,
    mcqvae: McqVae,
    ct_layer: Optional[CausalTransitionLayer],
    weights: LossWeights,
    extra: Optional[dict] = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "mcqvae": mcqvae.state_dict(),
        "mcqvae_config": mcqvae.cfg.to_dict(),
        "schema": schema.to_dict(),
    }
    if ct_layer is not None:
        payload["ct"] = ct_layer.state_dict()
        payload["ct_config"] = ct_layer.cfg.to_dict()
    torch.save(payload, out_dir / "weights.pt")

    lh, lw = mcqvae.cfg.latent_size
    sidecar = {
        "stage": stage,
        "D": mcqvae.cfg.embedding_dim,
        "K": mcqvae.cfg.codebook_size,
        "C": mcqvae.cfg.num_codebooks,
        "H": lh,
        "W": lw,
        "schema_hash": schema.content_hash(),
        "loss_weights": weights.to_dict(),
        "mcqvae_digest": state_dict_digest(mcqvae),
    }
    if extra:
        sidecar.update(extra)
    (out_dir / "checkpoint.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return out_dir


@dataclass
class Bundle:
    """A loaded checkpoint: schema, autoencoder, and (optionally) the
    transition layer, ready for inference."""

    schema: FactorSchema
    mcqvae: McqVae
    ct: Optional[CausalTransitionLayer]
    meta: dict
    path: Path

    @property
    def actions(self):
        return action_set(self.schema)

    def encode_image(self, image: np.ndarray) -> CodeGrid:
        """(H, W, C) or (B, H, W, C) float image -> CodeGrid (no gradients)."""
        with torch.no_grad():
            return self.mcqvae.codes_for(images_to_tensor(image))

    def decode_grid(self, code: CodeGrid) -> np.ndarray:
        with torch.no_grad():
            out = self.mcqvae.decode_indices(code.indices)
        return out.permute(0, 2, 3, 1).cpu().numpy()

    def require_ct(self) -> CausalTransitionLayer:
        if self.ct is None:
            raise RuntimeError(f"checkpoint {self.path} holds no transition layer (stage 1 only)")
        return self.ct


def load_bundle(path: Path) -> Bundle:
    path = Path(path)
    weights_file = path / "weights.pt"
    sidecar_file = path / "checkpoint.json"
    if not weights_file.exists() or not sidecar_file.exists():
        raise FileNotFoundError(f"{path} is not a checkpoint directory")
    meta = json.loads(sidecar_file.read_text())
    payload = torch.load(weights_file, map_location="cpu", weights_only=False)

    schema = FactorSchema.from_dict(payload["schema"])
    if schema.content_hash() != meta.get("schema_hash"):
        raise ValueError(f"checkpoint {path}: schema hash mismatch between weights and sidecar")

    mcqvae = McqVae(McqVaeConfig.from_dict(payload["mcqvae_config"]))
    mcqvae.load_state_dict(payload["mcqvae"])
    mcqvae.eval()

    ct_layer = None
    if "ct" in payload:
        ct_layer = CausalTransitionLayer(CtConfig.from_dict(payload["ct_config"]))
        ct_layer.load_state_dict(payload["ct"])
        ct_layer.eval()

    lh, lw = mcqvae.cfg.latent_size
    for key, value in (("D", mcqvae.cfg.embedding_dim), ("K", mcqvae.cfg.codebook_size),
                       ("C", mcqvae.cfg.num_codebooks), ("H", lh), ("W", lw)):
        if meta.get(key) != value:
            raise ValueError(f"checkpoint {path}: sidecar {key}={meta.get(key)} != weights {value}")
    return Bundle(schema=schema, mcqvae=mcqvae, ct=ct_layer, meta=meta, path=path)
