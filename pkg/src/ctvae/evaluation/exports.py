"""Rendered artifacts: iterated-intervention grids and structure heatmaps."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from PIL import Image

from ctvae.schema import ActionSpec, action_index, action_set
from ctvae.mcqvae.quantizer import CodeGrid
from ctvae.training.checkpoint import Bundle


def apply_action_to_codes(
    bundle: Bundle,
    code: CodeGrid,
    action: ActionSpec,
    generator: Optional[torch.Generator] = None,
    samples: int = 1,
) -> tuple[CodeGrid, dict]:
    """One intervention step at the code level.

    Draws ``samples`` graphs, averages the per-node log-probabilities, and
    takes the argmax codes. Returns the predicted grid and a stats dict
    (per-node change count and the mean edge-probability matrix).
    """
    layer = bundle.require_ct()
    batch = code.batch
    if action.is_null:
        ids = torch.full((batch,), -1, dtype=torch.long)
    else:
        ids = torch.full((batch,), action_index(bundle.schema, action), dtype=torch.long)
    total_logp = None
    probs_sum = None
    with torch.no_grad():
        for _ in range(max(1, samples)):
            graph = layer.discover_structure(code, ids, generator=generator, mask_mode="threshold")
            pred = layer.infer_transition(code, ids, graph.adjacency, generator)
            logp = torch.log_softmax(pred.logits, dim=-1)
            total_logp = logp if total_logp is None else total_logp + logp
            probs = graph.probs.mean(dim=0)
            probs_sum = probs if probs_sum is None else probs_sum + probs
        new_flat = total_logp.argmax(dim=-1)
        b, h, w, c = code.indices.shape
        new_code = bundle.mcqvae.quantizer.grid_from_indices(new_flat.reshape(b, h, w, c))
    changed = int((new_code.flat_indices() != code.flat_indices()).sum())
    stats = {
        "changed_nodes": changed,
        "adjacency_probs": (probs_sum / max(1, samples)).cpu().numpy(),
    }
    return new_code, stats


def _to_pil(img: np.ndarray) -> Image.Image:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if arr.shape[-1] == 1:
        return Image.fromarray(arr[..., 0], mode="L")
    return Image.fromarray(arr, mode="RGB")


def export_intervention_grid(
    bundle: Bundle,
    image: np.ndarray,
    actions: Sequence[ActionSpec],
    repeats: int,
    out_dir: Path,
    seed: int = 0,
) -> Path:
    """One row per action: reconstruction, then ``repeats`` outputs with each
    output fed back as the next input. Also writes one strip per action under
    ``intervene/<factor>_<direction>.png``."""
    out_dir = Path(out_dir)
    strip_dir = out_dir / "intervene"
    strip_dir.mkdir(parents=True, exist_ok=True)
    generator = torch.Generator().manual_seed(seed)

    start = bundle.encode_image(image)
    recon = bundle.decode_grid(start)[0]
    rows = []
    for action in actions:
        row = [recon]
        code = start
        for _ in range(repeats):
            code, _ = apply_action_to_codes(bundle, code, action, generator)
            row.append(bundle.decode_grid(code)[0])
        rows.append(row)
        strip = np.concatenate(row, axis=1)
        label = "null_0" if action.is_null else (
            f"{bundle.schema.names[action.factor_index]}_{'+' if action.direction > 0 else '-'}"
        )
        _to_pil(strip).save(strip_dir / f"{label}.png")

    grid = np.concatenate([np.concatenate(row, axis=1) for row in rows], axis=0)
    path = out_dir / "intervention_grid.png"
    _to_pil(grid).save(path)
    return path


def _heatmap(probs: np.ndarray, path: Path, upscale: int = 12) -> None:
    arr = np.round(np.clip(probs, 0.0, 1.0) * 255.0).astype(np.uint8)
    img = Image.fromarray(arr, mode="L")
    img = img.resize((arr.shape[1] * upscale, arr.shape[0] * upscale), resample=Image.NEAREST)
    img.save(path)


def adjacency_diagonal_stats(probs: np.ndarray) -> dict:
    n = probs.shape[0]
    eye = np.eye(n, dtype=bool)
    return {
        "mean_diagonal": float(probs[eye].mean()),
        "mean_off_diagonal": float(probs[~eye].mean()),
    }


def export_structure_maps(
    bundle: Bundle,
    images: np.ndarray,
    out_dir: Path,
    seed: int = 0,
) -> Path:
    """Batch-averaged edge-probability and gate heatmaps.

    Adjacency maps are N x N; gate maps are H x W (averaged over books);
    brightness is proportional to probability. Raw probabilities land in
    ``structure/adjacency.json``.
    """
    layer = bundle.require_ct()
    schema = bundle.schema
    out_dir = Path(out_dir) / "structure"
    out_dir.mkdir(parents=True, exist_ok=True)
    generator = torch.Generator().manual_seed(seed)

    code = bundle.encode_image(images)
    batch = code.batch
    payload = {"num_nodes": layer.cfg.num_nodes, "adjacency": {}, "mask": {}}

    def adjacency_for(ids: torch.Tensor) -> np.ndarray:
        with torch.no_grad():
            graph = layer.discover_structure(code, ids, generator=generator, mask_mode="threshold")
        return graph.probs.mean(dim=0).cpu().numpy()

    null_ids = torch.full((batch,), -1, dtype=torch.long)
    null_probs = adjacency_for(null_ids)
    payload["adjacency"]["null"] = {
        "shape": list(null_probs.shape),
        "probabilities": [float(v) for v in null_probs.reshape(-1)],
    }
    _heatmap(null_probs, out_dir / "adjacency_null.png")

    lh, lw = bundle.mcqvae.cfg.latent_size
    books = bundle.mcqvae.cfg.num_codebooks
    mask_probs = layer.structure.mask_probs().detach().cpu().numpy()
    for action in action_set(schema):
        idx = action_index(schema, action)
        label = f"{schema.names[action.factor_index]}_{'+' if action.direction > 0 else '-'}"
        probs = adjacency_for(torch.full((batch,), idx, dtype=torch.long))
        payload["adjacency"][label] = {
            "shape": list(probs.shape),
            "probabilities": [float(v) for v in probs.reshape(-1)],
        }
        _heatmap(probs, out_dir / f"adjacency_{label}.png")

        gate = mask_probs[idx].reshape(lh * lw, books).mean(axis=1).reshape(lh, lw)
        payload["mask"][label] = {
            "shape": [lh, lw],
            "probabilities": [float(v) for v in gate.reshape(-1)],
        }
        _heatmap(gate, out_dir / f"mask_{label}.png")

    (out_dir / "adjacency.json").write_text(json.dumps(payload, sort_keys=True))
    return out_dir
