"""Stage 2: train the transition layer over frozen latent codes.

Modes rotate standard -> action -> causal, one batch each. The autoencoder
is frozen for the whole stage and its parameters are verified bit-identical
between the first and last step.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ctvae.datasets.export import load_export
from ctvae.schema import action_set
from ctvae.ct.layer import CausalTransitionLayer
from ctvae.training.config import RunConfig
from ctvae.training.checkpoint import Bundle, load_bundle, save_checkpoint, state_dict_digest
from ctvae.training.data import TrainingData, batch_iterator
from ctvae.training.losses import MODES, loss_action, loss_causal, loss_standard, total_ct_loss
from ctvae.training.metrics import MetricsWriter
from ctvae.training.pretrain import dump_nan_diagnostics, seed_everything


def encode_all_combinations(bundle: Bundle, data: TrainingData, batch_size: int = 128) -> torch.Tensor:
    """Indices (num_combinations, h, w, C) of every image under the frozen model."""
    chunks = []
    with torch.no_grad():
        for start in range(0, data.images.shape[0], batch_size):
            code = bundle.mcqvae.codes_for(data.images[start:start + batch_size])
            chunks.append(code.indices)
    return torch.cat(chunks, dim=0)


def quick_attribution_accuracy(
    layer: CausalTransitionLayer,
    codes: torch.Tensor,
    records: np.ndarray,
    quantizer,
    schema,
    generator: torch.Generator,
    limit: int = 96,
) -> tuple[float, float]:
    """(action_accuracy, factor_accuracy) probe used for early stopping."""
    if len(records) == 0:
        return 0.0, 0.0
    rows = records[:limit]
    actions = action_set(schema)
    x = quantizer.grid_from_indices(codes[rows[:, 0]])
    y = quantizer.grid_from_indices(codes[rows[:, 1]])
    with torch.no_grad():
        result = layer.attribute_action(x, y, samples_per_action=1, generator=generator)
    chosen = result.chosen.numpy()
    true_ids = rows[:, 2]
    action_acc = float((chosen == true_ids).mean())
    chosen_factor = np.array([actions[c].factor_index for c in chosen])
    true_factor = np.array([actions[t].factor_index for t in true_ids])
    factor_acc = float((chosen_factor == true_factor).mean())
    return action_acc, factor_acc


def run_ct_training(
    config: RunConfig,
    dataset_dir: Path,
    run_dir: Path,
    stage1_dir: Path,
    masked: Optional[bool] = None,
) -> Path:
    """Train stage 2 from a stage-1 checkpoint; returns the checkpoint dir.

    ``masked=False`` trains the ablated variant whose edge scores ignore the
    action entirely.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    schema, store, _ = load_export(dataset_dir)
    bundle = load_bundle(stage1_dir)
    if bundle.schema.content_hash() != schema.content_hash():
        raise ValueError("stage-1 checkpoint was trained on a different schema")

    seed_everything(config.train.seed)
    mcqvae = bundle.mcqvae
    mcqvae.eval()
    mcqvae.requires_grad_(False)
    digest_before = state_dict_digest(mcqvae)

    data = TrainingData.from_store(store)
    codes = encode_all_combinations(bundle, data)

    actions = action_set(schema)
    ct_cfg = config.ct_config(len(actions), mcqvae.cfg)
    if masked is not None:
        ct_cfg.masked = masked
    layer = CausalTransitionLayer(ct_cfg)
    layer.train()
    optimizer = torch.optim.Adam(layer.parameters(), lr=config.train.ct_lr)

    rng = np.random.default_rng(config.train.seed)
    sample_gen = torch.Generator().manual_seed(config.train.seed)
    probe_gen = torch.Generator().manual_seed(config.train.seed + 1)
    quantizer = mcqvae.quantizer
    train_records = data.splits["train"]
    val_records = data.splits["val"]

    ckpt_dir = run_dir / "stage2"
    step = 0
    best_factor_acc = -1.0
    stale_probes = 0
    stop = False

    def checkpoint(extra: dict) -> Path:
        base = {
            "seed": config.train.seed,
            "masked": ct_cfg.masked,
            "mcqvae_digest_before": digest_before,
        }
        base.update(extra)
        return save_checkpoint(
            ckpt_dir, "ct", schema, mcqvae, layer, config.weights, extra=base,
        )

    with MetricsWriter(run_dir / "ct_metrics.ndjson") as log:
        for epoch in range(config.train.ct_epochs):
            for batch in batch_iterator(rng, len(train_records), config.train.batch_size):
                mode = MODES[step % 3]
                rows = train_records[batch]
                x_code = quantizer.grid_from_indices(codes[rows[:, 0]])
                if mode == "standard":
                    parts = loss_standard(layer, x_code, sample_gen)
                else:
                    y_code = quantizer.grid_from_indices(codes[rows[:, 1]])
                    ids = torch.from_numpy(rows[:, 2])
                    if mode == "action":
                        parts = loss_action(layer, x_code, y_code, ids, sample_gen)
                    else:
                        parts = loss_causal(
                            layer, x_code, y_code, ids,
                            samples_per_action=config.train.train_samples_per_action,
                            generator=sample_gen,
                        )
                total = total_ct_loss(mode, parts, config.weights)
                record = {
                    "step": step,
                    "mode": mode,
                    "epoch": epoch,
                    **{k: float(v.detach()) for k, v in parts.items()},
                    "total": float(total.detach()),
                }
                if not torch.isfinite(total):
                    dump = dump_nan_diagnostics(run_dir, "ct", step, record)
                    raise RuntimeError(f"non-finite transition loss at step {step}; dump at {dump}")
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                log.write(record)
                step += 1
                if config.train.max_steps and step >= config.train.max_steps:
                    stop = True
                    break
            checkpoint({"epoch": epoch, "steps": step})
            if stop:
                break
            if config.train.eval_every and (epoch + 1) % config.train.eval_every == 0:
                action_acc, factor_acc = quick_attribution_accuracy(
                    layer, codes, val_records, quantizer, schema, probe_gen,
                )
                log.write({
                    "step": step, "mode": "val_probe", "epoch": epoch,
                    "val_action_accuracy": action_acc,
                    "val_factor_accuracy": factor_acc,
                })
                if factor_acc > best_factor_acc:
                    best_factor_acc = factor_acc
                    stale_probes = 0
                else:
                    stale_probes += 1
                    if config.train.early_stop_patience and stale_probes >= config.train.early_stop_patience:
                        break

    digest_after = state_dict_digest(mcqvae)
    if digest_after != digest_before:
        raise RuntimeError(
            "frozen autoencoder parameters changed during stage 2 "
            f"({digest_before[:12]} -> {digest_after[:12]})"
        )
    checkpoint({
        "steps": step,
        "frozen_verified": True,
        "mcqvae_digest_after": digest_after,
    })
    return ckpt_dir
