"""Stage 1: train the quantized autoencoder on reconstruction."""
from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
import torch

from ctvae.datasets.export import load_export
from ctvae.mcqvae.model import McqVae
from ctvae.mcqvae.losses import vq_losses
from ctvae.training.config import RunConfig
from ctvae.training.checkpoint import save_checkpoint
from ctvae.training.data import TrainingData, batch_iterator
from ctvae.training.metrics import MetricsWriter


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def dump_nan_diagnostics(run_dir: Path, stage: str, step: int, record: dict) -> Path:
    path = Path(run_dir) / f"nan_dump_{stage}_{step}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=str))
    return path


def run_pretrain(config: RunConfig, dataset_dir: Path, run_dir: Path) -> Path:
    """Train stage 1 and return the checkpoint directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    schema, store, _ = load_export(dataset_dir)

    seed_everything(config.train.seed)
    mc_cfg = config.mcqvae_config(schema)
    model = McqVae(mc_cfg)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.train.pretrain_lr)

    data = TrainingData.from_store(store)
    train_combos = np.unique(
        np.concatenate([data.splits["train"][:, 0], data.splits["train"][:, 1]])
    )
    rng = np.random.default_rng(config.train.seed)
    commitment = config.train.commitment_weight_pretrain

    # codebooks start on real encoder output so no single row swallows the batch
    seed_batch = data.image_batch(train_combos[: config.train.batch_size])
    with torch.no_grad():
        model.quantizer.init_from_samples(
            model.encoder(seed_batch),
            generator=torch.Generator().manual_seed(config.train.seed),
        )

    ckpt_dir = run_dir / "stage1"
    step = 0
    save_checkpoint(
        ckpt_dir, "pretrain", schema, model, None, config.weights,
        extra={"epoch": -1, "steps": 0, "seed": config.train.seed},
    )
    with MetricsWriter(run_dir / "pretrain_metrics.ndjson") as log:
        for epoch in range(config.train.pretrain_epochs):
            for batch in batch_iterator(rng, len(train_combos), config.train.batch_size):
                images = data.image_batch(train_combos[batch])
                recon, code, feats = model(images)
                report = vq_losses(feats, code, recon, images, model.quantizer, commitment)
                total = report.total()
                record = {
                    "step": step,
                    "stage": "pretrain",
                    "epoch": epoch,
                    **report.to_dict(),
                    "total": float(total.detach()),
                }
                if not torch.isfinite(total):
                    dump = dump_nan_diagnostics(run_dir, "pretrain", step, record)
                    raise RuntimeError(f"non-finite pretrain loss at step {step}; dump at {dump}")
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                log.write(record)
                step += 1
            save_checkpoint(
                ckpt_dir, "pretrain", schema, model, None, config.weights,
                extra={"epoch": epoch, "steps": step, "seed": config.train.seed},
            )
    return ckpt_dir
