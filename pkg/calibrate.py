"""Desk-scale calibration: train and measure every acceptance gate.
Scratch script, not part of the package."""
import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

from ctvae.schema import DEFAULT_SCHEMA, ActionSpec, action_set, action_index
from ctvae.datasets import build_transitions, export_synthetic, render_all, classify_factors
from ctvae.datasets.transitions import split_of_combination
from ctvae.training import RunConfig, load_bundle, run_ct_training, run_pretrain
from ctvae.evaluation import (
    adjacency_diagonal_stats, apply_action_to_codes, eval_causal_accuracy,
    eval_repeated_actions,
)

WORK = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/calib")
CT_EPOCHS = int(sys.argv[2]) if len(sys.argv) > 2 else 40
PRETRAIN_EPOCHS = int(sys.argv[3]) if len(sys.argv) > 3 else 40

config = RunConfig.from_dict({
    "data": {"schema": "shape:3,scale:3,pos_x:8,pos_y:8", "image_size": [32, 32], "channels": 1},
    "mcqvae": {"hidden": 64, "embedding_dim": 128, "num_codebooks": 1, "codebook_size": 64},
    "ct": {"pair_hidden": 64, "gnn_hidden": 64, "samples_per_action": 4},
    "train": {"seed": 0, "batch_size": 64, "pretrain_epochs": PRETRAIN_EPOCHS,
              "pretrain_lr": 1e-3, "ct_epochs": CT_EPOCHS, "ct_lr": 3e-4, "eval_every": 5},
})

WORK.mkdir(parents=True, exist_ok=True)
data_dir = WORK / "data"
if not (data_dir / "manifest.json").exists():
    export_synthetic(render_all(DEFAULT_SCHEMA, seed=0), data_dir, seed=0)

run_dir = WORK / "run"
t0 = time.time()
stage1 = run_dir / "stage1"
if not (stage1 / "weights.pt").exists():
    stage1 = run_pretrain(config, data_dir, run_dir)
    print(f"[calib] pretrain done in {time.time()-t0:.1f}s", flush=True)

# recon quality + pixel-oracle round trip
bundle1 = load_bundle(stage1)
store = render_all(DEFAULT_SCHEMA, seed=0)
combos = list(DEFAULT_SCHEMA.iter_combinations())
test_combos = [v for v in combos if split_of_combination(v) == "test"]
imgs = np.stack([store.image(v) for v in test_combos])
codes = bundle1.encode_image(imgs)
recon = bundle1.decode_grid(codes)
mae = float(np.abs(recon - imgs).mean())
oracle_ok = np.mean([classify_factors(recon[i], DEFAULT_SCHEMA) == test_combos[i]
                     for i in range(len(test_combos))])
print(f"[calib] recon MAE={mae:.4f} oracle-roundtrip={oracle_ok:.3f} on {len(test_combos)} held-out", flush=True)
used = len(np.unique(codes.indices.numpy()))
print(f"[calib] codebook usage: {used}/64", flush=True)

t0 = time.time()
stage2 = run_dir / "stage2"
if not (stage2 / "weights.pt").exists() or "--retrain" in sys.argv:
    stage2 = run_ct_training(config, data_dir, run_dir, stage1)
    print(f"[calib] ct training done in {time.time()-t0:.1f}s", flush=True)
bundle = load_bundle(stage2)
layer = bundle.require_ct()

# gate 5: identity accuracy + diagonal dominance
all_imgs = np.stack([store.image(v) for v in combos])
code_all = bundle.encode_image(all_imgs)
gen = torch.Generator().manual_seed(0)
ids = torch.full((code_all.batch,), -1, dtype=torch.long)
with torch.no_grad():
    graph = layer.discover_structure(code_all, ids, generator=gen, mask_mode="threshold")
    pred = layer.infer_transition(code_all, ids, graph.adjacency, gen)
agree = float((pred.predicted_flat() == code_all.flat_indices()).float().mean())
stats = adjacency_diagonal_stats(graph.probs.mean(dim=0).numpy())
print(f"[calib] GATE5 identity acc={agree:.4f} diag={stats['mean_diagonal']:.3f} "
      f"off={stats['mean_off_diagonal']:.3f} gap={stats['mean_diagonal']-stats['mean_off_diagonal']:.3f}", flush=True)

# gate 7: attribution accuracy on held-out
records = [r for r in build_transitions(DEFAULT_SCHEMA, store)
           if split_of_combination(r.x_factors) == "test"]
report = eval_causal_accuracy(bundle, records, seed=0)
print(f"[calib] GATE7 action={report.action_accuracy:.3f} factor={report.factor_accuracy:.3f} "
      f"n={report.num_records}", flush=True)
for label, s in sorted(report.per_action.items()):
    print(f"        {label:<10} a={s['action_accuracy']:.2f} f={s['factor_accuracy']:.2f} n={s['count']}", flush=True)

# gate 6: intervention atomicity on held-out images
actions = action_set(DEFAULT_SCHEMA)
per_action_ok = {}
for action in actions:
    f, d = action.factor_index, action.direction
    ok = total = 0
    applicable = [v for v in test_combos if 0 <= v[f] + d < DEFAULT_SCHEMA.cardinalities[f]]
    x = bundle.encode_image(np.stack([store.image(v) for v in applicable]))
    gen = torch.Generator().manual_seed(1)
    new_code, _ = apply_action_to_codes(bundle, x, action, gen, samples=1)
    out = bundle.decode_grid(new_code)
    for i, v in enumerate(applicable):
        got = classify_factors(out[i], DEFAULT_SCHEMA)
        want = v[:f] + (v[f] + d,) + v[f+1:]
        ok += got == want
        total += 1
    per_action_ok[action.label(DEFAULT_SCHEMA)] = ok / total
    print(f"[calib] GATE6 {action.label(DEFAULT_SCHEMA):<10} atomicity={ok/total:.3f} (n={total})", flush=True)
print(f"[calib] GATE6 aggregate={np.mean(list(per_action_ok.values())):.3f} min={min(per_action_ok.values()):.3f}", flush=True)

# gate 8: repeated actions, pos factors
bases = [v for v in combos if split_of_combination(v) == "test"]
for fname in ("pos_x", "pos_y"):
    fi = DEFAULT_SCHEMA.names.index(fname)
    curve = eval_repeated_actions(bundle, bases, ActionSpec(fi, +1), num_steps=8, seed=0)
    print(f"[calib] GATE8 {fname}:+ steps={curve.steps} acc={[round(a,2) for a in curve.action_accuracy]}", flush=True)

print("[calib] done", flush=True)
