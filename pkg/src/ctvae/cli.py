"""Operator entry points; flags are documented in docs/cli.md.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ctvae.schema import ActionSpec, ValidationError, action_set
from ctvae.datasets import export_synthetic, load_export, render_all
from ctvae.datasets.synthetic import render_synthetic
from ctvae.training import RunConfig, load_bundle, run_ct_training, run_pretrain
from ctvae.training.config import parse_schema_spec


class UsageError(ValueError):
    """Bad flag values or malformed inputs (exit code 2)."""


def ctvae_home() -> Path:
    return Path(os.environ.get("CTVAE_HOME", "ctvae_home"))


@contextmanager
def run_lock(run_dir: Path):
    """One writer per run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / "lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"run directory {run_dir} is locked by another writer ({lock})")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def revision_string() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_run_manifest(run_dir: Path, config: RunConfig, dataset_hash: str) -> None:
    config_blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    manifest = {
        "run_id": hashlib.sha256(config_blob + dataset_hash.encode()).hexdigest()[:16],
        "config_hash": hashlib.sha256(config_blob).hexdigest(),
        "dataset_hash": dataset_hash,
        "revision": revision_string(),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    (Path(run_dir) / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_image(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        arr = np.asarray(Image.open(path))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr.astype(np.float32) / 255.0


def build_config(args) -> RunConfig:
    if getattr(args, "config", None):
        config = RunConfig.from_yaml(args.config)
    else:
        config = RunConfig()
    overrides = dict(kv.split("=", 1) for kv in (getattr(args, "set", None) or []))
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("train.seed", str(args.seed))
    if overrides:
        try:
            config = config.with_overrides(overrides)
        except (ValueError, TypeError) as exc:
            raise UsageError(str(exc)) from exc
    return config


def emit(args, payload: dict, human: str = "") -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human or json.dumps(payload, indent=2, sort_keys=True))


def cmd_make_data(args) -> int:
    try:
        schema = parse_schema_spec(args.schema, image_size=args.image_size, channels=args.channels)
    except (ValueError, ValidationError) as exc:
        raise UsageError(f"bad schema {args.schema!r}: {exc}") from exc
    store = render_all(schema, seed=args.seed)
    out = Path(args.out)
    export_synthetic(store, out, seed=args.seed)
    emit(args, {
        "out": str(out),
        "images": schema.num_combinations,
        "dataset_hash": store.content_hash(),
    }, f"wrote {schema.num_combinations} images to {out}")
    return 0


def cmd_pretrain(args) -> int:
    config = build_config(args)
    run_dir = Path(args.run_dir) if args.run_dir else ctvae_home() / "runs" / "default"
    _, store, _ = load_export(Path(args.data))
    with run_lock(run_dir):
        write_run_manifest(run_dir, config, store.content_hash())
        ckpt = run_pretrain(config, Path(args.data), run_dir)
    emit(args, {"checkpoint": str(ckpt)}, f"stage-1 checkpoint at {ckpt}")
    return 0


def cmd_train_ct(args) -> int:
    config = build_config(args)
    run_dir = Path(args.run_dir) if args.run_dir else ctvae_home() / "runs" / "default"
    stage1 = Path(args.stage1) if args.stage1 else run_dir / "stage1"
    _, store, _ = load_export(Path(args.data))
    with run_lock(run_dir):
        write_run_manifest(run_dir, config, store.content_hash())
        ckpt = run_ct_training(
            config, Path(args.data), run_dir, stage1,
            masked=False if args.no_mask else None,
        )
    emit(args, {"checkpoint": str(ckpt)}, f"stage-2 checkpoint at {ckpt}")
    return 0


def _load_records(bundle, data_dir: Path, split: str):
    from ctvae.datasets import build_transitions
    from ctvae.datasets.transitions import split_of_combination

    schema, store, _ = load_export(data_dir)
    if schema.content_hash() != bundle.schema.content_hash():
        raise RuntimeError("dataset schema does not match the checkpoint")
    records = [
        r for r in build_transitions(schema, store)
        if split_of_combination(r.x_factors) == split
    ]
    return records


def cmd_eval(args) -> int:
    from ctvae.evaluation import eval_causal_accuracy, eval_repeated_actions

    bundle = load_bundle(Path(args.checkpoint))
    if args.mode == "causal":
        records = _load_records(bundle, Path(args.data), args.split)
        report = eval_causal_accuracy(
            bundle, records, samples_per_action=args.samples, seed=args.seed,
        )
        payload = report.to_dict()
        lines = [f"action accuracy {report.action_accuracy:.3f}  "
                 f"factor accuracy {report.factor_accuracy:.3f}  n={report.num_records}"]
        for label, stats in sorted(payload["per_action"].items()):
            lines.append(
                f"  {label:<14} action {stats['action_accuracy']:.3f} "
                f"factor {stats['factor_accuracy']:.3f} (n={stats['count']})"
            )
        emit(args, payload, "\n".join(lines))
    else:
        bundle.require_ct()
        action = ActionSpec.parse(args.action, bundle.schema)
        bases = [v for v in bundle.schema.iter_combinations()]
        curve = eval_repeated_actions(bundle, bases[: args.limit], action, args.steps, seed=args.seed)
        payload = curve.to_dict()
        emit(args, payload, json.dumps(payload, indent=2))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_intervene(args) -> int:
    from ctvae.evaluation import apply_action_to_codes

    bundle = load_bundle(Path(args.checkpoint))
    bundle.require_ct()
    try:
        action = ActionSpec.parse(args.action, bundle.schema)
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc
    if args.image:
        image = load_image(Path(args.image))
    elif args.factors:
        values = [int(v) for v in args.factors.split(",")]
        image = render_synthetic(bundle.schema, values)
    else:
        raise UsageError("provide --image or --factors")

    import torch

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    generator = torch.Generator().manual_seed(args.seed)
    code = bundle.encode_image(image)
    paths = []
    from PIL import Image as PilImage

    def save(img: np.ndarray, name: str) -> None:
        arr = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
        pil = PilImage.fromarray(arr[..., 0], mode="L") if arr.shape[-1] == 1 else PilImage.fromarray(arr)
        path = out_dir / name
        pil.save(path)
        paths.append(str(path))

    save(bundle.decode_grid(code)[0], "step_0.png")
    changes = []
    for step in range(1, args.steps + 1):
        code, stats = apply_action_to_codes(bundle, code, action, generator)
        changes.append(stats["changed_nodes"])
        save(bundle.decode_grid(code)[0], f"step_{step}.png")
    emit(args, {"images": paths, "changed_nodes": changes},
         "\n".join(paths))
    return 0


def cmd_attribute(args) -> int:
    bundle = load_bundle(Path(args.checkpoint))
    layer = bundle.require_ct()
    x = load_image(Path(args.x))
    y = load_image(Path(args.y))
    if x.shape != y.shape:
        raise UsageError(f"image shapes differ: {x.shape} vs {y.shape}")

    import torch

    generator = torch.Generator().manual_seed(args.seed)
    with torch.no_grad():
        result = layer.attribute_action(
            bundle.encode_image(x), bundle.encode_image(y),
            samples_per_action=args.samples, generator=generator,
        )
    actions = bundle.actions
    labels = [actions[c].label(bundle.schema) for c in result.candidates]
    q = result.q[0].tolist()
    scores = result.scores[0].tolist()
    payload = {
        "q": dict(zip(labels, q)),
        "scores": dict(zip(labels, scores)),
        "chosen": labels[int(result.chosen[0])],
        "q_sum": float(sum(q)),
    }
    human = "\n".join(
        [f"chosen: {payload['chosen']}"]
        + [f"  {l:<14} q={v:.4f}" for l, v in sorted(payload["q"].items(), key=lambda kv: -kv[1])]
    )
    emit(args, payload, human)
    return 0


def cmd_export(args) -> int:
    from ctvae.evaluation import export_intervention_grid, export_structure_maps

    bundle = load_bundle(Path(args.checkpoint))
    bundle.require_ct()
    schema, store, _ = load_export(Path(args.data))
    if schema.content_hash() != bundle.schema.content_hash():
        raise RuntimeError("dataset schema does not match the checkpoint")
    out_dir = Path(args.out)
    rng = np.random.default_rng(args.seed)
    combos = list(schema.iter_combinations())
    batch = np.stack([
        store.image(combos[i]) for i in rng.choice(len(combos), size=min(64, len(combos)), replace=False)
    ])
    outputs = {}
    if args.what in ("structure", "all"):
        outputs["structure"] = str(export_structure_maps(bundle, batch, out_dir, seed=args.seed))
    if args.what in ("grid", "all"):
        image = store.image(combos[int(rng.integers(len(combos)))])
        actions = [ActionSpec(None, None)] + action_set(schema)
        outputs["grid"] = str(export_intervention_grid(
            bundle, image, actions, repeats=args.repeats, out_dir=out_dir, seed=args.seed,
        ))
    emit(args, outputs, "\n".join(f"{k}: {v}" for k, v in outputs.items()))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from ctvae.service.app import create_app

    app = create_app(Path(args.checkpoint))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctvae")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="render a synthetic factor-grid dataset")
    p.add_argument("--schema", default="shape:3,scale:3,pos_x:8,pos_y:8")
    p.add_argument("--image-size", type=int, nargs=2, default=(32, 32))
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_make_data)

    for name, fn in (("pretrain", cmd_pretrain), ("train-ct", cmd_train_ct)):
        p = sub.add_parser(name, help=f"run {name} stage")
        p.add_argument("--config")
        p.add_argument("--data", required=True)
        p.add_argument("--run-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE")
        p.add_argument("--json", action="store_true")
        if name == "train-ct":
            p.add_argument("--stage1")
            p.add_argument("--no-mask", action="store_true",
                           help="train the ablated variant without intervention gating")
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="accuracy tables or repeated-action curves")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("causal", "sequences"), default="causal")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--action", default="pos_x:+")
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--limit", type=int, default=64)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("intervene", help="apply an action repeatedly and save images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image")
    p.add_argument("--factors", help="comma-separated factor values to render")
    p.add_argument("--action", required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_intervene)

    p = sub.add_parser("attribute", help="recover the action behind an image pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("export", help="write structure heatmaps / intervention grids")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--what", choices=("structure", "grid", "all"), default="all")
    p.add_argument("--repeats", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="start the JSON inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError,) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
