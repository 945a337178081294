"""Directory export format: manifest.json + factors.csv + one PNG per image."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from ctvae.schema import FactorSchema
from ctvae.datasets.store import ImageStore, IngestError

EXPORT_VERSION = 1


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(img, dtype=np.float32) * 255.0).astype(np.uint8)


def export_synthetic(store: ImageStore, out_dir: Path, seed: int = 0) -> Path:
    """Write the store to ``out_dir`` in the manifest/csv/png layout."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = store.schema

    manifest = {"version": EXPORT_VERSION, "seed": seed, "schema": schema.to_dict()}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    with open(out_dir / "factors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *schema.names])
        for values in schema.iter_combinations():
            idx = schema.combination_index(values)
            writer.writerow([idx, *values])
            arr = _to_uint8(store.image(values))
            if schema.channels == 1:
                pil = Image.fromarray(arr[..., 0], mode="L")
            else:
                pil = Image.fromarray(arr, mode="RGB")
            pil.save(out_dir / f"{idx:05d}.png")
    return out_dir


def load_export(path: Path) -> tuple[FactorSchema, ImageStore, int]:
    """Load a directory written by :func:`export_synthetic`.

    Returns (schema, store, seed). Raises IngestError on any structural
    mismatch; never returns a partial store.
    """
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise IngestError(f"{path} has no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
        schema = FactorSchema.from_dict(manifest["schema"])
        version = int(manifest["version"])
        seed = int(manifest["seed"])
    except (KeyError, ValueError, TypeError) as exc:
        raise IngestError(f"malformed manifest.json: {exc}") from exc
    if version != EXPORT_VERSION:
        raise IngestError(f"unsupported export version {version}")

    h, w = schema.image_size
    pixels = np.zeros((schema.num_combinations, h, w, schema.channels), dtype=np.uint8)
    seen = np.zeros(schema.num_combinations, dtype=bool)
    with open(path / "factors.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["index", *schema.names]:
            raise IngestError(f"factors.csv header {header} does not match schema")
        for row in reader:
            idx = int(row[0])
            values = schema.validate_values([int(v) for v in row[1:]])
            if idx != schema.combination_index(values):
                raise IngestError(f"row index {idx} does not match factors {values}")
            png = path / f"{idx:05d}.png"
            if not png.exists():
                raise IngestError(f"missing image file for combination {values}")
            arr = np.asarray(Image.open(png))
            if arr.ndim == 2:
                arr = arr[..., None]
            if arr.shape != (h, w, schema.channels):
                raise IngestError(f"image {png.name} has shape {arr.shape}")
            pixels[idx] = arr
            seen[idx] = True
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise IngestError(f"export is missing combination index {missing}")
    return schema, ImageStore(schema, pixels), seed
