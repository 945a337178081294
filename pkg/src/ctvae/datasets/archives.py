"""Ingestion of the published dSprites / Shapes3D container layouts.

Field-by-field documentation of both layouts lives in docs/datasets.md.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from ctvae.schema import FactorSchema
from ctvae.datasets.store import ImageStore, IngestError

DSPRITES_FACTOR_NAMES = ("color", "shape", "scale", "orientation", "pos_x", "pos_y")
SHAPES3D_FACTOR_NAMES = ("floor_hue", "wall_hue", "object_hue", "scale", "shape", "orientation")


def _resize_batch(images: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Resize (N, H, W[, C]) uint8 images to (N, h, w, C) uint8."""
    h, w = size
    if images.ndim == 3:
        images = images[..., None]
    n, src_h, src_w, c = images.shape
    if (src_h, src_w) == (h, w):
        return np.ascontiguousarray(images)
    out = np.zeros((n, h, w, c), dtype=np.uint8)
    for i in range(n):
        arr = images[i, ..., 0] if c == 1 else images[i]
        pil = Image.fromarray(arr).resize((w, h), resample=Image.BILINEAR)
        resized = np.asarray(pil, dtype=np.uint8)
        out[i] = resized[..., None] if c == 1 else resized
    return out


def _assemble(schema: FactorSchema, classes: np.ndarray, pixels: np.ndarray) -> ImageStore:
    n = classes.shape[0]
    if pixels.shape[0] != n:
        raise IngestError(
            f"factor table has {n} rows but archive holds {pixels.shape[0]} images"
        )
    try:
        combo_idx = np.array(
            [schema.combination_index(classes[i]) for i in range(n)], dtype=np.int64
        )
    except Exception as exc:
        raise IngestError(f"factor table row outside schema: {exc}") from exc
    return ImageStore(schema, pixels, combo_idx)


def _ingest_dsprites(path: Path, image_size: Tuple[int, int]) -> tuple[FactorSchema, ImageStore]:
    import zipfile

    try:
        archive = np.load(path, allow_pickle=True, encoding="latin1")
    except (OSError, ValueError, EOFError, zipfile.BadZipFile) as exc:
        raise IngestError(f"cannot read dsprites archive {path}: {exc}") from exc
    try:
        imgs = archive["imgs"]
        classes = np.asarray(archive["latents_classes"], dtype=np.int64)
    except KeyError as exc:
        raise IngestError(f"dsprites archive missing array {exc}") from exc

    if classes.ndim != 2 or classes.shape[1] != len(DSPRITES_FACTOR_NAMES):
        raise IngestError(f"latents_classes has shape {classes.shape}, expected (N, 6)")

    sizes: Optional[np.ndarray] = None
    if "metadata" in archive.files:
        meta = archive["metadata"][()]
        if isinstance(meta, dict):
            raw = meta.get(b"latents_sizes", meta.get("latents_sizes"))
            if raw is not None:
                sizes = np.asarray(raw, dtype=np.int64)
    if sizes is None:
        sizes = classes.max(axis=0) + 1

    schema = FactorSchema(
        factors=tuple(zip(DSPRITES_FACTOR_NAMES, (int(s) for s in sizes))),
        image_size=image_size,
        channels=1,
    )
    # stored as 0/1 uint8 bitmaps
    images = _resize_batch(imgs.astype(np.uint8) * 255, image_size)
    return schema, _assemble(schema, classes, images)


def _ingest_shapes3d(path: Path, image_size: Tuple[int, int]) -> tuple[FactorSchema, ImageStore]:
    import h5py

    try:
        fh = h5py.File(path, "r")
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read shapes3d archive {path}: {exc}") from exc
    with fh:
        if "images" not in fh or "labels" not in fh:
            raise IngestError("shapes3d archive must hold 'images' and 'labels'")
        imgs = np.asarray(fh["images"])
        labels = np.asarray(fh["labels"])
    if labels.ndim != 2 or labels.shape[1] != len(SHAPES3D_FACTOR_NAMES):
        raise IngestError(f"labels has shape {labels.shape}, expected (N, 6)")

    # labels hold raw factor values; rank each column to recover class indices
    classes = np.zeros_like(labels, dtype=np.int64)
    sizes = []
    for col in range(labels.shape[1]):
        uniques = np.unique(labels[:, col])
        sizes.append(len(uniques))
        classes[:, col] = np.searchsorted(uniques, labels[:, col])

    schema = FactorSchema(
        factors=tuple(zip(SHAPES3D_FACTOR_NAMES, sizes)),
        image_size=image_size,
        channels=3,
    )
    images = _resize_batch(imgs.astype(np.uint8), image_size)
    return schema, _assemble(schema, classes, images)


def ingest_archive(path, layout: str, image_size: Tuple[int, int] = (64, 64)) -> tuple[FactorSchema, ImageStore]:
    """Load a published single-file archive into (schema, image store).

    ``layout`` selects the container convention: ``"dsprites"`` (npz with
    ``imgs``/``latents_classes``/``metadata``) or ``"shapes3d"`` (hdf5 with
    ``images``/``labels``). Images are rescaled to ``image_size`` with
    values in [0, 1].
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"archive {path} does not exist")
    if layout == "dsprites":
        return _ingest_dsprites(path, image_size)
    if layout == "shapes3d":
        return _ingest_shapes3d(path, image_size)
    raise IngestError(f"unknown archive layout {layout!r}; expected dsprites or shapes3d")
