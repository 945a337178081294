"""Deterministic sprite renderer for factor-grid datasets.

Supported factor names: ``shape``, ``scale``, ``pos_x``, ``pos_y``, ``hue``.
Rendering is a pure function of (schema, factor values); the ``seed``
argument is recorded in dataset manifests for provenance but does not
perturb pixels, so generation is bit-reproducible by construction.
"""
from __future__ import annotations

import colorsys
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ctvae.schema import FactorSchema, ValidationError
from ctvae.datasets.store import ImageStore, quantize_pixels

SHAPE_NAMES = ("square", "disk", "triangle", "diamond", "cross")

SUPPORTED_FACTORS = ("shape", "scale", "pos_x", "pos_y", "hue")


def _radius_range(schema: FactorSchema) -> Tuple[float, float]:
    min_dim = min(schema.image_size)
    return max(2.0, round(min_dim * 0.09)), round(min_dim * 0.25)


def _scale_radii(schema: FactorSchema, card: int) -> np.ndarray:
    r_min, r_max = _radius_range(schema)
    radii = np.round(np.linspace(r_min, r_max, card))
    if len(set(radii.tolist())) != card:
        raise ValidationError(
            f"scale cardinality {card} too large for image size {schema.image_size}"
        )
    return radii


def _positions(extent: int, r_max: float, card: int) -> np.ndarray:
    lo, hi = r_max, extent - 1 - r_max
    if hi - lo + 1 < card:
        raise ValidationError(
            f"position cardinality {card} too large for extent {extent} at radius {r_max}"
        )
    return np.round(np.linspace(lo, hi, card))


def _shape_mask(kind: str, dx: np.ndarray, dy: np.ndarray, r: float) -> np.ndarray:
    if kind == "square":
        return (np.abs(dx) <= r * 0.9) & (np.abs(dy) <= r * 0.9)
    if kind == "disk":
        return dx * dx + dy * dy <= r * r
    if kind == "triangle":
        # upward triangle: apex at (0, -r), base at y = +r
        return (dy <= r) & (np.abs(dx) <= (dy + r) * 0.5)
    if kind == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if kind == "cross":
        arm = max(1.0, r / 3.0)
        inside = (np.abs(dx) <= r) & (np.abs(dy) <= r)
        return inside & ((np.abs(dx) <= arm) | (np.abs(dy) <= arm))
    raise ValidationError(f"unknown shape kind {kind!r}")


def render_synthetic(schema: FactorSchema, factors: Sequence[int], seed: int = 0) -> np.ndarray:
    """Render one image for a factor combination.

    Returns a float32 array of shape ``(H, W, C)`` in [0, 1]. Identical
    inputs yield bit-identical pixels.
    """
    values = schema.validate_values(factors)
    by_name: Dict[str, int] = dict(zip(schema.names, values))
    for name in schema.names:
        if name not in SUPPORTED_FACTORS:
            raise ValidationError(
                f"renderer does not support factor {name!r}; supported: {SUPPORTED_FACTORS}"
            )
    if "hue" in by_name and schema.channels != 3:
        raise ValidationError("hue factor requires a 3-channel schema")

    h, w = schema.image_size
    cards = dict(zip(schema.names, schema.cardinalities))
    _, r_max = _radius_range(schema)

    if "scale" in by_name:
        r = float(_scale_radii(schema, cards["scale"])[by_name["scale"]])
    else:
        r = round((sum(_radius_range(schema))) / 2.0)

    cx = float(_positions(w, r_max, cards["pos_x"])[by_name["pos_x"]]) if "pos_x" in by_name else (w - 1) / 2.0
    cy = float(_positions(h, r_max, cards["pos_y"])[by_name["pos_y"]]) if "pos_y" in by_name else (h - 1) / 2.0

    kind = SHAPE_NAMES[by_name["shape"]] if "shape" in by_name else "square"
    if "shape" in by_name and cards["shape"] > len(SHAPE_NAMES):
        raise ValidationError(f"shape cardinality limited to {len(SHAPE_NAMES)}")

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    mask = _shape_mask(kind, xs - cx, ys - cy, r)

    if schema.channels == 1:
        img = mask.astype(np.float32)[..., None]
    else:
        # evenly spaced hue steps so adjacent values stay visually gradual
        hue = by_name["hue"] / cards["hue"] if "hue" in by_name else 0.0
        rgb = np.array(colorsys.hsv_to_rgb(hue, 1.0, 1.0), dtype=np.float32)
        img = mask.astype(np.float32)[..., None] * rgb[None, None, :]
    return quantize_pixels(img)


def render_all(schema: FactorSchema, seed: int = 0) -> ImageStore:
    """Render every factor combination of the schema into an ImageStore."""
    h, w = schema.image_size
    images = np.zeros((schema.num_combinations, h, w, schema.channels), dtype=np.float32)
    for values in schema.iter_combinations():
        images[schema.combination_index(values)] = render_synthetic(schema, values, seed)
    return ImageStore.from_float(schema, images)


def bounding_box(img: np.ndarray) -> Optional[Tuple[int, int, int, int]]:
    """(row_min, row_max, col_min, col_max) of nonzero pixels, or None if blank."""
    flat = np.asarray(img)
    if flat.ndim == 3:
        flat = flat.max(axis=2)
    rows = np.flatnonzero(flat.max(axis=1))
    cols = np.flatnonzero(flat.max(axis=0))
    if rows.size == 0:
        return None
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


_ORACLE_CACHE: Dict[str, Tuple[FactorSchema, np.ndarray, list]] = {}


def classify_factors(img: np.ndarray, schema: FactorSchema) -> tuple[int, ...]:
    """Pixel-level oracle: nearest rendered combination in pixel space.

    Independent of any learned model; used to read factor values back out
    of generated images.
    """
    key = schema.content_hash()
    if key not in _ORACLE_CACHE:
        store = render_all(schema)
        combos = list(schema.iter_combinations())
        flat = store.float_block().reshape(schema.num_combinations, -1)
        _ORACLE_CACHE[key] = (schema, flat, combos)
    _, flat, combos = _ORACLE_CACHE[key]
    target = np.asarray(img, dtype=np.float32).reshape(1, -1)
    if target.shape[1] != flat.shape[1]:
        raise ValidationError(
            f"image size {target.shape[1]} does not match schema pixels {flat.shape[1]}"
        )
    d = ((flat - target) ** 2).sum(axis=1)
    return combos[int(np.argmin(d))]
