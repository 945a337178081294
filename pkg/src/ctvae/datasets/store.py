"""Immutable image store keyed by factor combination."""
from __future__ import annotations

import hashlib
from typing import Optional, Sequence

import numpy as np

from ctvae.schema import FactorSchema


class IngestError(RuntimeError):
    """Raised when an archive or export cannot be loaded consistently."""


class ImageStore:
    """All images of a dataset, indexed by factor combination.

    Pixels are held as uint8 (256 levels) and exposed as float32 in
    ``[0, 1]``, so lossless 8-bit round trips are exact. Only the
    combinations actually present are materialized; the store is immutable
    after construction.
    """

    def __init__(self, schema: FactorSchema, pixels: np.ndarray,
                 combination_indices: Optional[np.ndarray] = None):
        h, w = schema.image_size
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        if pixels.ndim != 4 or pixels.shape[1:] != (h, w, schema.channels):
            raise IngestError(
                f"pixel array shape {pixels.shape} != (N, {h}, {w}, {schema.channels})"
            )
        if combination_indices is None:
            if pixels.shape[0] != schema.num_combinations:
                raise IngestError(
                    f"expected {schema.num_combinations} images, got {pixels.shape[0]}"
                )
            combination_indices = np.arange(schema.num_combinations, dtype=np.int64)
        combination_indices = np.asarray(combination_indices, dtype=np.int64)
        if combination_indices.shape != (pixels.shape[0],):
            raise IngestError("one combination index required per image row")

        slots = np.full(schema.num_combinations, -1, dtype=np.int64)
        for row, idx in enumerate(combination_indices):
            if not 0 <= idx < schema.num_combinations:
                raise IngestError(f"combination index {idx} out of range")
            if slots[idx] != -1:
                raise IngestError(f"duplicate image for combination index {idx}")
            slots[idx] = row

        self.schema = schema
        self._pixels = pixels
        self._pixels.flags.writeable = False
        self._slots = slots

    @classmethod
    def from_float(cls, schema: FactorSchema, images: np.ndarray,
                   combination_indices: Optional[np.ndarray] = None) -> "ImageStore":
        pixels = np.round(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
        return cls(schema, pixels, combination_indices)

    def __len__(self) -> int:
        return self._pixels.shape[0]

    @property
    def complete(self) -> bool:
        return bool((self._slots >= 0).all())

    def has(self, values: Sequence[int]) -> bool:
        return self._slots[self.schema.combination_index(values)] >= 0

    def image(self, values: Sequence[int]) -> np.ndarray:
        idx = self.schema.combination_index(values)
        row = self._slots[idx]
        if row < 0:
            raise IngestError(f"no image for factor combination {tuple(values)}")
        return self._pixels[row].astype(np.float32) / 255.0

    def image_by_index(self, idx: int) -> np.ndarray:
        row = self._slots[idx]
        if row < 0:
            raise IngestError(f"no image for combination index {idx}")
        return self._pixels[row].astype(np.float32) / 255.0

    def float_block(self) -> np.ndarray:
        """All present images as float32, ordered by combination index."""
        present = np.flatnonzero(self._slots >= 0)
        return self._pixels[self._slots[present]].astype(np.float32) / 255.0

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        present = np.flatnonzero(self._slots >= 0)
        digest.update(present.tobytes())
        for idx in present:
            digest.update(self._pixels[self._slots[idx]].tobytes())
        return digest.hexdigest()


def quantize_pixels(img: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and snap to the 256-level grid used by the store."""
    img = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    return (np.round(img * 255.0) / 255.0).astype(np.float32)
