"""Transition tables and batch iteration for training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ctvae.schema import FactorSchema, action_index, ActionSpec
from ctvae.datasets.store import ImageStore
from ctvae.datasets.transitions import split_of_combination


def transition_table(schema: FactorSchema) -> np.ndarray:
    """(n_records, 3) int array of (x_combo, y_combo, action_id)."""
    rows = []
    for values in schema.iter_combinations():
        x_idx = schema.combination_index(values)
        for f in schema.actionable_factors:
            card = schema.cardinalities[f]
            for direction in (+1, -1):
                target = values[f] + direction
                if not 0 <= target < card:
                    continue
                y_values = values[:f] + (target,) + values[f + 1:]
                rows.append((
                    x_idx,
                    schema.combination_index(y_values),
                    action_index(schema, ActionSpec(f, direction)),
                ))
    return np.asarray(rows, dtype=np.int64)


def split_table(schema: FactorSchema, table: np.ndarray) -> dict[str, np.ndarray]:
    """Assign records to train/val/test by their endpoint combinations.

    Training records touch only training combinations; validation and test
    records are keyed by their input combination.
    """
    combo_split = {}
    for values in schema.iter_combinations():
        combo_split[schema.combination_index(values)] = split_of_combination(values)
    x_split = np.array([combo_split[int(x)] for x in table[:, 0]])
    y_split = np.array([combo_split[int(y)] for y in table[:, 1]])
    return {
        "train": table[(x_split == "train") & (y_split == "train")],
        "val": table[x_split == "val"],
        "test": table[x_split == "test"],
    }


@dataclass
class TrainingData:
    schema: FactorSchema
    images: torch.Tensor  # (num_combinations, C, H, W) float32
    splits: dict[str, np.ndarray]

    @classmethod
    def from_store(cls, store: ImageStore) -> "TrainingData":
        if not store.complete:
            raise ValueError("training needs an image for every factor combination")
        schema = store.schema
        block = store.float_block()  # ordered by combination index
        images = torch.from_numpy(block).permute(0, 3, 1, 2).contiguous()
        table = transition_table(schema)
        return cls(schema=schema, images=images, splits=split_table(schema, table))

    def image_batch(self, combo_indices: np.ndarray) -> torch.Tensor:
        return self.images[torch.from_numpy(np.asarray(combo_indices, dtype=np.int64))]


def batch_iterator(rng: np.random.Generator, n: int, batch_size: int):
    """Yield seeded shuffled index batches covering 0..n-1 once."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
