"""Transition-pair construction over a factor grid."""
from __future__ import annotations

import hashlib
from typing import Dict, Iterator, Sequence

from ctvae.schema import ActionSpec, FactorSchema, TransitionRecord
from ctvae.datasets.store import ImageStore, IngestError


def build_transitions(schema: FactorSchema, store: ImageStore) -> Iterator[TransitionRecord]:
    """Emit one record per ordered pair of factor vectors one step apart.

    Both directions are emitted; factor extremes have no wraparound, so an
    increment at the top value simply produces no record.
    """
    for values in schema.iter_combinations():
        if not store.has(values):
            raise IngestError(f"no image for factor combination {values}")
        x_img = store.image(values)
        for f, card in enumerate(schema.cardinalities):
            for direction in (+1, -1):
                target = values[f] + direction
                if not 0 <= target < card:
                    continue
                y_values = values[:f] + (target,) + values[f + 1:]
                yield TransitionRecord(
                    x_image=x_img,
                    y_image=store.image(y_values),
                    action=ActionSpec(f, direction),
                    x_factors=values,
                    y_factors=y_values,
                )


def per_action_counts(schema: FactorSchema) -> Dict[ActionSpec, int]:
    """Closed-form record count per action: (card_f - 1) * prod of the others."""
    counts: Dict[ActionSpec, int] = {}
    total = schema.num_combinations
    for f, card in enumerate(schema.cardinalities):
        n = (card - 1) * (total // card)
        counts[ActionSpec(f, +1)] = n
        counts[ActionSpec(f, -1)] = n
    return counts


def transition_count(schema: FactorSchema) -> int:
    return sum(per_action_counts(schema).values())


def split_of_combination(values: Sequence[int], salt: str = "ctvae-split-v1") -> str:
    """Stable 90/5/5 split by factor-combination hash (platform independent)."""
    key = salt + ":" + ",".join(str(v) for v in values)
    bucket = int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big") % 100
    if bucket < 90:
        return "train"
    if bucket < 95:
        return "val"
    return "test"
