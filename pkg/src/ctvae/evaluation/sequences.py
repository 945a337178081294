"""Attribution accuracy against multi-step ground-truth transitions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from ctvae.schema import ActionSpec, FactorSchema, action_index, action_set
from ctvae.datasets.synthetic import render_synthetic
from ctvae.training.checkpoint import Bundle


@dataclass
class SequenceCurve:
    """Accuracy of single-step attribution when the pair is s steps apart.

    Steps whose composed factor value leaves the schema for every base image
    are dropped and counted in ``dropped``.
    """

    action_label: str
    steps: list = field(default_factory=list)  # step numbers with survivors
    action_accuracy: list = field(default_factory=list)
    factor_accuracy: list = field(default_factory=list)
    survivors: list = field(default_factory=list)
    dropped: dict = field(default_factory=dict)  # step -> dropped base count

    def to_dict(self) -> dict:
        return {
            "action": self.action_label,
            "steps": self.steps,
            "action_accuracy": self.action_accuracy,
            "factor_accuracy": self.factor_accuracy,
            "survivors": self.survivors,
            "dropped": self.dropped,
        }

    def accuracy_at(self, step: int) -> float:
        return self.action_accuracy[self.steps.index(step)]


def eval_repeated_actions(
    bundle: Bundle,
    base_factors: Sequence[tuple],
    action: ActionSpec,
    num_steps: int,
    seed: int = 0,
) -> SequenceCurve:
    """Attribute (X, Y_s) for s = 1..num_steps, where Y_s is the rendered
    ground truth after applying the action s times."""
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if action.is_null:
        raise ValueError("repeated evaluation needs a real action")
    layer = bundle.require_ct()
    schema = bundle.schema
    f = action.factor_index
    card = schema.cardinalities[f]
    true_id = action_index(schema, action)
    actions = action_set(schema)
    generator = torch.Generator().manual_seed(seed)

    curve = SequenceCurve(action_label=action.label(schema))
    any_survivor = False
    for s in range(1, num_steps + 1):
        kept, targets = [], []
        for values in base_factors:
            values = schema.validate_values(values)
            target = values[f] + s * action.direction
            if 0 <= target < card:
                kept.append(values)
                targets.append(values[:f] + (target,) + values[f + 1:])
        curve.dropped[s] = len(base_factors) - len(kept)
        if not kept:
            continue
        any_survivor = True
        x_imgs = np.stack([render_synthetic(schema, v) for v in kept])
        y_imgs = np.stack([render_synthetic(schema, v) for v in targets])
        with torch.no_grad():
            x = bundle.encode_image(x_imgs)
            y = bundle.encode_image(y_imgs)
            result = layer.attribute_action(x, y, generator=generator)
        chosen = result.chosen.numpy()
        action_acc = float((chosen == true_id).mean())
        factor_acc = float(np.mean([actions[c].factor_index == f for c in chosen]))
        curve.steps.append(s)
        curve.action_accuracy.append(action_acc)
        curve.factor_accuracy.append(factor_acc)
        curve.survivors.append(len(kept))
    if not any_survivor:
        raise ValueError(
            f"no base image supports even one step of {action.label(schema)}; "
            f"factor cardinality is {card}"
        )
    return curve
