"""Factor schemas, actions, and transition records shared across the package."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when a schema, factor vector, or action fails validation."""


@dataclass(frozen=True)
class FactorSchema:
    """Inventory of the labelled factors of variation for one dataset.

    ``factors`` is an ordered list of ``(name, cardinality)`` pairs; every
    image of the dataset corresponds to exactly one combination of factor
    values. Cardinality-1 factors are allowed (dSprites keeps a fixed color
    column) but admit no actions.
    """

    factors: tuple[tuple[str, int], ...]
    image_size: tuple[int, int] = (32, 32)
    channels: int = 1

    def __post_init__(self):
        names = [name for name, _ in self.factors]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate factor names: {names}")
        for name, card in self.factors:
            if card < 1:
                raise ValidationError(f"factor {name!r} needs cardinality >= 1, got {card}")
        if not any(card >= 2 for _, card in self.factors):
            raise ValidationError("schema needs at least one factor with cardinality >= 2")
        if self.channels not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.channels}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.factors)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(card for _, card in self.factors)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    @property
    def actionable_factors(self) -> tuple[int, ...]:
        """Indices of factors whose value can actually be stepped."""
        return tuple(i for i, (_, card) in enumerate(self.factors) if card >= 2)

    @property
    def num_combinations(self) -> int:
        out = 1
        for _, card in self.factors:
            out *= card
        return out

    def validate_values(self, values: Sequence[int]) -> tuple[int, ...]:
        values = tuple(int(v) for v in values)
        if len(values) != self.num_factors:
            raise ValidationError(
                f"expected {self.num_factors} factor values, got {len(values)}"
            )
        for (name, card), v in zip(self.factors, values):
            if not 0 <= v < card:
                raise ValidationError(f"factor {name!r} value {v} outside [0, {card})")
        return values

    def iter_combinations(self) -> Iterator[tuple[int, ...]]:
        """Yield every factor combination in row-major (last factor fastest) order."""
        counters = [0] * self.num_factors
        cards = self.cardinalities
        while True:
            yield tuple(counters)
            for i in reversed(range(self.num_factors)):
                counters[i] += 1
                if counters[i] < cards[i]:
                    break
                counters[i] = 0
            else:
                return

    def combination_index(self, values: Sequence[int]) -> int:
        values = self.validate_values(values)
        idx = 0
        for v, card in zip(values, self.cardinalities):
            idx = idx * card + v
        return idx

    def to_dict(self) -> dict:
        return {
            "factors": [[name, card] for name, card in self.factors],
            "image_size": list(self.image_size),
            "channels": self.channels,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FactorSchema":
        return cls(
            factors=tuple((str(n), int(c)) for n, c in data["factors"]),
            image_size=tuple(int(x) for x in data["image_size"]),
            channels=int(data["channels"]),
        )

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ActionSpec:
    """A named intervention: one factor stepped up or down, or the null action.

    The null action is ``ActionSpec(None, None)`` and encodes as the
    all-zero one-hot vector.
    """

    factor_index: Optional[int] = None
    direction: Optional[int] = None

    def __post_init__(self):
        if (self.factor_index is None) != (self.direction is None):
            raise ValidationError("factor_index and direction must both be set or both None")
        if self.direction is not None and self.direction not in (1, -1):
            raise ValidationError(f"direction must be +1 or -1, got {self.direction}")

    @property
    def is_null(self) -> bool:
        return self.factor_index is None

    def inverse(self) -> "ActionSpec":
        if self.is_null:
            return self
        return ActionSpec(self.factor_index, -self.direction)

    def label(self, schema: FactorSchema) -> str:
        if self.is_null:
            return "null"
        name = schema.names[self.factor_index]
        return f"{name}:{'+' if self.direction > 0 else '-'}"

    @classmethod
    def parse(cls, text: str, schema: FactorSchema) -> "ActionSpec":
        """Parse ``"<factor>:+"`` / ``"<factor>:-"`` / ``"null"`` action labels."""
        text = text.strip()
        if text in ("null", ""):
            return cls(None, None)
        if ":" not in text:
            raise ValidationError(f"bad action {text!r}; expected '<factor>:+' or '<factor>:-'")
        name, _, sign = text.rpartition(":")
        if name not in schema.names:
            raise ValidationError(f"unknown factor {name!r}; known: {list(schema.names)}")
        if sign not in ("+", "-"):
            raise ValidationError(f"bad direction {sign!r}; expected '+' or '-'")
        return cls(schema.names.index(name), +1 if sign == "+" else -1)


NULL_ACTION = ActionSpec(None, None)


def action_set(schema: FactorSchema) -> list[ActionSpec]:
    """All real actions: two per actionable factor, ordered (factor asc, + then -)."""
    out = []
    for f in schema.actionable_factors:
        out.append(ActionSpec(f, +1))
        out.append(ActionSpec(f, -1))
    return out


def action_index(schema: FactorSchema, action: ActionSpec) -> int:
    """Position of a real action in ``action_set(schema)``."""
    if action.is_null:
        raise ValidationError("null action has no one-hot index")
    try:
        slot = schema.actionable_factors.index(action.factor_index)
    except ValueError:
        raise ValidationError(
            f"factor {action.factor_index} is not actionable in this schema"
        ) from None
    return 2 * slot + (0 if action.direction > 0 else 1)


def action_from_index(schema: FactorSchema, index: int) -> ActionSpec:
    factor = schema.actionable_factors[index // 2]
    return ActionSpec(factor, +1 if index % 2 == 0 else -1)


def action_one_hot(schema: FactorSchema, action: ActionSpec) -> np.ndarray:
    vec = np.zeros(2 * len(schema.actionable_factors), dtype=np.float32)
    if not action.is_null:
        vec[action_index(schema, action)] = 1.0
    return vec


@dataclass
class TransitionRecord:
    """One supervised example: images before/after a single-factor step."""

    x_image: np.ndarray
    y_image: np.ndarray
    action: ActionSpec
    x_factors: tuple[int, ...]
    y_factors: tuple[int, ...]

    def validate(self, schema: FactorSchema) -> None:
        xf = schema.validate_values(self.x_factors)
        yf = schema.validate_values(self.y_factors)
        diffs = [i for i, (a, b) in enumerate(zip(xf, yf)) if a != b]
        if len(diffs) != 1:
            raise ValidationError(f"factor vectors must differ in exactly one slot, differ in {diffs}")
        i = diffs[0]
        if self.action.is_null or self.action.factor_index != i:
            raise ValidationError("action factor does not match the changed factor")
        if yf[i] - xf[i] != self.action.direction:
            raise ValidationError(
                f"factor step {yf[i] - xf[i]} does not match direction {self.action.direction}"
            )


DEFAULT_SCHEMA = FactorSchema(
    factors=(("shape", 3), ("scale", 3), ("pos_x", 8), ("pos_y", 8)),
    image_size=(32, 32),
    channels=1,
)
