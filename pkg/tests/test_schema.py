import numpy as np
import pytest

from ctvae.schema import (
    DEFAULT_SCHEMA,
    NULL_ACTION,
    ActionSpec,
    FactorSchema,
    TransitionRecord,
    ValidationError,
    action_from_index,
    action_index,
    action_one_hot,
    action_set,
)


def test_default_schema_combinations():
    assert DEFAULT_SCHEMA.num_combinations == 3 * 3 * 8 * 8 == 576
    assert DEFAULT_SCHEMA.num_factors == 4


def test_duplicate_factor_names_rejected():
    with pytest.raises(ValidationError):
        FactorSchema(factors=(("a", 2), ("a", 3)))


def test_cardinality_one_allowed_but_not_actionable():
    schema = FactorSchema(factors=(("color", 1), ("shape", 3)))
    assert schema.actionable_factors == (1,)
    actions = action_set(schema)
    assert len(actions) == 2
    assert all(a.factor_index == 1 for a in actions)


def test_action_set_size_is_two_per_actionable_factor():
    assert len(action_set(DEFAULT_SCHEMA)) == 2 * DEFAULT_SCHEMA.num_factors == 8


def test_action_one_hot_layout():
    actions = action_set(DEFAULT_SCHEMA)
    for i, action in enumerate(actions):
        assert action_index(DEFAULT_SCHEMA, action) == i
        assert action_from_index(DEFAULT_SCHEMA, i) == action
        vec = action_one_hot(DEFAULT_SCHEMA, action)
        assert vec.shape == (8,)
        assert vec[i] == 1.0 and vec.sum() == 1.0


def test_null_action_is_all_zero():
    assert NULL_ACTION.is_null
    assert action_one_hot(DEFAULT_SCHEMA, NULL_ACTION).sum() == 0.0
    with pytest.raises(ValidationError):
        action_index(DEFAULT_SCHEMA, NULL_ACTION)


def test_action_parse_and_label_round_trip():
    for action in action_set(DEFAULT_SCHEMA):
        label = action.label(DEFAULT_SCHEMA)
        assert ActionSpec.parse(label, DEFAULT_SCHEMA) == action
    assert ActionSpec.parse("null", DEFAULT_SCHEMA).is_null
    with pytest.raises(ValidationError):
        ActionSpec.parse("bogus:+", DEFAULT_SCHEMA)
    with pytest.raises(ValidationError):
        ActionSpec.parse("shape:*", DEFAULT_SCHEMA)


def test_action_inverse():
    a = ActionSpec(2, +1)
    assert a.inverse() == ActionSpec(2, -1)
    assert NULL_ACTION.inverse().is_null


def test_combination_index_round_trip():
    combos = list(DEFAULT_SCHEMA.iter_combinations())
    assert len(combos) == 576
    assert len(set(combos)) == 576
    for i, values in enumerate(combos):
        assert DEFAULT_SCHEMA.combination_index(values) == i


def test_out_of_range_factor_value():
    with pytest.raises(ValidationError):
        DEFAULT_SCHEMA.validate_values((0, 0, 0, 8))
    with pytest.raises(ValidationError):
        DEFAULT_SCHEMA.validate_values((0, 0, 0))


def test_transition_record_validation():
    img = np.zeros((32, 32, 1), dtype=np.float32)
    good = TransitionRecord(img, img, ActionSpec(2, +1), (0, 0, 3, 4), (0, 0, 4, 4))
    good.validate(DEFAULT_SCHEMA)

    bad_two_changes = TransitionRecord(img, img, ActionSpec(2, +1), (0, 0, 3, 4), (1, 0, 4, 4))
    with pytest.raises(ValidationError):
        bad_two_changes.validate(DEFAULT_SCHEMA)

    bad_direction = TransitionRecord(img, img, ActionSpec(2, -1), (0, 0, 3, 4), (0, 0, 4, 4))
    with pytest.raises(ValidationError):
        bad_direction.validate(DEFAULT_SCHEMA)


def test_schema_serialization_round_trip():
    schema = FactorSchema(factors=(("hue", 4), ("pos_x", 5)), image_size=(16, 16), channels=3)
    assert FactorSchema.from_dict(schema.to_dict()) == schema
    assert schema.content_hash() == FactorSchema.from_dict(schema.to_dict()).content_hash()
