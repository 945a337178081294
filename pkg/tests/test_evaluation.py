import json
from pathlib import Path

import numpy as np
import pytest
import torch

from ctvae.schema import ActionSpec, FactorSchema, action_index, action_set
from ctvae.datasets import build_transitions, render_all
from ctvae.datasets.transitions import split_of_combination
from ctvae.mcqvae import McqVae, McqVaeConfig
from ctvae.ct.layer import AttributionResult, CausalTransitionLayer
from ctvae.evaluation import (
    adjacency_diagonal_stats,
    apply_action_to_codes,
    eval_causal_accuracy,
    eval_repeated_actions,
    export_intervention_grid,
    export_structure_maps,
)
from ctvae.training import Bundle, RunConfig

SCHEMA = FactorSchema(
    factors=(("shape", 2), ("pos_x", 8)), image_size=(16, 16), channels=1
)


@pytest.fixture(scope="module")
def bundle():
    torch.manual_seed(0)
    config = RunConfig.from_dict({
        "data": {"schema": "shape:2,pos_x:8", "image_size": [16, 16], "channels": 1},
        "mcqvae": {"hidden": 16, "embedding_dim": 16, "codebook_size": 8},
        "ct": {"pair_hidden": 16, "gnn_hidden": 16, "samples_per_action": 2},
    })
    mcqvae = McqVae(config.mcqvae_config())
    layer = CausalTransitionLayer(config.ct_config(len(action_set(SCHEMA))))
    return Bundle(schema=SCHEMA, mcqvae=mcqvae, ct=layer, meta={}, path=Path("."))


@pytest.fixture(scope="module")
def records():
    store = render_all(SCHEMA)
    return list(build_transitions(SCHEMA, store))


def test_empty_test_set_rejected(bundle):
    with pytest.raises(ValueError):
        eval_causal_accuracy(bundle, [])


def test_untrained_accuracy_near_chance_and_factor_dominates(bundle, records):
    report = eval_causal_accuracy(bundle, records[:96], seed=1)
    chance = 1.0 / len(action_set(SCHEMA))
    assert report.action_accuracy < chance + 4.5 * (chance * (1 - chance) / 96) ** 0.5 + 0.05
    assert report.factor_accuracy >= report.action_accuracy
    for stats in report.per_action.values():
        assert stats["factor_accuracy"] >= stats["action_accuracy"]
        assert 0.0 <= stats["action_accuracy"] <= 1.0


def test_report_shape_and_cardinalities(bundle, records):
    report = eval_causal_accuracy(bundle, records[:40], seed=0)
    assert report.num_records == 40
    for label, stats in report.per_action.items():
        assert set(stats) == {"action_accuracy", "factor_accuracy", "count", "cardinality"}
        factor = label.split(":")[0]
        assert stats["cardinality"] == dict(SCHEMA.factors)[factor]
    assert sum(s["count"] for s in report.per_action.values()) == 40


def test_evaluation_deterministic_given_seed(bundle, records):
    a = eval_causal_accuracy(bundle, records[:32], seed=7)
    b = eval_causal_accuracy(bundle, records[:32], seed=7)
    assert a.to_dict() == b.to_dict()


def test_stub_attributor_factor_one_action_half(bundle, records):
    """An attributor that always picks the + direction of the true factor."""
    sample = records[:48]
    truth = [action_index(SCHEMA, r.action) for r in sample]
    layer = bundle.require_ct()
    cursor = {"i": 0}
    actions = action_set(SCHEMA)
    original = CausalTransitionLayer.attribute_action

    def stub(self, x, y, candidates=None, samples_per_action=None, generator=None, **kw):
        batch = x.batch
        ids = truth[cursor["i"]:cursor["i"] + batch]
        cursor["i"] += batch
        scores = torch.zeros(batch, len(actions))
        for row, true_id in enumerate(ids):
            plus = 2 * (true_id // 2)  # + direction of the true factor
            scores[row, plus] = 10.0
        return AttributionResult(
            candidates=tuple(range(len(actions))),
            scores=scores, q=torch.softmax(scores, -1),
        )

    layer.attribute_action = stub.__get__(layer)
    try:
        report = eval_causal_accuracy(bundle, sample, seed=0)
    finally:
        layer.attribute_action = original.__get__(layer)

    assert report.factor_accuracy == 1.0
    plus_fraction = np.mean([r.action.direction == +1 for r in sample])
    assert report.action_accuracy == pytest.approx(plus_fraction, abs=1e-9)


def test_repeated_actions_drop_boundaries(bundle):
    bases = [(0, v) for v in range(8)]
    action = ActionSpec(1, +1)  # pos_x up, cardinality 8
    curve = eval_repeated_actions(bundle, bases, action, num_steps=8, seed=0)
    # step 8 is impossible for every base value; steps 1..7 survive
    assert curve.steps == list(range(1, 8))
    assert curve.dropped[8] == 8
    assert curve.survivors == [7, 6, 5, 4, 3, 2, 1]
    assert all(0.0 <= a <= 1.0 for a in curve.action_accuracy)
    assert len(curve.action_accuracy) == 7


def test_repeated_actions_error_when_no_step_possible(bundle):
    bases = [(0, 7)]
    action = ActionSpec(1, +1)
    with pytest.raises(ValueError):
        eval_repeated_actions(bundle, bases, action, num_steps=3, seed=0)


def test_repeated_actions_single_step_matches_pair_definition(bundle):
    bases = [(s, p) for s in range(2) for p in range(4)]
    action = ActionSpec(1, +1)
    one = eval_repeated_actions(bundle, bases, action, num_steps=1, seed=3)
    again = eval_repeated_actions(bundle, bases, action, num_steps=1, seed=3)
    assert one.to_dict() == again.to_dict()
    assert one.steps == [1]
    assert one.survivors == [8]


def test_intervention_grid_layout(bundle, tmp_path):
    image = render_all(SCHEMA).image((0, 3))
    actions = [ActionSpec(None, None), ActionSpec(1, +1), ActionSpec(1, -1)]
    path = export_intervention_grid(bundle, image, actions, repeats=3, out_dir=tmp_path, seed=0)
    from PIL import Image

    grid = Image.open(path)
    assert grid.size == ((3 + 1) * 16, 3 * 16)  # (repeats+1) columns, |actions| rows
    strips = sorted(p.name for p in (tmp_path / "intervene").glob("*.png"))
    assert strips == ["null_0.png", "pos_x_+.png", "pos_x_-.png"]


def test_intervention_grid_zero_repeats_is_single_column(bundle, tmp_path):
    image = render_all(SCHEMA).image((1, 5))
    path = export_intervention_grid(bundle, image, [ActionSpec(0, +1)], repeats=0,
                                    out_dir=tmp_path, seed=0)
    from PIL import Image

    grid = Image.open(path)
    assert grid.size == (16, 16)
    recon = bundle.decode_grid(bundle.encode_image(image))[0]
    assert np.allclose(np.asarray(grid) / 255.0, recon[..., 0], atol=1 / 255.0 + 1e-6)


def test_apply_action_reports_changed_nodes(bundle):
    image = render_all(SCHEMA).image((0, 0))
    code = bundle.encode_image(image)
    new_code, stats = apply_action_to_codes(bundle, code, ActionSpec(1, +1),
                                            torch.Generator().manual_seed(0))
    assert 0 <= stats["changed_nodes"] <= code.num_nodes
    assert stats["adjacency_probs"].shape == (code.num_nodes, code.num_nodes)
    assert new_code.indices.shape == code.indices.shape


def test_structure_maps_files_and_midgray_gates(bundle, tmp_path):
    store = render_all(SCHEMA)
    images = np.stack([store.image((0, v)) for v in range(6)])
    out = export_structure_maps(bundle, images, tmp_path, seed=0)

    payload = json.loads((out / "adjacency.json").read_text())
    n = bundle.ct.cfg.num_nodes
    assert payload["adjacency"]["null"]["shape"] == [n, n]
    assert len(payload["adjacency"]["null"]["probabilities"]) == n * n
    labels = {f"{name}_{d}" for name in ("shape", "pos_x") for d in "+-"}
    assert set(payload["mask"].keys()) == labels
    lh, lw = bundle.mcqvae.cfg.latent_size
    assert payload["mask"]["pos_x_+"]["shape"] == [lh, lw]

    from PIL import Image

    # gate logits start at zero, so gate maps are exactly mid-gray
    mask_img = np.asarray(Image.open(out / "mask_pos_x_+.png"))
    assert (mask_img == 128).all()
    adj_img = np.asarray(Image.open(out / "adjacency_null.png"))
    assert adj_img.shape == (n * 12, n * 12)
    stats = adjacency_diagonal_stats(
        np.array(payload["adjacency"]["null"]["probabilities"]).reshape(n, n)
    )
    assert 0.0 <= stats["mean_diagonal"] <= 1.0
