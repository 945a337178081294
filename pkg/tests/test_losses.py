import math

import numpy as np
import pytest
import torch

from ctvae.ct import CausalTransitionLayer, CtConfig
from ctvae.mcqvae import MultiCodebookQuantizer
from ctvae.training import LossWeights, loss_action, loss_causal, loss_standard, total_ct_loss


def make_setup(num_actions=4, grid=(2, 2), k=4, sub=5, seed=0, batch=3):
    torch.manual_seed(seed)
    n = grid[0] * grid[1]
    cfg = CtConfig(num_actions=num_actions, num_nodes=n, sub_dim=sub,
                   codebook_size=k, pair_hidden=8, gnn_hidden=8)
    layer = CausalTransitionLayer(cfg)
    quant = MultiCodebookQuantizer(1, k, sub)
    gen = torch.Generator().manual_seed(seed + 1)
    x = quant.grid_from_indices(torch.randint(0, k, (batch, *grid, 1), generator=gen))
    y = quant.grid_from_indices(torch.randint(0, k, (batch, *grid, 1), generator=gen))
    return layer, quant, x, y


def scalar_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Plain-loop mean per-node cross-entropy."""
    b, n, k = logits.shape
    total = 0.0
    for bi in range(b):
        for ni in range(n):
            row = logits[bi, ni]
            log_z = math.log(sum(math.exp(v) for v in row))
            total += log_z - row[targets[bi, ni]]
    return total / (b * n)


def test_total_ct_loss_default_weights_all_ones():
    parts = {k: torch.tensor(1.0, dtype=torch.float64) for k in
             ("l_x", "l_y", "l_a", "l_id_y", "l_id_m", "kl", "graph_norm", "dependency")}
    total = total_ct_loss("action", parts, LossWeights())
    assert total.item() == pytest.approx(5.295, abs=1e-9)


def test_total_ct_loss_zero_scale():
    parts = {"l_x": torch.tensor(2.0)}
    weights = LossWeights(ct_scale=0.0)
    assert total_ct_loss("standard", parts, weights).item() == 0.0


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(kl=-0.1)


def test_weights_round_trip():
    w = LossWeights()
    assert LossWeights.from_dict(w.to_dict()) == w
    assert w.to_dict() == {
        "ct_scale": 1.5, "identity": 0.01, "kl": 0.4,
        "graph_norm": 0.01, "dependency": 0.1,
    }


def test_standard_parts_match_scalar_oracle():
    layer, quant, x, _ = make_setup()
    gen = torch.Generator().manual_seed(42)
    parts = loss_standard(layer, x, gen)

    # replay with the same draw sequence to recover the sampled graph
    gen2 = torch.Generator().manual_seed(42)
    batch = x.batch
    ids = torch.full((batch,), -1, dtype=torch.long)
    graph = layer.discover_structure(x, ids, generator=gen2)
    pred = layer.infer_transition(x, ids, graph.adjacency, gen2)
    logits = pred.logits.detach().numpy()
    targets = x.flat_indices().numpy()
    assert parts["l_x"].item() == pytest.approx(scalar_cross_entropy(logits, targets), rel=1e-5)

    eye = layer.identity_adjacency(batch)
    pred_id = layer.infer_transition(x, ids, eye, gen2)
    assert parts["l_id_y"].item() == pytest.approx(
        scalar_cross_entropy(pred_id.logits.detach().numpy(), targets), rel=1e-5)

    adj = graph.adjacency.detach().numpy()
    expected_id_m = sum(
        (adj[b] - np.eye(adj.shape[1])).__pow__(2).sum() for b in range(batch)
    ) / batch
    assert parts["l_id_m"].item() == pytest.approx(expected_id_m, rel=1e-5)

    probs = graph.probs.detach().numpy()
    expected_kl = 0.0
    for p in probs.flatten():
        for q in (p, 1 - p):
            if q > 0:
                expected_kl += q * math.log(q / 0.5)
    assert parts["kl"].item() == pytest.approx(expected_kl / probs.size, rel=1e-4)

    expected_norm = (adj ** 2).sum() / batch
    assert parts["graph_norm"].item() == pytest.approx(expected_norm, rel=1e-6)
    expected_dep = sum(
        ((1 - probs[b]).prod(axis=1) ** 2).sum() for b in range(batch)
    ) / batch
    assert parts["dependency"].item() == pytest.approx(expected_dep, rel=1e-4, abs=1e-8)


def test_identity_graph_gives_zero_identity_penalty():
    layer, quant, x, _ = make_setup()
    eye = layer.identity_adjacency(x.batch)
    # directly evaluate the penalty term at its minimum
    penalty = (eye - layer.identity_adjacency(x.batch)).pow(2).sum()
    assert penalty.item() == 0.0


def test_action_loss_matches_standard_when_targets_equal_inputs():
    layer, quant, x, _ = make_setup()
    ids = torch.zeros(x.batch, dtype=torch.long)
    g1 = torch.Generator().manual_seed(7)
    parts_action = loss_action(layer, x, x, ids, g1)

    g2 = torch.Generator().manual_seed(7)
    graph = layer.discover_structure(x, ids, generator=g2)
    pred = layer.infer_transition(x, ids, graph.adjacency, g2)
    expected = pred.cross_entropy(x.flat_indices())
    assert parts_action["l_y"].item() == pytest.approx(expected.item(), rel=1e-6)


def test_action_loss_rejects_null_action():
    layer, quant, x, y = make_setup()
    ids = torch.tensor([-1, 0, 0])
    with pytest.raises(ValueError):
        loss_action(layer, x, y, ids)
    with pytest.raises(ValueError):
        loss_causal(layer, x, y, ids)


def test_action_loss_matches_scalar_oracle():
    layer, quant, x, y = make_setup(seed=5)
    ids = torch.tensor([1, 2, 0])
    gen = torch.Generator().manual_seed(9)
    parts = loss_action(layer, x, y, ids, gen)

    gen2 = torch.Generator().manual_seed(9)
    graph = layer.discover_structure(x, ids, generator=gen2)
    pred = layer.infer_transition(x, ids, graph.adjacency, gen2)
    expected = scalar_cross_entropy(pred.logits.detach().numpy(), y.flat_indices().numpy())
    assert parts["l_y"].item() == pytest.approx(expected, rel=1e-5)


def test_causal_loss_uniform_q_is_log_cardinality():
    # q uniform over 12 candidates -> cross-entropy ln 12
    scores = torch.zeros(4, 12)
    log_q = torch.log_softmax(scores, dim=-1)
    loss = -log_q[:, 3].mean()
    assert loss.item() == pytest.approx(math.log(12.0), rel=1e-6)
    assert loss.item() == pytest.approx(2.4849, abs=1e-4)


def test_causal_loss_zero_when_q_is_one_hot_on_truth():
    scores = torch.full((2, 4), -1e9)
    scores[:, 1] = 0.0
    log_q = torch.log_softmax(scores, dim=-1)
    loss = -log_q[:, 1].mean()
    assert loss.item() == pytest.approx(0.0, abs=1e-6)


def test_causal_loss_gradient_reaches_structure_and_gnn():
    layer, quant, x, y = make_setup(seed=11)
    ids = torch.tensor([0, 1, 2])
    parts = loss_causal(layer, x, y, ids, generator=torch.Generator().manual_seed(1))
    total = total_ct_loss("causal", parts, LossWeights())
    total.backward()

    gnn_grads = [p.grad for p in layer.gnn.parameters() if p.grad is not None]
    structure_grads = [p.grad for p in layer.structure.parameters() if p.grad is not None]
    assert any(g.abs().sum() > 0 for g in gnn_grads)
    assert any(g.abs().sum() > 0 for g in structure_grads)
    assert layer.structure.mask_logits.grad is not None


def test_mode_isolation_in_total():
    weights = LossWeights()
    one = torch.tensor(1.0, dtype=torch.float64)
    standard_total = total_ct_loss("standard", {"l_x": one, "l_id_y": one, "l_id_m": one}, weights)
    assert standard_total.item() == pytest.approx(1.5 * (1 + 0.01 * 2), rel=1e-9)
    action_total = total_ct_loss("action", {"l_y": one}, weights)
    assert action_total.item() == pytest.approx(1.5, rel=1e-9)
    causal_total = total_ct_loss("causal", {"l_a": one}, weights)
    assert causal_total.item() == pytest.approx(1.5, rel=1e-9)
    with pytest.raises(ValueError):
        total_ct_loss("mystery", {}, weights)
