import numpy as np
import pytest
import torch

from ctvae.mcqvae import CodeGrid, MultiCodebookQuantizer


def brute_force_indices(features: np.ndarray, tables: np.ndarray) -> np.ndarray:
    """Exhaustive float64 nearest-neighbor scan, lowest index wins ties."""
    b, h, w, d = features.shape
    c, k, s = tables.shape
    out = np.zeros((b, h, w, c), dtype=np.int64)
    f64 = features.astype(np.float64)
    t64 = tables.astype(np.float64)
    for bi in range(b):
        for hi in range(h):
            for wi in range(w):
                for ci in range(c):
                    sub = f64[bi, hi, wi, ci * s:(ci + 1) * s]
                    dists = ((t64[ci] - sub) ** 2).sum(axis=1)
                    out[bi, hi, wi, ci] = int(np.argmin(dists))
    return out


@pytest.mark.parametrize("num_books", [1, 2, 4])
def test_indices_match_brute_force(num_books):
    torch.manual_seed(num_books)
    q = MultiCodebookQuantizer(num_books, codebook_size=4, embedding_dim=8)
    feats = torch.randn(3, 2, 2, 8)
    code = q(feats)
    expected = brute_force_indices(feats.numpy(), q.tables.detach().numpy())
    assert np.array_equal(code.indices.numpy(), expected)


def test_exact_match_selects_that_row():
    q = MultiCodebookQuantizer(2, codebook_size=8, embedding_dim=8)
    feats = torch.zeros(1, 1, 1, 8)
    feats[0, 0, 0, :4] = q.tables[0, 7].detach()
    feats[0, 0, 0, 4:] = q.tables[1, 3].detach()
    code = q(feats)
    assert code.indices[0, 0, 0].tolist() == [7, 3]


def test_equidistant_rows_pick_lowest_index():
    q = MultiCodebookQuantizer(1, codebook_size=4, embedding_dim=2)
    with torch.no_grad():
        q.tables[0, 0] = torch.tensor([1.0, 0.0])
        q.tables[0, 1] = torch.tensor([-1.0, 0.0])
        q.tables[0, 2] = torch.tensor([0.0, 1.0])
        q.tables[0, 3] = torch.tensor([0.0, -1.0])
    feats = torch.zeros(1, 1, 1, 2)  # equidistant from all four rows
    code = q(feats)
    assert code.indices.item() == 0


def test_embedded_rows_are_bitwise_table_rows():
    torch.manual_seed(0)
    q = MultiCodebookQuantizer(2, codebook_size=8, embedding_dim=16)
    feats = torch.randn(2, 3, 3, 16)
    code = q(feats)
    tables = q.tables.detach()
    flat = code.flat_embedded()
    n = 0
    for h in range(3):
        for w in range(3):
            for c in range(2):
                idx = code.indices[1, h, w, c].item()
                assert torch.equal(flat[1, n], tables[c, idx])
                n += 1


def test_straight_through_gradient_passes_unchanged():
    torch.manual_seed(1)
    q = MultiCodebookQuantizer(2, codebook_size=4, embedding_dim=8).double()
    feats = torch.randn(2, 2, 2, 8, dtype=torch.float64, requires_grad=True)
    weights = torch.randn(2, 2, 2, 8, dtype=torch.float64)
    code = q(feats)
    code.embedded.retain_grad()
    loss = (code.embedded * weights).sum() + (code.embedded ** 2).sum()
    loss.backward()
    assert torch.equal(feats.grad, code.embedded.grad)


def test_straight_through_matches_frozen_index_finite_differences():
    torch.manual_seed(2)
    q = MultiCodebookQuantizer(1, codebook_size=4, embedding_dim=4).double()
    feats = torch.randn(1, 2, 2, 4, dtype=torch.float64, requires_grad=True)
    weights = torch.randn(1, 2, 2, 4, dtype=torch.float64)

    code = q(feats)
    loss = (torch.sin(code.embedded) * weights).sum()
    loss.backward()
    grad = feats.grad.clone()

    # same loss with indices frozen: f(embed(idx)) where the lookup replaces
    # the sub-vector, so d loss / d feats under the straight-through contract
    # equals d loss / d embedded evaluated at the lookup
    embedded = q.embed(code.indices).detach().requires_grad_(True)
    loss2 = (torch.sin(embedded) * weights).sum()
    loss2.backward()
    rel = (grad - embedded.grad).norm() / embedded.grad.norm()
    assert rel.item() < 1e-4


def test_non_finite_features_rejected():
    q = MultiCodebookQuantizer(1, codebook_size=4, embedding_dim=4)
    feats = torch.full((1, 1, 1, 4), float("nan"))
    with pytest.raises(ValueError):
        q(feats)


def test_indivisible_embedding_dim_rejected():
    with pytest.raises(ValueError):
        MultiCodebookQuantizer(3, codebook_size=4, embedding_dim=8)


def test_flat_indices_node_order_is_position_major():
    q = MultiCodebookQuantizer(2, codebook_size=4, embedding_dim=4)
    indices = torch.arange(2 * 2 * 2).reshape(1, 2, 2, 2) % 4
    grid = q.grid_from_indices(indices)
    flat = grid.flat_indices()[0]
    expected = [indices[0, h, w, c] for h in range(2) for w in range(2) for c in range(2)]
    assert flat.tolist() == [int(v) for v in expected]
