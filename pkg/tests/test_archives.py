import numpy as np
import pytest

from ctvae.schema import DEFAULT_SCHEMA, FactorSchema
from ctvae.datasets import (
    IngestError,
    export_synthetic,
    ingest_archive,
    load_export,
    render_all,
)


def make_fake_dsprites(path, sizes=(1, 3, 6, 40, 32, 32), rows=200, with_metadata=True):
    """Small npz in the published dsprites layout (imgs + latents_classes)."""
    rng = np.random.default_rng(0)
    classes = np.stack([rng.integers(0, s, size=rows) for s in sizes], axis=1)
    classes = np.unique(classes, axis=0)
    imgs = rng.integers(0, 2, size=(len(classes), 64, 64)).astype(np.uint8)
    payload = {"imgs": imgs, "latents_classes": classes}
    if with_metadata:
        payload["metadata"] = np.array(
            {b"latents_sizes": np.array(sizes, dtype=np.int64)}, dtype=object
        )
    np.savez(path, **payload)
    return classes, imgs


def test_dsprites_layout_yields_published_cardinalities(tmp_path):
    path = tmp_path / "dsprites.npz"
    make_fake_dsprites(path)
    schema, store = ingest_archive(path, "dsprites", image_size=(64, 64))
    assert schema.num_factors == 6
    assert schema.cardinalities == (1, 3, 6, 40, 32, 32)
    assert schema.names[0] == "color"
    assert store.float_block().min() >= 0.0 and store.float_block().max() <= 1.0


def test_dsprites_rescales_to_configured_resolution(tmp_path):
    path = tmp_path / "dsprites.npz"
    make_fake_dsprites(path)
    schema, store = ingest_archive(path, "dsprites", image_size=(32, 32))
    assert schema.image_size == (32, 32)
    assert store.float_block().shape[1:] == (32, 32, 1)


def test_truncated_archive_fails_without_partial_schema(tmp_path):
    path = tmp_path / "broken.npz"
    path.write_bytes(b"PK\x03\x04 not a real zip")
    with pytest.raises(IngestError):
        ingest_archive(path, "dsprites")


def test_count_mismatch_rejected(tmp_path):
    path = tmp_path / "dsprites.npz"
    classes, imgs = make_fake_dsprites(path)
    np.savez(path, imgs=imgs[:-3], latents_classes=classes)
    with pytest.raises(IngestError, match="images"):
        ingest_archive(path, "dsprites")


def test_unknown_layout_rejected(tmp_path):
    path = tmp_path / "whatever.npz"
    make_fake_dsprites(path)
    with pytest.raises(IngestError, match="layout"):
        ingest_archive(path, "mystery")


def test_shapes3d_layout(tmp_path):
    import h5py

    path = tmp_path / "shapes3d.h5"
    rng = np.random.default_rng(1)
    value_grids = [
        np.linspace(0, 0.9, 10),
        np.linspace(0, 0.9, 10),
        np.linspace(0, 0.9, 10),
        np.linspace(0.75, 1.25, 8),
        np.arange(4, dtype=np.float64),
        np.linspace(-30, 30, 15),
    ]
    combos = np.stack(
        [rng.integers(0, len(g), size=400) for g in value_grids], axis=1
    )
    combos = np.unique(combos, axis=0)
    labels = np.stack([value_grids[c][combos[:, c]] for c in range(6)], axis=1)
    images = rng.integers(0, 256, size=(len(combos), 64, 64, 3)).astype(np.uint8)
    with h5py.File(path, "w") as fh:
        fh.create_dataset("images", data=images)
        fh.create_dataset("labels", data=labels)

    schema, store = ingest_archive(path, "shapes3d", image_size=(32, 32))
    assert schema.names == ("floor_hue", "wall_hue", "object_hue", "scale", "shape", "orientation")
    assert schema.cardinalities == (10, 10, 10, 8, 4, 15)
    assert schema.channels == 3
    assert store.float_block().shape[1:] == (32, 32, 3)


def test_export_round_trip_preserves_schema_and_hashes(tmp_path):
    schema = FactorSchema(factors=(("shape", 2), ("pos_x", 3)), image_size=(16, 16))
    store = render_all(schema, seed=7)
    export_synthetic(store, tmp_path / "out", seed=7)
    schema2, store2, seed = load_export(tmp_path / "out")
    assert schema2 == schema
    assert seed == 7
    assert store2.content_hash() == store.content_hash()


def test_export_missing_image_detected(tmp_path):
    schema = FactorSchema(factors=(("shape", 2), ("pos_x", 3)), image_size=(16, 16))
    store = render_all(schema)
    out = export_synthetic(store, tmp_path / "out")
    (out / "00003.png").unlink()
    with pytest.raises(IngestError, match="00003|missing"):
        load_export(out)


def test_default_desk_export_round_trip(tmp_path):
    store = render_all(DEFAULT_SCHEMA, seed=0)
    export_synthetic(store, tmp_path / "desk", seed=0)
    schema2, store2, _ = load_export(tmp_path / "desk")
    assert schema2 == DEFAULT_SCHEMA
    assert store2.content_hash() == store.content_hash()
