import pytest

from ctvae.datasets import export_synthetic, render_all
from ctvae.training import RunConfig, run_ct_training, run_pretrain

SMALL_SCHEMA = "shape:2,pos_x:4,pos_y:4"


def small_config():
    return RunConfig.from_dict({
        "data": {"schema": SMALL_SCHEMA, "image_size": [16, 16], "channels": 1, "seed": 0},
        "mcqvae": {"hidden": 16, "embedding_dim": 16, "codebook_size": 8},
        "ct": {"pair_hidden": 16, "gnn_hidden": 16, "samples_per_action": 2},
        "train": {
            "seed": 0, "batch_size": 16, "pretrain_epochs": 4,
            "ct_epochs": 1, "max_steps": 6,
        },
    })


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Shared small export used by CLI/service tests."""
    out = tmp_path_factory.mktemp("shared") / "dataset"
    config = small_config()
    schema = config.data.factor_schema()
    export_synthetic(render_all(schema, seed=0), out, seed=0)
    return out


@pytest.fixture(scope="session")
def small_run(small_dataset, tmp_path_factory):
    """A briefly-trained stage-1 + stage-2 run (quality irrelevant)."""
    run_dir = tmp_path_factory.mktemp("shared") / "run"
    config = small_config()
    stage1 = run_pretrain(config, small_dataset, run_dir)
    stage2 = run_ct_training(config, small_dataset, run_dir, stage1)
    return {"config": config, "run_dir": run_dir, "stage1": stage1, "stage2": stage2}
