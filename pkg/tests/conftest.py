import json

import pytest

from vtg.bench import BenchConfig, gen_dataset

TINY = dict(n_meshes=3, n_holdout=1, views_per_mesh=1, holdout_views_per_mesh=1, azimuths=2,
            elevations=(20.0,), grid_dim=12, eval_dim=24, object_resolution=24, hausdorff_samples=300,
            timing_repeats=1, gpis={"n": 12, "M": 80}, epochs=2,
            eval_views={"train_view": 1, "holdout_view": 1, "holdout_mesh": 1})


@pytest.fixture(scope="session")
def tiny_config():
    return BenchConfig(**TINY)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_config):
    root = tmp_path_factory.mktemp("tiny")
    gen_dataset(root, tiny_config)
    return root


@pytest.fixture(scope="session")
def tiny_config_file(tmp_path_factory, tiny_config):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(tiny_config.to_dict()))
    return path
