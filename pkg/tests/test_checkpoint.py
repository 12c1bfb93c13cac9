import numpy as np
import pytest

from pavegraph.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from pavegraph.dataset import FEATURE_NAMES, Standardizer
from pavegraph.model import ModelConfig, init_params

TINY = ModelConfig(heads=2, d_head=4, gru_hidden=8, head_hidden=8)


def make_standardizer(f=11):
    rng = np.random.default_rng(0)
    return Standardizer(
        feature_means=rng.normal(size=f),
        feature_stds=np.abs(rng.normal(size=f)) + 0.5,
        target_mean=80.1234567890123,
        target_std=9.87654321098765,
    )


@pytest.mark.parametrize("variant", ["full", "resgat", "st_gat", "vanilla", "mlp"])
def test_round_trip_bit_exact(tmp_path, variant):
    params = init_params(variant, 11, 2, TINY, seed=42)
    # make values non-trivial
    for arr in params.tensor_dict().values():
        arr += np.random.default_rng(1).normal(size=arr.shape) * 0.01
    std = make_standardizer()
    path = tmp_path / "model.npz"
    save_checkpoint(path, params, std, feature_names=FEATURE_NAMES)

    loaded, loaded_std, meta = load_checkpoint(path)
    assert loaded.variant == variant
    assert loaded.f_in == 11 and loaded.t0 == 2 and loaded.seed == 42
    assert meta["feature_names"] == list(FEATURE_NAMES)
    orig = params.tensor_dict()
    back = loaded.tensor_dict()
    assert set(orig) == set(back)
    for name in orig:
        assert orig[name].tobytes() == back[name].tobytes(), name
    assert loaded_std.feature_means.tobytes() == std.feature_means.tobytes()
    assert loaded_std.target_mean == std.target_mean
    assert loaded_std.target_std == std.target_std


def test_config_survives(tmp_path):
    cfg = ModelConfig(heads=3, d_head=5, gru_hidden=7, head_hidden=9, dropout=0.1)
    params = init_params("full", 4, 3, cfg, seed=1)
    path = tmp_path / "m.npz"
    save_checkpoint(path, params, make_standardizer(4))
    loaded, _, _ = load_checkpoint(path)
    assert loaded.config == cfg


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, a=np.ones(3))
    with pytest.raises(CheckpointError, match="not a model checkpoint"):
        load_checkpoint(path)
