from __future__ import annotations

import pytest

from mmdit_lab.exceptions import ConfigError, UnknownLayer
from mmdit_lab.mmdit.config import ModelConfig, load_config, save_config
from mmdit_lab.mmdit.tokens import LayerId, LayerKind


def test_desk_profile_defaults():
    config = ModelConfig()
    assert (config.n_double_blocks, config.n_single_blocks) == (4, 8)
    assert config.total_blocks == 12
    assert config.latent_grid == (16, 16)
    assert config.pixel_shape == (32, 32, 3)


@pytest.mark.parametrize("changes", [
    {"d_model": 30},                       # not divisible by 4 heads
    {"n_double_blocks": 1, "n_single_blocks": 0},
    {"latent_grid": (0, 4)},
    {"rng": "numpy.pcg64"},
    {"d_model": 8, "n_heads": 2},          # cannot hold a 2x2x3 patch
    {"d_model": 16, "n_heads": 4},         # head dim 4 leaves no rotary pairs for rows and columns
    {"seed": -1},
])
def test_invalid_configs_raise(changes):
    with pytest.raises(ConfigError):
        ModelConfig(**changes)


def test_smallest_head_dim_rotates_every_axis():
    assert ModelConfig(d_model=24, n_heads=4).rope_axes == (2, 2, 2)


def test_toml_file_reloads_to_equal_config(tmp_path):
    config = ModelConfig(d_model=32, n_double_blocks=2, n_single_blocks=3, latent_grid=(4, 6), seed=7)
    path = save_config(config, tmp_path / "model.toml")
    assert load_config(path) == config


def test_unknown_toml_key_is_config_error(tmp_path):
    path = tmp_path / "model.toml"
    path.write_text("d_model = 32\nwidth = 9\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="width"):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_fingerprint_ignores_weights_path_only():
    base = ModelConfig()
    assert base.fingerprint() == base.replace(weights="other.mmdl").fingerprint()
    assert base.fingerprint() != base.replace(seed=1).fingerprint()
    assert len(base.fingerprint()) == 32


def test_deeper_profiles_load_without_code_change():
    config = ModelConfig(n_double_blocks=8, n_single_blocks=24)
    assert LayerId.parse("single:24").ordinal(config) == 31


# ----------------------------
# Layer ids
# ----------------------------

def test_layer_parse_is_one_based():
    layer = LayerId.parse("double:8")
    assert layer == LayerId.double(7)
    assert layer.label == "double:8"
    assert str(layer) == "Double#8"
    assert LayerId.parse("input").kind is LayerKind.INPUT_EMBEDDING


@pytest.mark.parametrize("text", ["double:0", "triple:2", "single", "single:x"])
def test_layer_parse_rejects_garbage(text):
    with pytest.raises(UnknownLayer):
        LayerId.parse(text)


def test_ordinals_cover_blocks_in_order():
    config = ModelConfig()
    ordinals = [LayerId.from_ordinal(config, k) for k in range(config.total_blocks)]
    assert ordinals[3] == LayerId.double(3)
    assert ordinals[4] == LayerId.single(0)
    assert [layer.ordinal(config) for layer in ordinals] == list(range(12))
    assert LayerId.input_embedding().ordinal(config) == -1


def test_layers_outside_the_model_are_unknown():
    config = ModelConfig()
    with pytest.raises(UnknownLayer):
        LayerId.double(8).validate(config)
    with pytest.raises(UnknownLayer):
        LayerId.from_ordinal(config, 12)
