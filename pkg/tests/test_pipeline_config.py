import json

import pytest

from logsplat.errors import ConfigError, MissingFile
from logsplat.pipeline import config_from_dict, default_config, load_config


def test_default_config_validates():
    cfg = default_config()
    cfg.validate()
    assert cfg.select.k_max == 32
    assert cfg.select.min_angle_deg == 15.0
    assert cfg.targets.n_views == 16
    assert cfg.crop.fov_min_deg == 10.0
    assert cfg.crop.fov_max_deg == 40.0


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'seeed'"):
        config_from_dict({"seeed": 3})


def test_unknown_section_key_named():
    with pytest.raises(ConfigError, match="unknown key 'select.k_maxx'"):
        config_from_dict({"select": {"k_maxx": 10}})


@pytest.mark.parametrize(
    "doc",
    [
        {"jobs": 0},
        {"select": {"k_max": 0}},
        {"crop": {"fov_min_deg": 50.0, "fov_max_deg": 40.0}},
        {"generator": {"mode": "diffusion"}},
        {"lift": {"opacity": 1.0}},
        {"lift": {"mode": "external_asset"}},
        {"generator": {"mode": "external_dir"}},
        {"judge": {"max_in_flight": 0}},
    ],
)
def test_invalid_values_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_round_trip_through_dict():
    cfg = config_from_dict({"seed": 9, "jobs": 3, "select": {"held_out": 1}})
    again = config_from_dict(cfg.to_dict())
    assert again == cfg
    assert again.seed == 9 and again.jobs == 3 and again.select.held_out == 1


def test_canonical_json_is_stable_and_compact():
    s = default_config().canonical_json()
    assert s == default_config().canonical_json()
    assert ": " not in s and ", " not in s
    keys = list(json.loads(s))
    assert keys == sorted(keys)


def test_color_list_coerced_to_tuple():
    cfg = config_from_dict({"generator": {"color": [0.1, 0.2, 0.3]}})
    assert cfg.generator.color == (0.1, 0.2, 0.3)


def test_load_config_errors(tmp_path):
    with pytest.raises(MissingFile):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_load_config_round_trip(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 4, "metrics": {"patch_size": 16}}))
    cfg = load_config(p)
    assert cfg.seed == 4
    assert cfg.metrics.patch_size == 16
