import json
import math

import numpy as np
import pytest

from herosgan.config import RunConfig, load_config, override, parse_config
from herosgan.dataset import GenerateConfig, episode_name, generate_dataset, load_pairs
from herosgan.signal import MotionSpec, NoiseModel, load_csv
from herosgan.training import ConfigError

NOISE = NoiseModel(0.05, 1e-4, 0.0, 6.0)


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_generate_counts(tmp_path):
    m = generate_dataset(tmp_path, GenerateConfig(n_episodes=20, seed=1), MotionSpec(), NOISE)
    assert len(list((tmp_path / "high").glob("*.csv"))) == 20
    assert len(list((tmp_path / "low").glob("*.csv"))) == 20
    assert len(json.loads((tmp_path / "manifest.json").read_text())["episodes"]) == 20 == len(m["episodes"])


def test_generate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        generate_dataset(tmp_path / d, GenerateConfig(n_episodes=3, seed=1), MotionSpec(), NOISE)
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_generated_pairs_are_consistent(tmp_path):
    generate_dataset(tmp_path, GenerateConfig(n_episodes=2, seed=3), MotionSpec(), NOISE)
    hi = load_csv(tmp_path / "high" / episode_name(0))
    lo = load_csv(tmp_path / "low" / episode_name(0))
    assert hi.samples.shape == lo.samples.shape == (3, 800)
    assert np.abs(lo.samples).max() <= 6.0 < np.abs(hi.samples).max()


def test_load_pairs_lists_unmatched(tmp_path):
    generate_dataset(tmp_path / "a", GenerateConfig(n_episodes=3), MotionSpec(), NOISE)
    generate_dataset(tmp_path / "b", GenerateConfig(n_episodes=2), MotionSpec(), NOISE)
    with pytest.raises(ValueError, match=episode_name(2)):
        load_pairs(tmp_path / "a" / "high", tmp_path / "b" / "high")


def test_default_config_round_trips():
    cfg = RunConfig()
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert cfg.to_dict()["noise"]["clip_level"] == 6.0


def test_infinite_clip_level_serializes():
    cfg = parse_config({"noise": {"clip_level": "inf"}})
    assert math.isinf(cfg.noise.clip_level)
    assert cfg.to_dict()["noise"]["clip_level"] == "inf"


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": {}},
        {"train": {"no_such_key": 1}},
        {"train": {"ots_on": True, "l1_substitute_on": True}},
        {"motion": {"shake_s": 0}},
        {"generate": {"n_episodes": 0}},
        [],
    ],
)
def test_bad_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_override_wins_and_ignores_none(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"steps": 10, "seed": 4}}))
    cfg = override(load_config(tmp_path / "c.json"), "train", steps=3, seed=None)
    assert cfg.train.steps == 3 and cfg.train.seed == 4
