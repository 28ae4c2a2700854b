import pytest

from fadekit.config import SCHEMA, Config, describe_keys
from fadekit.errors import ConfigError


def test_defaults():
    cfg = Config()
    assert cfg["gmm.history"] == 500
    assert cfg["smrpn.strides"] == [4, 8, 16, 32, 64]
    assert cfg["eval.iou_thr"] == 0.3


def test_required_key_without_default():
    with pytest.raises(ConfigError, match="attention.weights"):
        Config()["attention.weights"]
    assert "attention.weights" not in Config().resolved()


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as info:
        Config({"gmm.histroy": 3})
    assert "gmm.history" in str(info.value)


def test_load_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[gmm]\nhistory = 200\nvar_threshold = 6\n[smrpn]\nlog_base = 10\nstrides = [8, 16]\n')
    cfg = Config.load(p)
    assert cfg["gmm.history"] == 200
    assert cfg["gmm.var_threshold"] == 6.0
    assert cfg["smrpn.log_base"] == "10"
    assert cfg["smrpn.strides"] == [8, 16]


def test_bad_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[gmm\n")
    with pytest.raises(ConfigError):
        Config.load(p)


def test_overrides_are_coerced():
    cfg = Config()
    cfg.apply_overrides(["gmm.history=100", "attention.enabled=yes", "smrpn.strides=[4,8]", "video.fps=25"])
    assert cfg["gmm.history"] == 100
    assert cfg["attention.enabled"] is True
    assert cfg["smrpn.strides"] == [4, 8]
    assert cfg["video.fps"] == 25.0


@pytest.mark.parametrize("item", ["gmm.history", "gmm.history=abc", "attention.enabled=maybe"])
def test_bad_overrides(item):
    with pytest.raises(ConfigError):
        Config().apply_overrides([item])


def test_type_mismatch():
    with pytest.raises(ConfigError):
        Config({"gmm.history": True})


def test_describe_lists_every_key():
    text = describe_keys()
    for name in SCHEMA:
        assert name in text
