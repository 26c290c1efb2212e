"""TOML run configuration parsing and round-trip."""

import pytest

from neurosem import config as cfg
from neurosem.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_config_gets_defaults(tmp_path):
    path = write(tmp_path, """
[paths]
dataset = "data/d.eeg"
bank = "data/bank.jsonl"
""")
    run = cfg.parse_config(path)
    assert run.paths.dataset == "data/d.eeg"
    assert run.encoder.d_model == 64
    assert run.train.temperature == 0.07
    assert run.train.loss_kind == "contrastive"
    assert run.train.split == [0.8, 0.1, 0.1]


def test_misspelled_key_named(tmp_path):
    path = write(tmp_path, """
[train]
temprature = 0.1
""")
    with pytest.raises(ConfigError, match="temprature"):
        cfg.parse_config(path)


def test_unknown_section_rejected(tmp_path):
    path = write(tmp_path, "[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError, match="nonsense"):
        cfg.parse_config(path)


def test_type_mismatch_rejected(tmp_path):
    path = write(tmp_path, "[train]\nbatch_size = \"many\"\n")
    with pytest.raises(ConfigError, match="batch_size"):
        cfg.parse_config(path)


def test_bad_values_rejected(tmp_path):
    with pytest.raises(ConfigError, match="temperature"):
        cfg.parse_config(write(tmp_path, "[train]\ntemperature = -1.0\n"))
    with pytest.raises(ConfigError, match="split"):
        cfg.parse_config(write(tmp_path, "[train]\nsplit = [0.5, 0.5]\n"))
    with pytest.raises(ConfigError, match="loss_kind"):
        cfg.parse_config(write(tmp_path, "[train]\nloss_kind = \"huber\"\n"))


def test_effective_config_roundtrip(tmp_path):
    path = write(tmp_path, """
[paths]
dataset = "x.eeg"
bank = "b.jsonl"
out_dir = "runs/a"

[encoder]
d_model = 32
dropout = 0.2

[train]
epochs = 7
learning_rate = 0.0005
active_heads = ["ObjectSnap", "ThemeTag"]
""")
    run = cfg.parse_config(path)
    out = tmp_path / "effective.toml"
    cfg.write_effective(run, out)
    again = cfg.parse_config(out)
    assert again == run


def test_taxonomy_override(tmp_path):
    path = write(tmp_path, """
[taxonomy]
low = ["ObjectSnap", "Hue", "Edge"]
mid = ["Scene", "SpatialLink", "Angle"]
high = ["Mood", "ThemeTag", "Action", "Symbol"]
""")
    run = cfg.parse_config(path)
    from neurosem.captions import Taxonomy
    tax = Taxonomy(run.taxonomy)
    assert "Hue" in tax.names
    assert len(tax.names) == 10


def test_config_hash_stable_and_sensitive(tmp_path):
    a = cfg.RunConfig()
    b = cfg.RunConfig()
    assert a.config_hash() == b.config_hash()
    b.train.epochs += 1
    assert a.config_hash() != b.config_hash()
