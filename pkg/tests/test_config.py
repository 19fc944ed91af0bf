import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqattack.config import (
    OUTPUT_ENV, ExperimentConfig, apply_overrides, dump_config, load_config, parse_config,
    parse_pairs, save_config,
)
from freqattack.errors import ConfigurationError

names = st.text(alphabet="abcdefghij_=/.+@0123456789", min_size=1, max_size=12).filter(
    lambda s: s.strip() == s)


@given(epsilon=st.floats(0, 1, allow_nan=False), iterations=st.integers(1, 100),
       targeted=st.booleans(), method=st.sampled_from(["fgsm", "bim", "mim"]),
       n_values=st.lists(st.integers(1, 64), max_size=5),
       models=st.lists(names.filter(lambda s: "," not in s), max_size=4),
       lr=st.floats(1e-6, 1.0))
def test_round_trip(epsilon, iterations, targeted, method, n_values, models, lr):
    cfg = ExperimentConfig(epsilon=epsilon, iterations=iterations, targeted=targeted,
                           method=method, n_values=n_values, models=models, learning_rate=lr)
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_file_round_trip(tmp_path):
    cfg = ExperimentConfig(epsilon=1 / 3, sources=["A=a+b"], output_dir="x y")
    save_config(cfg, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == cfg


def test_comments_and_blanks():
    cfg = parse_config("# comment\n\nepsilon = 0.25\n  method=bim  \n")
    assert cfg.epsilon == 0.25 and cfg.method == "bim"


@pytest.mark.parametrize("text", ["bogus = 1", "epsilon", "iterations = ten",
                                  "targeted = maybe", "n_values = 4, x"])
def test_rejects_bad_files(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_overrides():
    cfg = apply_overrides(ExperimentConfig(), ["epsilon=0.1", "targets=A=a, D4=a@median_smooth"])
    assert cfg.epsilon == 0.1 and cfg.targets == ["A=a", "D4=a@median_smooth"]
    with pytest.raises(ConfigurationError):
        apply_overrides(ExperimentConfig(), ["nokey=1"])
    with pytest.raises(ConfigurationError):
        apply_overrides(ExperimentConfig(), ["epsilon"])


def test_parse_pairs():
    assert parse_pairs(["a=x", "b = y+z"], "sources") == {"a": "x", "b": "y+z"}
    with pytest.raises(ConfigurationError):
        parse_pairs(["a=x", "a=y"], "sources")
    with pytest.raises(ConfigurationError):
        parse_pairs(["ax"], "sources")


def test_digest_changes_with_values():
    assert ExperimentConfig().digest() != ExperimentConfig(master_seed=1).digest()
    assert ExperimentConfig().digest() == ExperimentConfig(threads=4, output_dir="x").digest()


def test_output_dir_override(monkeypatch):
    cfg = ExperimentConfig(output_dir="a")
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert cfg.resolved_output_dir() == "a"
    monkeypatch.setenv(OUTPUT_ENV, "/tmp/b")
    assert cfg.resolved_output_dir() == "/tmp/b"


def test_missing_file(tmp_path):
    with pytest.raises(OSError, match="nope.cfg"):
        load_config(tmp_path / "nope.cfg")


def test_floats_are_exact():
    cfg = ExperimentConfig(epsilon=16 / 255)
    assert parse_config(dump_config(cfg)).epsilon == np.float64(16 / 255)
