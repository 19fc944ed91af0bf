"""Experiment configuration in a flat ``key = value`` text format.

Lines are ``key = value``; blank lines and lines starting with ``#`` are
ignored. Values are typed by the :class:`ExperimentConfig` field they set:
integers, floats (written with ``repr`` so they round-trip exactly),
booleans (``true``/``false``), strings, and comma-separated lists. Unknown
keys are rejected.

Model wiring for ``matrix`` and ``sweep`` uses three list-valued keys::

    models  = cln=out/cln.ckpt, adv=out/adv.ckpt, c1=out/c1.ckpt
    sources = Cln=cln, Cln_3=c1+c2+c3
    targets = Cln=cln, Adv=adv, D4=adv@median_smooth
"""
from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
import os

from .errors import ConfigurationError

OUTPUT_ENV = "FREQATTACK_OUTPUT_DIR"


@dataclass
class ExperimentConfig:
    # data
    dataset_format: str = "synthetic"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    synthetic_train: int = 2000
    synthetic_test: int = 500
    synthetic_side: int = 32
    synthetic_channels: int = 1
    data_seed: int = 0
    # model and training
    checkpoint: str = "model.ckpt"
    width: float = 1.0
    epochs: int = 8
    batch_size: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.9
    train_seed: int = 0
    adversarial: bool = False
    train_epsilon: float = 8 / 255
    train_iterations: int = 10
    # attack
    method: str = "mim"
    epsilon: float = 16 / 255
    iterations: int = 10
    step_size: float = 0.0
    momentum_decay: float = 1.0
    targeted: bool = False
    target_rule: str = "next"
    constraint: str = "none"
    mask: str = "low"
    reduced_dim: int = 16
    sigma: float = 1.0
    attack_seed: int = 0
    image_format: str = "pgm"
    # defenses
    median_window: int = 3
    resize_min_scale: float = 0.8
    jitter_rotation: float = 10.0
    jitter_shear: float = 0.1
    jitter_shift: float = 2.0
    jitter_zoom: float = 0.1
    # evaluation
    eval_examples: int = 1000
    models: list = field(default_factory=list)
    sources: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    clean_target: str = ""
    sweep_source: str = ""
    sweep_target: str = ""
    n_values: list = field(default_factory=lambda: [32, 24, 16, 8, 4])
    master_seed: int = 0
    threads: int = 1
    output_dir: str = "out"

    def digest(self):
        """Provenance hash; excludes keys that only affect where and how fast things run."""
        content = replace(self, threads=1, output_dir="")
        return hashlib.sha256(dump_config(content).encode("utf-8")).hexdigest()[:16]

    def resolved_output_dir(self):
        return os.environ.get(OUTPUT_ENV) or self.output_dir


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_INT_LISTS = {"n_values"}


def _kind(name):
    default = ExperimentConfig()
    return type(getattr(default, name))


def _parse_value(name, raw):
    kind = _kind(name)
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is list:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return [int(s) for s in items] if name in _INT_LISTS else items
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


def apply_overrides(config, pairs):
    """Set ``key=value`` strings on ``config`` (returns ``config``)."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigurationError(f"unknown config key {key!r}")
        setattr(config, key, _parse_value(key, raw))
    return config


def parse_config(text):
    config = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        setattr(config, key, _parse_value(key, raw))
    return config


def dump_config(config):
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in asdict(config).items())


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))


def parse_pairs(items, what):
    """Split ``name=value`` list items into an ordered dict."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"{what} entry {item!r} must look like name=value")
        name, value = (s.strip() for s in item.split("=", 1))
        if name in out:
            raise ConfigurationError(f"duplicate {what} name {name!r}")
        out[name] = value
    return out
