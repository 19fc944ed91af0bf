"""The desk-scale model zoo used for transfer matrices.

Two target models (clean ``cln`` and adversarially trained ``adv``) plus
three clean and three adversarially trained source models that differ from
the targets and from each other by seed, and for the third member by width.
Defended targets wrap ``adv`` with a preprocessor.
"""
from dataclasses import dataclass, replace
import logging
import os

from .config import ExperimentConfig
from .data import load_idx_dataset, synthetic_splits
from .defense import DefendedModel, Preprocessor
from .errors import ConfigurationError
from .model import Classifier, default_architecture, load_checkpoint, save_checkpoint
from .training import TrainConfig, adversarial_train, train, training_adversary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ZooMember:
    name: str
    adversarial: bool
    seed: int
    width: float = 1.0


ZOO = (
    ZooMember("cln", False, 0),
    ZooMember("adv", True, 0),
    ZooMember("cln_s1", False, 1),
    ZooMember("cln_s2", False, 2),
    ZooMember("cln_s3", False, 3, 0.75),
    ZooMember("adv_s1", True, 1),
    ZooMember("adv_s2", True, 2),
    ZooMember("adv_s3", True, 3, 0.75),
)

SOURCES = {
    "Cln": ["cln"],
    "Adv": ["adv"],
    "Cln_1": ["cln_s1"],
    "Cln_3": ["cln_s1", "cln_s2", "cln_s3"],
    "Adv_1": ["adv_s1"],
    "Adv_3": ["adv_s1", "adv_s2", "adv_s3"],
}

# D0 is the identity preprocessor: its column must equal the Adv column
TARGETS = {
    "Cln": ("cln", None),
    "Adv": ("adv", None),
    "D0": ("adv", "identity"),
    "D2": ("adv", "resize_pad"),
    "D3": ("adv", "affine_jitter"),
    "D4": ("adv", "median_smooth"),
}


def load_splits(config):
    """Return ``(train, test)`` datasets described by ``config``."""
    if config.dataset_format == "synthetic":
        return synthetic_splits(config.synthetic_train, config.synthetic_test,
                                config.synthetic_side, config.synthetic_channels,
                                seed=config.data_seed)
    if config.dataset_format == "idx":
        train_set = load_idx_dataset(config.train_images, config.train_labels, "train")
        test_set = None
        if config.test_images:
            test_set = load_idx_dataset(config.test_images, config.test_labels, "test",
                                        num_classes=train_set.num_classes)
        return train_set, test_set
    raise ConfigurationError(f"unknown dataset format {config.dataset_format!r}")


def train_config(config, seed):
    return TrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                       learning_rate=config.learning_rate, momentum=config.momentum, seed=seed)


def train_model(config, train_set, seed=None, width=None, adversarial=None):
    seed = config.train_seed if seed is None else seed
    width = config.width if width is None else width
    adversarial = config.adversarial if adversarial is None else adversarial
    model = Classifier(default_architecture(train_set.num_classes, width),
                       train_set.image_shape, seed=seed)
    tc = train_config(config, seed)
    if adversarial:
        adversary = training_adversary(config.train_epsilon, config.train_iterations)
        return adversarial_train(model, train_set, adversary, tc)
    return train(model, train_set, tc)


def preprocessor_for(kind, config):
    if kind == "median_smooth":
        return Preprocessor(kind, {"window": config.median_window})
    if kind == "resize_pad":
        return Preprocessor(kind, {"min_scale": config.resize_min_scale})
    if kind == "affine_jitter":
        return Preprocessor(kind, {"rotation_deg": config.jitter_rotation,
                                   "shear": config.jitter_shear,
                                   "shift": config.jitter_shift, "zoom": config.jitter_zoom})
    return Preprocessor(kind)


def train_zoo(config, train_set, directory=None, members=ZOO):
    """Train (or load cached checkpoints of) every zoo member.

    Checkpoints are written to ``directory`` as ``<name>.ckpt`` and reused
    when their stored training settings match ``config``.
    """
    models = {}
    for member in members:
        path = os.path.join(directory, f"{member.name}.ckpt") if directory else None
        key = _zoo_key(config, member)
        if path and os.path.exists(path):
            cached = load_checkpoint(path)
            if cached.metadata.get("zoo_key") == key:
                models[member.name] = cached
                continue
        log.info("training zoo member %s", member.name)
        model, _ = train_model(config, train_set, member.seed, member.width, member.adversarial)
        model.metadata["zoo_key"] = key
        if path:
            os.makedirs(directory, exist_ok=True)
            save_checkpoint(model, path)
        models[member.name] = model
    return models


def _zoo_key(config, member):
    fields = (member, config.dataset_format, config.synthetic_train, config.synthetic_side,
              config.synthetic_channels, config.data_seed, config.train_images,
              config.epochs, config.batch_size, config.learning_rate, config.momentum,
              config.train_epsilon, config.train_iterations)
    return repr(fields)


def zoo_matrix_wiring(models, config):
    """Sources and targets of the desk-scale transfer matrix."""
    sources = {name: [models[m] for m in members] if len(members) > 1 else models[members[0]]
               for name, members in SOURCES.items()}
    targets = {}
    for name, (base, pre) in TARGETS.items():
        targets[name] = models[base] if pre is None else DefendedModel(
            models[base], preprocessor_for(pre, config))
    return sources, targets


def zoo_config_lines(directory):
    """``models``/``sources``/``targets`` config values pointing at zoo checkpoints."""
    models = [f"{m.name}={os.path.join(directory, m.name + '.ckpt')}" for m in ZOO]
    sources = [f"{name}={'+'.join(members)}" for name, members in SOURCES.items()]
    targets = [f"{name}={base}" + (f"@{pre}" if pre else "") for name, (base, pre) in TARGETS.items()]
    return models, sources, targets


def with_zoo(config, directory):
    models, sources, targets = zoo_config_lines(directory)
    return replace(config, models=models, sources=sources, targets=targets, clean_target="Cln")


__all__ = ["ExperimentConfig", "ZOO", "SOURCES", "TARGETS", "load_splits", "train_model",
           "train_zoo", "zoo_matrix_wiring", "with_zoo", "preprocessor_for"]
