"""Frequency-constrained adversarial attacks and a desk-scale evaluation harness."""
from .attack import AttackResult, AttackSpec, run_attack
from .constraint import (
    DownUp, FreqMask, GaussianSmooth, NoConstraint, SpectrumMask, build_mask, make_constraint,
)
from .data import LabeledDataset, generate_synthetic, load_idx_dataset, synthetic_splits
from .defense import DefendedModel, Preprocessor
from .evaluation import attack_success_rate, dimensionality_sweep, relative_difference, run_matrix
from .model import Classifier, default_architecture, load_checkpoint, save_checkpoint
from .training import TrainConfig, adversarial_train, train, training_adversary
from .transform import dct2, dct_image, idct2, idct_image

__version__ = "0.1.0"

__all__ = [
    "AttackResult", "AttackSpec", "run_attack",
    "DownUp", "FreqMask", "GaussianSmooth", "NoConstraint", "SpectrumMask", "build_mask",
    "make_constraint",
    "LabeledDataset", "generate_synthetic", "load_idx_dataset", "synthetic_splits",
    "DefendedModel", "Preprocessor",
    "attack_success_rate", "dimensionality_sweep", "relative_difference", "run_matrix",
    "Classifier", "default_architecture", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "adversarial_train", "train", "training_adversary",
    "dct2", "dct_image", "idct2", "idct_image",
]
