"""Sign-gradient attacks under an l-infinity budget: FGSM, BIM (PGD) and MIM.

All attacks optimize a perturbation ``delta`` while the model sees
``x + P(delta)`` for a linear constraint ``P`` (see :mod:`freqattack.constraint`).
The gradient with respect to ``delta`` is therefore ``P^T grad_x J``. The
constraint is applied once more to the final ``delta`` before the adversarial
image is emitted.
"""
from dataclasses import dataclass, field
import hashlib
import json

import numpy as np

from .constraint import FreqMask, NoConstraint, SplitMix64
from .errors import InvalidInputError, NumericalError

METHODS = ("fgsm", "bim", "mim")
TARGET_RULES = ("next", "random")
L1_GUARD = 1e-12


@dataclass(frozen=True)
class AttackSpec:
    """Full description of one attack run.

    ``step_size`` defaults to ``epsilon / iterations``. ``momentum_decay`` is
    only used by ``mim``. In targeted mode the loss of the target label is
    descended (sign ``s = -1``).
    """

    method: str = "mim"
    epsilon: float = 16 / 255
    iterations: int = 10
    step_size: float | None = None
    momentum_decay: float = 1.0
    targeted: bool = False
    target_rule: str = "next"
    constraint: object = field(default_factory=NoConstraint)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown attack method {self.method!r}")
        if self.epsilon < 0 or not np.isfinite(self.epsilon):
            raise InvalidInputError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidInputError(f"iterations must be a positive integer, got {self.iterations}")
        if self.method == "fgsm" and self.iterations != 1:
            raise InvalidInputError("fgsm is a single-step attack (iterations=1)")
        if self.momentum_decay < 0:
            raise InvalidInputError("momentum decay must be >= 0")
        if self.alpha > self.epsilon * (1 + 1e-12) + 1e-15:
            raise InvalidInputError(f"step size {self.alpha} exceeds epsilon {self.epsilon}")
        if self.target_rule not in TARGET_RULES:
            raise InvalidInputError(f"unknown target rule {self.target_rule!r}")

    @property
    def alpha(self):
        if self.method == "fgsm":
            return self.epsilon
        if self.step_size is None:
            return self.epsilon / self.iterations
        return self.step_size

    @property
    def sign(self):
        return -1.0 if self.targeted else 1.0

    def describe(self):
        return {
            "method": self.method,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "step_size": self.alpha,
            "momentum_decay": self.momentum_decay,
            "targeted": self.targeted,
            "target_rule": self.target_rule,
            "constraint": self.constraint.describe(),
            "seed": self.seed,
        }

    def digest(self):
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class AttackResult:
    """Outcome of :func:`run_attack`.

    ``perturbation`` is ``adversarial - images`` (inside the budget and pixel
    range). ``constrained_delta`` is the constrained perturbation before pixel
    clipping; for frequency masks it lies exactly in the pass band.
    """

    adversarial: np.ndarray
    perturbation: np.ndarray
    constrained_delta: np.ndarray
    attack_labels: np.ndarray


def fgsm_step(gradient, epsilon, s=1):
    """``s * epsilon * sign(gradient)`` with ``sign(0) = 0``."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if not np.all(np.isfinite(gradient)):
        raise NumericalError("non-finite gradient")
    if s not in (1, -1):
        raise InvalidInputError("s must be +1 or -1")
    return s * epsilon * np.sign(gradient)


def _as_models(models):
    if isinstance(models, (list, tuple)):
        if not models:
            raise InvalidInputError("need at least one model")
        return list(models)
    return [models]


def ensemble_loss_and_gradient(models, x, labels):
    """Mean over ensemble members of per-example loss and its input gradient."""
    models = _as_models(models)
    total_loss, total_grad = None, None
    for m in models:
        loss, grad = m.loss_and_input_gradient(x, labels)
        total_loss = loss if total_loss is None else total_loss + loss
        total_grad = grad if total_grad is None else total_grad + grad
    k = len(models)
    return total_loss / k, total_grad / k


def constrained_gradient(models, images, delta, labels, constraint=None):
    """Gradient of ``J(x + P(delta), y)`` with respect to ``delta``."""
    constraint = constraint or NoConstraint()
    images = np.asarray(images, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if images.shape != delta.shape:
        raise InvalidInputError(f"image shape {images.shape} != perturbation shape {delta.shape}")
    _, grad = ensemble_loss_and_gradient(models, images + constraint.apply(delta), labels)
    return constraint.adjoint(grad)


def pick_target_label(true_label, num_classes, rule="next", seed=0):
    """Choose a label different from ``true_label``.

    ``next`` returns ``(y + 1) mod K``; ``random`` draws uniformly from the
    other ``K - 1`` labels with a SplitMix64 stream seeded by ``seed``.
    """
    if num_classes < 2:
        raise InvalidInputError("targeted attacks need at least two classes")
    if not 0 <= true_label < num_classes:
        raise InvalidInputError(f"label {true_label} out of range")
    if rule == "next":
        return (int(true_label) + 1) % num_classes
    if rule == "random":
        r = SplitMix64(seed).below(num_classes - 1)
        return r if r < true_label else r + 1
    raise InvalidInputError(f"unknown target rule {rule!r}")


def example_seed(master_seed, index):
    """Per-example seed derived from ``(master_seed, index)`` only."""
    return int(np.random.SeedSequence([int(master_seed) & (2**63 - 1), int(index)])
               .generate_state(1, dtype=np.uint64)[0])


def derive_targets(labels, num_classes, spec, offset=0):
    return np.array([
        pick_target_label(int(y), num_classes, spec.target_rule, example_seed(spec.seed, offset + i))
        for i, y in enumerate(labels)
    ], dtype=np.int64)


def _project(x, delta, epsilon):
    delta = np.clip(delta, -epsilon, epsilon)
    return np.clip(x + delta, 0.0, 1.0) - x


def _finalize(x, delta, spec):
    final = spec.constraint.apply(delta)
    if isinstance(spec.constraint, FreqMask):
        # the pass-band projection can overshoot the budget; rescale, which
        # keeps the result inside the pass band
        axes = tuple(range(1, final.ndim))
        peak = np.abs(final).max(axis=axes, keepdims=True)
        scale = np.where(peak > spec.epsilon, spec.epsilon / np.maximum(peak, 1e-300), 1.0)
        final = final * scale
    adversarial = np.clip(x + final, 0.0, 1.0)
    return adversarial, final


def run_attack(models, images, labels, spec, targets=None, on_step=None, index_offset=0):
    """Run ``spec`` against one model or an ensemble.

    Args:
        models: a classifier or a list of classifiers (ensemble; losses averaged).
        images: one ``(H, W, C)`` image or a ``(N, H, W, C)`` batch in ``[0, 1]``.
        labels: true labels.
        spec: :class:`AttackSpec`.
        targets: target labels for targeted mode; derived from ``spec.target_rule``
            when omitted.
        on_step: optional ``callback(iteration, delta)`` called after every update.
        index_offset: dataset index of the first image, for per-example seeds.

    Returns:
        :class:`AttackResult`.
    """
    models = _as_models(models)
    x = np.asarray(images, dtype=np.float64)
    single = x.shape == models[0].input_shape
    if single:
        x = x[None]
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if len(y) != len(x):
        raise InvalidInputError(f"{len(x)} images but {len(y)} labels")
    if spec.targeted:
        k = models[0].num_classes
        if k < 2:
            raise InvalidInputError("targeted attacks need at least two classes")
        if targets is None:
            y_att = derive_targets(y, k, spec, index_offset)
        else:
            y_att = np.atleast_1d(np.asarray(targets, dtype=np.int64))
            if np.any(y_att == y):
                raise InvalidInputError("target label equals true label")
    else:
        y_att = y

    s = spec.sign
    eps = spec.epsilon
    delta = np.zeros_like(x)
    if spec.method == "fgsm":
        grad = constrained_gradient(models, x, delta, y_att, spec.constraint)
        delta = _project(x, fgsm_step(grad, eps, int(s)), eps)
        if on_step is not None:
            on_step(0, delta)
    else:
        g = np.zeros_like(x)
        axes = tuple(range(1, x.ndim))
        for t in range(spec.iterations):
            grad = constrained_gradient(models, x, delta, y_att, spec.constraint)
            if not np.all(np.isfinite(grad)):
                raise NumericalError("non-finite gradient")
            if spec.method == "mim":
                l1 = np.abs(grad).sum(axis=axes, keepdims=True)
                normed = np.where(l1 < L1_GUARD, 0.0, grad / np.where(l1 < L1_GUARD, 1.0, l1))
                g = spec.momentum_decay * g + normed
            else:
                g = grad
            delta = _project(x, delta + s * spec.alpha * np.sign(g), eps)
            if on_step is not None:
                on_step(t, delta)

    adversarial, final = _finalize(x, delta, spec)
    result = AttackResult(adversarial, adversarial - x, final, y_att)
    if single:
        result = AttackResult(adversarial[0], (adversarial - x)[0], final[0], y_att[0])
    return result
