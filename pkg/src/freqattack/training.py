"""Minibatch SGD training, clean or against a PGD adversary."""
from dataclasses import dataclass, field
import logging

import numpy as np

from .attack import AttackSpec, run_attack
from .errors import InvalidInputError

log = logging.getLogger(__name__)

TRAIN_PGD_STEP_FACTOR = 2.5
# training accuracy is logged on this many leading examples
ACC_SAMPLE = 512


def training_adversary(epsilon=8 / 255, iterations=10):
    """Non-targeted PGD used for adversarial training.

    Step size is ``2.5 * epsilon / iterations``, capped at ``epsilon``.
    """
    step = min(TRAIN_PGD_STEP_FACTOR * epsilon / iterations, epsilon)
    return AttackSpec(method="bim", epsilon=epsilon, iterations=iterations, step_size=step)


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.9
    seed: int = 0


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)

    def record(self, **row):
        self.epochs.append(row)

    @property
    def final(self):
        return self.epochs[-1] if self.epochs else {}


def train(model, dataset, config=None, adversary=None):
    """Train ``model`` in place and return ``(model, log)``.

    With ``adversary`` set, each minibatch is replaced by its adversarial
    version (generated against the current parameters) before the step.
    Shuffling uses a numpy generator seeded from ``config.seed``.
    """
    config = config or TrainConfig()
    if adversary is not None and adversary.targeted:
        raise InvalidInputError("adversarial training needs a non-targeted adversary")
    if len(dataset) == 0:
        raise InvalidInputError("empty dataset")
    rng = np.random.default_rng(config.seed)
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in model.params]
    history = TrainLog()
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = dataset.images[idx], dataset.labels[idx]
            if adversary is not None:
                xb = run_attack(model, xb, yb, adversary).adversarial
            loss, grads = model.param_gradient(xb, yb)
            for p, v, g in zip(model.params, velocity, grads):
                for k in p:
                    v[k] *= config.momentum
                    v[k] -= config.learning_rate * g[k]
                    p[k] += v[k]
            total += loss * len(idx)
            seen += len(idx)
        acc = model.accuracy(dataset.images[:ACC_SAMPLE], dataset.labels[:ACC_SAMPLE])
        history.record(epoch=epoch, loss=total / seen, train_accuracy=acc)
        log.info("epoch %d loss %.4f train acc %.4f", epoch, total / seen, acc)
    model.metadata.update({
        "train_epochs": config.epochs,
        "train_batch_size": config.batch_size,
        "train_learning_rate": config.learning_rate,
        "train_momentum": config.momentum,
        "train_seed": config.seed,
        "adversary": None if adversary is None else adversary.describe(),
        "final_train_accuracy": history.final.get("train_accuracy"),
    })
    return model, history


def adversarial_train(model, dataset, adversary=None, config=None):
    """Train against ``adversary`` (default: PGD, eps 8/255, 10 iterations)."""
    adversary = adversary or training_adversary()
    return train(model, dataset, config, adversary=adversary)
