import numpy as np
import pytest

from freqattack.attack import AttackSpec
from freqattack.data import LabeledDataset, generate_synthetic
from freqattack.errors import InvalidInputError
from freqattack.model import Classifier, default_architecture
from freqattack.training import TrainConfig, adversarial_train, train, training_adversary


def fresh(seed=0):
    return Classifier(default_architecture(10, 0.5), (12, 12, 1), seed=seed)


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(96, side=12, seed=2)


def test_zero_epsilon_adversarial_equals_clean(data):
    cfg = TrainConfig(epochs=2, batch_size=32, seed=5)
    a, _ = train(fresh(), data, cfg)
    b, _ = adversarial_train(fresh(), data, training_adversary(0.0, 10), cfg)
    assert np.array_equal(a.flat_params(), b.flat_params())


def test_training_is_seeded(data):
    cfg = TrainConfig(epochs=1, batch_size=32, seed=1)
    a, la = train(fresh(), data, cfg)
    b, lb = train(fresh(), data, cfg)
    assert np.array_equal(a.flat_params(), b.flat_params()) and la.epochs == lb.epochs
    c, _ = train(fresh(), data, TrainConfig(epochs=1, batch_size=32, seed=2))
    assert not np.array_equal(a.flat_params(), c.flat_params())


def test_log_and_metadata(data):
    model, log = train(fresh(), data, TrainConfig(epochs=3, batch_size=32))
    assert [row["epoch"] for row in log.epochs] == [0, 1, 2]
    assert model.metadata["final_train_accuracy"] == log.final["train_accuracy"]
    assert model.metadata["adversary"] is None


def test_loss_decreases(data):
    _, log = train(fresh(), data, TrainConfig(epochs=4, batch_size=16, learning_rate=0.05))
    assert log.epochs[-1]["loss"] < log.epochs[0]["loss"]


def test_adversary_defaults():
    spec = training_adversary()
    assert spec.method == "bim" and spec.iterations == 10
    assert spec.alpha == pytest.approx(2.5 * (8 / 255) / 10)
    assert training_adversary(0.1, 2).alpha == pytest.approx(0.1)


def test_adversarial_metadata(data):
    model, _ = adversarial_train(fresh(), data.subset(32), training_adversary(4 / 255, 2),
                                 TrainConfig(epochs=1, batch_size=16))
    assert model.metadata["adversary"]["method"] == "bim"


def test_invalid_training(data):
    with pytest.raises(InvalidInputError):
        train(fresh(), data, adversary=AttackSpec("bim", 0.1, 2, targeted=True))
    empty = LabeledDataset(np.zeros((0, 12, 12, 1)), np.zeros(0, dtype=int))
    with pytest.raises(InvalidInputError):
        train(fresh(), empty)
