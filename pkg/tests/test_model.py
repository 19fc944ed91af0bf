import json

import numpy as np
import pytest

from freqattack.errors import InvalidInputError, NumericalError
from freqattack.model import (
    CHECKPOINT_MAGIC, Classifier, default_architecture, linear_architecture, load_checkpoint,
    log_softmax, save_checkpoint, softmax,
)


def central_difference(f, x, idx, h=1e-5):
    old = x[idx]
    x[idx] = old + h
    up = f()
    x[idx] = old - h
    dn = f()
    x[idx] = old
    return (up - dn) / (2 * h)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_input_gradient_finite_difference(seed):
    rng = np.random.default_rng(seed)
    m = Classifier(default_architecture(4, 0.5), (8, 8, 1), seed=seed)
    x = rng.uniform(size=(2, 8, 8, 1))
    y = rng.integers(0, 4, 2)
    g = m.input_gradient(x, y)
    for _ in range(10):
        idx = tuple(int(rng.integers(0, s)) for s in x.shape)
        fd = central_difference(lambda: m.losses(x, y).sum(), x, idx)
        assert rel_err(g[idx], fd) <= 1e-4 or abs(g[idx] - fd) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_param_gradient_finite_difference(seed):
    rng = np.random.default_rng(100 + seed)
    m = Classifier(default_architecture(3, 0.5), (7, 7, 2), seed=seed)
    x = rng.uniform(size=(3, 7, 7, 2))
    y = rng.integers(0, 3, 3)
    _, grads = m.param_gradient(x, y)
    for _ in range(10):
        layer = int(rng.choice([i for i, p in enumerate(m.params) if p]))
        key = sorted(m.params[layer])[int(rng.integers(len(m.params[layer])))]
        arr = m.params[layer][key]
        idx = tuple(int(rng.integers(0, s)) for s in arr.shape)
        fd = central_difference(lambda: m.loss(x, y), arr, idx)
        got = grads[layer][key][idx]
        assert rel_err(got, fd) <= 1e-4 or abs(got - fd) <= 1e-9


def test_linear_model_gradient_closed_form(rng):
    m = Classifier(linear_architecture(3), (2, 2, 1), seed=0)
    x = rng.uniform(size=(2, 2, 1))
    p = m.forward(x)
    onehot = np.eye(3)[1]
    expected = (m.params[1]["W"] @ (p - onehot)).reshape(2, 2, 1)
    assert np.allclose(m.input_gradient(x, 1), expected, atol=1e-12)


def test_probabilities(tiny_model, rng):
    p = tiny_model.forward(rng.uniform(size=(5, 8, 8, 1)))
    assert p.shape == (5, 4)
    assert np.allclose(p.sum(axis=1), 1.0) and (p >= 0).all()


def test_log_softmax_stable():
    z = np.array([[1000.0, 0.0, -1000.0]])
    assert np.isfinite(log_softmax(z)).all()
    assert softmax(z)[0, 0] == pytest.approx(1.0)


def test_single_image_and_batch_agree(tiny_model, rng):
    x = rng.uniform(size=(3, 8, 8, 1))
    batch = tiny_model.logits(x)
    for i in range(3):
        assert np.allclose(tiny_model.logits(x[i]), batch[i])


def test_clamped_loss_has_zero_gradient():
    m = Classifier(linear_architecture(2), (1, 1, 1), seed=0)
    m.params[1]["W"][:] = [[100.0, -100.0]]
    m.params[1]["b"][:] = 0.0
    x = np.ones((1, 1, 1))
    assert m.losses(x, 1) == pytest.approx(-np.log(1e-12))
    assert np.all(m.input_gradient(x, 1) == 0)


def test_nonfinite_input_raises(tiny_model):
    x = np.full((8, 8, 1), np.nan)
    with pytest.raises(NumericalError):
        tiny_model.losses(x, 0)


@pytest.mark.parametrize("shape", [(8, 8), (7, 8, 1), (2, 8, 8, 2)])
def test_shape_mismatch(tiny_model, shape):
    with pytest.raises(InvalidInputError):
        tiny_model.logits(np.zeros(shape))


def test_bad_labels(tiny_model):
    x = np.zeros((2, 8, 8, 1))
    with pytest.raises(InvalidInputError):
        tiny_model.losses(x, [0, 4])
    with pytest.raises(InvalidInputError):
        tiny_model.losses(x, [0])
    with pytest.raises(InvalidInputError):
        tiny_model.param_gradient(x[:0], [])


@pytest.mark.parametrize("arch", [[{"type": "dense", "units": 3}],
                                  [{"type": "flatten"}],
                                  [{"type": "pool"}]])
def test_bad_architectures(arch):
    with pytest.raises(InvalidInputError):
        Classifier(arch, (4, 4, 1))


def test_init_is_seeded():
    a = Classifier(default_architecture(), (16, 16, 1), seed=3)
    b = Classifier(default_architecture(), (16, 16, 1), seed=3)
    c = Classifier(default_architecture(), (16, 16, 1), seed=4)
    assert np.array_equal(a.flat_params(), b.flat_params())
    assert not np.array_equal(a.flat_params(), c.flat_params())


def test_sgd_step_reduces_loss(tiny_model, rng):
    x = rng.uniform(size=(16, 8, 8, 1))
    y = rng.integers(0, 4, 16)
    before = tiny_model.loss(x, y)
    for _ in range(20):
        tiny_model.sgd_step(x, y, 0.1)
    assert tiny_model.loss(x, y) < before


def test_checkpoint_round_trip(tmp_path, tiny_model, rng):
    tiny_model.metadata["note"] = "x"
    path = tmp_path / "m.ckpt"
    save_checkpoint(tiny_model, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.flat_params(), tiny_model.flat_params())
    assert back.metadata == {"note": "x"} and back.input_shape == (8, 8, 1)
    x = rng.uniform(size=(3, 8, 8, 1))
    assert np.array_equal(back.logits(x), tiny_model.logits(x))
    save_checkpoint(back, tmp_path / "m2.ckpt")
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "m2.ckpt").read_bytes()


def test_checkpoint_layout(tmp_path, tiny_model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(tiny_model, path)
    blob = path.read_bytes()
    assert blob[:8] == CHECKPOINT_MAGIC
    hlen = int.from_bytes(blob[8:12], "little")
    header = json.loads(blob[12:12 + hlen])
    assert header["format_version"] == 1
    n_values = sum(int(np.prod(t["shape"])) for t in header["tensors"])
    assert len(blob) == 12 + hlen + 8 * n_values


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(InvalidInputError):
        load_checkpoint(path)
