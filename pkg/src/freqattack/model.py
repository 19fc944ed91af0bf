"""Small differentiable classifiers with hand-written backpropagation.

A :class:`Classifier` is an ordered list of layers followed by a softmax
head. Forward and backward passes are pure functions of the parameters and
the input: activations are returned to the caller instead of being cached on
the layer, so one model can serve gradients to several threads at once.

Images are channels-last. Methods accept a single ``(H, W, C)`` image or a
``(N, H, W, C)`` batch.
"""
import json
import struct

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericalError

LOG_CLAMP = 1e-12
_MAX_LOSS = -np.log(LOG_CLAMP)


class Conv2D:
    def __init__(self, in_channels, filters, kernel=3, stride=1):
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.stride = stride

    def output_shape(self, shape):
        h, w, _ = shape
        return ((h - self.kernel) // self.stride + 1,
                (w - self.kernel) // self.stride + 1, self.filters)

    def init_params(self, rng):
        fan_in = self.kernel * self.kernel * self.in_channels
        w = rng.standard_normal((self.kernel, self.kernel, self.in_channels, self.filters))
        return {"W": w * np.sqrt(2.0 / fan_in), "b": np.zeros(self.filters)}

    def forward(self, params, x):
        return kernels.conv2d_forward(x, params["W"], params["b"], self.stride), x

    def backward(self, params, cache, dout):
        dx, dw, db = kernels.conv2d_backward(cache, params["W"], dout, self.stride)
        return dx, {"W": dw, "b": db}

    def describe(self):
        return {"type": "conv", "filters": self.filters, "kernel": self.kernel,
                "stride": self.stride}


class ReLU:
    def output_shape(self, shape):
        return shape

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, params, cache, dout):
        return dout * cache, {}

    def describe(self):
        return {"type": "relu"}


class Flatten:
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, dout):
        return dout.reshape(cache), {}

    def describe(self):
        return {"type": "flatten"}


class Dense:
    def __init__(self, in_features, units):
        self.in_features = in_features
        self.units = units

    def output_shape(self, shape):
        return (self.units,)

    def init_params(self, rng):
        w = rng.standard_normal((self.in_features, self.units))
        return {"W": w * np.sqrt(2.0 / self.in_features), "b": np.zeros(self.units)}

    def forward(self, params, x):
        return x @ params["W"] + params["b"], x

    def backward(self, params, cache, dout):
        return dout @ params["W"].T, {"W": cache.T @ dout, "b": dout.sum(axis=0)}

    def describe(self):
        return {"type": "dense", "units": self.units}


def default_architecture(num_classes=10, width=1.0):
    """conv(8, 3x3) -> ReLU -> conv(16, 3x3, stride 2) -> ReLU -> flatten -> dense."""
    f1 = max(1, round(8 * width))
    f2 = max(1, round(16 * width))
    return [
        {"type": "conv", "filters": f1, "kernel": 3, "stride": 1},
        {"type": "relu"},
        {"type": "conv", "filters": f2, "kernel": 3, "stride": 2},
        {"type": "relu"},
        {"type": "flatten"},
        {"type": "dense", "units": num_classes},
    ]


def linear_architecture(num_classes):
    return [{"type": "flatten"}, {"type": "dense", "units": num_classes}]


def _build_layers(architecture, input_shape):
    layers = []
    shape = tuple(input_shape)
    for spec in architecture:
        kind = spec.get("type")
        if kind == "conv":
            layer = Conv2D(shape[-1], int(spec["filters"]), int(spec.get("kernel", 3)),
                           int(spec.get("stride", 1)))
            if len(shape) != 3 or min(layer.output_shape(shape)[:2]) < 1:
                raise InvalidInputError(f"conv layer cannot follow shape {shape}")
        elif kind == "relu":
            layer = ReLU()
        elif kind == "flatten":
            layer = Flatten()
        elif kind == "dense":
            if len(shape) != 1:
                raise InvalidInputError("dense layer must follow flatten")
            layer = Dense(shape[0], int(spec["units"]))
        else:
            raise InvalidInputError(f"unknown layer type {kind!r}")
        layers.append(layer)
        shape = layer.output_shape(shape)
    if not layers or not isinstance(layers[-1], Dense):
        raise InvalidInputError("architecture must end in a dense layer")
    return layers, shape[0]


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


class Classifier:
    """Feed-forward classifier with a softmax cross-entropy loss.

    Args:
        architecture: list of layer descriptors, see :func:`default_architecture`.
        input_shape: ``(H, W, C)`` of one image.
        seed: seed for parameter initialization.
        params: explicit parameters (one dict per layer); skips initialization.
    """

    def __init__(self, architecture, input_shape, seed=0, params=None, metadata=None):
        self.architecture = [dict(s) for s in architecture]
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers, self.num_classes = _build_layers(self.architecture, self.input_shape)
        self.seed = int(seed)
        if params is None:
            rng = np.random.default_rng(self.seed)
            params = [layer.init_params(rng) for layer in self.layers]
        self.params = [{k: np.array(v, dtype=np.float64) for k, v in p.items()} for p in params]
        self.metadata = dict(metadata or {})

    # -- shape handling -------------------------------------------------
    def _batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            return x[None], True
        if x.ndim == 4 and x.shape[1:] == self.input_shape:
            return x, False
        raise InvalidInputError(
            f"input shape {x.shape} does not match model input {self.input_shape}")

    def _labels(self, y, n):
        y = np.atleast_1d(np.asarray(y))
        if y.shape != (n,):
            raise InvalidInputError(f"expected {n} labels, got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidInputError("labels must be integers")
            y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")
        return y

    # -- passes ----------------------------------------------------------
    def _forward(self, xb):
        caches = []
        h = xb
        for layer, p in zip(self.layers, self.params):
            h, cache = layer.forward(p, h)
            caches.append(cache)
        return h, caches

    def _backward(self, caches, dlogits, want_params):
        grads = [None] * len(self.layers)
        g = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            g, pg = self.layers[i].backward(self.params[i], caches[i], g)
            grads[i] = pg if want_params else None
        return g, grads

    def logits(self, x):
        xb, single = self._batch(x)
        z, _ = self._forward(xb)
        return z[0] if single else z

    def forward(self, x):
        """Class probabilities; rows sum to one."""
        return softmax(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=-1)

    def _loss_terms(self, xb, y):
        z, caches = self._forward(xb)
        lp = log_softmax(z)
        losses = -lp[np.arange(len(y)), y]
        if not np.all(np.isfinite(losses)):
            raise NumericalError("non-finite loss")
        clamped = losses >= _MAX_LOSS
        losses = np.minimum(losses, _MAX_LOSS)
        dz = np.exp(lp)
        dz[np.arange(len(y)), y] -= 1.0
        dz[clamped] = 0.0
        return losses, dz, caches

    def losses(self, x, y):
        """Per-example cross-entropy ``-ln max(p_y, 1e-12)``."""
        xb, single = self._batch(x)
        losses, _, _ = self._loss_terms(xb, self._labels(y, len(xb)))
        return losses[0] if single else losses

    def loss(self, x, y):
        """Cross-entropy of one image, or the batch mean."""
        return float(np.mean(self.losses(x, y)))

    def input_gradient(self, x, y):
        """Gradient of each example's loss with respect to its own pixels."""
        xb, single = self._batch(x)
        _, dz, caches = self._loss_terms(xb, self._labels(y, len(xb)))
        g, _ = self._backward(caches, dz, want_params=False)
        return g[0] if single else g

    def loss_and_input_gradient(self, x, y):
        xb, single = self._batch(x)
        losses, dz, caches = self._loss_terms(xb, self._labels(y, len(xb)))
        g, _ = self._backward(caches, dz, want_params=False)
        return (losses[0], g[0]) if single else (losses, g)

    def param_gradient(self, x, y):
        """Return ``(mean loss, grads)`` where grads mirrors :attr:`params`."""
        xb, _ = self._batch(x)
        if len(xb) == 0:
            raise InvalidInputError("empty batch")
        losses, dz, caches = self._loss_terms(xb, self._labels(y, len(xb)))
        _, grads = self._backward(caches, dz / len(xb), want_params=True)
        return float(losses.mean()), grads

    def sgd_step(self, x, y, learning_rate):
        """One plain SGD step on a minibatch, in place. Returns the pre-step loss."""
        loss, grads = self.param_gradient(x, y)
        for p, g in zip(self.params, grads):
            for k in p:
                p[k] -= learning_rate * g[k]
        return loss

    # -- misc ------------------------------------------------------------
    def copy(self):
        return Classifier(self.architecture, self.input_shape, self.seed,
                          params=self.params, metadata=self.metadata)

    def flat_params(self):
        return np.concatenate([v.ravel() for p in self.params for _, v in sorted(p.items())])

    def accuracy(self, images, labels, batch_size=256):
        correct = 0
        for i in range(0, len(images), batch_size):
            correct += int(np.sum(self.predict(images[i:i + batch_size]) == labels[i:i + batch_size]))
        return correct / len(images)


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_MAGIC = b"FQCKPT01"
CHECKPOINT_VERSION = 1


def save_checkpoint(model, path):
    """Write ``model`` to ``path``.

    Layout: 8-byte magic ``FQCKPT01``, uint32 little-endian header length,
    UTF-8 JSON header (sorted keys), then each tensor as little-endian
    float64 in header order. The header lists ``name``, ``shape`` and byte
    ``offset`` (relative to the start of the data section) per tensor.
    """
    tensors, blobs, offset = [], [], 0
    for i, p in enumerate(model.params):
        for k in sorted(p):
            data = np.ascontiguousarray(p[k], dtype="<f8").tobytes()
            tensors.append({"name": f"{i}.{k}", "shape": list(p[k].shape), "offset": offset})
            blobs.append(data)
            offset += len(data)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": model.architecture,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "seed": model.seed,
        "metadata": model.metadata,
        "tensors": tensors,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path}: not a model checkpoint")
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version")
    data = blob[12 + hlen:]
    model = Classifier(header["architecture"], header["input_shape"], header["seed"],
                       metadata=header["metadata"])
    for t in header["tensors"]:
        idx, key = t["name"].split(".")
        count = int(np.prod(t["shape"])) if t["shape"] else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=t["offset"])
        target = model.params[int(idx)]
        if key not in target or target[key].shape != tuple(t["shape"]):
            raise InvalidInputError(f"{path}: tensor {t['name']} does not fit the architecture")
        target[key] = arr.reshape(t["shape"]).astype(np.float64)
    return model
