"""Input preprocessors used as defenses, and models wrapped with them.

Three stand-ins for preprocessing defenses: median smoothing, random
resize-and-pad, and random affine jitter. Stochastic preprocessors draw their
randomness from an explicit seed, so a defended prediction is a pure function
of ``(image, seed)``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage

from . import kernels
from .attack import example_seed
from .constraint import bilinear_matrix
from .errors import InvalidInputError
from .transform import separable

PREPROCESSOR_KINDS = ("identity", "median_smooth", "resize_pad", "affine_jitter")

DEFAULT_PARAMS = {
    "identity": {},
    "median_smooth": {"window": 3},
    "resize_pad": {"min_scale": 0.8},
    "affine_jitter": {"rotation_deg": 10.0, "shear": 0.1, "shift": 2.0, "zoom": 0.1},
}


def _as_batch(images):
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise InvalidInputError(f"expected (H, W, C) or (N, H, W, C), got {x.shape}")


def median_smooth(image, window=3):
    """Per-channel median over a ``window x window`` neighbourhood, replicate padding."""
    if int(window) != window or window < 1 or window % 2 == 0:
        raise InvalidInputError(f"median window must be a positive odd integer, got {window}")
    x, single = _as_batch(image)
    out = np.stack([kernels.median_filter(img, int(window)) for img in x])
    return out[0] if single else out


def resize_pad_fixed(image, size, offset):
    """Bilinear resize to ``size x size`` and zero-pad back at ``offset = (top, left)``."""
    x, single = _as_batch(image)
    d = x.shape[1]
    top, left = offset
    if not 1 <= size <= d or not (0 <= top <= d - size and 0 <= left <= d - size):
        raise InvalidInputError(f"size {size} / offset {offset} do not fit side {d}")
    small = separable(bilinear_matrix(d, size), x)
    out = np.zeros_like(x)
    out[:, top:top + size, left:left + size, :] = small
    return out[0] if single else out


def resize_pad(image, seed, min_scale=0.8):
    """Resize to a random side in ``[ceil(min_scale * d), d]`` and pad at a random offset."""
    x, single = _as_batch(image)
    d = x.shape[1]
    rng = np.random.default_rng(seed)
    size = int(rng.integers(math.ceil(min_scale * d), d + 1))
    top, left = (int(v) for v in rng.integers(0, d - size + 1, size=2))
    out = resize_pad_fixed(x, size, (top, left))
    return out[0] if single else out


def affine_fixed(image, rotation_deg=0.0, shear=0.0, shift=(0.0, 0.0), zoom=1.0):
    """Apply one affine transform about the image centre.

    Bilinear sampling, zero fill outside the source. ``shift`` is ``(dy, dx)``
    in pixels and moves content down/right; ``shear`` is a horizontal shear
    factor.
    """
    x, single = _as_batch(image)
    d = x.shape[1]
    t = math.radians(rotation_deg)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    forward = zoom * rot @ np.array([[1.0, 0.0], [shear, 1.0]])
    inverse = np.linalg.inv(forward)
    centre = np.array([(d - 1) / 2.0, (d - 1) / 2.0])
    offset = centre - inverse @ (centre + np.asarray(shift, dtype=np.float64))
    out = np.empty_like(x)
    for i, img in enumerate(x):
        for ch in range(img.shape[-1]):
            out[i, :, :, ch] = ndimage.affine_transform(
                img[:, :, ch], inverse, offset=offset, order=1, mode="constant", cval=0.0)
    return out[0] if single else out


def affine_jitter(image, seed, rotation_deg=10.0, shear=0.1, shift=2.0, zoom=0.1):
    """One random affine transform with each parameter drawn uniformly from its +/- range."""
    rng = np.random.default_rng(seed)
    r, sh, dy, dx, z = rng.uniform(-1.0, 1.0, size=5)
    return affine_fixed(image, rotation_deg * r, shear * sh, (shift * dy, shift * dx),
                        1.0 + zoom * z)


@dataclass(frozen=True)
class Preprocessor:
    kind: str = "identity"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PREPROCESSOR_KINDS:
            raise InvalidInputError(f"unknown preprocessor {self.kind!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise InvalidInputError(f"unknown {self.kind} parameters: {sorted(unknown)}")

    @property
    def stochastic(self):
        return self.kind in ("resize_pad", "affine_jitter")

    def settings(self):
        return {**DEFAULT_PARAMS[self.kind], **self.params}

    def __call__(self, images, seed=0, index_offset=0):
        """Preprocess one image or a batch.

        Example ``i`` of the batch uses ``example_seed(seed, index_offset + i)``.
        """
        x, single = _as_batch(images)
        kw = self.settings()
        if self.kind == "identity":
            out = x.copy()
        elif self.kind == "median_smooth":
            out = median_smooth(x, **kw)
        elif self.kind == "resize_pad":
            fn = resize_pad
        else:
            fn = affine_jitter
        if self.stochastic:
            out = np.stack([fn(img, example_seed(seed, index_offset + i), **kw)
                            for i, img in enumerate(x)])
        out = np.clip(out, 0.0, 1.0)
        return out[0] if single else out

    def describe(self):
        return {"kind": self.kind, **self.settings()}


class DefendedModel:
    """A classifier that sees preprocessed inputs."""

    def __init__(self, model, preprocessor):
        self.model = model
        self.preprocessor = preprocessor
        self.input_shape = model.input_shape
        self.num_classes = model.num_classes

    def forward(self, images, seed=0, index_offset=0):
        return self.model.forward(self.preprocessor(images, seed, index_offset))

    def predict(self, images, seed=0, index_offset=0):
        return np.argmax(self.model.logits(self.preprocessor(images, seed, index_offset)), axis=-1)


def defended_predict(defended, image, seed=0):
    """Return ``(label, probabilities)`` of the base model on the preprocessed image."""
    probs = defended.forward(image, seed)
    return np.argmax(probs, axis=-1), probs
