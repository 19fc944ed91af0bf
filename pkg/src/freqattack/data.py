"""Labeled image datasets: a synthetic glyph generator and IDX file I/O.

Images are float64 in ``[0, 1]``, shaped ``(N, H, W, C)``. Everything this
module produces is quantized to multiples of 1/255 so that writing to IDX and
reading back is lossless.
"""
from dataclasses import dataclass
import os
import struct

import numpy as np

from .errors import InvalidInputError


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise InvalidInputError(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise InvalidInputError("image and label counts differ")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, count):
        return LabeledDataset(self.images[:count], self.labels[:count], self.split, self.num_classes)


# -- synthetic glyphs --------------------------------------------------------

# each glyph is a list of line segments ((x0, y0), (x1, y1)) in [-1, 1] coords;
# None marks the ring glyph
_GLYPHS = [
    None,
    [((0, -0.7), (0, 0.7))],
    [((-0.7, 0), (0.7, 0))],
    [((-0.55, 0.55), (0.55, -0.55))],
    [((-0.55, -0.55), (0.55, 0.55))],
    [((0, -0.7), (0, 0.7)), ((-0.7, 0), (0.7, 0))],
    [((-0.55, 0.55), (0.55, -0.55)), ((-0.55, -0.55), (0.55, 0.55))],
    [((-0.5, -0.5), (0.5, -0.5)), ((0.5, -0.5), (0.5, 0.5)),
     ((0.5, 0.5), (-0.5, 0.5)), ((-0.5, 0.5), (-0.5, -0.5))],
    [((0, -0.6), (0.6, 0.5)), ((0.6, 0.5), (-0.6, 0.5)), ((-0.6, 0.5), (0, -0.6))],
    [((-0.6, -0.3), (0.6, -0.3)), ((-0.6, 0.3), (0.6, 0.3))],
]
GLYPH_CLASSES = len(_GLYPHS)


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    return np.hypot(px - ax - t * dx, py - ay - t * dy)


def _render(label, side, rng):
    coords = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    gx, gy = np.meshgrid(coords, coords)
    theta = rng.uniform(-0.26, 0.26)
    scale = rng.uniform(0.8, 1.15)
    sx, sy = rng.uniform(-0.18, 0.18, size=2)
    c, s = np.cos(theta), np.sin(theta)
    # inverse-map pixel coords into glyph space
    u = (c * (gx - sx) + s * (gy - sy)) / scale
    v = (-s * (gx - sx) + c * (gy - sy)) / scale
    glyph = _GLYPHS[label]
    if glyph is None:
        dist = np.abs(np.hypot(u, v) - 0.55)
    else:
        dist = np.min([_segment_distance(u, v, a, b) for a, b in glyph], axis=0)
    half_width = rng.uniform(0.07, 0.14)
    soft = 2.0 / side
    stroke = np.clip((half_width - dist) / soft + 0.5, 0.0, 1.0)
    base = rng.uniform(0.05, 0.35)
    tilt = rng.uniform(-0.12, 0.12, size=2)
    background = base + tilt[0] * gx + tilt[1] * gy
    ink = rng.uniform(0.45, 0.65) * rng.choice([-1.0, 1.0], p=[0.2, 0.8])
    img = background + ink * stroke + rng.normal(0.0, 0.03, size=(side, side))
    return np.clip(img, 0.0, 1.0)


def quantize(images):
    """Round to the nearest multiple of 1/255 (half away from zero)."""
    q = np.floor(np.asarray(images, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(q, 0, 255) / 255.0


def generate_synthetic(count, side=28, channels=1, seed=0, split="train"):
    """Synthetic 10-class glyph dataset (ring, bars, diagonals, crosses, shapes).

    Labels cycle through the classes so every class is equally represented;
    the order of examples is then shuffled with the same seed.
    """
    if count < 0 or side < 8 or channels < 1:
        raise InvalidInputError("need count >= 0, side >= 8 and channels >= 1")
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % GLYPH_CLASSES
    rng.shuffle(labels)
    images = np.empty((count, side, side, channels))
    for i, y in enumerate(labels):
        plane = _render(int(y), side, rng)
        if channels == 1:
            images[i, :, :, 0] = plane
        else:
            tint = rng.uniform(0.7, 1.0, size=channels)
            images[i] = np.clip(plane[:, :, None] * tint, 0.0, 1.0)
    return LabeledDataset(quantize(images), labels, split, GLYPH_CLASSES)


def synthetic_splits(n_train, n_test, side=28, channels=1, seed=0):
    train = generate_synthetic(n_train, side, channels, seed=seed, split="train")
    test = generate_synthetic(n_test, side, channels, seed=seed + 1_000_003, split="test")
    return train, test


# -- IDX ---------------------------------------------------------------------

_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path):
    """Read an IDX file into a numpy array."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read IDX file {path}: {exc.strerror}") from exc
    if len(blob) < 4 or blob[0] != 0 or blob[1] != 0 or blob[2] not in _IDX_TYPES:
        raise InvalidInputError(f"{path}: not an IDX file")
    ndim = blob[3]
    dims = struct.unpack(f">{ndim}I", blob[4:4 + 4 * ndim])
    dtype = np.dtype(_IDX_TYPES[blob[2]])
    count = int(np.prod(dims)) if dims else 1
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=4 + 4 * ndim)
    return data.reshape(dims)


def write_idx(path, array):
    """Write a uint8 array as IDX (type code 0x08)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise InvalidInputError("only uint8 IDX output is supported")
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, 0x08, array.ndim]))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def to_uint8(images):
    return (quantize(images) * 255.0).round().astype(np.uint8)


def save_idx_dataset(dataset, images_path, labels_path):
    """Write images as ``N x H x W`` (grayscale) or ``N x H x W x C`` IDX, labels as ``N``."""
    imgs = to_uint8(dataset.images)
    if imgs.shape[-1] == 1:
        imgs = imgs[..., 0]
    write_idx(images_path, imgs)
    write_idx(labels_path, dataset.labels.astype(np.uint8))


def load_idx_dataset(images_path, labels_path, split="train", num_classes=None):
    for p in (images_path, labels_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"dataset file not found: {p}")
    imgs = read_idx(images_path).astype(np.float64) / 255.0
    if imgs.ndim == 3:
        imgs = imgs[..., None]
    labels = read_idx(labels_path).astype(np.int64)
    k = int(num_classes or (labels.max() + 1 if len(labels) else 1))
    return LabeledDataset(imgs, labels, split, k)
