"""Image output: 8-bit quantization, PGM and PNG."""
import os

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def quantize_u8(image):
    """Map ``[0, 1]`` floats to uint8, rounding half away from zero."""
    x = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(x + 0.5).astype(np.uint8)


def write_pgm(path, plane):
    """Write a 2D uint8 array as binary PGM (P5, maxval 255)."""
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.dtype != np.uint8:
        raise InvalidInputError("PGM output needs a 2D uint8 array")
    h, w = plane.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(plane.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end:end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise InvalidInputError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise InvalidInputError(f"{path}: only maxval 255 is supported")
    return np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos + 1).reshape(h, w)


def save_image(path, image):
    """Save an ``(H, W, C)`` float image; ``.pgm`` needs one channel, ``.png`` takes 1 or 3."""
    q = quantize_u8(image)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        if q.shape[-1] != 1:
            raise InvalidInputError("PGM images must have one channel")
        write_pgm(path, q[:, :, 0])
    elif ext == ".png":
        Image.fromarray(q[:, :, 0] if q.shape[-1] == 1 else q).save(path)
    else:
        raise InvalidInputError(f"unsupported image extension {ext!r}")
    return q


def load_image(path):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        q = read_pgm(path)[:, :, None]
    else:
        q = np.asarray(Image.open(path))
        if q.ndim == 2:
            q = q[:, :, None]
    return q.astype(np.float64) / 255.0


def mask_to_pgm(mask, path):
    """Render a spectrum mask: preserved cells white (255), masked cells black."""
    write_pgm(path, np.where(mask.cells > 0, 255, 0).astype(np.uint8))
