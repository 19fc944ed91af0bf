"""Frequency masks and the linear perturbation constraints built on them.

Every constraint is a linear map ``P`` acting on perturbations of shape
``(..., d, d, C)``. Attacks evaluate the model at ``x + P(delta)`` and need the
adjoint ``P^T`` to pull input gradients back onto ``delta``:

* :class:`FreqMask` keeps the DCT coefficients selected by a
  :class:`SpectrumMask`. It is an orthogonal projection, so ``P^T == P``.
* :class:`GaussianSmooth` convolves each channel with a normalized Gaussian
  kernel (replicate-edge padding).
* :class:`DownUp` resizes ``d -> n -> d`` with bilinear interpolation
  (half-pixel centres, i.e. ``align_corners=False``).

Mask geometry uses 0-based indices; band widths are rounded half-up.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .errors import InvalidInputError
from .transform import dct_image, idct_image, separable

MASK_KINDS = ("low", "high", "mid", "random", "all")
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood 2014).

    Used wherever a draw must be reproducible bit-for-bit across platforms and
    numpy versions (random masks, target labels).
    """

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound):
        """Uniform integer in ``[0, bound)`` by rejection sampling."""
        if bound < 1:
            raise InvalidInputError("bound must be positive")
        reject = (1 << 64) % bound
        while True:
            r = self.next_u64()
            if r >= reject:
                return r % bound

    def sample(self, population, k):
        """``k`` distinct items of ``range(population)`` via partial Fisher-Yates."""
        items = list(range(population))
        for i in range(k):
            j = i + self.below(population - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]


def round_half_up(x):
    return int(math.floor(x + 0.5))


def high_ratio(low_ratio):
    """Fraction of bands a high-pass mask keeps to match ``low_ratio**2`` of the spectrum.

    Positive root of ``r**2 - 2 r + low_ratio**2 = 0`` in ``[0, 1]``.
    """
    return 1.0 - math.sqrt(4.0 * (1.0 - low_ratio ** 2)) / 2.0


def mid_low_ratio(low_ratio):
    """Side fraction of the low square a mid-band mask removes."""
    return math.sqrt((1.0 - low_ratio ** 2) / 2.0)


def mid_high_ratio(low_ratio):
    """Band fraction of the high L-shape a mid-band mask removes."""
    return high_ratio(mid_low_ratio(low_ratio))


def masked_square_side(d, n):
    """Side of the low square masked by ``high`` (and the unselected block for ``random``)."""
    return round_half_up(math.sqrt(d * d - n * n))


@dataclass(frozen=True, eq=False)
class SpectrumMask:
    side: int
    kind: str
    reduced_dim: int
    cells: np.ndarray = field(repr=False)
    seed: int | None = None

    @property
    def preserved(self):
        return int(self.cells.sum())

    def __eq__(self, other):
        if not isinstance(other, SpectrumMask):
            return NotImplemented
        return (self.side, self.kind, self.reduced_dim, self.seed) == (
            other.side, other.kind, other.reduced_dim, other.seed
        ) and np.array_equal(self.cells, other.cells)

    __hash__ = None


def _check_dims(d, n, strict):
    if int(d) != d or d < 1:
        raise InvalidInputError(f"side d must be a positive integer, got {d!r}")
    if int(n) != n:
        raise InvalidInputError(f"reduced dimensionality must be an integer, got {n!r}")
    upper_ok = n < d if strict else n <= d
    if n < 1 or not upper_ok:
        bound = "1 <= n < d" if strict else "1 <= n <= d"
        raise InvalidInputError(f"need {bound}, got d={d}, n={n}")
    return int(d), int(n)


def _frozen(cells):
    cells = cells.astype(np.float64)
    cells.setflags(write=False)
    return cells


def build_low_mask(d, n):
    d, n = _check_dims(d, n, strict=False)
    cells = np.zeros((d, d))
    cells[:n, :n] = 1.0
    return SpectrumMask(d, "low", n, _frozen(cells))


def build_high_mask(d, n):
    d, n = _check_dims(d, n, strict=True)
    m = masked_square_side(d, n)
    cells = np.ones((d, d))
    cells[:m, :m] = 0.0
    return SpectrumMask(d, "high", n, _frozen(cells))


def mid_band_widths(d, n):
    """Return ``(low_side, high_width)`` of the regions a mid mask removes."""
    r_l = n / d
    low_side = round_half_up(mid_low_ratio(r_l) * d)
    high_width = round_half_up(mid_high_ratio(r_l) * d)
    return min(low_side, d - high_width), high_width


def build_mid_mask(d, n):
    d, n = _check_dims(d, n, strict=True)
    low_side, high_width = mid_band_widths(d, n)
    keep = d - high_width
    cells = np.zeros((d, d))
    cells[:keep, :keep] = 1.0
    cells[:low_side, :low_side] = 0.0
    return SpectrumMask(d, "mid", n, _frozen(cells))


def random_band_count(d, n):
    return d - masked_square_side(d, n)


def build_random_mask(d, n, seed):
    d, n = _check_dims(d, n, strict=True)
    bands = SplitMix64(seed).sample(d, random_band_count(d, n))
    chosen = np.zeros(d, dtype=bool)
    chosen[bands] = True
    cells = chosen[:, None] | chosen[None, :]
    return SpectrumMask(d, "random", n, _frozen(cells), seed=int(seed))


def build_all_mask(d):
    d, _ = _check_dims(d, d, strict=False)
    return SpectrumMask(d, "all", d, _frozen(np.ones((d, d))))


def build_mask(kind, d, n, seed=0):
    if kind == "low":
        return build_low_mask(d, n)
    if kind == "high":
        return build_high_mask(d, n)
    if kind == "mid":
        return build_mid_mask(d, n)
    if kind == "random":
        return build_random_mask(d, n, seed)
    if kind == "all":
        return build_all_mask(d)
    raise InvalidInputError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")


@lru_cache(maxsize=64)
def bilinear_matrix(src, dst):
    """Matrix ``R`` (dst x src) so that ``R @ v`` bilinearly resizes a length-``src`` signal.

    Half-pixel centre convention; source coordinates below zero clamp to the
    first sample, as in the usual ``align_corners=False`` resize.
    """
    r = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        s = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(math.floor(s)), src - 1)
        i1 = min(i0 + 1, src - 1)
        w1 = s - i0
        r[i, i0] += 1.0 - w1
        r[i, i1] += w1
    r.setflags(write=False)
    return r


def gaussian_kernel_1d(sigma, side=7):
    r = side // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def gaussian_kernel(sigma, side=7):
    """Normalized ``side x side`` Gaussian kernel (separable outer product)."""
    g = gaussian_kernel_1d(sigma, side)
    return np.outer(g, g)


@lru_cache(maxsize=64)
def _smoothing_matrix(d, sigma, side):
    g = gaussian_kernel_1d(sigma, side)
    r = side // 2
    a = np.zeros((d, d))
    for i in range(d):
        for k in range(side):
            a[i, min(max(i + k - r, 0), d - 1)] += g[k]
    a.setflags(write=False)
    return a


def _spatial_side(delta):
    if delta.ndim < 3 or delta.shape[-3] != delta.shape[-2]:
        raise InvalidInputError(f"perturbation must be (..., d, d, C), got {delta.shape}")
    return delta.shape[-2]


class NoConstraint:
    kind = "none"

    def apply(self, delta):
        return np.asarray(delta, dtype=np.float64)

    adjoint = apply

    def describe(self):
        return {"kind": "none"}

    def __eq__(self, other):
        return isinstance(other, NoConstraint)

    def __hash__(self):
        return hash("none")

    def __repr__(self):
        return "NoConstraint()"


@dataclass(frozen=True, eq=False)
class FreqMask:
    """Keep only the DCT coefficients selected by ``mask``."""

    mask: SpectrumMask
    kind = "freq_mask"

    def apply(self, delta):
        delta = np.asarray(delta, dtype=np.float64)
        if _spatial_side(delta) != self.mask.side:
            raise InvalidInputError(
                f"mask side {self.mask.side} does not match perturbation side {delta.shape[-2]}")
        if self.mask.preserved == self.mask.side ** 2:
            # exact identity; a DCT round trip would turn zero gradients into
            # rounding noise whose sign the attack would then amplify
            return delta.copy()
        return idct_image(self.mask.cells[:, :, None] * dct_image(delta))

    adjoint = apply

    def describe(self):
        return {"kind": "freq_mask", "mask": self.mask.kind, "side": self.mask.side,
                "n": self.mask.reduced_dim, "seed": self.mask.seed}


@dataclass(frozen=True)
class GaussianSmooth:
    sigma: float
    kernel_side: int = 7
    kind = "gaussian_smooth"

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if self.kernel_side < 1 or self.kernel_side % 2 == 0:
            raise InvalidInputError(f"kernel side must be odd, got {self.kernel_side}")

    def matrix(self, d):
        return _smoothing_matrix(int(d), float(self.sigma), int(self.kernel_side))

    def apply(self, delta):
        delta = np.asarray(delta, dtype=np.float64)
        return separable(self.matrix(_spatial_side(delta)), delta)

    def adjoint(self, grad):
        grad = np.asarray(grad, dtype=np.float64)
        return separable(self.matrix(_spatial_side(grad)).T, grad)

    def describe(self):
        return {"kind": "gaussian_smooth", "sigma": self.sigma, "kernel_side": self.kernel_side}


@dataclass(frozen=True)
class DownUp:
    n: int
    kind = "down_up"

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"down_up size must be >= 1, got {self.n}")

    def matrix(self, d):
        if self.n > d:
            raise InvalidInputError(f"down_up size {self.n} exceeds side {d}")
        return bilinear_matrix(self.n, d) @ bilinear_matrix(d, self.n)

    def apply(self, delta):
        delta = np.asarray(delta, dtype=np.float64)
        return separable(self.matrix(_spatial_side(delta)), delta)

    def adjoint(self, grad):
        grad = np.asarray(grad, dtype=np.float64)
        return separable(self.matrix(_spatial_side(grad)).T, grad)

    def describe(self):
        return {"kind": "down_up", "n": self.n}


def make_constraint(kind, d=None, n=None, mask="low", sigma=None, seed=0):
    """Build a constraint from flat parameters (as found in config files)."""
    if kind in (None, "none"):
        return NoConstraint()
    if kind == "freq_mask":
        return FreqMask(build_mask(mask, d, n if mask != "all" else d, seed))
    if kind == "gaussian_smooth":
        return GaussianSmooth(float(sigma))
    if kind == "down_up":
        return DownUp(int(n))
    raise InvalidInputError(f"unknown constraint kind {kind!r}")


def apply_constraint(delta, constraint):
    return constraint.apply(delta)
