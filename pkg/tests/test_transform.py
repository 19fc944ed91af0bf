import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from freqattack.errors import InvalidInputError
from freqattack.transform import dct2, dct_image, dct_matrix, idct2, idct_image, separable

from conftest import naive_dct2


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8, 16])
def test_dct_matches_definition(d, rng):
    x = rng.normal(size=(d, d))
    assert np.abs(dct2(x) - naive_dct2(x)).max() <= 1e-9


def test_basis_is_orthonormal():
    for d in (2, 7, 32):
        c = dct_matrix(d)
        assert np.allclose(c @ c.T, np.eye(d), atol=1e-12)


def test_constant_plane_has_only_dc():
    d = 8
    y = dct2(np.full((d, d), 0.5))
    # DC = d * 0.5 for the orthonormal transform
    assert y[0, 0] == pytest.approx(4.0, abs=1e-12)
    y[0, 0] = 0.0
    assert np.abs(y).max() <= 1e-12


def test_single_basis_function(rng):
    d = 8
    spec = np.zeros((d, d))
    spec[2, 5] = 1.0
    plane = idct2(spec)
    assert np.abs(dct2(plane) - spec).max() <= 1e-12
    assert np.sum(plane ** 2) == pytest.approx(1.0, abs=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.just(0)).map(lambda t: (t[0], t[0])),
              elements=st.floats(-10, 10)))
def test_round_trip_and_parseval(x):
    y = dct2(x)
    assert np.abs(idct2(y) - x).max() <= 1e-9
    assert abs(np.sum(y * y) - np.sum(x * x)) <= 1e-9 * max(1.0, np.sum(x * x))


@given(st.integers(1, 10), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(d, a, b):
    rng = np.random.default_rng(d)
    x, y = rng.normal(size=(2, d, d))
    assert np.allclose(dct2(a * x + b * y), a * dct2(x) + b * dct2(y), atol=1e-9)


def test_image_transform_is_per_channel(rng):
    x = rng.normal(size=(3, 6, 6, 2))
    y = dct_image(x)
    for i in range(3):
        for c in range(2):
            assert np.allclose(y[i, :, :, c], dct2(x[i, :, :, c]), atol=1e-12)
    assert np.abs(idct_image(y) - x).max() <= 1e-12


def test_separable_with_distinct_matrices(rng):
    x = rng.normal(size=(5, 4, 2))
    left, right = rng.normal(size=(3, 5)), rng.normal(size=(6, 4))
    out = separable(left, x, right)
    assert out.shape == (3, 6, 2)
    assert np.allclose(out[:, :, 1], left @ x[:, :, 1] @ right.T)


@pytest.mark.parametrize("bad", [np.zeros((3, 4)), np.array([[np.nan, 0], [0, 0]]),
                                 np.zeros(4)])
def test_invalid_planes(bad):
    with pytest.raises(InvalidInputError):
        dct2(bad)


def test_invalid_image():
    with pytest.raises(InvalidInputError):
        dct_image(np.zeros((4, 5, 1)))
    with pytest.raises(InvalidInputError):
        idct_image(np.full((4, 4, 1), np.inf))
