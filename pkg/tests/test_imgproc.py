import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracle import SOBEL_X, SOBEL_Y, correlate as ref_correlate, erode as ref_erode, gauss2d as ref_gauss2d
from svcvv import imgproc


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# -- to_gray --------------------------------------------------------------------


@pytest.mark.parametrize(
    "rgb, expected",
    [((100, 100, 100), 100.0), ((255, 0, 0), 76.245), ((0, 0, 0), 0.0)],
)
def test_to_gray_pixel(rgb, expected):
    img = np.zeros((3, 3, 3), np.uint8)
    img[:, :] = rgb
    assert imgproc.to_gray(img) == pytest.approx(np.full((3, 3), expected), abs=1e-9)


def test_to_gray_rejects_gray_input():
    with pytest.raises(ValueError):
        imgproc.to_gray(np.zeros((5, 5)))


# -- gaussian_blur ------------------------------------------------------------------


def test_gaussian_sigma_default():
    assert imgproc.GAUSS_SIGMA == pytest.approx(2.15)


def test_blur_constant_image():
    img = np.full((20, 30), 42.5)
    assert np.allclose(imgproc.gaussian_blur(img), 42.5, atol=1e-12)


def test_blur_impulse_gives_kernel():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    out = imgproc.gaussian_blur(img)
    np.testing.assert_allclose(out[5:16, 5:16], ref_gauss2d(), atol=1e-15)
    assert out.sum() == pytest.approx(1.0)


def test_blur_reduces_noise_variance(rng):
    img = rng.normal(size=(60, 80))
    assert imgproc.gaussian_blur(img).var() < img.var()


def test_blur_matches_brute_force(rng):
    img = rng.uniform(0, 255, size=(17, 23))
    np.testing.assert_allclose(imgproc.gaussian_blur(img), ref_correlate(img, ref_gauss2d()), atol=1e-10)


def test_blur_too_small():
    with pytest.raises(imgproc.ImageSizeError):
        imgproc.gaussian_blur(np.zeros((10, 40)))


# -- minmax_normalize -------------------------------------------------------------------


@pytest.mark.parametrize(
    "values, expected",
    [([0, 128, 255], [0, 0.50196, 1]), ([-3, 1, 5], [0, 0.5, 1]), ([7, 7, 7], [0, 0, 0])],
)
def test_minmax(values, expected):
    out = imgproc.minmax_normalize(np.array([values], dtype=float))
    np.testing.assert_allclose(out[0], expected, atol=5e-6)


# -- sobel ---------------------------------------------------------------------------


def test_sobel_constant_zero():
    gx, gy = imgproc.sobel_gradients(np.full((8, 9), 3.0))
    assert not gx.any() and not gy.any()


def test_sobel_vertical_step():
    img = np.zeros((9, 10))
    img[:, 5:] = 1.0
    gx, gy = imgproc.sobel_gradients(img)
    # window centred on column 4 spans the step: (-1-2-1)*0 + (1+2+1)*1
    assert gx[4, 4] == 4.0
    assert gx[4, 5] == 4.0
    assert gx[4, 1] == 0.0
    assert not gy[1:-1].any()


def test_sobel_horizontal_step_is_negated():
    img = np.zeros((10, 9))
    img[5:, :] = 1.0
    gx, gy = imgproc.sobel_gradients(img)
    # raw sobel-y on the rows spanning the step is +4; the up-positive axis flips it
    assert gy[4, 4] == -4.0
    assert not gx.any()


def test_sobel_matches_brute_force(rng):
    img = rng.uniform(size=(13, 16))
    gx, gy = imgproc.sobel_gradients(img)
    np.testing.assert_allclose(gx, ref_correlate(img, SOBEL_X), atol=1e-12)
    np.testing.assert_allclose(gy, -ref_correlate(img, SOBEL_Y), atol=1e-12)


# -- magnitude_angle -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "gx, gy, mag, ang",
    [(1, 1, np.sqrt(2), 45.0), (-1, 0, 1.0, 0.0), (0, -1, 1.0, 90.0), (0, 0, 0.0, 0.0), (0, 1, 1.0, 90.0), (-1, -1, np.sqrt(2), 45.0)],
)
def test_magnitude_angle(gx, gy, mag, ang):
    m, t = imgproc.magnitude_angle(np.array([[gx]], float), np.array([[gy]], float))
    assert m[0, 0] == pytest.approx(mag)
    assert t[0, 0] == pytest.approx(ang, abs=1e-12)


@pytest.mark.parametrize("raw, folded", [(0.0, 0.0), (179.5, 179.5), (180.0, 0.0), (270.0, 90.0), (359.0, 179.0), (360.0, 0.0)])
def test_fold_angle(raw, folded):
    assert imgproc.fold_angle(np.array([raw]))[0] == pytest.approx(folded)


def test_magnitude_angle_shape_mismatch():
    with pytest.raises(ValueError):
        imgproc.magnitude_angle(np.zeros((3, 3)), np.zeros((3, 4)))


# -- threshold / erode ----------------------------------------------------------------------


def test_threshold_strict():
    out = imgproc.threshold_below(np.array([0.1, 0.25, 0.9]), 0.25)
    np.testing.assert_array_equal(out, [0.0, 0.25, 0.9])


def test_threshold_all_below_and_zero_cutoff():
    x = np.array([0.1, 0.2])
    assert not imgproc.threshold_below(x, 0.25).any()
    np.testing.assert_array_equal(imgproc.threshold_below(x, 0.0), x)


def test_erode_constant():
    np.testing.assert_array_equal(imgproc.erode3x3(np.full((5, 6), 0.4)), 0.4)


def test_erode_hole_spreads():
    img = np.ones((7, 7))
    img[3, 3] = 0.0
    out = imgproc.erode3x3(img)
    expected = np.ones((7, 7))
    expected[2:5, 2:5] = 0.0
    np.testing.assert_array_equal(out, expected)


def test_erode_removes_isolated_pixel():
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    assert not imgproc.erode3x3(img).any()


def test_erode_matches_brute_force(rng):
    img = rng.uniform(size=(11, 14))
    np.testing.assert_array_equal(imgproc.erode3x3(img), ref_erode(img))


# -- properties --------------------------------------------------------------------------------

images = arrays(
    np.float64,
    st.tuples(st.integers(11, 24), st.integers(11, 24)),
    elements=st.floats(0, 255, allow_nan=False),
)


@settings(max_examples=40, deadline=None)
@given(images)
def test_dimensions_preserved(img):
    for out in (imgproc.gaussian_blur(img), imgproc.minmax_normalize(img), imgproc.erode3x3(img), *imgproc.sobel_gradients(img)):
        assert out.shape == img.shape


@settings(max_examples=40, deadline=None)
@given(images)
def test_normalize_range_and_idempotence(img):
    n = imgproc.minmax_normalize(img)
    assert n.min() >= 0.0 and n.max() <= 1.0
    if img.max() > img.min():
        np.testing.assert_allclose(imgproc.minmax_normalize(n), n, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(images)
def test_erode_never_increases(img):
    assert np.all(imgproc.erode3x3(img) <= img)


@settings(max_examples=40, deadline=None)
@given(images, images, st.floats(-3, 3), st.floats(-3, 3))
def test_filters_linear_in_interior(x, y, a, b):
    h, w = min(x.shape[0], y.shape[0]), min(x.shape[1], y.shape[1])
    x, y = x[:h, :w], y[:h, :w]
    inner = (slice(5, -5), slice(5, -5))
    for op in (imgproc.gaussian_blur, lambda z: imgproc.sobel_gradients(z)[0], lambda z: imgproc.sobel_gradients(z)[1]):
        lhs = op(a * x + b * y)[inner]
        rhs = (a * op(x) + b * op(y))[inner]
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3)),
)
def test_folded_angle_range(gx, gy):
    m, t = imgproc.magnitude_angle(gx, gy)
    assert np.all(m >= 0)
    assert np.all((t >= 0) & (t < 180))
