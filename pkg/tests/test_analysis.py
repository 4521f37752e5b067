import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raman_speckle.analysis import (
    EstimatorError,
    FrameStack,
    correlation_map,
    correlation_peak,
    correlation_width,
    deblur_gaussian,
    mean_image,
    mode_count,
    normalized_variance,
    polar_average,
    ring_mean,
    speckle_width,
    subtract_background,
)
from raman_speckle.simulate import run_sequence

from .conftest import NOISY

PITCH = 100e-6


def _stack(frames, label="stokes"):
    frames = np.asarray(frames)
    ny, nx = frames.shape[1:]
    return FrameStack(frames, PITCH, ((nx - 1) / 2, (ny - 1) / 2), label)


def _speckle_frames(n, size, s_px, seed):
    """Stationary Gaussian speckle: white complex noise filtered by exp(-r^2/s^2) (periodic)."""
    rng = np.random.default_rng(seed)
    f = np.fft.fftfreq(size)
    fx, fy = np.meshgrid(f, f)
    # Fourier transform of exp(-r^2/s^2), unnormalized
    H = np.exp(-(np.pi * s_px) ** 2 * (fx**2 + fy**2))
    z = rng.standard_normal((n, size, size)) + 1j * rng.standard_normal((n, size, size))
    field = np.fft.ifft2(np.fft.fft2(z) * H)
    return np.abs(field) ** 2


@pytest.fixture(scope="module")
def speckle():
    return _stack(_speckle_frames(1500, 48, 3.0, 0))


def test_subtract_background_exact():
    rng = np.random.default_rng(0)
    frames = rng.random((5, 6, 7))
    offset = rng.random((6, 7))
    st_ = _stack(frames + offset)
    bg = _stack(np.broadcast_to(offset, (3, 6, 7)), "background")
    assert np.allclose(subtract_background(st_, bg).frames, frames, atol=1e-14)
    zero = _stack(np.zeros((2, 6, 7)))
    assert np.array_equal(subtract_background(st_, zero).frames, st_.frames)
    with pytest.raises(ValueError):
        subtract_background(st_, _stack(np.zeros((2, 6, 6))))
    with pytest.raises(ValueError):
        subtract_background(st_, _stack(np.zeros((0, 6, 7))))


def test_background_residual_is_unbiased(small_cfg):
    cfg = small_cfg.with_(detector=NOISY, t_store=1.0, n_background=300)
    _, a, bg = run_sequence(cfg, 300)
    res = subtract_background(a, bg).frames
    m = res.mean()
    # read noise 5 counts, both stacks contribute
    assert abs(m) < 3 * 5.0 * np.sqrt(1 / res.size + 1 / bg.frames.size)
    assert res.min() < 0  # negative residuals retained


def test_mean_image_and_empty():
    st_ = _stack(np.full((4, 5, 5), 2.5))
    assert np.all(mean_image(st_) == 2.5)
    prof = polar_average(mean_image(st_), st_.center)
    assert np.all(prof.mean == 2.5)
    with pytest.raises(ValueError):
        mean_image(np.zeros((0, 3, 3)))


def test_polar_average_gaussian():
    # [DERIVED] analytic image sampled exactly; binning bias < 0.5%
    n, w = 129, 30.0
    yy, xx = np.indices((n, n), dtype=float)
    c = (n - 1) / 2
    img = np.exp(-2 * ((xx - c) ** 2 + (yy - c) ** 2) / w**2)
    prof = polar_average(img, (c, c))
    oracle = np.exp(-2 * prof.theta**2 / w**2)
    sel = prof.theta <= w
    assert np.max(np.abs(prof.mean[sel] / oracle[sel] - 1)) < 5e-3
    assert np.all(prof.counts >= 8)
    assert np.all(np.diff(prof.theta) > 0)


def test_polar_average_commutes_with_mean():
    rng = np.random.default_rng(3)
    frames = rng.random((20, 33, 33))
    st_ = _stack(frames)
    a = polar_average(mean_image(st_), st_.center).mean
    b = np.mean([polar_average(f, st_.center).mean for f in frames], axis=0)
    assert np.allclose(a, b, rtol=1e-12)


def test_ring_mean_center_disc():
    img = np.ones((9, 9))
    m, s, n = ring_mean(img, (4.0, 4.0), 1.0, 0.0)
    assert (m, s, n) == (1.0, 0.0, 1)
    m, _, n = ring_mean(img, (4.0, 4.0), 1.0, 3.0)
    assert m == 1.0 and n > 8
    with pytest.raises(ValueError):
        ring_mean(img, (4.0, 4.0), 1.0, 40.0)


def test_self_correlation_is_one(speckle):
    ref = (0.0, 0.0)
    cmap = correlation_map(speckle, speckle, ref)
    assert cmap.values[cmap.ref_pixel[1], cmap.ref_pixel[0]] == 1.0
    assert cmap.kind == "ss"


@settings(max_examples=20)
@given(st.integers(0, 47), st.integers(0, 47), st.integers(0, 47), st.integers(0, 47))
def test_pearson_symmetry(x1, y1, x2, y2):
    stack = _SYM
    c1 = stack.center
    p = ((x1 - c1[0]) * PITCH, (y1 - c1[1]) * PITCH)
    q = ((x2 - c1[0]) * PITCH, (y2 - c1[1]) * PITCH)
    a = correlation_map(stack, stack, p).values[y2, x2]
    b = correlation_map(stack, stack, q).values[y1, x1]
    assert abs(a - b) < 1e-12


_SYM = _stack(_speckle_frames(150, 48, 2.0, 5))


def test_correlation_bounds_and_invariances(speckle):
    ref = (0.5e-3, -0.3e-3)
    base = correlation_map(speckle, speckle, ref).values
    assert np.all(np.abs(base) <= 1.0)
    shifted = speckle.with_frames(speckle.frames + 37.0)
    assert np.max(np.abs(correlation_map(shifted, shifted, ref).values - base)) < 1e-9
    scaled = speckle.with_frames(speckle.frames * 3.7)
    assert np.max(np.abs(correlation_map(scaled, scaled, ref).values - base)) < 1e-12


def test_independent_stacks_uncorrelated():
    a = _stack(_speckle_frames(1000, 24, 2.0, 1))
    b = _stack(_speckle_frames(1000, 24, 2.0, 2), "antistokes")
    c = correlation_map(a, b, (0.0, 0.0)).values
    # 1/sqrt(n) per pixel; over 576 pixels allow 4.5 sigma
    assert np.max(np.abs(c)) < 4.5 / np.sqrt(1000)
    assert abs(c.mean()) < 3 / np.sqrt(1000)


def test_correlation_errors():
    frames = np.random.default_rng(0).random((120, 8, 8))
    frames[:, 3, 3] = 7.0  # dead pixel
    st_ = _stack(frames)
    ref = ((3 - st_.center[0]) * PITCH, (3 - st_.center[1]) * PITCH)
    with pytest.raises(EstimatorError):
        correlation_map(st_, st_, ref)
    with pytest.raises(ValueError):
        correlation_map(_stack(frames[:50]), _stack(frames[:50]), (0.0, 0.0))
    with pytest.raises(ValueError):
        correlation_map(st_, _stack(frames[:110]), (0.0, 0.0))
    with pytest.raises(ValueError):
        correlation_map(st_, st_, (1.0, 0.0))


def test_speckle_width_ratio(speckle):
    # [DERIVED] amplitude kernel exp(-r^2/s^2) gives |mu|^2 = exp(-d^2/s^2),
    # a 1/e^2 radius of sqrt(2) s for the correlation peak
    s = 3.0
    wc = correlation_width(correlation_map(speckle, speckle, (0.0, 0.0)))
    ws = speckle_width(speckle)
    assert wc / PITCH == pytest.approx(np.sqrt(2) * s, rel=0.1)
    assert wc / ws == pytest.approx(np.sqrt(2), rel=0.1)


def test_unresolvable_peak():
    frames = np.random.default_rng(4).random((200, 16, 16))
    st_ = _stack(frames)
    with pytest.raises(EstimatorError):
        correlation_peak(correlation_map(st_, st_, (0.0, 0.0)))


def test_single_mode_correlation_spans_mode(small_cfg):
    cfg = small_cfg.with_(n_modes=1, read_blur=0.0)
    s, _, _ = run_sequence(cfg, 200)
    c = correlation_map(s, s, (0.2e-3, 0.0)).values
    # one thermal mode: every lit pixel fluctuates together
    cx, cy = s.center
    yy, xx = np.indices(s.shape)
    lit = np.hypot(xx - cx, yy - cy) * s.pitch < cfg.w0
    assert np.min(c[lit]) > 0.999


def test_mode_count_examples():
    assert mode_count(2.8e-3, 1e-3) == pytest.approx(15.68)
    assert mode_count(1e-3, 1e-3) == 2.0
    # fundamental spread w_avg / N^(1/4) with the quoted mode count
    assert 2.8e-3 / 15.7**0.25 == pytest.approx(1.4e-3, rel=0.01)
    with pytest.raises(ValueError):
        mode_count(0.0, 1.0)


def test_normalized_variance_thermal(speckle):
    r = normalized_variance(speckle)
    assert np.mean(r) == pytest.approx(1.0, rel=0.05)


@settings(max_examples=20)
@given(st.floats(0.5, 3.0))
def test_deblur_inverts_blur(sigma):
    from scipy.ndimage import gaussian_filter

    yy, xx = np.indices((64, 64), dtype=float)
    img = np.exp(-2 * ((xx - 31.5) ** 2 + (yy - 31.5) ** 2) / 12.0**2)
    blurred = gaussian_filter(img, sigma, mode="wrap")
    back = deblur_gaussian(blurred, sigma, eps=1e-6)
    assert np.max(np.abs(back - img)) < 1e-3
    assert np.array_equal(deblur_gaussian(img, 0.0), img)
    with pytest.raises(ValueError):
        deblur_gaussian(img, 1.0, eps=0.0)
