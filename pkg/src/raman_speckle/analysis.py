"""Image statistics for single-shot far-field frames.

Background subtraction, mean images and azimuthal averages, normalized
intensity-fluctuation correlation maps and the widths derived from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .fitting import FitResult, fit_gaussian_2d, fit_gaussian_radial

MIN_BIN_SAMPLES = 8
PIXEL_BLOCK = 4096


class EstimatorError(ValueError):
    """Raised when a statistic is undefined for the given data."""


@dataclass(eq=False)
class FrameStack:
    frames: np.ndarray  # (n_frames, n_y, n_x)
    pitch: float  # rad / pixel
    center: tuple[float, float]  # (x, y) pixel of the beam axis
    label: str = "stokes"
    config_hash: str = ""
    seed: int = 0
    region_center: tuple[float, float] = (0.0, 0.0)  # mrad on the shared sensor

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3:
            raise ValueError("frames must have shape (n_frames, n_y, n_x)")
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")
        self.center = (float(self.center[0]), float(self.center[1]))

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]

    def pixel_of(self, theta_x: float, theta_y: float) -> tuple[int, int]:
        cx, cy = self.center
        ix = int(np.rint(cx + theta_x / self.pitch))
        iy = int(np.rint(cy + theta_y / self.pitch))
        ny, nx = self.shape
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise ValueError(f"direction ({theta_x:g}, {theta_y:g}) rad is outside the grid")
        return ix, iy

    def angle_axes(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        cx, cy = self.center
        return (np.arange(nx) - cx) * self.pitch, (np.arange(ny) - cy) * self.pitch

    def with_frames(self, frames) -> "FrameStack":
        return replace(self, frames=frames)


@dataclass
class RadialProfile:
    theta: np.ndarray  # mean radius of the pixels in each bin, rad
    mean: np.ndarray
    sem: np.ndarray
    counts: np.ndarray
    bin_width: float


@dataclass(eq=False)
class CorrelationMap:
    values: np.ndarray
    ref: tuple[float, float]  # reference direction (rad) in stack_j
    ref_pixel: tuple[int, int]
    kind: str  # "ss", "as", ...
    pitch: float
    center: tuple[float, float]
    n_frames: int = 0
    extra: dict = field(default_factory=dict)

    def angle_axes(self):
        ny, nx = self.values.shape
        cx, cy = self.center
        return (np.arange(nx) - cx) * self.pitch, (np.arange(ny) - cy) * self.pitch


# ---------------------------------------------------------------------------
# averages


def subtract_background(stack: FrameStack, bg_stack: FrameStack) -> FrameStack:
    """Subtract the per-pixel mean background; negative residuals are kept."""
    if len(bg_stack) == 0:
        raise ValueError("background stack is empty")
    if stack.shape != bg_stack.shape:
        raise ValueError(f"dimension mismatch: {stack.shape} vs {bg_stack.shape}")
    bg = mean_image(bg_stack)
    return stack.with_frames(stack.frames.astype(np.float64) - bg)


def mean_image(stack: FrameStack | np.ndarray) -> np.ndarray:
    frames = stack.frames if isinstance(stack, FrameStack) else np.asarray(stack)
    if frames.shape[0] == 0:
        raise ValueError("cannot average an empty stack")
    return frames.astype(np.float64).sum(axis=0) / frames.shape[0]


def _radius_px(shape, center):
    ny, nx = shape
    cx, cy = center
    yy, xx = np.indices((ny, nx))
    return np.hypot(xx - cx, yy - cy)


def polar_average(image: np.ndarray, center: tuple[float, float], pitch: float = 1.0) -> RadialProfile:
    """Azimuthal average in rings one pixel wide; rings with < 8 pixels are dropped."""
    image = np.asarray(image, dtype=np.float64)
    r = _radius_px(image.shape, center)
    idx = np.rint(r).astype(int).ravel()
    v = image.ravel()
    n = np.bincount(idx)
    s1 = np.bincount(idx, weights=v)
    s2 = np.bincount(idx, weights=v * v)
    sr = np.bincount(idx, weights=r.ravel())
    keep = n >= MIN_BIN_SAMPLES
    n, s1, s2, sr = n[keep], s1[keep], s2[keep], sr[keep]
    mean = s1 / n
    var = np.clip(s2 / n - mean**2, 0, None) * n / np.maximum(n - 1, 1)
    return RadialProfile(sr / n * pitch, mean, np.sqrt(var / n), n, pitch)


def ring_mean(image: np.ndarray, center: tuple[float, float], pitch: float, theta: float) -> tuple[float, float, int]:
    """Mean, standard error and pixel count over the ring |r - theta| < pitch / 2.

    Below one pitch the ring degenerates, so the disc r < pitch is used.
    """
    r = _radius_px(np.shape(image), center) * pitch
    sel = r < pitch if theta < pitch else np.abs(r - theta) < pitch / 2
    vals = np.asarray(image, dtype=np.float64)[sel]
    if vals.size == 0:
        raise ValueError(f"no pixels at radius {theta:g} rad")
    sem = vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else 0.0
    return float(vals.mean()), float(sem), int(vals.size)


def deblur_gaussian(image: np.ndarray, sigma_px: float, eps: float = 0.03) -> np.ndarray:
    """Wiener deconvolution of a known isotropic Gaussian blur (periodic boundaries).

    `eps` is the noise-to-signal regularizer; ``eps -> 0`` is the plain inverse.
    """
    image = np.asarray(image, dtype=np.float64)
    if sigma_px <= 0:
        return image.copy()
    if eps <= 0:
        raise ValueError("eps must be positive")
    ny, nx = image.shape
    fy = np.fft.fftfreq(ny)[:, None]
    fx = np.fft.rfftfreq(nx)[None, :]
    H = np.exp(-2 * np.pi**2 * sigma_px**2 * (fx**2 + fy**2))
    return np.fft.irfft2(np.fft.rfft2(image) * H / (H * H + eps), s=image.shape)


def average_width(stack: FrameStack, background: FrameStack | None = None) -> FitResult:
    """1/e^2 radius of the mean image from a radial Gaussian fit."""
    if background is not None:
        stack = subtract_background(stack, background)
    prof = polar_average(mean_image(stack), stack.center, stack.pitch)
    return fit_gaussian_radial(prof)


# ---------------------------------------------------------------------------
# correlations


def _centered(frames: np.ndarray) -> np.ndarray:
    x = frames.astype(np.float64)
    return x - x.mean(axis=0)


def correlation_map(stack_i: FrameStack, stack_j: FrameStack, ref: tuple[float, float],
                    kind: str | None = None) -> CorrelationMap:
    """Pearson correlation across frames of every pixel of `stack_i` with the
    `ref` direction (rad, in `stack_j`'s own angular coordinates) of `stack_j`.
    """
    if len(stack_i) != len(stack_j):
        raise ValueError("stacks must have equal frame counts")
    n = len(stack_i)
    if n < 100:
        raise ValueError(f"need at least 100 frames, got {n}")
    ix, iy = stack_j.pixel_of(*ref)
    d_ref = stack_j.frames[:, iy, ix].astype(np.float64)
    d_ref = d_ref - d_ref.mean()
    var_ref = float(d_ref @ d_ref)
    if var_ref == 0:
        raise EstimatorError(f"reference pixel ({ix}, {iy}) has zero variance (dead pixel?)")
    flat = stack_i.frames.reshape(n, -1)
    npx = flat.shape[1]
    cov = np.empty(npx)
    var = np.empty(npx)
    for a in range(0, npx, PIXEL_BLOCK):
        blk = _centered(flat[:, a:a + PIXEL_BLOCK])
        cov[a:a + PIXEL_BLOCK] = d_ref @ blk
        var[a:a + PIXEL_BLOCK] = np.einsum("ij,ij->j", blk, blk)
    den = np.sqrt(var * var_ref)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(den > 0, cov / den, 0.0)
    c = np.clip(c, -1.0, 1.0).reshape(stack_i.shape)
    if stack_i.frames is stack_j.frames:
        # self-correlation of the reference is 1 by definition; avoid last-bit drift
        c[iy, ix] = 1.0
    if kind is None:
        kind = stack_i.label[:1] + stack_j.label[:1]
    return CorrelationMap(c, (float(ref[0]), float(ref[1])), (ix, iy), kind,
                          stack_i.pitch, stack_i.center, n)


def _peak_window_fit(values, peak_xy, exclude=None, pitch=1.0, center=(0.0, 0.0)) -> FitResult:
    """2D Gaussian fit around `peak_xy` on a window 4x the estimated FWHM."""
    ny, nx = values.shape
    px, py = peak_xy
    yy, xx = np.indices((ny, nx))
    mask = np.ones_like(values, dtype=bool)
    if exclude is not None:
        mask[exclude[1], exclude[0]] = False
    peak = values[mask & (np.hypot(xx - px, yy - py) <= 1.5)].max()
    half = 0.5 * peak
    # connected region above half maximum, grown from the peak
    above = (values >= half) & mask
    region = np.zeros_like(above)
    region[py, px] = True
    if exclude is not None and (px, py) == tuple(exclude):
        region[py, px] = True
    for _ in range(max(nx, ny)):
        grown = region.copy()
        grown[1:, :] |= region[:-1, :]
        grown[:-1, :] |= region[1:, :]
        grown[:, 1:] |= region[:, :-1]
        grown[:, :-1] |= region[:, 1:]
        grown &= above | region
        if np.array_equal(grown, region):
            break
        region = grown
    region &= mask
    if region.sum() < 3:
        raise EstimatorError("no resolvable peak: fewer than 3 pixels above half maximum")
    wts = values[region]
    x0 = np.sum(wts * xx[region]) / wts.sum()
    y0 = np.sum(wts * yy[region]) / wts.sum()
    # second moment of pixels above half max; for a Gaussian truncated at half
    # maximum <r^2> relates to the 1/e^2 radius w by <r^2> ~= 0.153 w^2
    m2 = np.sum(wts * ((xx[region] - x0) ** 2 + (yy[region] - y0) ** 2)) / wts.sum()
    w_est = max(np.sqrt(m2 / 0.153), 1.0)
    fwhm = w_est * np.sqrt(2 * np.log(2))
    halfwin = max(2 * fwhm, 3.0)
    win = mask & (np.abs(xx - x0) <= halfwin) & (np.abs(yy - y0) <= halfwin)
    fit = fit_gaussian_2d(xx[win], yy[win], values[win], p0=(peak, x0, y0, w_est, 0.0))
    # convert pixels -> rad
    cx, cy = center
    p, e = fit.params, fit.errors
    params = dict(A=p["A"], x0=(p["x0"] - cx) * pitch, y0=(p["y0"] - cy) * pitch,
                  w=p["w"] * pitch, offset=p["offset"])
    errors = dict(A=e["A"], x0=e["x0"] * pitch, y0=e["y0"] * pitch, w=e["w"] * pitch, offset=e["offset"])
    return FitResult(params, errors, fit.rss, fit.converged, fit.iterations)


def correlation_peak(cmap: CorrelationMap) -> FitResult:
    """Gaussian fit to the dominant peak of a correlation map (angles in rad).

    For self-correlation maps the reference pixel (identically 1, and
    inflated by uncorrelated detector noise) is excluded from the fit.
    """
    v = cmap.values
    if cmap.kind[0] == cmap.kind[1]:
        return _peak_window_fit(v, cmap.ref_pixel, exclude=cmap.ref_pixel,
                                pitch=cmap.pitch, center=cmap.center)
    # locate on a lightly smoothed copy so single noisy pixels cannot win
    iy, ix = np.unravel_index(np.argmax(gaussian_filter(v, 1.0, mode="constant")), v.shape)
    return _peak_window_fit(v, (int(ix), int(iy)), pitch=cmap.pitch, center=cmap.center)


def correlation_width(cmap: CorrelationMap) -> float:
    """1/e^2 radius (rad) of the dominant correlation peak."""
    return correlation_peak(cmap).params["w"]


def spatial_autocorrelation(stack: FrameStack) -> np.ndarray:
    """Normalized single-frame autocorrelation of intensity fluctuations.

    ``sum_f sum_x dI_f(x) dI_f(x+d) / (n_f sum_x M(x) M(x+d))`` with ``M``
    the mean image and ``dI_f = I_f - M``; the normalization removes the
    envelope of the mean image. Returned with zero lag at the array center.
    The stack should be background subtracted.
    """
    n = len(stack)
    if n < 2:
        raise ValueError("need at least 2 frames")
    ny, nx = stack.shape
    shape = (2 * ny, 2 * nx)
    M = mean_image(stack)
    acc = np.zeros(shape)
    for a in range(0, n, 256):
        d = stack.frames[a:a + 256].astype(np.float64) - M
        F = np.fft.rfft2(d, s=shape)
        acc += np.fft.irfft2((F * F.conj()).sum(axis=0), s=shape)
    FM = np.fft.rfft2(M, s=shape)
    env = np.fft.irfft2(FM * FM.conj(), s=shape)
    acc = np.fft.fftshift(acc) / n
    env = np.fft.fftshift(env)
    sl = (slice(ny // 2, ny // 2 + ny), slice(nx // 2, nx // 2 + nx))
    acc, env = acc[sl], env[sl]
    floor = env.max() * 1e-3
    return np.where(env > floor, acc / np.where(env > floor, env, 1.0), 0.0)


def speckle_width(stack: FrameStack) -> float:
    """1/e^2 radius (rad) of a single speckle grain.

    The autocorrelation peak of a frame made of Gaussian grains of radius
    w is a Gaussian of radius sqrt(2) w, so the grain radius is the fitted
    autocorrelation radius over sqrt(2). The zero-lag pixel carries the
    uncorrelated detector noise and is excluded.
    """
    ac = spatial_autocorrelation(stack)
    ny, nx = ac.shape
    zero = (nx // 2, ny // 2)
    fit = _peak_window_fit(ac, zero, exclude=zero, pitch=stack.pitch, center=(float(nx // 2), float(ny // 2)))
    return fit.params["w"] / np.sqrt(2)


def mode_count(w_avg: float, w_C: float) -> float:
    """Number of speckle grains in the mean spot, N = 2 (w_avg / w_C)^2."""
    if w_avg <= 0 or w_C <= 0:
        raise ValueError("widths must be positive")
    return 2.0 * (w_avg / w_C) ** 2


def normalized_variance(stack: FrameStack) -> np.ndarray:
    """Per-pixel <dn^2> / <n>^2 over frames."""
    x = stack.frames.astype(np.float64)
    m = x.mean(axis=0)
    v = x.var(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(m != 0, v / m**2, np.nan)
