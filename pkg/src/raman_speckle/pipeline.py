"""End-to-end experiments: storage-time and write-time sweeps, correlation analysis.

Sweeps use common random numbers: every sweep point is simulated with the
same seed, so the spontaneous Stokes pattern of shot i is shared and only
the swept parameter changes between points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from .fitting import FitResult, RankDeficientError, fit_exponential, fit_rate_vs_angle
from .simulate import ExperimentConfig, blur_sigma_px, growth_rates, make_basis, run_sequence

log = logging.getLogger(__name__)

DEFAULT_T_STORE_US = tuple(float(t) for t in range(9))
DEFAULT_DECAY_ANGLES_MRAD = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
DEFAULT_T_WRITE_US = (0.04, 0.06, 0.08, 0.10, 0.12)
DEFAULT_GROWTH_ANGLES_MRAD = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)


@dataclass
class RateSweep:
    """Per-angle exponential rates (1/us) and, for decay sweeps, the quadratic fit."""

    theta_mrad: np.ndarray
    rate_per_us: np.ndarray
    sigma_per_us: np.ndarray
    converged: np.ndarray
    times_us: np.ndarray
    intensities: np.ndarray  # (n_times, n_angles)
    fit: FitResult | None = None
    extra: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        ok = bool(np.all(self.converged))
        return ok and (self.fit is None or self.fit.converged)


def _validate_lists(times, angles, what):
    if len(times) < 3 or len(angles) < 3:
        raise ValueError(f"{what} needs at least 3 times and 3 angles")
    if len(set(times)) != len(times):
        raise ValueError(f"{what} times must be distinct")


def _ring_profile(image, center, pitch, angles_rad):
    out = np.empty((len(angles_rad), 2))
    for k, th in enumerate(angles_rad):
        m, s, _ = an.ring_mean(image, center, pitch, th)
        out[k] = m, s
    return out


# a rate counts as resolved when its relative 1-sigma error is below this
MAX_REL_SIGMA = 0.5


def _rate_fits(t_us, I, sign, monotone=False):
    n_ang = I.shape[1]
    rate = np.full(n_ang, np.nan)
    sig = np.full(n_ang, np.nan)
    ok = np.zeros(n_ang, dtype=bool)
    for k in range(n_ang):
        try:
            fr = fit_exponential(t_us, I[:, k], sign=sign)
        except (ValueError, np.linalg.LinAlgError):
            continue
        rate[k], sig[k] = fr["rate"], fr.sigma("rate")
        ok[k] = fr.converged and np.isfinite(sig[k]) and 0 < sig[k] < MAX_REL_SIGMA * rate[k]
    if monotone and not ok.all():
        # rates grow with angle, so nothing beyond the first unresolved angle is resolvable
        ok[int(np.argmin(ok)):] = False
    return rate, sig, ok


DEBLUR_EPS = 0.03


def decay_sweep(cfg: ExperimentConfig, n_frames: int, t_store_us=DEFAULT_T_STORE_US,
                angles_mrad=DEFAULT_DECAY_ANGLES_MRAD, threads: int = 1,
                deblur: bool = True, weighted: bool = True) -> RateSweep:
    """Mean anti-Stokes intensity vs storage time at fixed angles, then D.

    Each angle gets an exponential decay fit; resolved rates enter a fit of
    ``gamma = D k_s^2 theta^2 + const``, weighted by 1/sigma^2 unless
    `weighted` is false.

    With `deblur`, each mean image is first deconvolved by the read-beam
    spread. Without it, slowly decaying light from smaller angles leaks
    into outer rings at late times and biases D low by several percent.
    """
    _validate_lists(t_store_us, angles_mrad, "decay sweep")
    t_us = np.asarray(sorted(t_store_us), float)
    th = np.asarray(sorted(angles_mrad), float)
    basis = make_basis(cfg)
    I = np.empty((t_us.size, th.size))
    for i, t in enumerate(t_us):
        _, anti, bg = run_sequence(cfg.with_(t_store=t * 1e-6), n_frames, threads, basis=basis)
        img = an.mean_image(anti) - an.mean_image(bg)
        if deblur:
            img = an.deblur_gaussian(img, blur_sigma_px(cfg), DEBLUR_EPS)
        I[i] = _ring_profile(img, anti.center, anti.pitch, th * 1e-3)[:, 0]
        log.info("t_store=%g us done", t)
    rate, sig, ok = _rate_fits(t_us, I, "decay", monotone=True)
    fit = None
    if ok.sum() >= 3 and np.unique(th[ok]).size >= 3:
        try:
            w = 1.0 / (sig[ok] * 1e6) ** 2 if weighted else None
            fit = fit_rate_vs_angle(th[ok] * 1e-3, rate[ok] * 1e6, weights=w, k_s=cfg.optics.k_s)
        except RankDeficientError:
            fit = None
    return RateSweep(th, rate, sig, ok, t_us, I, fit)


def plane_wave_kappa(cfg: ExperimentConfig, theta_rad) -> np.ndarray:
    """Growth rate of a plane wave at angle theta: zeta^2 - D k_s^2 theta^2 - gamma_sp (1/s)."""
    th = np.asarray(theta_rad, float)
    return cfg.zeta_sq - cfg.diffusion_D * (cfg.optics.k_s * th) ** 2 - cfg.gamma_sp


def growth_sweep(cfg: ExperimentConfig, n_frames: int, t_write_us=DEFAULT_T_WRITE_US,
                 angles_mrad=DEFAULT_GROWTH_ANGLES_MRAD, threads: int = 1) -> RateSweep:
    """Mean Stokes intensity vs write time at fixed angles, fitted with A exp(kappa t) + c."""
    _validate_lists(t_write_us, angles_mrad, "growth sweep")
    t_us = np.asarray(sorted(t_write_us), float)
    th = np.asarray(angles_mrad, float)
    basis = make_basis(cfg)
    I = np.empty((t_us.size, th.size))
    for i, t in enumerate(t_us):
        stokes, _, bg = run_sequence(cfg.with_(t_write=t * 1e-6), n_frames, threads, basis=basis)
        img = an.mean_image(stokes) - an.mean_image(bg)
        I[i] = _ring_profile(img, stokes.center, stokes.pitch, th * 1e-3)[:, 0]
    rate, sig, ok = _rate_fits(t_us, I, "growth")
    extra = {
        "kappa_plane_wave_per_us": plane_wave_kappa(cfg, th * 1e-3) * 1e-6,
        "kappa_modes_per_us": growth_rates(basis, cfg) * 1e-6,
    }
    return RateSweep(th, rate, sig, ok, t_us, I, None, extra)


# ---------------------------------------------------------------------------
# correlations


@dataclass
class CorrelationSummary:
    ref_mrad: tuple[float, float]
    c_ss: an.CorrelationMap
    c_as: an.CorrelationMap
    c_aa: an.CorrelationMap
    stokes_w_avg: FitResult
    stokes_w_C: FitResult
    stokes_w_speckle: float
    anti_w_avg: FitResult
    anti_w_C: FitResult
    anti_w_speckle: float
    conjugate_peak: FitResult

    @property
    def stokes_N(self) -> float:
        return an.mode_count(self.stokes_w_avg["w"], self.stokes_w_C["w"])

    @property
    def anti_N(self) -> float:
        return an.mode_count(self.anti_w_avg["w"], self.anti_w_C["w"])

    def rows(self):
        """(quantity, value, sigma, unit) rows for the summary CSV."""
        pk = self.conjugate_peak
        r = [
            ("ref_x", self.ref_mrad[0], 0.0, "mrad"),
            ("ref_y", self.ref_mrad[1], 0.0, "mrad"),
            ("stokes_w_avg", self.stokes_w_avg["w"] * 1e3, self.stokes_w_avg.sigma("w") * 1e3, "mrad"),
            ("stokes_w_C", self.stokes_w_C["w"] * 1e3, self.stokes_w_C.sigma("w") * 1e3, "mrad"),
            ("stokes_w_speckle", self.stokes_w_speckle * 1e3, float("nan"), "mrad"),
            ("stokes_N", self.stokes_N, _n_sigma(self.stokes_w_avg, self.stokes_w_C), "1"),
            ("antistokes_w_avg", self.anti_w_avg["w"] * 1e3, self.anti_w_avg.sigma("w") * 1e3, "mrad"),
            ("antistokes_w_C", self.anti_w_C["w"] * 1e3, self.anti_w_C.sigma("w") * 1e3, "mrad"),
            ("antistokes_w_speckle", self.anti_w_speckle * 1e3, float("nan"), "mrad"),
            ("antistokes_N", self.anti_N, _n_sigma(self.anti_w_avg, self.anti_w_C), "1"),
            ("conjugate_peak_x", pk["x0"] * 1e3, pk.sigma("x0") * 1e3, "mrad"),
            ("conjugate_peak_y", pk["y0"] * 1e3, pk.sigma("y0") * 1e3, "mrad"),
            ("conjugate_peak_value", pk["A"] + pk["offset"], pk.sigma("A"), "1"),
            ("conjugate_peak_w", pk["w"] * 1e3, pk.sigma("w") * 1e3, "mrad"),
        ]
        return r


def _n_sigma(wa: FitResult, wc: FitResult) -> float:
    n = an.mode_count(wa["w"], wc["w"])
    return n * 2 * np.hypot(wa.sigma("w") / wa["w"], wc.sigma("w") / wc["w"])


def analyze_correlations(stokes: an.FrameStack, anti: an.FrameStack, ref_rad: tuple[float, float],
                         background: an.FrameStack | None = None, min_frames: int = 1000) -> CorrelationSummary:
    """Correlation maps and derived widths for a Stokes/anti-Stokes stack pair.

    All geometry (pitch, center) comes from the stacks themselves.
    """
    if len(stokes) != len(anti):
        raise ValueError(f"frame counts differ: {len(stokes)} vs {len(anti)}")
    if len(stokes) < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {len(stokes)}")
    if background is not None:
        stokes = an.subtract_background(stokes, background)
        anti = an.subtract_background(anti, background)
    conj = (-ref_rad[0], -ref_rad[1])
    c_ss = an.correlation_map(stokes, stokes, ref_rad)
    c_as = an.correlation_map(anti, stokes, ref_rad)
    # anti-Stokes self-correlation about the conjugate direction
    c_aa = an.correlation_map(anti, anti, conj)
    return CorrelationSummary(
        ref_mrad=(ref_rad[0] * 1e3, ref_rad[1] * 1e3),
        c_ss=c_ss, c_as=c_as, c_aa=c_aa,
        stokes_w_avg=an.average_width(stokes),
        stokes_w_C=an.correlation_peak(c_ss),
        stokes_w_speckle=an.speckle_width(stokes),
        anti_w_avg=an.average_width(anti),
        anti_w_C=an.correlation_peak(c_aa),
        anti_w_speckle=an.speckle_width(anti),
        conjugate_peak=an.correlation_peak(c_as),
    )


def off_peak_rms(cmap: an.CorrelationMap, peak_rad: tuple[float, float], radius: float) -> float:
    """RMS of the map outside a disc of `radius` (rad) around `peak_rad`."""
    ny, nx = cmap.values.shape
    yy, xx = np.indices((ny, nx))
    cx, cy = cmap.center
    px = cx + peak_rad[0] / cmap.pitch
    py = cy + peak_rad[1] / cmap.pitch
    sel = np.hypot(xx - px, yy - py) * cmap.pitch > radius
    v = cmap.values[sel]
    return float(np.sqrt(np.mean(v * v)))
