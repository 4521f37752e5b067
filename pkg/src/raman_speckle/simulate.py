"""Write / store / read Monte Carlo for multimode Raman scattering.

One shot: thermal mode amplitudes are drawn at the write stage and
synthesized into the far-field Stokes amplitude; the phase-conjugate
spin wave is stored on the same angular grid, damped per |K| by
diffusion, and read out into the point-mirrored anti-Stokes direction.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .analysis import FrameStack
from .geometry import CellGeometry, OpticalConstants, fresnel_number, longitudinal_mismatch
from .modes import GAIN_SCHEDULES, AngularGrid, ModeBasis, build_mode_basis, mean_k2_all

log = logging.getLogger(__name__)

STREAM_SHOTS = 0
STREAM_BACKGROUND = 1
DEFAULT_MAX_BYTES = 4 * 2**30
BATCH = 64


class ResourceLimitError(MemoryError):
    pass


@dataclass(frozen=True, eq=False)
class DetectorModel:
    background_mean_image: np.ndarray | float = 0.0
    read_noise_sigma: float = 0.0
    shot_noise: bool = False
    counts_per_photon: float = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.background_mean_image) < 0):
            raise ValueError("background must be non-negative")
        if self.read_noise_sigma < 0:
            raise ValueError("read noise sigma must be non-negative")
        if self.counts_per_photon <= 0:
            raise ValueError("counts_per_photon must be positive")

    @property
    def noiseless(self) -> bool:
        return not self.shot_noise and self.read_noise_sigma == 0


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Physical and numerical parameters of one simulated experiment (SI units)."""

    optics: OpticalConstants = field(default_factory=OpticalConstants)
    cell: CellGeometry = field(default_factory=CellGeometry)
    diffusion_D: float = 146e-4
    zeta_sq: float = 8.0e7
    gamma_sp: float = 0.0
    t_write: float = 0.1e-6
    t_store: float = 0.0
    t_read: float = 2e-6
    retrieval_efficiency: float = 1.0
    read_leak: float = 0.0
    read_blur: float = 0.26e-3  # 1/e^2 angular radius of the read-beam spread
    grid: AngularGrid = field(default_factory=AngularGrid)
    detector: DetectorModel = field(default_factory=DetectorModel)
    n_modes: int = 55
    gain_schedule: str = "fresnel"
    w0: float | None = None  # fundamental 1/e^2 radius; None -> sqrt(k_s/L)/k_s
    seed: int = 0
    n_background: int = 100
    gas: str = ""
    config_hash: str = ""

    def __post_init__(self):
        for name in ("diffusion_D", "zeta_sq", "gamma_sp", "t_write", "t_store", "t_read", "read_blur"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("retrieval_efficiency", "read_leak"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.gain_schedule not in GAIN_SCHEDULES:
            raise ValueError(f"gain_schedule must be one of {GAIN_SCHEDULES}")
        if self.n_background < 0:
            raise ValueError("n_background must be >= 0")

    @property
    def fundamental_width(self) -> float:
        if self.w0 is not None:
            return self.w0
        return float(1.0 / np.sqrt(self.optics.k_s * self.cell.length_L))

    @property
    def fresnel(self) -> float:
        return fresnel_number(self.cell.write_waist_radius, self.optics, self.cell)

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def make_basis(cfg: ExperimentConfig) -> ModeBasis:
    return build_mode_basis(cfg.grid, cfg.fundamental_width, cfg.n_modes, fresnel=cfg.fresnel,
                            schedule=cfg.gain_schedule)


def occupation(kappa, t):
    """Amplified-vacuum mean occupation max(exp(kappa t) - 1, 0)."""
    return np.maximum(np.expm1(np.asarray(kappa, dtype=float) * t), 0.0)


def growth_rates(basis: ModeBasis, cfg: ExperimentConfig) -> np.ndarray:
    """kappa_m = zeta^2 g_m - D <|K_perp|^2>_m - gamma_sp for every mode."""
    k2 = mean_k2_all(basis, cfg.optics)
    return cfg.zeta_sq * basis.gain_weights - cfg.diffusion_D * k2 - cfg.gamma_sp


def mean_occupation(basis: ModeBasis, cfg: ExperimentConfig, m: int | None = None):
    """Mean thermal occupation after the write pulse, per mode or for mode `m`."""
    nbar = occupation(growth_rates(basis, cfg), cfg.t_write)
    return nbar if m is None else float(nbar[m])


@dataclass(frozen=True, eq=False)
class SpinWaveState:
    """Stored excitation on the angular grid, indexed by the Stokes angle theta (K_perp = k_s theta)."""

    amplitude: np.ndarray
    time: float = 0.0

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2))


@dataclass(frozen=True, eq=False)
class ShotResult:
    stokes_frame: np.ndarray
    anti_stokes_frame: np.ndarray | None
    spin_wave: SpinWaveState
    spin_wave_decayed: SpinWaveState | None
    mode_amplitudes: np.ndarray


def shot_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for (seed, stream, index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def draw_mode_amplitudes(nbar: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian amplitudes with <|c_m|^2> = nbar_m."""
    z = rng.standard_normal((2, nbar.size))
    return np.sqrt(nbar / 2) * (z[0] + 1j * z[1])


def sample_stokes_shot(basis: ModeBasis, cfg: ExperimentConfig, rng: np.random.Generator,
                       nbar: np.ndarray | None = None) -> ShotResult:
    if basis.grid != cfg.grid:
        raise ValueError("basis grid does not match the configuration grid")
    if nbar is None:
        nbar = mean_occupation(basis, cfg)
    c = draw_mode_amplitudes(nbar, rng)
    field_ = basis.synthesize(c)
    spin = SpinWaveState(np.conj(field_), time=0.0)
    return ShotResult(np.abs(field_) ** 2, None, spin, None, c)


def decay_factor(cfg: ExperimentConfig, t_store: float) -> np.ndarray:
    """Amplitude damping exp(-D (|K_perp|^2 + K_z^2) t / 2) on the grid.

    The amplitude is damped at half the rate so that the retrieved
    intensity decays as exp(-D K^2 t).
    """
    tx, ty = cfg.grid.mesh()
    k2 = cfg.optics.k_s**2 * (tx**2 + ty**2) + longitudinal_mismatch(cfg.optics) ** 2
    return np.exp(-0.5 * cfg.diffusion_D * k2 * t_store)


def decay_spin_wave(s: SpinWaveState, t_store: float, cfg: ExperimentConfig) -> SpinWaveState:
    if t_store < 0:
        raise ValueError("t_store must be non-negative")
    if t_store == 0:
        return s
    return SpinWaveState(s.amplitude * decay_factor(cfg, t_store), s.time + t_store)


def point_reflect(image: np.ndarray, center: tuple[float, float]) -> np.ndarray:
    """Mirror the last two axes through `center` (x, y); pixels without a partner become 0."""
    ny, nx = image.shape[-2:]
    cx, cy = center
    ix = np.rint(2 * cx - np.arange(nx)).astype(int)
    iy = np.rint(2 * cy - np.arange(ny)).astype(int)
    okx = (ix >= 0) & (ix < nx)
    oky = (iy >= 0) & (iy < ny)
    out = np.zeros_like(image)
    src = image[..., iy[oky], :][..., ix[okx]]
    out[..., np.flatnonzero(oky)[:, None], np.flatnonzero(okx)[None, :]] = src
    return out


def blur_sigma_px(cfg: ExperimentConfig) -> float:
    # 1/e^2 intensity radius w corresponds to a Gaussian sigma of w/2
    return cfg.read_blur / 2 / cfg.grid.pitch


def retrieve_anti_stokes(s: SpinWaveState, cfg: ExperimentConfig,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Ideal anti-Stokes intensity image (photons per pixel) for a stored spin wave.

    The anti-Stokes photon leaves opposite to its Stokes partner, so the
    stored pattern appears point-mirrored. The optional read-stage Stokes
    leak is seeded by the same spin wave and lands on the unmirrored side.
    The image is then blurred by the read-beam angular spread. `rng` is
    accepted for interface symmetry; the retrieval itself is deterministic.
    """
    eta = cfg.retrieval_efficiency
    stored = eta * np.abs(s.amplitude) ** 2
    img = point_reflect(stored, cfg.grid.center)
    if cfg.read_leak > 0:
        img = img + cfg.read_leak * stored
    sig = blur_sigma_px(cfg)
    if sig > 0:
        img = gaussian_filter(img, sig, mode="constant", axes=(-2, -1))
    return img


def render_detected_frame(ideal: np.ndarray, det: DetectorModel, rng: np.random.Generator) -> np.ndarray:
    """Counts = gain * (Poisson(ideal) or ideal) + background + N(0, read_noise)."""
    ideal = np.asarray(ideal, dtype=float)
    if np.any(ideal < 0):
        raise ValueError("ideal intensity must be non-negative")
    photons = rng.poisson(ideal).astype(float) if det.shot_noise else ideal
    counts = det.counts_per_photon * photons + det.background_mean_image
    if det.read_noise_sigma > 0:
        counts = counts + rng.normal(0.0, det.read_noise_sigma, size=ideal.shape)
    return np.broadcast_to(counts, ideal.shape).astype(float)


def simulate_shot(basis: ModeBasis, cfg: ExperimentConfig, index: int,
                  nbar: np.ndarray | None = None, damping: np.ndarray | None = None) -> ShotResult:
    """Full write/store/read cycle for shot `index`, including detector rendering."""
    rng = shot_rng(cfg.seed, STREAM_SHOTS, index)
    shot = sample_stokes_shot(basis, cfg, rng, nbar)
    decayed = decay_spin_wave(shot.spin_wave, cfg.t_store, cfg) if damping is None else \
        SpinWaveState(shot.spin_wave.amplitude * damping, cfg.t_store)
    anti = retrieve_anti_stokes(decayed, cfg)
    s_counts = render_detected_frame(shot.stokes_frame, cfg.detector, rng)
    a_counts = render_detected_frame(anti, cfg.detector, rng)
    return ShotResult(s_counts, a_counts, shot.spin_wave, decayed, shot.mode_amplitudes)


def _run_batch(basis, cfg, nbar, damping, start, stop, out_s, out_a):
    n = stop - start
    rngs = [shot_rng(cfg.seed, STREAM_SHOTS, i) for i in range(start, stop)]
    coeffs = np.stack([draw_mode_amplitudes(nbar, r) for r in rngs])
    fields = basis.synthesize(coeffs)
    stokes = np.abs(fields) ** 2
    spins = SpinWaveState(np.conj(fields) * damping, cfg.t_store)
    anti = retrieve_anti_stokes(spins, cfg)
    for j in range(n):
        out_s[start + j] = render_detected_frame(stokes[j], cfg.detector, rngs[j])
        out_a[start + j] = render_detected_frame(anti[j], cfg.detector, rngs[j])


def _stack(frames, cfg, label, region_center):
    return FrameStack(
        frames=frames,
        pitch=cfg.grid.pitch,
        center=cfg.grid.center,
        label=label,
        config_hash=cfg.config_hash,
        seed=cfg.seed,
        region_center=region_center,
    )


def run_sequence(cfg: ExperimentConfig, n_frames: int, threads: int = 1,
                 basis: ModeBasis | None = None,
                 max_bytes: int = DEFAULT_MAX_BYTES) -> tuple[FrameStack, FrameStack, FrameStack]:
    """Simulate `n_frames` write/store/read shots plus background-only frames.

    Output depends only on `cfg` (including its seed), never on `threads`.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    ny, nx = cfg.grid.shape
    need = (2 * n_frames + cfg.n_background) * nx * ny * 4
    if need > max_bytes:
        raise ResourceLimitError(
            f"{n_frames} frames of {nx}x{ny} need {need / 2**30:.2f} GiB (limit {max_bytes / 2**30:.2f} GiB)"
        )
    basis = make_basis(cfg) if basis is None else basis
    nbar = mean_occupation(basis, cfg)
    damping = decay_factor(cfg, cfg.t_store)
    out_s = np.empty((n_frames, ny, nx), dtype=np.float32)
    out_a = np.empty((n_frames, ny, nx), dtype=np.float32)
    bounds = [(a, min(a + BATCH, n_frames)) for a in range(0, n_frames, BATCH)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda b: _run_batch(basis, cfg, nbar, damping, *b, out_s, out_a), bounds))
    else:
        for b in bounds:
            _run_batch(basis, cfg, nbar, damping, *b, out_s, out_a)
    bg = np.empty((cfg.n_background, ny, nx), dtype=np.float32)
    zero = np.zeros((ny, nx))
    for i in range(cfg.n_background):
        bg[i] = render_detected_frame(zero, cfg.detector, shot_rng(cfg.seed, STREAM_BACKGROUND, i))
    log.debug("simulated %d shots, mean occupation total %.3g", n_frames, nbar.sum())
    tilt_mrad = cfg.cell.beam_tilt * 1e3
    return (
        _stack(out_s, cfg, "stokes", (0.0, 0.0)),
        _stack(out_a, cfg, "antistokes", (tilt_mrad, 0.0)),
        _stack(bg, cfg, "background", (0.0, 0.0)),
    )
