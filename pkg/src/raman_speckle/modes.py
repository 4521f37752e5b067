"""Laguerre-Gaussian-like far-field mode basis on the detector angular grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .geometry import OpticalConstants

# fraction of an analytic mode's energy allowed to fall outside the grid
MAX_TRUNCATED_ENERGY = 1e-2


class ModeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AngularGrid:
    """Square-pixel angular grid; `center` is the (x, y) pixel position of the beam axis.

    The default center is the geometric middle of the array, so every
    pixel has a point-mirror partner.
    """

    n_x: int = 128
    n_y: int = 128
    pitch: float = 76e-6
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.n_x < 16 or self.n_y < 16:
            raise ModeConfigError("grid must be at least 16 x 16 pixels")
        if self.pitch <= 0:
            raise ModeConfigError("pitch must be positive")
        if self.center is None:
            object.__setattr__(self, "center", ((self.n_x - 1) / 2, (self.n_y - 1) / 2))
        cx, cy = self.center
        if not (0 <= cx <= self.n_x - 1 and 0 <= cy <= self.n_y - 1):
            raise ModeConfigError(f"center {self.center} outside grid")
        object.__setattr__(self, "center", (float(cx), float(cy)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        cx, cy = self.center
        return (np.arange(self.n_x) - cx) * self.pitch, (np.arange(self.n_y) - cy) * self.pitch

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        tx, ty = self.axes()
        return np.meshgrid(tx, ty, indexing="xy")

    def pixel_of(self, theta_x: float, theta_y: float) -> tuple[int, int]:
        """Nearest (ix, iy) pixel for an angle; raises if outside the grid."""
        cx, cy = self.center
        ix = int(np.rint(cx + theta_x / self.pitch))
        iy = int(np.rint(cy + theta_y / self.pitch))
        if not (0 <= ix < self.n_x and 0 <= iy < self.n_y):
            raise ValueError(f"direction ({theta_x}, {theta_y}) rad is outside the grid")
        return ix, iy

    def angle_of(self, ix: float, iy: float) -> tuple[float, float]:
        cx, cy = self.center
        return (ix - cx) * self.pitch, (iy - cy) * self.pitch


def mode_indices(n_modes: int) -> list[tuple[int, int]]:
    """First `n_modes` (p, l) pairs ordered by q = 2p + |l|, then |l|, then +l before -l."""
    out: list[tuple[int, int]] = []
    q = 0
    while len(out) < n_modes:
        for absl in range(q % 2, q + 1, 2):
            p = (q - absl) // 2
            out.append((p, absl))
            if absl:
                out.append((p, -absl))
        q += 1
    return out[:n_modes]


def lg_profile(theta_x, theta_y, p: int, l: int, w0: float) -> np.ndarray:
    """Analytic LG_pl amplitude, unit L2 norm over the continuous plane."""
    r2 = (theta_x**2 + theta_y**2) / w0**2
    phi = np.arctan2(theta_y, theta_x)
    lognorm = 0.5 * (np.log(2.0 / np.pi) + gammaln(p + 1) - gammaln(p + abs(l) + 1)) - np.log(w0)
    radial = (2 * r2) ** (abs(l) / 2) * eval_genlaguerre(p, abs(l), 2 * r2) * np.exp(-r2)
    return np.exp(lognorm) * radial * np.exp(1j * l * phi)


GAIN_SCHEDULES = ("fresnel", "flat")


def gain_schedule(q, fresnel: float, kind: str = "fresnel"):
    """Phenomenological Raman gain weight per mode order.

    ``"fresnel"``: g = F / (F + q). ``"flat"``: g = 1, every mode sees the
    full gain and differs only by its diffusion loss.
    """
    q = np.asarray(q, dtype=float)
    if kind == "fresnel":
        return fresnel / (fresnel + q)
    if kind == "flat":
        return np.ones_like(q)
    raise ModeConfigError(f"unknown gain schedule {kind!r}; expected one of {GAIN_SCHEDULES}")


@dataclass(frozen=True, eq=False)
class ModeBasis:
    grid: AngularGrid
    w0: float
    indices: tuple[tuple[int, int], ...]
    modes: np.ndarray = field(repr=False)  # (n_modes, n_y, n_x) complex, unit norm on the grid
    gain_weights: np.ndarray = field(repr=False)
    fresnel: float = 15.0

    @property
    def n_modes(self) -> int:
        return len(self.indices)

    @property
    def orders(self) -> np.ndarray:
        return np.array([2 * p + abs(l) for p, l in self.indices])

    def gram(self) -> np.ndarray:
        flat = self.modes.reshape(self.n_modes, -1)
        return flat.conj() @ flat.T

    def synthesize(self, coeffs) -> np.ndarray:
        """Field sum_m c_m u_m for coefficients of shape (..., n_modes)."""
        coeffs = np.asarray(coeffs)
        flat = coeffs @ self.modes.reshape(self.n_modes, -1)
        return flat.reshape(coeffs.shape[:-1] + self.grid.shape)

    def project(self, field_) -> np.ndarray:
        flat = np.asarray(field_).reshape(field_.shape[:-2] + (-1,))
        return flat @ self.modes.reshape(self.n_modes, -1).conj().T


def build_mode_basis(
    grid: AngularGrid, w0: float, n_modes: int, fresnel: float = 15.0, schedule: str = "fresnel"
) -> ModeBasis:
    """Sample the first `n_modes` LG profiles on `grid` and orthonormalize them.

    Sampled profiles are Gram-Schmidt orthonormalized in mode order, which
    leaves the fundamental untouched (only renormalized) and removes the
    small overlaps caused by pixelation and the finite grid.
    """
    if n_modes < 1:
        raise ModeConfigError("n_modes must be >= 1")
    if w0 < 2 * grid.pitch:
        raise ModeConfigError(f"w0={w0:g} rad not resolvable with pitch {grid.pitch:g} rad")
    if fresnel <= 0:
        raise ModeConfigError("Fresnel number must be positive")
    if schedule not in GAIN_SCHEDULES:
        raise ModeConfigError(f"unknown gain schedule {schedule!r}; expected one of {GAIN_SCHEDULES}")
    idx = mode_indices(n_modes)
    tx, ty = grid.mesh()
    raw = np.empty((n_modes,) + grid.shape, dtype=complex)
    dA = grid.pitch**2
    for m, (p, l) in enumerate(idx):
        u = lg_profile(tx, ty, p, l, w0)
        captured = float(np.sum(np.abs(u) ** 2) * dA)
        if 1.0 - captured > MAX_TRUNCATED_ENERGY:
            raise ModeConfigError(
                f"mode (p={p}, l={l}) loses {1 - captured:.2%} of its energy outside the "
                f"{grid.n_x}x{grid.n_y} grid; reduce n_modes or w0, or enlarge the grid"
            )
        raw[m] = u
    flat = raw.reshape(n_modes, -1).T
    q_mat, r_mat = np.linalg.qr(flat)
    phases = np.diag(r_mat) / np.abs(np.diag(r_mat))
    ortho = (q_mat * phases).T.reshape(raw.shape)
    g = gain_schedule([2 * p + abs(l) for p, l in idx], fresnel, schedule)
    ortho.setflags(write=False)
    g.setflags(write=False)
    return ModeBasis(grid=grid, w0=w0, indices=tuple(idx), modes=ortho, gain_weights=g, fresnel=fresnel)


@dataclass(frozen=True)
class KSpectrum:
    k_bins: np.ndarray  # bin centers of |K_perp|, rad/m
    weights: np.ndarray  # sums to 1
    mean_k2: float  # exact pixel-level second moment, (rad/m)^2


def mode_K_spectrum(basis: ModeBasis, m: int, oc: OpticalConstants) -> KSpectrum:
    """Distribution of |K_perp| = k_s |theta| carried by mode `m`."""
    if not 0 <= m < basis.n_modes:
        raise IndexError(f"mode index {m} out of range [0, {basis.n_modes})")
    tx, ty = basis.grid.mesh()
    k = oc.k_s * np.hypot(tx, ty)
    prob = np.abs(basis.modes[m]) ** 2
    prob = prob / prob.sum()
    dk = oc.k_s * basis.grid.pitch
    nb = int(np.ceil(k.max() / dk)) + 1
    hist = np.bincount(np.rint(k / dk).astype(int).ravel(), weights=prob.ravel(), minlength=nb)
    return KSpectrum(np.arange(hist.size) * dk, hist, float(np.sum(prob * k**2)))


def mean_k2_all(basis: ModeBasis, oc: OpticalConstants) -> np.ndarray:
    tx, ty = basis.grid.mesh()
    k2 = oc.k_s**2 * (tx**2 + ty**2)
    prob = np.abs(basis.modes) ** 2
    return np.einsum("myx,yx->m", prob, k2) / prob.sum(axis=(1, 2))
