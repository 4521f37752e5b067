"""Least-squares fits: radial Gaussian, exponential decay/growth, quadratic rate law.

All nonlinear fits go through :func:`levenberg_marquardt`, a damped
Gauss-Newton loop with Marquardt diagonal scaling. Steps are accepted only
if they lower the residual sum of squares, so the objective is monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GTOL = 1e-10
STALL_GTOL = float(np.sqrt(np.finfo(float).eps))
MAX_ITER = 200


class RankDeficientError(ValueError):
    pass


@dataclass
class FitResult:
    params: dict[str, float]
    errors: dict[str, float]
    rss: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def sigma(self, name: str) -> float:
        return self.errors[name]


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0,
    data_norm: float,
    max_iter: int = MAX_ITER,
    gtol: float = GTOL,
):
    """Minimize ||residual(p)||^2.

    Convergence is declared when every component of J^T r, normalized by
    its Jacobian column norm and by `data_norm`, falls below `gtol`.
    Returns ``(p, r, J, converged, iterations)``.
    """
    p = np.array(p0, dtype=float)
    r = residual(p)
    rss = float(r @ r)
    lam = 1e-3
    data_norm = max(data_norm, np.finfo(float).tiny)
    converged = False
    it = 0
    J = jacobian(p)
    while True:
        if not np.all(np.isfinite(J)):
            break
        colnorm = np.linalg.norm(J, axis=0)
        g = J.T @ r
        scale = np.where(colnorm > 0, colnorm, 1.0) * data_norm
        if np.max(np.abs(g) / scale) <= gtol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        d = np.where(colnorm > 0, colnorm, 1.0)
        accepted = False
        while lam < 1e16:
            A = np.vstack([J, np.sqrt(lam) * np.diag(d)])
            b = np.concatenate([-r, np.zeros_like(p)])
            step = np.linalg.lstsq(A, b, rcond=None)[0]
            p_new = p + step
            r_new = residual(p_new)
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new < rss:
                p, r, rss = p_new, r_new, rss_new
                lam = max(lam / 10, 1e-15)
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent left at working precision: accept if the gradient is
            # already negligible on a sqrt(eps) scale
            converged = bool(np.max(np.abs(g) / scale) <= STALL_GTOL)
            break
        J = jacobian(p)
    return p, r, J, bool(converged), it


def _covariance(J: np.ndarray, rss: float, n: int, absolute: bool) -> np.ndarray:
    k = J.shape[1]
    cov = np.linalg.pinv(J.T @ J)
    if not absolute:
        dof = n - k
        cov = cov * (rss / dof if dof > 0 else np.inf)
    return cov


def _as_sigma(sigma, y):
    if sigma is None:
        return np.ones_like(y), False
    s = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(s <= 0):
        raise ValueError("sigma must be positive")
    return s, True


# ---------------------------------------------------------------------------
# radial Gaussian


def gaussian_radial_model(theta, A, w, offset):
    return A * np.exp(-2 * np.asarray(theta) ** 2 / w**2) + offset


def fit_gaussian_radial(profile, p0=None, sigma=None, absolute_sigma=False) -> FitResult:
    """Fit ``A exp(-2 theta^2 / w^2) + offset`` to a radial profile.

    `profile` is a :class:`~raman_speckle.analysis.RadialProfile` or a
    ``(theta, intensity)`` pair. `w` is the 1/e^2 intensity radius.
    """
    if hasattr(profile, "theta"):
        theta, y = np.asarray(profile.theta, float), np.asarray(profile.mean, float)
    else:
        theta, y = (np.asarray(a, float) for a in profile)
    if theta.size < 6:
        raise ValueError("need at least 6 radial bins")
    s, _ = _as_sigma(sigma, y)
    if p0 is None:
        offset0 = float(np.min(y))
        wts = np.clip(y - offset0, 0, None)
        A0 = float(y[np.argmin(np.abs(theta))] - offset0)
        if A0 <= 0:
            raise ValueError("profile has no peak above its offset")
        # 2D second moment: <theta^2> = w^2 / 2 for exp(-2 theta^2 / w^2)
        m2 = np.sum(wts * theta**3) / max(np.sum(wts * theta), np.finfo(float).tiny)
        p0 = (A0, float(np.sqrt(2 * m2)) if m2 > 0 else float(np.ptp(theta)) / 2, offset0)

    def res(p):
        return (gaussian_radial_model(theta, *p) - y) / s

    def jac(p):
        A, w, _ = p
        e = np.exp(-2 * theta**2 / w**2)
        return np.column_stack([e, A * e * 4 * theta**2 / w**3, np.ones_like(theta)]) / s[:, None]

    p, r, J, ok, it = levenberg_marquardt(res, jac, p0, float(np.linalg.norm(y / s)))
    rss = float(r @ r)
    cov = _covariance(J, rss, y.size, absolute_sigma and sigma is not None)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    p[1] = abs(p[1])
    names = ("A", "w", "offset")
    return FitResult(dict(zip(names, map(float, p))), dict(zip(names, map(float, err))), rss, ok, it, cov)


# ---------------------------------------------------------------------------
# 2D circular Gaussian (correlation / autocorrelation peaks)


def fit_gaussian_2d(x, y, z, p0, sigma=None) -> FitResult:
    """Fit ``A exp(-2 ((x-x0)^2 + (y-y0)^2) / w^2) + offset`` to scattered samples."""
    x, y, z = (np.asarray(a, float).ravel() for a in (x, y, z))
    s, _ = _as_sigma(sigma, z)

    def model(p):
        A, x0, y0, w, c = p
        return A * np.exp(-2 * ((x - x0) ** 2 + (y - y0) ** 2) / w**2) + c

    def res(p):
        return (model(p) - z) / s

    def jac(p):
        A, x0, y0, w, _ = p
        r2 = (x - x0) ** 2 + (y - y0) ** 2
        e = np.exp(-2 * r2 / w**2)
        return np.column_stack([
            e,
            A * e * 4 * (x - x0) / w**2,
            A * e * 4 * (y - y0) / w**2,
            A * e * 4 * r2 / w**3,
            np.ones_like(x),
        ]) / s[:, None]

    p, r, J, ok, it = levenberg_marquardt(res, jac, p0, float(np.linalg.norm(z / s)))
    rss = float(r @ r)
    cov = _covariance(J, rss, z.size, False)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    p[3] = abs(p[3])
    names = ("A", "x0", "y0", "w", "offset")
    return FitResult(dict(zip(names, map(float, p))), dict(zip(names, map(float, err))), rss, ok, it, cov)


# ---------------------------------------------------------------------------
# exponentials


def exponential_model(t, A, rate, offset, sign="decay"):
    s = -1.0 if sign == "decay" else 1.0
    return A * np.exp(s * rate * np.asarray(t)) + offset


MAX_RATE_SPAN = 60.0


def _exp_initial(t, y, sgn, n_grid=241):
    """Start values by variable projection.

    For a fixed rate the model is linear in (A, offset), so scan the rate on
    a log grid, solve the 2x2 least-squares problem at each point and keep
    the best. Robust to data spanning many decades.
    """
    span_t = max(np.ptp(t), np.finfo(float).tiny)
    t_ref = t.max() if sgn > 0 else t.min()  # keeps the basis in [0, 1]
    best = None
    for rt in np.logspace(-3, np.log10(MAX_RATE_SPAN), n_grid):
        rate = rt / span_t
        e = np.exp(sgn * rate * (t - t_ref))
        X = np.column_stack([e, np.ones_like(t)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        rss = float(np.sum((X @ coef - y) ** 2))
        if best is None or rss < best[0]:
            best = (rss, rate, coef)
    _, rate, (a, c) = best
    return float(a * np.exp(-sgn * rate * t_ref)), float(rate), float(c)


def fit_exponential(t, y, sign: str = "decay", p0=None, sigma=None, absolute_sigma=False) -> FitResult:
    """Fit ``A exp(-rate t) + offset`` (decay) or ``A exp(rate t) + offset`` (growth).

    The rate is fitted as exp(u) so it stays positive. Flat data cannot
    determine a rate and comes back with ``converged=False``.
    """
    if sign not in ("decay", "growth"):
        raise ValueError("sign must be 'decay' or 'growth'")
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.size < 4 or t.size != y.size:
        raise ValueError("need at least 4 (t, y) points of equal length")
    names = ("A", "rate", "offset")
    if np.ptp(y) == 0:
        return FitResult(dict(A=0.0, rate=float("nan"), offset=float(y[0])),
                         dict.fromkeys(names, float("inf")), 0.0, False, 0)
    sgn = -1.0 if sign == "decay" else 1.0
    s, _ = _as_sigma(sigma, y)
    scanned = p0 is None
    if p0 is None:
        p0 = _exp_initial(t, y, sgn)
    A0, rate0, c0 = p0
    # amplitude is referred to t_ref internally; A and rate decorrelate
    t_ref = t.max() if sgn > 0 else t.min()
    tr = t - t_ref
    q0 = np.array([A0 * np.exp(sgn * rate0 * t_ref), np.log(rate0), c0])

    def res(q):
        B, u, c = q
        return (B * np.exp(sgn * np.exp(u) * tr) + c - y) / s

    def jac(q):
        B, u, _ = q
        rate = np.exp(u)
        e = np.exp(sgn * rate * tr)
        return np.column_stack([e, B * e * sgn * rate * tr, np.ones_like(t)]) / s[:, None]

    span_t = np.ptp(t)

    def run(q_start):
        with np.errstate(over="ignore", invalid="ignore"):
            q, r, J, ok, it = levenberg_marquardt(res, jac, q_start, float(np.linalg.norm(y / s)))
        # a rate this fast is carried by one sample: stationary but meaningless
        ok = ok and np.exp(q[1]) * span_t <= MAX_RATE_SPAN
        return q, r, J, ok, it

    q, r, J, ok, it = run(q0)
    if not ok and not scanned:
        # a poor caller guess can slide into the rate -> infinity plateau
        A1, rate1, c1 = _exp_initial(t, y, sgn)
        alt = run(np.array([A1 * np.exp(sgn * rate1 * t_ref), np.log(rate1), c1]))
        if alt[3] or float(alt[1] @ alt[1]) < float(r @ r):
            q, r, J, ok, it = alt[0], alt[1], alt[2], alt[3], it + alt[4]
    rss = float(r @ r)
    with np.errstate(over="ignore", invalid="ignore"):
        cov_q = _covariance(J, rss, y.size, absolute_sigma and sigma is not None)
    rate = float(np.exp(q[1]))
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.exp(-sgn * rate * t_ref)
        A = q[0] * f
        # delta method: (B, u, c) -> (B f, exp(u), c)
        G = np.array([[f, -q[0] * f * sgn * t_ref * rate, 0.0], [0.0, rate, 0.0], [0.0, 0.0, 1.0]])
        cov = G @ cov_q @ G.T
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    if not np.all(np.isfinite(err)) or not np.isfinite(A):
        ok = False
    params = dict(A=float(A), rate=rate, offset=float(q[2]))
    return FitResult(params, dict(zip(names, map(float, err))), rss, ok, it, cov)


# ---------------------------------------------------------------------------
# quadratic rate law


def fit_rate_vs_angle(theta, gamma, weights=None, k_s: float | None = None) -> FitResult:
    """Weighted linear least squares of ``gamma = D k_s^2 theta^2 + const``.

    `theta` in rad, `gamma` in 1/s, `weights` typically 1/sigma^2. D is
    returned in cm^2/s under ``"D_cm2_s"``; `const` in 1/s.
    """
    from .geometry import OpticalConstants

    if k_s is None:
        k_s = OpticalConstants().k_s
    theta = np.asarray(theta, float)
    gamma = np.asarray(gamma, float)
    if np.unique(np.abs(theta)).size < 3:
        raise RankDeficientError("need at least 3 distinct angles")
    w = np.ones_like(gamma) if weights is None else np.asarray(weights, float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    X = np.column_stack([k_s**2 * theta**2, np.ones_like(theta)])
    sw = np.sqrt(w)
    Xw, yw = X * sw[:, None], gamma * sw
    if np.linalg.matrix_rank(Xw) < 2:
        raise RankDeficientError("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    r = yw - Xw @ beta
    rss = float(r @ r)
    dof = theta.size - 2
    cov = np.linalg.inv(Xw.T @ Xw) * (rss / dof if dof > 0 else np.inf)
    err = np.sqrt(np.diag(cov))
    return FitResult(
        dict(D_cm2_s=float(beta[0] * 1e4), D=float(beta[0]), const=float(beta[1])),
        dict(D_cm2_s=float(err[0] * 1e4), D=float(err[0]), const=float(err[1])),
        rss, True, 1, cov,
    )
