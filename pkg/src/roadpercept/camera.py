"""Pinhole and radially symmetric fisheye lens models.

The fisheye projection relates the incidence angle theta of a ray to the
normalized image radius through an odd polynomial

    r(theta) = k1*theta + k2*theta**3 + k3*theta**5

which must be strictly increasing on [0, theta_max].  A pinhole camera is the
same interface with the radial model disabled (``model=None``), in which case
unprojection is the plain linear (u - cx) / fx, (v - cy) / fy.

All types are immutable and all functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CameraDomainError, ConvergenceError

_MAX_ITERS = 100


@dataclass(frozen=True)
class Intrinsics:
    """Focal lengths and principal point in pixels (zero skew)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")
        if not all(math.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy)):
            raise ValueError("intrinsics must be finite")

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RadialModel:
    """Odd-polynomial radial lens model, valid for theta in [0, theta_max]."""

    k1: float
    k2: float = 0.0
    k3: float = 0.0
    theta_max: float = 1.65

    def __post_init__(self):
        if not (self.k1 > 0.0):
            raise ValueError("k1 must be positive")
        if not (self.theta_max > 0.0):
            raise ValueError("theta_max must be positive")
        # Strict monotonicity of r(theta), checked on a 1e-3-spaced grid.
        grid = np.arange(0.0, self.theta_max + 1e-3, 1e-3)
        slope = self.k1 + 3.0 * self.k2 * grid**2 + 5.0 * self.k3 * grid**4
        if np.any(slope <= 0.0):
            raise ValueError("r(theta) must be strictly increasing on [0, theta_max]")

    @property
    def r_max(self) -> float:
        return _poly(self.k1, self.k2, self.k3, self.theta_max)


def _poly(k1, k2, k3, theta):
    t2 = theta * theta
    return theta * (k1 + t2 * (k2 + t2 * k3))


def _poly_deriv(k1, k2, k3, theta):
    t2 = theta * theta
    return k1 + t2 * (3.0 * k2 + 5.0 * t2 * k3)


def radial_forward(model: RadialModel, theta: float) -> float:
    """Evaluate r(theta).  Raises CameraDomainError outside [0, theta_max]."""
    if not (-1e-12 <= theta <= model.theta_max + 1e-12):
        raise CameraDomainError(
            f"theta={theta} outside [0, {model.theta_max}]"
        )
    return _poly(model.k1, model.k2, model.k3, theta)


def _inverse_poly(k1, k2, k3, theta_max, r, tol_scale=1e-12):
    """Invert r(theta) by Newton from theta0 = r/k1, bisection fallback."""
    tol = tol_scale * max(1.0, r)
    theta = min(max(r / k1, 0.0), theta_max)
    for _ in range(_MAX_ITERS):
        f = _poly(k1, k2, k3, theta) - r
        if abs(f) <= tol:
            return theta
        d = _poly_deriv(k1, k2, k3, theta)
        if d <= 0.0:
            break
        theta = min(max(theta - f / d, 0.0), theta_max)
    lo, hi = 0.0, theta_max
    for _ in range(_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        f = _poly(k1, k2, k3, mid) - r
        if abs(f) <= tol:
            return mid
        if f < 0.0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(f"radial inversion did not converge for r={r}")


def radial_inverse(model: RadialModel, r: float) -> float:
    """Solve r(theta) = r for theta.  Residual tolerance 1e-12 * max(1, r)."""
    if not (-1e-12 <= r <= model.r_max * (1.0 + 1e-12) + 1e-12):
        raise CameraDomainError(f"r={r} outside [0, {model.r_max}]")
    if r <= 0.0:
        return 0.0
    return _inverse_poly(model.k1, model.k2, model.k3, model.theta_max, min(r, model.r_max))


def radial_inverse_array(model: RadialModel, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inversion.

    Returns (theta, valid); out-of-domain entries get theta=nan, valid=False.
    """
    r = np.asarray(r, dtype=float)
    valid = (r >= -1e-12) & (r <= model.r_max * (1.0 + 1e-12))
    rc = np.clip(np.where(valid, r, 0.0), 0.0, model.r_max)
    k1, k2, k3 = model.k1, model.k2, model.k3
    theta = np.clip(rc / k1, 0.0, model.theta_max)
    tol = 1e-12 * np.maximum(1.0, rc)
    for _ in range(_MAX_ITERS):
        f = _poly(k1, k2, k3, theta) - rc
        if np.all(np.abs(f) <= tol):
            break
        d = _poly_deriv(k1, k2, k3, theta)
        theta = np.clip(theta - f / d, 0.0, model.theta_max)
    # Rare non-converged entries fall back to scalar bisection.
    bad = np.abs(_poly(k1, k2, k3, theta) - rc) > tol
    if np.any(bad):
        flat = theta.reshape(-1)
        rflat = rc.reshape(-1)
        for i in np.flatnonzero(bad.reshape(-1)):
            flat[i] = _inverse_poly(k1, k2, k3, model.theta_max, rflat[i])
    theta = np.where(valid, theta, np.nan)
    return theta, valid


def pixel_from_undistorted(
    x: float, y: float, K: Intrinsics, model: RadialModel | None = None
) -> tuple[float, float]:
    """Project a normalized image-plane point to pixels.

    For fisheye models: theta = atan(rho), pixel = K * (r(theta)/rho) * (x, y).
    The optical axis maps to the principal point.
    """
    if model is None:
        return K.fx * x + K.cx, K.fy * y + K.cy
    rho = math.hypot(x, y)
    if rho == 0.0:
        return K.cx, K.cy
    theta = math.atan(rho)
    scale = radial_forward(model, theta) / rho
    return K.fx * x * scale + K.cx, K.fy * y * scale + K.cy


def undistorted_from_pixel(
    u: float, v: float, K: Intrinsics, model: RadialModel | None = None
) -> tuple[float, float]:
    """Inverse of :func:`pixel_from_undistorted` via radial inversion."""
    mx = (u - K.cx) / K.fx
    my = (v - K.cy) / K.fy
    if model is None:
        return mx, my
    rd = math.hypot(mx, my)
    if rd == 0.0:
        return 0.0, 0.0
    theta = radial_inverse(model, rd)
    scale = math.tan(theta) / rd
    return mx * scale, my * scale


def undistorted_from_pixel_array(
    uv: np.ndarray, K: Intrinsics, model: RadialModel | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized unprojection of an (N, 2) pixel array.

    Returns (xy, valid); rows outside the radial domain get nan, valid=False.
    """
    uv = np.asarray(uv, dtype=float)
    m = np.empty_like(uv)
    m[:, 0] = (uv[:, 0] - K.cx) / K.fx
    m[:, 1] = (uv[:, 1] - K.cy) / K.fy
    if model is None:
        return m, np.ones(len(uv), dtype=bool)
    rd = np.hypot(m[:, 0], m[:, 1])
    theta, valid = radial_inverse_array(model, rd)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rd > 0.0, np.tan(theta) / np.where(rd > 0.0, rd, 1.0), 1.0)
    out = m * scale[:, None]
    out[~valid] = np.nan
    out[(rd == 0.0) & valid] = 0.0
    return out, valid
