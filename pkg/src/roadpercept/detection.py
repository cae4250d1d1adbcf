"""Detector-head numerical kernels.

Standalone ground-truth heatmap synthesis, the four training losses, yaw
encoding, and center-peak decoding.  Everything here operates on plain numpy
rasters; no learned network is involved.

Raster conventions: single-channel maps are (H, W); multi-channel maps are
(H, W, C).  Loss reductions are means over all H*W pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class GtObject:
    """Ground-truth object for heatmap synthesis."""

    bottom_center: tuple[float, float]  # (u, v) pixels
    diag_px: float  # bounding-box diagonal, pixels
    size: tuple  # (w, l) or (w, l, h) meters, or pixel sizes in 2D mode
    yaw: float
    class_id: int

    def __post_init__(self):
        if self.diag_px <= 0.0:
            raise ValueError("diag_px must be positive")
        if any(s <= 0.0 for s in self.size):
            raise ValueError("size components must be positive")

    @property
    def sigma(self) -> float:
        return 0.5 * math.sqrt(self.diag_px)


@dataclass(frozen=True)
class LossWeights:
    """Balancing weights for the multi-task loss."""

    beta1: float = 0.01  # size
    beta2: float = 0.01  # pose
    beta3: float = 0.01  # type
    topk_frac: float = 0.01

    def __post_init__(self):
        if min(self.beta1, self.beta2, self.beta3) < 0.0:
            raise ValueError("loss weights must be >= 0")
        if not (0.0 < self.topk_frac <= 1.0):
            raise ValueError("topk_frac must be in (0, 1]")


def gt_center_heatmap(objects, shape: tuple[int, int]) -> np.ndarray:
    """Sum of per-object Gaussians exp(-d^2 / sigma^2), clamped to [0, 1].

    sigma = 0.5 * sqrt(diag_px).  Each object contributes 1 at its bottom
    center; overlapping objects sum before the clamp.
    """
    h, w = shape
    if h <= 0 or w <= 0:
        raise ValueError("shape must be positive")
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    out = np.zeros((h, w))
    for obj in objects:
        cu, cv = obj.bottom_center
        d2 = (uu - cu) ** 2 + (vv - cv) ** 2
        out += np.exp(-d2 / obj.sigma**2)
    return np.clip(out, 0.0, 1.0)


def center_loss(pred: np.ndarray, gt: np.ndarray, topk_frac: float = 0.01) -> float:
    """Mean squared error over the top fraction of highest-error pixels."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if not (0.0 < topk_frac <= 1.0):
        raise ValueError("topk_frac must be in (0, 1]")
    err = ((pred - gt) ** 2).reshape(-1)
    k = math.ceil(topk_frac * err.size)
    if k >= err.size:
        return float(err.mean())
    top = np.partition(err, err.size - k)[err.size - k :]
    return float(top.mean())


def size_pose_loss(pred_size, pred_pose, gt_size, gt_pose, weight) -> tuple[float, float]:
    """Weighted regression losses for the size and pose heads.

    Size uses log normalization: mean over pixels of
    weight * ||log(pred) - log(gt)||^2.  Pose channels are (sin, cos) and are
    compared directly.  ``weight`` is the ground-truth center heatmap.
    """
    pred_size = np.asarray(pred_size, dtype=float)
    pred_pose = np.asarray(pred_pose, dtype=float)
    gt_size = np.asarray(gt_size, dtype=float)
    gt_pose = np.asarray(gt_pose, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if pred_size.shape != gt_size.shape or pred_pose.shape != gt_pose.shape:
        raise ValueError("prediction/ground-truth shape mismatch")
    if pred_size.shape[:2] != weight.shape or pred_pose.shape[:2] != weight.shape:
        raise ValueError("weight shape mismatch")
    active = weight > 0.0
    if np.any(active & np.any(pred_size <= 0.0, axis=-1)):
        raise ValueError("non-positive size prediction at a weighted pixel")
    n = weight.size
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.where(
            active[..., None], np.log(np.maximum(pred_size, _LOG_CLAMP)) - np.log(gt_size), 0.0
        )
    size_sq = (diff**2).sum(axis=-1)
    pose_sq = ((pred_pose - gt_pose) ** 2).sum(axis=-1)
    return (
        float((weight * size_sq).sum() / n),
        float((weight * pose_sq).sum() / n),
    )


def type_loss(pred_type: np.ndarray, gt_onehot: np.ndarray, weight: np.ndarray) -> float:
    """Weighted cross entropy over per-pixel class distributions.

    ``pred_type`` must be softmax-normalized per pixel (checked where the
    weight is positive); log probabilities are clamped at 1e-12.
    """
    pred_type = np.asarray(pred_type, dtype=float)
    gt_onehot = np.asarray(gt_onehot, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if pred_type.shape != gt_onehot.shape or pred_type.shape[:2] != weight.shape:
        raise ValueError("shape mismatch")
    active = weight > 0.0
    sums = pred_type.sum(axis=-1)
    if np.any(active & (np.abs(sums - 1.0) > 1e-6)):
        raise ValueError("pred_type is not softmax-normalized at a weighted pixel")
    ce = -(gt_onehot * np.log(np.maximum(pred_type, _LOG_CLAMP))).sum(axis=-1)
    return float((weight * ce).sum() / weight.size)


def total_loss(center, size, pose, vtype, weights: LossWeights = LossWeights()) -> float:
    """center + beta1*size + beta2*pose + beta3*type."""
    return float(center + weights.beta1 * size + weights.beta2 * pose + weights.beta3 * vtype)


def decode_peaks(
    center: np.ndarray, threshold: float = 0.3, min_separation_px: int = 3
) -> list[tuple[tuple[float, float], float]]:
    """Extract local maxima of the center heatmap with sub-pixel refinement.

    A peak is a pixel strictly greater than every other pixel of its
    (2*min_separation+1)^2 neighborhood with value >= threshold.  Sub-pixel
    offsets come from a per-axis quadratic fit over the 3x3 neighborhood.
    Returns ((u, v), score) tuples in descending score order.
    """
    center = np.asarray(center, dtype=float)
    size = 2 * min_separation_px + 1
    footprint = np.ones((size, size), dtype=bool)
    footprint[min_separation_px, min_separation_px] = False
    neighbor_max = maximum_filter(center, footprint=footprint, mode="constant", cval=-np.inf)
    mask = (center > neighbor_max) & (center >= threshold)
    peaks = []
    h, w = center.shape
    for v, u in zip(*np.nonzero(mask)):
        du = dv = 0.0
        if 1 <= u <= w - 2:
            du = _parabolic_offset(center[v, u - 1], center[v, u], center[v, u + 1])
        if 1 <= v <= h - 2:
            dv = _parabolic_offset(center[v - 1, u], center[v, u], center[v + 1, u])
        peaks.append(((float(u + du), float(v + dv)), float(center[v, u])))
    peaks.sort(key=lambda p: (-p[1], p[0][1], p[0][0]))
    return peaks


def _parabolic_offset(f_prev: float, f0: float, f_next: float) -> float:
    denom = f_prev - 2.0 * f0 + f_next
    if denom >= -1e-12:  # not a curved-down maximum
        return 0.0
    return float(np.clip(0.5 * (f_prev - f_next) / denom, -0.5, 0.5))


def encode_yaw(yaw: float) -> tuple[float, float]:
    """Heading angle -> (sin, cos) pair, each in [-1, 1]."""
    return math.sin(yaw), math.cos(yaw)


def decode_yaw(a: float, b: float) -> float:
    """(sin-like, cos-like) pair -> heading angle; scale invariant."""
    if a * a + b * b <= 1e-6:
        raise ValueError("near-zero vector cannot be decoded to an angle")
    n = math.hypot(a, b)
    return math.atan2(a / n, b / n)
