"""Evaluation suite: VOC07 AP, trajectory projection error, fusion comparison,
and track-identity consistency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError


@dataclass(frozen=True)
class RoiSpec:
    """A camera's trusted zone: circular (fisheye) or ranged field of view."""

    kind: str = "circular"  # "circular" | "fov"
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 25.0
    max_range: float = 200.0
    fov_direction: float = 0.0  # radians, fov kind only
    fov_half_angle: float = math.pi / 4.0

    def __post_init__(self):
        if self.kind not in ("circular", "fov"):
            raise ValueError(f"unknown ROI kind {self.kind!r}")
        if self.radius <= 0.0 or self.max_range <= 0.0:
            raise ValueError("radius / max_range must be positive")

    def contains(self, x: float, y: float) -> bool:
        dx, dy = x - self.center[0], y - self.center[1]
        d = math.hypot(dx, dy)
        if self.kind == "circular":
            return d <= self.radius
        if d > self.max_range:
            return False
        ang = abs(_wrap_angle(math.atan2(dy, dx) - self.fov_direction))
        return ang <= self.fov_half_angle


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


# ---------------------------------------------------------------------------
# Detection AP


def box_iou(a, b) -> float:
    """IoU of two axis-aligned boxes (x1, y1, x2, y2)."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0.0 else 0.0


def voc07_ap(detections, ground_truths, iou_threshold: float = 0.5) -> float:
    """11-point interpolated average precision at the given IoU threshold.

    ``detections``: iterable of (frame_id, box, score); ``ground_truths``:
    iterable of (frame_id, box).  Detections are ranked by score (stable on
    ties) and matched greedily; each ground truth matches at most once.
    """
    gts_by_frame = {}
    for frame_id, box in ground_truths:
        gts_by_frame.setdefault(frame_id, []).append([box, False])
    n_gt = sum(len(v) for v in gts_by_frame.values())
    order = sorted(
        range(len(detections)), key=lambda i: (-detections[i][2], i)
    )
    tp = np.zeros(len(order))
    fp = np.zeros(len(order))
    for rank, i in enumerate(order):
        frame_id, box, _ = detections[i]
        best_iou, best = 0.0, None
        for entry in gts_by_frame.get(frame_id, []):
            iou = box_iou(box, entry[0])
            if iou > best_iou:
                best_iou, best = iou, entry
        if best is not None and best_iou >= iou_threshold and not best[1]:
            best[1] = True
            tp[rank] = 1.0
        else:
            fp[rank] = 1.0
    if n_gt == 0:
        return 0.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        mask = recall >= r - 1e-12
        ap += float(precision[mask].max()) if np.any(mask) else 0.0
    return ap / 11.0


# ---------------------------------------------------------------------------
# Trajectory error


def _point_segment_projection(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    proj = a + t * ab
    return proj, float(np.hypot(*(p - proj)))


@dataclass
class TrajectoryErrorStats:
    in_roi_mean: float
    in_roi_std: float
    out_roi_mean: float
    out_roi_std: float
    n_in: int
    n_out: int
    errors: np.ndarray = field(default=None, repr=False)


def trajectory_error(points, polyline, roi: RoiSpec | None = None) -> TrajectoryErrorStats:
    """Orthogonal projection distance of each point to the polyline.

    Each point's nearest on-polyline projection is its ground-truth
    association; that projection point decides the in/out-ROI split.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    polyline = np.asarray(polyline, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        raise ValueError("no points to evaluate")
    if len(polyline) < 2:
        raise ValueError("polyline needs at least 2 vertices")
    a = polyline[:-1]
    ab = polyline[1:] - a
    denom = np.maximum((ab**2).sum(axis=1), 1e-300)
    errors = np.empty(len(points))
    inside = np.empty(len(points), dtype=bool)
    # Chunked all-pairs point-to-segment projection.
    chunk = max(1, int(2_000_000 / max(len(a), 1)))
    for lo in range(0, len(points), chunk):
        p = points[lo : lo + chunk]
        t = ((p[:, None, :] - a) * ab).sum(axis=2) / denom  # (n, m)
        np.clip(t, 0.0, 1.0, out=t)
        proj = a + t[:, :, None] * ab  # (n, m, 2)
        d = np.linalg.norm(p[:, None, :] - proj, axis=2)
        best = np.argmin(d, axis=1)
        idx = np.arange(len(p))
        errors[lo : lo + chunk] = d[idx, best]
        best_proj = proj[idx, best]
        if roi is None:
            inside[lo : lo + chunk] = True
        else:
            inside[lo : lo + chunk] = [roi.contains(*q) for q in best_proj]

    def _stats(mask):
        sel = errors[mask]
        if sel.size == 0:
            return float("nan"), float("nan")
        return float(sel.mean()), float(sel.std())

    im, is_ = _stats(inside)
    om, os_ = _stats(~inside)
    return TrajectoryErrorStats(
        in_roi_mean=im,
        in_roi_std=is_,
        out_roi_mean=om,
        out_roi_std=os_,
        n_in=int(inside.sum()),
        n_out=int((~inside).sum()),
        errors=errors,
    )


# ---------------------------------------------------------------------------
# Pose / size error


def pose_size_error(yaw_pred, yaw_gt, size_pred, size_gt) -> tuple[float, float]:
    """Mean absolute heading error (degrees, wrapped to [0, 180]) and mean
    Euclidean size error (meters) over matched pairs."""
    yaw_pred = np.asarray(yaw_pred, dtype=float)
    yaw_gt = np.asarray(yaw_gt, dtype=float)
    size_pred = np.asarray(size_pred, dtype=float)
    size_gt = np.asarray(size_gt, dtype=float)
    if yaw_pred.size == 0:
        return 0.0, 0.0
    dyaw = np.abs((yaw_pred - yaw_gt + math.pi) % (2.0 * math.pi) - math.pi)
    yaw_deg = float(np.degrees(dyaw).mean())
    size_err = float(np.linalg.norm(size_pred - size_gt, axis=-1).mean())
    return yaw_deg, size_err


# ---------------------------------------------------------------------------
# Fusion comparison


@dataclass
class LocalizationRun:
    """Localization errors of one pipeline run over a fixed scenario."""

    scenario_id: str
    errors: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors)) if len(self.errors) else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.errors)) if len(self.errors) else float("nan")


def fusion_comparison(single_camera_runs: dict, fused_run: LocalizationRun) -> dict:
    """Compare fused localization error against per-camera baselines.

    All runs must come from the same scenario.  The pass flag requires the
    fused mean to beat the average of the single-camera means.
    """
    for name, run in single_camera_runs.items():
        if run.scenario_id != fused_run.scenario_id:
            raise ScenarioError(f"run {name!r} evaluated on a different scenario")
    singles = {name: {"mean": run.mean, "std": run.std} for name, run in single_camera_runs.items()}
    single_means = [run.mean for run in single_camera_runs.values()]
    avg_single = float(np.mean(single_means)) if single_means else float("nan")
    return {
        "scenario_id": fused_run.scenario_id,
        "single_cameras": singles,
        "single_mean_average": avg_single,
        "fused_mean": fused_run.mean,
        "fused_std": fused_run.std,
        "fused_better": bool(fused_run.mean < avg_single),
    }


# ---------------------------------------------------------------------------
# Identity consistency


def id_consistency(track_states, gt_frames, match_dist: float = 2.0) -> int:
    """Count ground-truth vehicles whose assigned track id changes.

    Per frame, each ground-truth vehicle is assigned the nearest track within
    ``match_dist`` meters; a switch is a change of assigned id between
    consecutive assigned frames of the same vehicle.
    """
    by_time = {}
    for st in track_states:
        by_time.setdefault(round(st.timestamp, 6), []).append(st)
    switches = 0
    last_id = {}
    for fr in sorted(gt_frames, key=lambda f: f.t):
        tracks = by_time.get(round(fr.t, 6), [])
        for obj in fr.objects:
            best_d, best_id = match_dist, None
            for st in tracks:
                d = math.hypot(st.x - obj.x, st.y - obj.y)
                if d < best_d:
                    best_d, best_id = d, st.track_id
            if best_id is None:
                continue
            prev = last_id.get(obj.vehicle_id)
            if prev is not None and prev != best_id:
                switches += 1
            last_id[obj.vehicle_id] = best_id
    return switches
