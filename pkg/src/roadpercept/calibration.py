"""Landmark-based calibration: piecewise-planar homographies and fisheye fit.

A camera's ground mapping is a set of pixel-space segments, each carrying a
3x3 homography from the *undistorted* image plane to the world ground plane
(local ENU meters).  Pinhole rigs use a single segment by default; fisheye
rigs default to four quadrants around the principal point and additionally
carry intrinsics plus radial coefficients, refined jointly with the
homographies by Levenberg-Marquardt on world-plane reprojection error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from matplotlib.path import Path as MplPath

from .camera import (
    Intrinsics,
    RadialModel,
    pixel_from_undistorted,
    undistorted_from_pixel,
    undistorted_from_pixel_array,
)
from .errors import (
    CameraDomainError,
    ConvergenceError,
    DegenerateConfigurationError,
    InsufficientPairsError,
    NoConsensusError,
    OutOfCoverageError,
    UncoveredPixelError,
)
from .optim import levenberg_marquardt

DEFAULT_RANSAC_ITERS = 1000
DEFAULT_INLIER_THRESH_M = 0.5


@dataclass(frozen=True)
class LandmarkPair:
    """One annotated correspondence: pixel location and world location (m)."""

    pixel: tuple[float, float]
    world: tuple[float, float]
    id: str = ""


def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale so h[2,2] = 1 (Frobenius norm 1 if h[2,2] is ~0); check invertibility."""
    h = np.asarray(h, dtype=float)
    if h.shape != (3, 3):
        raise ValueError("homography must be 3x3")
    if abs(h[2, 2]) > 1e-9 * np.linalg.norm(h):
        h = h / h[2, 2]
    else:
        h = h / np.linalg.norm(h)
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateConfigurationError("homography is singular")
    return h


def apply_homography(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a 3x3 homography to (N, 2) points (or a single 2-vector)."""
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    ph = pts @ h[:, :2].T + h[:, 2]
    out = ph[:, :2] / ph[:, 2:3]
    return out[0] if single else out


def _normalization(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity: centroid to origin, mean radius sqrt(2)."""
    c = pts.mean(axis=0)
    d = float(np.mean(np.linalg.norm(pts - c, axis=1)))
    if d <= 1e-12:
        raise DegenerateConfigurationError("coincident points")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def estimate_homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform with Hartley normalization of both point sets.

    ``src``/``dst`` are (N, 2) with N >= 4.  Raises InsufficientPairsError or
    DegenerateConfigurationError (collinear or coincident configurations).
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2)")
    n = len(src)
    if n < 4:
        raise InsufficientPairsError(f"need >= 4 pairs, got {n}")
    t_src = _normalization(src)
    t_dst = _normalization(dst)
    sn = apply_homography(t_src, src)
    dn = apply_homography(t_dst, dst)
    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = -sn
    a[0::2, 2] = -1.0
    a[0::2, 6:8] = dn[:, 0:1] * sn
    a[0::2, 8] = dn[:, 0]
    a[1::2, 3:5] = -sn
    a[1::2, 5] = -1.0
    a[1::2, 6:8] = dn[:, 1:2] * sn
    a[1::2, 8] = dn[:, 1]
    _, s, vt = np.linalg.svd(a)
    # A unique (1-D) nullspace requires the second-smallest singular value to
    # be well separated from zero; otherwise the points are degenerate.
    if s[-2] <= 1e-9 * s[0]:
        raise DegenerateConfigurationError("collinear or coincident point configuration")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    return normalize_homography(h)


def estimate_homography_ransac(
    src: np.ndarray,
    dst: np.ndarray,
    iters: int = DEFAULT_RANSAC_ITERS,
    inlier_thresh: float = DEFAULT_INLIER_THRESH_M,
    seed: int = 0,
    confidence: float = 0.999,
) -> tuple[np.ndarray, np.ndarray]:
    """RANSAC over 4-point minimal samples, refit by DLT on the consensus set.

    Residuals are measured in world meters (||H*src - dst||).  Requires at
    least 5 pairs: with only a minimal sample every candidate fits exactly and
    consensus cannot be validated.  Deterministic given ``seed``.  ``iters``
    caps the sample count; iteration stops early once enough samples have been
    drawn to hit ``confidence`` of seeing an all-inlier sample at the best
    inlier ratio found so far.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    n = len(src)
    if n < 4:
        raise InsufficientPairsError(f"need >= 4 pairs, got {n}")
    if n == 4:
        raise NoConsensusError(
            "cannot validate consensus with only a minimal sample (need >= 5 pairs)"
        )
    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = 0
    needed = iters
    done = 0
    while done < min(iters, needed):
        done += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_homography_dlt(src[idx], dst[idx])
        except DegenerateConfigurationError:
            continue
        res = np.linalg.norm(apply_homography(h, src) - dst, axis=1)
        mask = res < inlier_thresh
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            w4 = (count / n) ** 4
            if w4 >= 1.0:
                break
            needed = math.ceil(math.log(1.0 - confidence) / math.log(1.0 - w4))
    # A minimal sample always fits itself exactly, so a meaningful consensus
    # needs at least one additional inlier beyond the 4 sampled pairs.
    if best_mask is None or best_count < 5:
        raise NoConsensusError(f"best consensus has {best_count} inliers (< 5)")
    h = estimate_homography_dlt(src[best_mask], dst[best_mask])
    res = np.linalg.norm(apply_homography(h, src) - dst, axis=1)
    final_mask = res < inlier_thresh
    if final_mask.sum() < 4:
        final_mask = best_mask
    return h, final_mask


def _segments_cross(p, q, r, s):
    """True if open segments pq and rs properly intersect."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(r, s, p)
    d2 = orient(r, s, q)
    d3 = orient(p, q, r)
    d4 = orient(p, q, s)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass
class SegmentSpec:
    """Pixel-space polygon covered by one planar homography (index is 1-based)."""

    polygon: np.ndarray
    index: int

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=float)
        if self.polygon.ndim != 2 or self.polygon.shape[1] != 2 or len(self.polygon) < 3:
            raise ValueError("polygon must be (N>=3, 2)")
        if self.index < 1:
            raise ValueError("segment index is 1-based")
        n = len(self.polygon)
        edges = [(self.polygon[i], self.polygon[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue  # adjacent through wrap-around
                if _segments_cross(*edges[i], *edges[j]):
                    raise ValueError("polygon is self-intersecting")

    @cached_property
    def path(self) -> MplPath:
        return MplPath(np.vstack([self.polygon, self.polygon[:1]]), closed=True)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.path.contains_points(pts, radius=1e-9)


def full_image_segment(width: int, height: int, index: int = 1) -> SegmentSpec:
    """One segment covering every pixel center of a width x height image."""
    return SegmentSpec(
        polygon=np.array(
            [
                [-0.5, -0.5],
                [width - 0.5, -0.5],
                [width - 0.5, height - 0.5],
                [-0.5, height - 0.5],
            ]
        ),
        index=index,
    )


def quadrant_segments(width: int, height: int, cx: float, cy: float) -> list[SegmentSpec]:
    """Four rectangular quadrants split at (cx, cy), tiling the image."""
    x0, x1 = -0.5, width - 0.5
    y0, y1 = -0.5, height - 0.5
    boxes = [
        (x0, y0, cx, cy),
        (cx, y0, x1, cy),
        (x0, cy, cx, y1),
        (cx, cy, x1, y1),
    ]
    return [
        SegmentSpec(
            polygon=np.array([[a, b], [c, b], [c, d], [a, d]]), index=i + 1
        )
        for i, (a, b, c, d) in enumerate(boxes)
    ]


@dataclass
class CameraRig:
    """Complete ground mapping for one camera.

    ``homographies[i]`` maps undistorted image-plane coordinates of pixels in
    ``segments[i]`` to world ground-plane meters.
    """

    camera_id: str
    kind: str  # "pinhole" | "fisheye"
    width: int
    height: int
    intrinsics: Intrinsics
    radial: RadialModel | None
    segments: list[SegmentSpec]
    homographies: list[np.ndarray]
    rmse: float | None = None
    _h_inv: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in ("pinhole", "fisheye"):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.kind == "fisheye" and self.radial is None:
            raise ValueError("fisheye rig requires a radial model")
        if len(self.segments) != len(self.homographies) or not self.segments:
            raise ValueError("need one homography per segment (>= 1)")
        self.homographies = [normalize_homography(h) for h in self.homographies]
        self._h_inv = [np.linalg.inv(h) for h in self.homographies]

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def segment_at_pixel(self, u: float, v: float) -> int:
        """1-based segment index covering the pixel, 0 if uncovered."""
        for spec in self.segments:
            if spec.contains((u, v))[0]:
                return spec.index
        return 0

    def undistort_pixel(self, u: float, v: float) -> tuple[float, float]:
        model = self.radial if self.kind == "fisheye" else None
        return undistorted_from_pixel(u, v, self.intrinsics, model)

    def distort_point(self, x: float, y: float) -> tuple[float, float]:
        model = self.radial if self.kind == "fisheye" else None
        return pixel_from_undistorted(x, y, self.intrinsics, model)

    def pixel_to_world(self, u: float, v: float) -> tuple[float, float]:
        seg = self.segment_at_pixel(u, v)
        if seg == 0:
            raise UncoveredPixelError(f"pixel ({u}, {v}) outside calibrated segments")
        try:
            xy = self.undistort_pixel(u, v)
        except CameraDomainError as exc:
            raise UncoveredPixelError(str(exc)) from exc
        w = apply_homography(self.homographies[seg - 1], np.asarray(xy))
        return float(w[0]), float(w[1])

    def world_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        """Invert the ground mapping: per-segment H^-1 then lens distortion."""
        for spec, h_inv in zip(self.segments, self._h_inv):
            ph = h_inv @ np.array([x, y, 1.0])
            if abs(ph[2]) < 1e-12:
                continue
            try:
                u, v = self.distort_point(ph[0] / ph[2], ph[1] / ph[2])
            except CameraDomainError:
                continue
            if not (-0.5 <= u <= self.width - 0.5 and -0.5 <= v <= self.height - 0.5):
                continue
            if spec.contains((u, v))[0]:
                return u, v
        raise OutOfCoverageError(f"world point ({x}, {y}) outside camera coverage")

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "kind": self.kind,
            "width": self.width,
            "height": self.height,
            "intrinsics": {
                "fx": self.intrinsics.fx,
                "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx,
                "cy": self.intrinsics.cy,
            },
            "radial": None
            if self.radial is None
            else {
                "k1": self.radial.k1,
                "k2": self.radial.k2,
                "k3": self.radial.k3,
                "theta_max": self.radial.theta_max,
            },
            "segments": [
                {"index": s.index, "polygon": s.polygon.tolist()} for s in self.segments
            ],
            "homographies": [h.tolist() for h in self.homographies],
            "rmse": self.rmse,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraRig":
        radial = d.get("radial")
        return cls(
            camera_id=d["camera_id"],
            kind=d["kind"],
            width=int(d["width"]),
            height=int(d["height"]),
            intrinsics=Intrinsics(**d["intrinsics"]),
            radial=None if radial is None else RadialModel(**radial),
            segments=[
                SegmentSpec(polygon=np.asarray(s["polygon"]), index=int(s["index"]))
                for s in d["segments"]
            ],
            homographies=[np.asarray(h, dtype=float) for h in d["homographies"]],
            rmse=d.get("rmse"),
        )


def group_pairs_by_segment(
    pairs: list[LandmarkPair], segments: list[SegmentSpec]
) -> list[list[LandmarkPair]]:
    """Bucket landmark pairs into segments by their pixel location."""
    groups = [[] for _ in segments]
    for p in pairs:
        for i, spec in enumerate(segments):
            if spec.contains(p.pixel)[0]:
                groups[i].append(p)
                break
    return groups


def _pack_params(K: Intrinsics, radial: RadialModel, homographies) -> np.ndarray:
    parts = [K.fx, K.fy, K.cx, K.cy, radial.k1, radial.k2, radial.k3]
    for h in homographies:
        parts.extend(normalize_homography(h).reshape(-1)[:8])
    return np.array(parts)


def _unpack_params(x: np.ndarray, n_seg: int, theta_max: float):
    fx, fy, cx, cy, k1, k2, k3 = x[:7]
    K = Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy)
    radial = RadialModel(k1=k1, k2=k2, k3=k3, theta_max=theta_max)
    hs = []
    for i in range(n_seg):
        flat = np.append(x[7 + 8 * i : 7 + 8 * (i + 1)], 1.0)
        hs.append(flat.reshape(3, 3))
    return K, radial, hs


def calibrate_rig(
    pairs_by_segment: list[list[LandmarkPair]],
    image_size: tuple[int, int],
    segments: list[SegmentSpec],
    kind: str = "fisheye",
    camera_id: str = "cam",
    intrinsics: Intrinsics | None = None,
    theta_max: float = 1.65,
    max_iters: int = 200,
) -> CameraRig:
    """Estimate a full camera rig from per-segment landmark pairs.

    Pinhole: per-segment DLT on linearly unprojected pixels (one stage).
    Fisheye: initialize at cx,cy = image center, fx = fy = width/pi,
    k = (1, 0, 0) and per-segment DLT, then jointly refine intrinsics, radial
    coefficients, and all homographies by LM on world-plane residuals.
    """
    width, height = image_size
    if len(pairs_by_segment) != len(segments):
        raise ValueError("pairs_by_segment must align with segments")
    for group, spec in zip(pairs_by_segment, segments):
        if len(group) < 4:
            raise InsufficientPairsError(
                f"segment {spec.index} has {len(group)} pairs (need >= 4)"
            )

    if kind == "pinhole":
        K = intrinsics if intrinsics is not None else Intrinsics(1.0, 1.0, 0.0, 0.0)
        hs = []
        for group in pairs_by_segment:
            px = np.array([p.pixel for p in group])
            ud = np.column_stack(
                [(px[:, 0] - K.cx) / K.fx, (px[:, 1] - K.cy) / K.fy]
            )
            world = np.array([p.world for p in group])
            hs.append(estimate_homography_dlt(ud, world))
        rig = CameraRig(
            camera_id=camera_id,
            kind="pinhole",
            width=width,
            height=height,
            intrinsics=K,
            radial=None,
            segments=segments,
            homographies=hs,
        )
        rig.rmse = _rig_rmse(rig, pairs_by_segment)
        return rig
    if kind != "fisheye":
        raise ValueError(f"unknown camera kind {kind!r}")

    f0 = width / math.pi
    K0 = Intrinsics(fx=f0, fy=f0, cx=width / 2.0, cy=height / 2.0)
    radial0 = RadialModel(k1=1.0, k2=0.0, k3=0.0, theta_max=theta_max)
    hs0 = []
    for group in pairs_by_segment:
        uv = np.array([p.pixel for p in group])
        ud, valid = undistorted_from_pixel_array(uv, K0, radial0)
        if not np.all(valid):
            raise CameraDomainError("landmark pixel outside initial radial domain")
        world = np.array([p.world for p in group])
        hs0.append(estimate_homography_dlt(ud, world))

    all_uv = [np.array([p.pixel for p in g]) for g in pairs_by_segment]
    all_world = [np.array([p.world for p in g]) for g in pairs_by_segment]
    n_landmarks = sum(len(g) for g in pairs_by_segment)
    n_seg = len(segments)

    def residuals(x: np.ndarray) -> np.ndarray:
        try:
            K, radial, hs = _unpack_params(x, n_seg, theta_max)
        except ValueError:
            return np.full(2 * n_landmarks, 1e6)
        out = []
        for uv, world, h in zip(all_uv, all_world, hs):
            try:
                ud, valid = undistorted_from_pixel_array(uv, K, radial)
            except ConvergenceError:
                return np.full(2 * n_landmarks, 1e6)
            if not np.all(valid):
                return np.full(2 * n_landmarks, 1e6)
            ph = ud @ h[:, :2].T + h[:, 2]
            if np.any(np.abs(ph[:, 2]) < 1e-12):
                return np.full(2 * n_landmarks, 1e6)
            out.append(ph[:, :2] / ph[:, 2:3] - world)
        return np.concatenate(out).reshape(-1)

    x0 = _pack_params(K0, radial0, hs0)
    result = levenberg_marquardt(residuals, x0, max_iters=max_iters, rel_tol=1e-10)
    init_rmse = math.sqrt(result.initial_cost / n_landmarks)
    final_rmse = math.sqrt(result.cost / n_landmarks)
    if not result.converged and final_rmse > 10.0 * max(init_rmse, 1e-12):
        raise ConvergenceError(
            f"joint refinement did not converge (rmse {final_rmse:.3g} "
            f"vs initial {init_rmse:.3g})"
        )
    K, radial, hs = _unpack_params(result.x, n_seg, theta_max)
    rig = CameraRig(
        camera_id=camera_id,
        kind="fisheye",
        width=width,
        height=height,
        intrinsics=K,
        radial=radial,
        segments=segments,
        homographies=hs,
        rmse=final_rmse,
    )
    return rig


def _rig_rmse(rig: CameraRig, pairs_by_segment) -> float:
    sq = []
    for group, h in zip(pairs_by_segment, rig.homographies):
        for p in group:
            xy = rig.undistort_pixel(*p.pixel)
            w = apply_homography(h, np.asarray(xy))
            sq.append(float((w[0] - p.world[0]) ** 2 + (w[1] - p.world[1]) ** 2))
    return math.sqrt(sum(sq) / len(sq)) if sq else 0.0


@dataclass
class CalibrationReport:
    """Per-landmark world-space errors with an in/out ROI split."""

    ids: list
    errors: np.ndarray
    in_roi: np.ndarray  # boolean per landmark
    in_roi_mean: float
    in_roi_std: float
    out_roi_mean: float
    out_roi_std: float


def calibration_report(rig: CameraRig, pairs: list[LandmarkPair], roi=None) -> CalibrationReport:
    """World-space error at each landmark; ROI split uses the GT world point.

    ``roi`` is any object with a ``contains(x, y) -> bool`` method (see
    metrics.RoiSpec); with no ROI every landmark counts as in-ROI.
    """
    ids, errors, inside = [], [], []
    for p in pairs:
        try:
            w = rig.pixel_to_world(*p.pixel)
            err = math.hypot(w[0] - p.world[0], w[1] - p.world[1])
        except (UncoveredPixelError, CameraDomainError):
            err = math.inf
        ids.append(p.id)
        errors.append(err)
        inside.append(roi.contains(*p.world) if roi is not None else True)
    errors = np.array(errors)
    inside = np.array(inside, dtype=bool)

    def _stats(mask):
        sel = errors[mask & np.isfinite(errors)]
        if sel.size == 0:
            return float("nan"), float("nan")
        return float(sel.mean()), float(sel.std())

    im, is_ = _stats(inside)
    om, os_ = _stats(~inside)
    return CalibrationReport(
        ids=ids,
        errors=errors,
        in_roi=inside,
        in_roi_mean=im,
        in_roi_std=is_,
        out_roi_mean=om,
        out_roi_std=os_,
    )
