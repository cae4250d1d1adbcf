"""Per-pixel world-coordinate lookup masks and 2D -> 3D detection lifting.

The masks store, for every covered pixel, the world ground-plane coordinate
obtained by undistorting the pixel and pushing it through its segment's
homography.  Detections are lifted by bilinear lookup at their bottom-center
pixel; heading is lifted through a finite-difference Jacobian of the
pixel-to-world map.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CameraRig, apply_homography
from .camera import undistorted_from_pixel_array
from .datatypes import Detection, WorldDetection
from .errors import UncoveredPixelError


@dataclass
class LocalizationMap:
    """Rasterized world-coordinate lookup for one camera image."""

    camera_id: str
    m_x: np.ndarray  # (H, W) world meters east
    m_y: np.ndarray  # (H, W) world meters north
    segment_index: np.ndarray  # (H, W) uint8, 0 = uncovered
    origin_lon: float = 0.0
    origin_lat: float = 0.0

    @property
    def width(self) -> int:
        return self.m_x.shape[1]

    @property
    def height(self) -> int:
        return self.m_x.shape[0]


def build_masks(rig: CameraRig, image_size: tuple[int, int] | None = None) -> LocalizationMap:
    """Rasterize the rig's ground mapping at full image resolution.

    Pixels outside every segment polygon, or beyond the lens's radial domain,
    get segment index 0 and NaN world values.
    """
    width, height = image_size if image_size is not None else (rig.width, rig.height)
    uu, vv = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    pts = np.column_stack([uu.reshape(-1), vv.reshape(-1)])
    model = rig.radial if rig.kind == "fisheye" else None
    ud, valid = undistorted_from_pixel_array(pts, rig.intrinsics, model)

    seg = np.zeros(len(pts), dtype=np.uint8)
    m_x = np.full(len(pts), np.nan)
    m_y = np.full(len(pts), np.nan)
    for spec, h in zip(rig.segments, rig.homographies):
        inside = spec.contains(pts) & valid & (seg == 0)
        if not np.any(inside):
            continue
        world = apply_homography(h, ud[inside])
        seg[inside] = spec.index
        m_x[inside] = world[:, 0]
        m_y[inside] = world[:, 1]
    return LocalizationMap(
        camera_id=rig.camera_id,
        m_x=m_x.reshape(height, width),
        m_y=m_y.reshape(height, width),
        segment_index=seg.reshape(height, width),
    )


def lookup(lmap: LocalizationMap, u: float, v: float) -> tuple[float, float]:
    """World coordinate at a (sub-pixel) image location.

    Bilinear over the 4 surrounding covered pixels; if some of the 4 are
    uncovered, the nearest covered one is used; if all are uncovered (or the
    point is outside the image) an UncoveredPixelError is raised.  Integer
    pixel locations return the exact raster value.
    """
    if not (0.0 <= u <= lmap.width - 1 and 0.0 <= v <= lmap.height - 1):
        raise UncoveredPixelError(f"pixel ({u}, {v}) outside image bounds")
    u0 = int(math.floor(u))
    v0 = int(math.floor(v))
    u1 = min(u0 + 1, lmap.width - 1)
    v1 = min(v0 + 1, lmap.height - 1)
    corners = [(u0, v0), (u1, v0), (u0, v1), (u1, v1)]
    covered = [lmap.segment_index[cv, cu] > 0 for cu, cv in corners]
    if not any(covered):
        raise UncoveredPixelError(f"no covered neighbors at ({u}, {v})")
    if all(covered):
        fu = u - u0
        fv = v - v0
        w = np.array([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv])
        xs = np.array([lmap.m_x[cv, cu] for cu, cv in corners])
        ys = np.array([lmap.m_y[cv, cu] for cu, cv in corners])
        return float(w @ xs), float(w @ ys)
    # Nearest covered neighbor among the 4.
    best = min(
        (c for c, ok in zip(corners, covered) if ok),
        key=lambda c: (c[0] - u) ** 2 + (c[1] - v) ** 2,
    )
    return float(lmap.m_x[best[1], best[0]]), float(lmap.m_y[best[1], best[0]])


def localize_detection(det: Detection, lmap: LocalizationMap) -> WorldDetection:
    """Lift an image-space detection to world coordinates.

    Heading is mapped through a central finite difference of the lookup over
    +-1 px along the image heading (one-sided at coverage boundaries; the
    image heading is kept verbatim if neither side is covered).
    """
    u, v = det.bottom_center
    x, y = lookup(lmap, u, v)
    du, dv = math.cos(det.yaw), math.sin(det.yaw)
    yaw_world = det.yaw
    for pa, pb in (
        ((u + du, v + dv), (u - du, v - dv)),
        ((u + du, v + dv), (u, v)),
        ((u, v), (u - du, v - dv)),
    ):
        try:
            wa = lookup(lmap, *pa)
            wb = lookup(lmap, *pb)
        except UncoveredPixelError:
            continue
        dx, dy = wa[0] - wb[0], wa[1] - wb[1]
        if dx * dx + dy * dy > 1e-18:
            yaw_world = math.atan2(dy, dx)
            break
    w_m, l_m = det.size
    return WorldDetection(
        x=x,
        y=y,
        s=w_m * l_m,
        r=l_m / w_m,
        yaw=yaw_world,
        class_id=det.class_id,
        confidence=det.confidence,
        camera_id=det.camera_id,
        frame=det.frame,
        timestamp=det.timestamp,
    )


def save_masks(lmap: LocalizationMap, out_dir) -> tuple[Path, Path]:
    """Write the binary raster file and its JSON sidecar.

    Layout: m_x then m_y as little-endian float32 row-major, then the uint8
    segment raster.  The sidecar carries dimensions, the ENU origin, and a
    sha256 checksum of the binary payload.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = (
        lmap.m_x.astype("<f4").tobytes()
        + lmap.m_y.astype("<f4").tobytes()
        + lmap.segment_index.astype(np.uint8).tobytes()
    )
    bin_path = out_dir / f"{lmap.camera_id}.mask"
    bin_path.write_bytes(payload)
    sidecar = {
        "width": lmap.width,
        "height": lmap.height,
        "origin_lon": lmap.origin_lon,
        "origin_lat": lmap.origin_lat,
        "camera_id": lmap.camera_id,
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    json_path = out_dir / f"{lmap.camera_id}.mask.json"
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return bin_path, json_path


def load_masks(bin_path) -> LocalizationMap:
    bin_path = Path(bin_path)
    sidecar = json.loads(Path(str(bin_path) + ".json").read_text())
    payload = bin_path.read_bytes()
    if hashlib.sha256(payload).hexdigest() != sidecar["checksum"]:
        raise IOError(f"checksum mismatch for {bin_path}")
    w, h = sidecar["width"], sidecar["height"]
    n = w * h
    m_x = np.frombuffer(payload[: 4 * n], dtype="<f4").reshape(h, w).astype(float)
    m_y = np.frombuffer(payload[4 * n : 8 * n], dtype="<f4").reshape(h, w).astype(float)
    seg = np.frombuffer(payload[8 * n :], dtype=np.uint8).reshape(h, w).copy()
    return LocalizationMap(
        camera_id=sidecar["camera_id"],
        m_x=m_x,
        m_y=m_y,
        segment_index=seg,
        origin_lon=sidecar["origin_lon"],
        origin_lat=sidecar["origin_lat"],
    )
