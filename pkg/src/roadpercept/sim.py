"""Synthetic roundabout world with scripted vehicles and an oracle detector.

Vehicles enter along one of four approach arms, travel counter-clockwise
around a two-lane ring on a line-arc-line route (tangent junctions, so the
path and heading are continuous), and leave along another arm.  Cameras are
synthetic rigs constructed from a known 3D pose, so their ground homographies
are exact and every downstream geometric claim can be checked against ground
truth.  The oracle detector replaces the learned network: it projects true
bottom centers, adds pixel-space Gaussian noise, drops detections, and
injects low-confidence false positives, all deterministically per
(seed, frame, camera).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .calibration import (
    CameraRig,
    SegmentSpec,
    full_image_segment,
    normalize_homography,
    quadrant_segments,
)
from .camera import Intrinsics, RadialModel, pixel_from_undistorted
from .datatypes import Detection
from .errors import CameraDomainError, OutOfCoverageError, ScenarioError

DEFAULT_LANE_RADII = (18.0, 22.0)
DEFAULT_ARM_LENGTH = 45.0
MIN_SPAWN_GAP_M = 2.0


# ---------------------------------------------------------------------------
# Route geometry


class _Line:
    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        d = self.p1 - self.p0
        self.length = float(np.hypot(*d))
        self._dir = d / self.length if self.length > 0 else d
        self._heading = math.atan2(d[1], d[0])

    def point(self, s):
        return self.p0 + s * self._dir

    def heading(self, s):
        return self._heading


class _Arc:
    """Counter-clockwise circular arc from angle a0 over a positive sweep."""

    def __init__(self, center, radius, a0, sweep):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.a0 = float(a0)
        self.sweep = float(sweep)
        self.length = self.radius * self.sweep

    def point(self, s):
        a = self.a0 + s / self.radius
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def heading(self, s):
        return self.a0 + s / self.radius + math.pi / 2.0


class Route:
    """Arc-length parameterized line-arc-line route."""

    def __init__(self, segments):
        self.segments = segments
        self.cum = np.cumsum([seg.length for seg in segments])
        self.total_length = float(self.cum[-1])

    def _locate(self, s):
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(self.cum, s, side="left"))
        i = min(i, len(self.segments) - 1)
        prev = 0.0 if i == 0 else self.cum[i - 1]
        return self.segments[i], s - prev

    def point(self, s):
        seg, local = self._locate(s)
        return seg.point(local)

    def heading(self, s):
        seg, local = self._locate(s)
        return seg.heading(local)

    def polyline(self, step=0.5):
        s = np.arange(0.0, self.total_length, step)
        pts = np.array([self.point(v) for v in s] + [self.point(self.total_length)])
        return pts


def build_route(center, lane_radius, arm_length, entry_arm, exit_arm) -> Route:
    """Tangent line -> ccw arc -> tangent line through the ring.

    Arms are indexed 0..3 at compass angles 0, 90, 180, 270 degrees from the
    roundabout center.  Entry and exit lines touch the lane circle at the
    tangent points of the external arm endpoints, so position and heading are
    both continuous along the route.
    """
    center = np.asarray(center, dtype=float)
    if arm_length <= lane_radius:
        raise ScenarioError("arm endpoints must lie outside the ring")
    phi_in = entry_arm * math.pi / 2.0
    phi_out = exit_arm * math.pi / 2.0
    p_in = center + arm_length * np.array([math.cos(phi_in), math.sin(phi_in)])
    p_out = center + arm_length * np.array([math.cos(phi_out), math.sin(phi_out)])
    alpha = math.acos(lane_radius / arm_length)
    a_in = phi_in + alpha
    a_out = phi_out - alpha
    t_in = center + lane_radius * np.array([math.cos(a_in), math.sin(a_in)])
    t_out = center + lane_radius * np.array([math.cos(a_out), math.sin(a_out)])
    sweep = (a_out - a_in) % (2.0 * math.pi)
    if sweep < 1e-9:
        sweep += 2.0 * math.pi
    return Route(
        [
            _Line(p_in, t_in),
            _Arc(center, lane_radius, a_in, sweep),
            _Line(t_out, p_out),
        ]
    )


# ---------------------------------------------------------------------------
# Scenario


@dataclass(frozen=True)
class VehicleScript:
    entry_arm: int
    exit_arm: int
    entry_time: float
    speed: float  # m/s, constant along the route
    width: float = 1.8
    length: float = 4.5
    class_id: int = 0
    lane: int = 0

    def __post_init__(self):
        if self.speed < 0.0:
            raise ValueError("speed must be >= 0")
        if self.width <= 0.0 or self.length <= 0.0:
            raise ValueError("footprint must be positive")


@dataclass(frozen=True)
class SensorModel:
    pixel_noise_sigma: float = 1.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0  # expected false positives per frame
    fp_conf_max: float = 0.45

    def __post_init__(self):
        if not (0.0 <= self.miss_rate <= 1.0):
            raise ValueError("miss_rate must lie in [0, 1]")
        if self.false_positive_rate < 0.0 or self.pixel_noise_sigma < 0.0:
            raise ValueError("rates must be >= 0")


@dataclass(frozen=True)
class CameraMount:
    camera_id: str
    kind: str  # "fisheye" | "pinhole"
    position: tuple[float, float]
    height: float = 8.0
    pitch: float = 0.44  # pinhole only: downward tilt, radians
    look_at: tuple[float, float] | None = None  # pinhole aim point (default scene center)


@dataclass
class Scenario:
    cameras: list
    vehicles: list
    center: tuple[float, float] = (0.0, 0.0)
    lane_radii: tuple[float, float] = DEFAULT_LANE_RADII
    arm_length: float = DEFAULT_ARM_LENGTH
    fps: float = 10.0
    duration: float = 60.0
    seed: int = 0
    sensor: SensorModel = field(default_factory=SensorModel)

    def __post_init__(self):
        if self.fps <= 0.0:
            raise ScenarioError("fps must be positive")
        positions = [tuple(c.position) for c in self.cameras]
        if len(set(positions)) != len(positions):
            raise ScenarioError("camera positions must be distinct")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cameras"] = [asdict(c) for c in self.cameras]
        d["vehicles"] = [asdict(v) for v in self.vehicles]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        d["cameras"] = [CameraMount(**{**c, "position": tuple(c["position"]),
                                       "look_at": tuple(c["look_at"]) if c.get("look_at") else None})
                        for c in d["cameras"]]
        d["vehicles"] = [VehicleScript(**v) for v in d["vehicles"]]
        d["center"] = tuple(d["center"])
        d["lane_radii"] = tuple(d["lane_radii"])
        d["sensor"] = SensorModel(**d["sensor"])
        return cls(**d)


def default_corner_mounts(center=(0.0, 0.0), offset=30.0, kind="fisheye", height=8.0):
    """Four cameras at the corners of the roundabout area."""
    cx, cy = center
    corners = [(-offset, -offset), (offset, -offset), (-offset, offset), (offset, offset)]
    return [
        CameraMount(camera_id=f"cam{i}", kind=kind, position=(cx + dx, cy + dy), height=height)
        for i, (dx, dy) in enumerate(corners)
    ]


def random_scenario(
    seed: int = 0,
    n_vehicles: int = 20,
    duration: float = 60.0,
    fps: float = 10.0,
    cameras=None,
    sensor: SensorModel | None = None,
) -> Scenario:
    """Scripted-random scenario: vehicles with staggered entries and speeds."""
    rng = np.random.default_rng(seed)
    vehicles = []
    slot = 0.0
    for _ in range(n_vehicles):
        entry = int(rng.integers(0, 4))
        exit_ = int(rng.integers(0, 4))
        slot += float(rng.uniform(1.2, 3.0))
        vehicles.append(
            VehicleScript(
                entry_arm=entry,
                exit_arm=exit_,
                entry_time=round(slot, 3),
                speed=float(round(rng.uniform(4.0, 8.0), 3)),
                width=float(round(rng.uniform(1.7, 2.0), 3)),
                length=float(round(rng.uniform(4.0, 5.2), 3)),
                class_id=int(rng.integers(0, 3)),
                lane=int(rng.integers(0, 2)),
            )
        )
    return Scenario(
        cameras=cameras if cameras is not None else default_corner_mounts(),
        vehicles=vehicles,
        duration=duration,
        fps=fps,
        seed=seed,
        sensor=sensor if sensor is not None else SensorModel(),
    )


# ---------------------------------------------------------------------------
# Ground truth


@dataclass(frozen=True)
class GroundTruthObject:
    vehicle_id: int
    x: float
    y: float
    yaw: float
    width: float
    length: float
    class_id: int


@dataclass(frozen=True)
class FrameGroundTruth:
    frame: int
    t: float
    objects: tuple


def vehicle_route(scenario: Scenario, script: VehicleScript) -> Route:
    lane_radius = scenario.lane_radii[script.lane % len(scenario.lane_radii)]
    return build_route(
        scenario.center, lane_radius, scenario.arm_length, script.entry_arm, script.exit_arm
    )


def gen_ground_truth(scenario: Scenario) -> list[FrameGroundTruth]:
    """Per-frame vehicle states; raises ScenarioError on overlapping spawns."""
    routes = [vehicle_route(scenario, v) for v in scenario.vehicles]

    def state_at(vid, t):
        v = scenario.vehicles[vid]
        tau = t - v.entry_time
        if tau < 0.0:
            return None
        s = v.speed * tau
        if s > routes[vid].total_length:
            return None
        p = routes[vid].point(s)
        return p, routes[vid].heading(s)

    for i, v in enumerate(scenario.vehicles):
        here = state_at(i, v.entry_time)
        for j in range(len(scenario.vehicles)):
            if j == i:
                continue
            other = state_at(j, v.entry_time)
            if other is None:
                continue
            if np.hypot(*(here[0] - other[0])) < MIN_SPAWN_GAP_M:
                raise ScenarioError(
                    f"vehicle {i} spawns within {MIN_SPAWN_GAP_M} m of vehicle {j}"
                )

    frames = []
    for k in range(scenario.n_frames):
        t = k / scenario.fps
        objs = []
        for i, v in enumerate(scenario.vehicles):
            st = state_at(i, t)
            if st is None:
                continue
            (x, y), yaw = st
            objs.append(
                GroundTruthObject(
                    vehicle_id=i,
                    x=float(x),
                    y=float(y),
                    yaw=float(yaw),
                    width=v.width,
                    length=v.length,
                    class_id=v.class_id,
                )
            )
        frames.append(FrameGroundTruth(frame=k, t=t, objects=tuple(objs)))
    return frames


# ---------------------------------------------------------------------------
# Synthetic cameras


@dataclass
class SimCamera:
    """A camera rig plus the exact 3D pose it was synthesized from."""

    mount: CameraMount
    rig: CameraRig
    rotation: np.ndarray  # world -> camera
    position3: np.ndarray  # camera center in world, meters

    def project_point(self, x: float, y: float, z: float = 0.0) -> tuple[float, float]:
        """Project any 3D world point (not just ground) through the true pose."""
        xc = self.rotation @ (np.array([x, y, z]) - self.position3)
        if xc[2] <= 1e-9:
            raise OutOfCoverageError("point behind the camera")
        model = self.rig.radial if self.rig.kind == "fisheye" else None
        try:
            u, v = pixel_from_undistorted(
                xc[0] / xc[2], xc[1] / xc[2], self.rig.intrinsics, model
            )
        except CameraDomainError as exc:
            raise OutOfCoverageError(str(exc)) from exc
        if not (-0.5 <= u <= self.rig.width - 0.5 and -0.5 <= v <= self.rig.height - 0.5):
            raise OutOfCoverageError("projection outside the image")
        if self.rig.segment_at_pixel(u, v) == 0:
            raise OutOfCoverageError("projection outside calibrated segments")
        return u, v


def _pose_homographies(rotation, position3, segments):
    """Exact undistorted-plane -> ground-plane homographies for a known pose."""
    m = np.column_stack(
        [rotation[:, 0], rotation[:, 1], -rotation @ np.asarray(position3)]
    )
    h = normalize_homography(np.linalg.inv(m))
    return [h.copy() for _ in segments]


def make_camera(mount: CameraMount, scene_center=(0.0, 0.0)) -> SimCamera:
    """Build the default synthetic rig for a mount.

    Fisheye: nadir-looking 1280x1280, f = 407 (about width/pi),
    k = (1, -0.05, 0.002), four quadrant segments.
    Pinhole ("thermal"): 640x512, f = 800, tilted toward the scene center.
    """
    px, py = mount.position
    if mount.kind == "fisheye":
        width = height = 1280
        K = Intrinsics(fx=407.0, fy=407.0, cx=width / 2.0, cy=height / 2.0)
        radial = RadialModel(k1=1.0, k2=-0.05, k3=0.002, theta_max=1.65)
        segments = quadrant_segments(width, height, K.cx, K.cy)
        rotation = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
        position3 = np.array([px, py, mount.height])
        hs = _pose_homographies(rotation, position3, segments)
        rig = CameraRig(
            camera_id=mount.camera_id,
            kind="fisheye",
            width=width,
            height=height,
            intrinsics=K,
            radial=radial,
            segments=segments,
            homographies=hs,
        )
        return SimCamera(mount=mount, rig=rig, rotation=rotation, position3=position3)
    if mount.kind != "pinhole":
        raise ScenarioError(f"unknown camera kind {mount.kind!r}")
    width, height = 640, 512
    K = Intrinsics(fx=800.0, fy=800.0, cx=width / 2.0, cy=height / 2.0)
    aim = mount.look_at if mount.look_at is not None else scene_center
    yaw = math.atan2(aim[1] - py, aim[0] - px)
    pitch = mount.pitch
    cy_, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cy_ * cp, sy * cp, -sp])
    right = np.array([sy, -cy_, 0.0])
    down = np.cross(forward, right)
    rotation = np.vstack([right, down, forward])
    position3 = np.array([px, py, mount.height])
    segments = [full_image_segment(width, height)]
    hs = _pose_homographies(rotation, position3, segments)
    rig = CameraRig(
        camera_id=mount.camera_id,
        kind="pinhole",
        width=width,
        height=height,
        intrinsics=K,
        radial=None,
        segments=segments,
        homographies=hs,
    )
    return SimCamera(mount=mount, rig=rig, rotation=rotation, position3=position3)


def world_to_pixel(rig: CameraRig, x: float, y: float) -> tuple[float, float]:
    """Ground-plane point to pixel through the rig's calibrated mapping."""
    return rig.world_to_pixel(x, y)


# ---------------------------------------------------------------------------
# Oracle detector


def observe(
    frame_gt: FrameGroundTruth,
    cam: SimCamera,
    sensor: SensorModel,
    seed: int,
    cam_index: int,
    center_mode: str = "bottom",
    vehicle_height: float = 1.5,
) -> list[Detection]:
    """Noisy detections for one frame of one camera.

    Deterministic for a given (seed, frame, camera index).  ``center_mode``
    "box_center" projects the 3D box center (half the vehicle height above
    ground) instead of the bottom center, for ablation runs.
    """
    rng = np.random.default_rng([abs(int(seed)), frame_gt.frame, cam_index])
    sigma = sensor.pixel_noise_sigma
    dets = []
    for obj in frame_gt.objects:
        z = 0.5 * vehicle_height if center_mode == "box_center" else 0.0
        try:
            u, v = cam.project_point(obj.x, obj.y, z)
        except OutOfCoverageError:
            continue
        if sensor.miss_rate > 0.0 and rng.uniform() < sensor.miss_rate:
            continue
        if sigma > 0.0:
            noise = rng.normal(0.0, sigma, size=2)
            conf = max(0.0, 1.0 - float(np.hypot(*noise)) / (4.0 * sigma))
        else:
            noise = np.zeros(2)
            conf = 1.0
        step = 0.05
        try:
            u2, v2 = cam.project_point(
                obj.x + step * math.cos(obj.yaw), obj.y + step * math.sin(obj.yaw), z
            )
            image_yaw = math.atan2(v2 - v, u2 - u)
        except OutOfCoverageError:
            image_yaw = 0.0
        dets.append(
            Detection(
                bottom_center=(u + float(noise[0]), v + float(noise[1])),
                size=(obj.width, obj.length),
                yaw=image_yaw,
                class_id=obj.class_id,
                confidence=conf,
                camera_id=cam.rig.camera_id,
                frame=frame_gt.frame,
                timestamp=frame_gt.t,
            )
        )
    n_fp = int(rng.poisson(sensor.false_positive_rate)) if sensor.false_positive_rate else 0
    for _ in range(n_fp):
        for _ in range(100):
            u = float(rng.uniform(-0.5, cam.rig.width - 0.5))
            v = float(rng.uniform(-0.5, cam.rig.height - 0.5))
            if cam.rig.segment_at_pixel(u, v) > 0:
                try:
                    cam.rig.pixel_to_world(u, v)
                except Exception:
                    continue
                dets.append(
                    Detection(
                        bottom_center=(u, v),
                        size=(1.8, 4.5),
                        yaw=float(rng.uniform(-math.pi, math.pi)),
                        class_id=int(rng.integers(0, 3)),
                        confidence=float(rng.uniform(0.0, sensor.fp_conf_max)),
                        camera_id=cam.rig.camera_id,
                        frame=frame_gt.frame,
                        timestamp=frame_gt.t,
                    )
                )
                break
    return dets


GROUND_TRUTH_FIELDS = ["frame", "t", "vehicle_id", "x", "y", "yaw", "w", "l", "class"]


def write_ground_truth_csv(path, frames) -> None:
    import csv

    from .datatypes import fmt

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(GROUND_TRUTH_FIELDS)
        for fr in frames:
            for o in fr.objects:
                w.writerow(
                    [
                        fr.frame,
                        fmt(fr.t),
                        o.vehicle_id,
                        fmt(o.x),
                        fmt(o.y),
                        fmt(o.yaw),
                        fmt(o.width),
                        fmt(o.length),
                        o.class_id,
                    ]
                )


def read_ground_truth_csv(path) -> list[FrameGroundTruth]:
    import csv
    from collections import defaultdict

    rows = defaultdict(list)
    times = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            k = int(row["frame"])
            times[k] = float(row["t"])
            rows[k].append(
                GroundTruthObject(
                    vehicle_id=int(row["vehicle_id"]),
                    x=float(row["x"]),
                    y=float(row["y"]),
                    yaw=float(row["yaw"]),
                    width=float(row["w"]),
                    length=float(row["l"]),
                    class_id=int(row["class"]),
                )
            )
    return [
        FrameGroundTruth(frame=k, t=times[k], objects=tuple(rows[k]))
        for k in sorted(times)
    ]
