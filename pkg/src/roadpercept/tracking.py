"""World-coordinate multi-object tracking (SORT-style).

Constant-velocity Kalman filter over the 8-dim state
[x, y, s, r, vx, vy, vs, vr], Hungarian association on Euclidean center
distance in meters with a hard gate, and a frame-counted track lifecycle:
tracks die after ``max_age`` consecutive undetected frames and are reported
once confirmed by ``min_hits`` consecutive detections.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .datatypes import WorldDetection, fmt
from .errors import NumericalError, TimeRegressionError

_S_FLOOR = 1e-6


@dataclass(frozen=True)
class TrackerParams:
    max_age: int = 3  # consecutive undetected frames before a track dies
    min_hits: int = 2
    gate_dist: float = 3.0  # meters
    q_pos: float = 1e-2
    q_s: float = 1e-2
    q_r: float = 1e-4
    # Velocity process noise sized for turning vehicles (a ~ v^2/R); a stiff
    # constant-velocity model lags on arcs until tracks fall out of the gate.
    q_vel: float = 1.0
    q_vs: float = 0.1
    q_vr: float = 1e-3
    r_pos: float = 0.25  # m^2 (variance)
    r_s: float = 0.25
    r_r: float = 0.01

    def __post_init__(self):
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")


@dataclass(frozen=True)
class TrackState:
    """Immutable snapshot of a confirmed track."""

    track_id: int
    x: float
    y: float
    vx: float
    vy: float
    s: float
    r: float
    class_id: int
    timestamp: float
    camera_ids: tuple


def _check_spd(p: np.ndarray) -> None:
    try:
        np.linalg.cholesky(0.5 * (p + p.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance lost positive definiteness") from exc


_H = np.hstack([np.eye(4), np.zeros((4, 4))])


class KalmanTrack:
    """One track's filter state and lifecycle counters."""

    def __init__(self, track_id: int, det: WorldDetection, params: TrackerParams):
        self.id = track_id
        self.params = params
        self.x = np.array([det.x, det.y, det.s, det.r, 0.0, 0.0, 0.0, 0.0])
        # Measured components start at measurement noise; velocities are vague.
        self.P = np.diag(
            [params.r_pos, params.r_pos, params.r_s, params.r_r, 100.0, 100.0, 10.0, 1.0]
        )
        self.time_since_update = 0
        self.hit_streak = 1
        self.hits = 1
        self.class_id = det.class_id
        self.last_timestamp = det.timestamp
        self.camera_ids = {det.camera_id}

    @property
    def measurement_noise(self) -> np.ndarray:
        p = self.params
        return np.diag([p.r_pos, p.r_pos, p.r_s, p.r_r])

    def predict(self, dt: float) -> None:
        """Constant-velocity propagation by dt seconds."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        f = np.eye(8)
        f[:4, 4:] = dt * np.eye(4)
        p = self.params
        q = dt * np.diag([p.q_pos, p.q_pos, p.q_s, p.q_r, p.q_vel, p.q_vel, p.q_vs, p.q_vr])
        self.x = f @ self.x
        self.x[2] = max(self.x[2], _S_FLOOR)
        self.P = f @ self.P @ f.T + q
        _check_spd(self.P)
        if self.time_since_update > 0:
            self.hit_streak = 0
        self.time_since_update += 1
        self.last_timestamp += dt

    def update(self, det: WorldDetection) -> None:
        """Joseph-form Kalman update with measurement [x, y, s, r]."""
        z = np.array([det.x, det.y, det.s, det.r])
        r = self.measurement_noise
        s_mat = _H @ self.P @ _H.T + r
        k = self.P @ _H.T @ np.linalg.inv(s_mat)
        self.x = self.x + k @ (z - _H @ self.x)
        self.x[2] = max(self.x[2], _S_FLOOR)
        i_kh = np.eye(8) - k @ _H
        self.P = i_kh @ self.P @ i_kh.T + k @ r @ k.T
        _check_spd(self.P)
        self.time_since_update = 0
        self.hit_streak += 1
        self.hits += 1
        self.class_id = det.class_id
        self.last_timestamp = det.timestamp
        self.camera_ids.add(det.camera_id)

    def snapshot(self, timestamp: float) -> TrackState:
        return TrackState(
            track_id=self.id,
            x=float(self.x[0]),
            y=float(self.x[1]),
            vx=float(self.x[4]),
            vy=float(self.x[5]),
            s=float(self.x[2]),
            r=float(self.x[3]),
            class_id=self.class_id,
            timestamp=timestamp,
            camera_ids=tuple(sorted(self.camera_ids)),
        )


def associate(
    track_positions: np.ndarray,
    detection_positions: np.ndarray,
    gate_dist: float,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Optimal assignment on Euclidean distance with a hard gate.

    Returns (matches, unmatched_track_indices, unmatched_detection_indices).
    Pairs whose distance exceeds ``gate_dist`` are broken into unmatched.
    """
    track_positions = np.asarray(track_positions, dtype=float).reshape(-1, 2)
    detection_positions = np.asarray(detection_positions, dtype=float).reshape(-1, 2)
    nt, nd = len(track_positions), len(detection_positions)
    if nt == 0 or nd == 0:
        return [], list(range(nt)), list(range(nd))
    diff = track_positions[:, None, :] - detection_positions[None, :, :]
    cost = np.sqrt((diff**2).sum(axis=2))
    rows, cols = linear_sum_assignment(cost)
    matches = []
    unmatched_t = set(range(nt))
    unmatched_d = set(range(nd))
    for r, c in zip(rows, cols):
        if cost[r, c] > gate_dist:
            continue
        matches.append((int(r), int(c)))
        unmatched_t.discard(int(r))
        unmatched_d.discard(int(c))
    return matches, sorted(unmatched_t), sorted(unmatched_d)


class Tracker:
    """Sequential multi-object tracker; one instance per detection stream."""

    def __init__(self, params: TrackerParams = TrackerParams()):
        self.params = params
        self.tracks: list[KalmanTrack] = []
        self._next_id = 1
        self._last_timestamp: float | None = None
        self._frame_count = 0

    def step(self, detections: list[WorldDetection], timestamp: float) -> list[TrackState]:
        """Advance one frame; returns snapshots of confirmed, updated tracks."""
        if self._last_timestamp is not None and timestamp < self._last_timestamp:
            raise TimeRegressionError(
                f"timestamp went backwards: {timestamp} < {self._last_timestamp}"
            )
        self._frame_count += 1
        dt = None if self._last_timestamp is None else timestamp - self._last_timestamp
        if dt is not None and dt > 0.0:
            for trk in self.tracks:
                trk.predict(dt)
        self._last_timestamp = timestamp

        t_pos = np.array([[t.x[0], t.x[1]] for t in self.tracks]).reshape(-1, 2)
        d_pos = np.array([[d.x, d.y] for d in detections]).reshape(-1, 2)
        matches, _, unmatched_d = associate(t_pos, d_pos, self.params.gate_dist)
        for ti, di in matches:
            self.tracks[ti].update(detections[di])
        for di in unmatched_d:
            self.tracks.append(KalmanTrack(self._next_id, detections[di], self.params))
            self._next_id += 1
        self.tracks = [t for t in self.tracks if t.time_since_update <= self.params.max_age]

        out = []
        for trk in self.tracks:
            if trk.time_since_update > 0:
                continue
            if trk.hit_streak >= self.params.min_hits or self._frame_count <= self.params.min_hits:
                out.append(trk.snapshot(timestamp))
        out.sort(key=lambda t: t.track_id)
        return out


TRACK_FIELDS = ["timestamp", "track_id", "x", "y", "vx", "vy", "s", "r", "class_id", "camera_ids"]


def write_tracks_csv(path, states) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACK_FIELDS)
        for t in states:
            w.writerow(
                [
                    fmt(t.timestamp),
                    t.track_id,
                    fmt(t.x),
                    fmt(t.y),
                    fmt(t.vx),
                    fmt(t.vy),
                    fmt(t.s),
                    fmt(t.r),
                    t.class_id,
                    ";".join(t.camera_ids),
                ]
            )


def read_tracks_csv(path) -> list[TrackState]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                TrackState(
                    track_id=int(row["track_id"]),
                    x=float(row["x"]),
                    y=float(row["y"]),
                    vx=float(row["vx"]),
                    vy=float(row["vy"]),
                    s=float(row["s"]),
                    r=float(row["r"]),
                    class_id=int(row["class_id"]),
                    timestamp=float(row["timestamp"]),
                    camera_ids=tuple(row["camera_ids"].split(";")) if row["camera_ids"] else (),
                )
            )
    return out
