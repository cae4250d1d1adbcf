"""Detection records shared by the localization, fusion, and tracking stages."""

from __future__ import annotations

import csv
from dataclasses import dataclass


def fmt(x: float) -> str:
    """Canonical float formatting for deterministic CSV output."""
    return format(float(x), ".9g")


@dataclass(frozen=True)
class Detection:
    """Image-space detection: bottom-center pixel plus metric attributes."""

    bottom_center: tuple[float, float]
    size: tuple[float, float]  # (width, length) meters
    yaw: float  # image-plane heading, radians
    class_id: int
    confidence: float
    camera_id: str
    frame: int
    timestamp: float


@dataclass(frozen=True)
class WorldDetection:
    """A detection lifted to world coordinates."""

    x: float
    y: float
    s: float  # footprint area, m^2
    r: float  # aspect ratio, length / width
    yaw: float  # world-frame heading, radians
    class_id: int
    confidence: float
    camera_id: str
    frame: int
    timestamp: float

    def __post_init__(self):
        if not (self.s > 0.0 and self.r > 0.0):
            raise ValueError("footprint area and aspect ratio must be positive")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")


WORLD_DETECTION_FIELDS = [
    "frame",
    "timestamp",
    "camera_id",
    "x",
    "y",
    "s",
    "r",
    "yaw",
    "class_id",
    "confidence",
]


def write_world_detections_csv(path, detections) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(WORLD_DETECTION_FIELDS)
        for d in detections:
            w.writerow(
                [
                    d.frame,
                    fmt(d.timestamp),
                    d.camera_id,
                    fmt(d.x),
                    fmt(d.y),
                    fmt(d.s),
                    fmt(d.r),
                    fmt(d.yaw),
                    d.class_id,
                    fmt(d.confidence),
                ]
            )


def read_world_detections_csv(path) -> list[WorldDetection]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                WorldDetection(
                    x=float(row["x"]),
                    y=float(row["y"]),
                    s=float(row["s"]),
                    r=float(row["r"]),
                    yaw=float(row["yaw"]),
                    class_id=int(row["class_id"]),
                    confidence=float(row["confidence"]),
                    camera_id=row["camera_id"],
                    frame=int(row["frame"]),
                    timestamp=float(row["timestamp"]),
                )
            )
    return out
