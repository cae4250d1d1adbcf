"""Pre-tracking cross-camera fusion.

The ground plane is partitioned into nearest-camera cells; each camera keeps
only its high-confidence detections that fall inside its own cell, so the
merged stream carries at most one detection per physical object per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datatypes import WorldDetection


@dataclass(frozen=True)
class FusionParams:
    conf_threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.conf_threshold <= 1.0):
            raise ValueError("conf_threshold must lie in [0, 1]")


@dataclass
class RegionPartition:
    """Nearest-camera (Voronoi) partition; ties go to the lowest camera id."""

    camera_ids: list
    positions: np.ndarray  # (N, 2), ordered by camera id

    def assign(self, x: float, y: float):
        d2 = ((self.positions - np.array([x, y])) ** 2).sum(axis=1)
        # argmin returns the first minimum; ids are sorted, so ties break low.
        return self.camera_ids[int(np.argmin(d2))]


def build_regions(camera_positions: dict) -> RegionPartition:
    """Build the partition from {camera_id: (x, y)}; positions must be distinct."""
    if not camera_positions:
        raise ValueError("need at least one camera")
    ids = sorted(camera_positions)
    pos = np.array([camera_positions[c] for c in ids], dtype=float)
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if np.allclose(pos[i], pos[j]):
                raise ValueError(f"duplicate camera position for {ids[i]} and {ids[j]}")
    return RegionPartition(camera_ids=ids, positions=pos)


def fuse(
    per_camera_detections: dict,
    partition: RegionPartition,
    params: FusionParams = FusionParams(),
) -> list[WorldDetection]:
    """Merge per-camera world detections into one stream.

    A detection from camera c survives iff its confidence clears the
    threshold and its position lies in c's cell.  Output is sorted by
    timestamp, then confidence descending, then camera id.
    """
    kept = []
    for camera_id in sorted(per_camera_detections):
        for det in per_camera_detections[camera_id]:
            if det.confidence < params.conf_threshold:
                continue
            if partition.assign(det.x, det.y) != det.camera_id:
                continue
            kept.append(det)
    kept.sort(key=lambda d: (d.timestamp, -d.confidence, d.camera_id))
    return kept
