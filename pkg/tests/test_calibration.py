import math

import numpy as np
import pytest

from roadpercept.calibration import (
    CameraRig,
    LandmarkPair,
    SegmentSpec,
    apply_homography,
    calibrate_rig,
    calibration_report,
    estimate_homography_dlt,
    estimate_homography_ransac,
    full_image_segment,
    group_pairs_by_segment,
    normalize_homography,
    quadrant_segments,
)
from roadpercept.errors import (
    DegenerateConfigurationError,
    InsufficientPairsError,
    NoConsensusError,
)
from roadpercept.metrics import RoiSpec
from roadpercept.sim import default_corner_mounts, make_camera, world_to_pixel

H_TRUE = np.array(
    [
        [0.05, 0.003, -12.0],
        [-0.002, 0.048, 7.5],
        [1.0e-5, -2.0e-5, 1.0],
    ]
)


def _sample_pairs(n, rng, h=H_TRUE):
    src = rng.uniform(0.0, 1000.0, size=(n, 2))
    dst = apply_homography(h, src)
    return src, dst


def test_dlt_exact_recovery(rng):
    src, dst = _sample_pairs(12, rng)
    h = estimate_homography_dlt(src, dst)
    assert np.allclose(h, H_TRUE, atol=1e-10)


def test_dlt_minimal_four_points(rng):
    src, dst = _sample_pairs(4, rng)
    h = estimate_homography_dlt(src, dst)
    back = apply_homography(h, src)
    assert np.allclose(back, dst, atol=1e-8)


def test_dlt_insufficient_and_degenerate(rng):
    src, dst = _sample_pairs(3, rng)
    with pytest.raises(InsufficientPairsError):
        estimate_homography_dlt(src, dst)
    # Collinear points have no unique homography.
    line = np.column_stack([np.linspace(0, 100, 8), np.linspace(0, 50, 8)])
    with pytest.raises(DegenerateConfigurationError):
        estimate_homography_dlt(line, apply_homography(H_TRUE, line))
    coincident = np.tile([[5.0, 5.0]], (6, 1))
    with pytest.raises(DegenerateConfigurationError):
        estimate_homography_dlt(coincident, coincident)


def test_dlt_invariant_to_coordinate_scale(rng):
    # Hartley normalization: same homography whether pixels are in units or
    # thousands of units.
    src, dst = _sample_pairs(20, rng)
    h1 = estimate_homography_dlt(src, dst)
    s = np.diag([1000.0, 1000.0, 1.0])
    h2 = estimate_homography_dlt(src / 1000.0, dst)
    assert np.allclose(h2, normalize_homography(h1 @ s), rtol=1e-6, atol=1e-8)


def test_ransac_clean_data_all_inliers(rng):
    src, dst = _sample_pairs(30, rng)
    h, mask = estimate_homography_ransac(src, dst, seed=0)
    assert mask.all()
    assert np.allclose(h, H_TRUE, atol=1e-8)


def test_ransac_rejects_outliers(rng):
    src, dst = _sample_pairs(40, rng)
    bad = rng.choice(40, size=12, replace=False)
    dst = dst.copy()
    dst[bad] += rng.uniform(5.0, 30.0, size=(12, 2))
    h, mask = estimate_homography_ransac(src, dst, seed=0)
    assert not mask[bad].any()
    assert mask.sum() == 28
    res = np.linalg.norm(apply_homography(h, src[mask]) - dst[mask], axis=1)
    assert res.max() < 1e-6


def test_ransac_minimal_sample_cannot_validate(rng):
    # With exactly 4 pairs every candidate fits perfectly, so consensus is
    # meaningless even if one pair is grossly wrong.
    src, dst = _sample_pairs(4, rng)
    dst = dst.copy()
    dst[0] += 50.0
    with pytest.raises(NoConsensusError):
        estimate_homography_ransac(src, dst)


def test_ransac_no_consensus(rng):
    src = rng.uniform(0.0, 100.0, size=(12, 2))
    dst = rng.uniform(0.0, 100.0, size=(12, 2))  # pure noise
    with pytest.raises(NoConsensusError):
        estimate_homography_ransac(src, dst, iters=50, inlier_thresh=1e-6, seed=1)


def test_ransac_deterministic(rng):
    src, dst = _sample_pairs(25, rng)
    dst = dst.copy()
    dst[:5] += 20.0
    h1, m1 = estimate_homography_ransac(src, dst, seed=7)
    h2, m2 = estimate_homography_ransac(src, dst, seed=7)
    assert np.array_equal(h1, h2)
    assert np.array_equal(m1, m2)


def test_segment_contains_and_validation():
    seg = full_image_segment(100, 80)
    assert seg.contains((0.0, 0.0))[0]
    assert seg.contains((99.0, 79.0))[0]
    assert not seg.contains((100.0, 40.0))[0]
    with pytest.raises(ValueError):
        SegmentSpec(polygon=np.array([[0, 0], [1, 1]]), index=1)
    with pytest.raises(ValueError):
        SegmentSpec(polygon=np.array([[0, 0], [2, 2], [2, 0], [0, 2]]), index=1)  # bowtie
    with pytest.raises(ValueError):
        SegmentSpec(polygon=np.array([[0, 0], [1, 0], [1, 1]]), index=0)


def test_quadrants_tile_image():
    segs = quadrant_segments(100, 100, 50.0, 50.0)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.49, 99.49, size=(500, 2))
    counts = sum(seg.contains(pts).astype(int) for seg in segs)
    # Interior points away from the splitting lines belong to exactly one quad.
    off_split = (np.abs(pts[:, 0] - 50.0) > 1e-6) & (np.abs(pts[:, 1] - 50.0) > 1e-6)
    assert (counts[off_split] == 1).all()
    assert (counts >= 1).all()


def test_group_pairs_by_segment():
    segs = quadrant_segments(100, 100, 50.0, 50.0)
    pairs = [
        LandmarkPair(pixel=(10.0, 10.0), world=(0.0, 0.0), id="a"),
        LandmarkPair(pixel=(80.0, 10.0), world=(0.0, 0.0), id="b"),
        LandmarkPair(pixel=(10.0, 80.0), world=(0.0, 0.0), id="c"),
        LandmarkPair(pixel=(80.0, 80.0), world=(0.0, 0.0), id="d"),
    ]
    groups = group_pairs_by_segment(pairs, segs)
    assert [len(g) for g in groups] == [1, 1, 1, 1]
    assert groups[0][0].id == "a"
    assert groups[3][0].id == "d"


def _synthetic_landmarks(cam, per_quadrant=12, seed=3, noise_px=0.0):
    rig = cam.rig
    px, py = cam.mount.position
    rng = np.random.default_rng(seed)
    groups = [[] for _ in rig.segments]
    counts = [0] * len(rig.segments)
    while min(counts) < per_quadrant:
        x = px + rng.uniform(-20.0, 20.0)
        y = py + rng.uniform(-20.0, 20.0)
        try:
            u, v = world_to_pixel(rig, x, y)
        except Exception:
            continue
        seg = rig.segment_at_pixel(u, v)
        if seg == 0 or counts[seg - 1] >= per_quadrant:
            continue
        if noise_px > 0.0:
            u += rng.normal(0.0, noise_px)
            v += rng.normal(0.0, noise_px)
        counts[seg - 1] += 1
        groups[seg - 1].append(LandmarkPair(pixel=(u, v), world=(x, y)))
    return groups


def test_calibrate_fisheye_recovers_mapping(corner_cams):
    cam = corner_cams["cam0"]
    groups = _synthetic_landmarks(cam)
    rig = calibrate_rig(
        groups, (cam.rig.width, cam.rig.height), cam.rig.segments, kind="fisheye"
    )
    assert rig.rmse < 1e-4
    # The recovered mapping must agree with the true one on held-out points.
    rng = np.random.default_rng(8)
    checked = 0
    while checked < 40:
        x = cam.mount.position[0] + rng.uniform(-18.0, 18.0)
        y = cam.mount.position[1] + rng.uniform(-18.0, 18.0)
        try:
            u, v = world_to_pixel(cam.rig, x, y)
        except Exception:
            continue
        wx, wy = rig.pixel_to_world(u, v)
        assert math.hypot(wx - x, wy - y) < 5e-3
        checked += 1


def test_calibrate_pinhole():
    mount = default_corner_mounts(kind="pinhole", height=10.0)[0]
    cam = make_camera(mount)
    rng = np.random.default_rng(6)
    group = []
    while len(group) < 20:
        u = rng.uniform(10.0, cam.rig.width - 10.0)
        v = rng.uniform(10.0, cam.rig.height - 10.0)
        try:
            x, y = cam.rig.pixel_to_world(u, v)
        except Exception:
            continue
        if math.hypot(x - mount.position[0], y - mount.position[1]) > 120.0:
            continue
        group.append(LandmarkPair(pixel=(u, v), world=(x, y)))
    rig = calibrate_rig(
        [group],
        (cam.rig.width, cam.rig.height),
        [full_image_segment(cam.rig.width, cam.rig.height)],
        kind="pinhole",
        intrinsics=cam.rig.intrinsics,
    )
    assert rig.rmse < 1e-6


def test_calibrate_requires_four_per_segment():
    segs = quadrant_segments(100, 100, 50.0, 50.0)
    groups = [[LandmarkPair(pixel=(1.0, 1.0), world=(0.0, 0.0))], [], [], []]
    with pytest.raises(InsufficientPairsError):
        calibrate_rig(groups, (100, 100), segs, kind="fisheye")


def test_rig_serialization_round_trip(corner_cams):
    rig = corner_cams["cam1"].rig
    clone = CameraRig.from_dict(rig.to_dict())
    assert clone.camera_id == rig.camera_id
    assert clone.kind == rig.kind
    for h1, h2 in zip(clone.homographies, rig.homographies):
        assert np.allclose(h1, h2)
    u, v = 300.7, 512.2
    assert np.allclose(clone.pixel_to_world(u, v), rig.pixel_to_world(u, v))


def test_world_pixel_round_trip(corner_cams):
    rig = corner_cams["cam2"].rig
    px, py = corner_cams["cam2"].mount.position
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 50:
        x = px + rng.uniform(-25.0, 25.0)
        y = py + rng.uniform(-25.0, 25.0)
        try:
            u, v = rig.world_to_pixel(x, y)
        except Exception:
            continue
        wx, wy = rig.pixel_to_world(u, v)
        assert math.hypot(wx - x, wy - y) < 1e-6
        checked += 1


def test_calibration_report_roi_split(corner_cams):
    cam = corner_cams["cam0"]
    groups = _synthetic_landmarks(cam, per_quadrant=6, seed=12)
    pairs = [p for g in groups for p in g]
    roi = RoiSpec(kind="circular", center=cam.mount.position, radius=10.0)
    report = calibration_report(cam.rig, pairs, roi)
    assert len(report.ids) == len(pairs)
    assert report.in_roi.sum() + (~report.in_roi).sum() == len(pairs)
    assert report.in_roi_mean < 1e-6  # exact rig, exact landmarks
    exp = [
        math.hypot(p.world[0] - cam.mount.position[0], p.world[1] - cam.mount.position[1]) <= 10.0
        for p in pairs
    ]
    assert list(report.in_roi) == exp
