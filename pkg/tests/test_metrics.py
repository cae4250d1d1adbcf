import math

import numpy as np
import pytest

from roadpercept.errors import ScenarioError
from roadpercept.metrics import (
    LocalizationRun,
    RoiSpec,
    box_iou,
    fusion_comparison,
    id_consistency,
    pose_size_error,
    trajectory_error,
    voc07_ap,
)
from roadpercept.sim import FrameGroundTruth, GroundTruthObject
from roadpercept.tracking import TrackState


def test_box_iou_values():
    a = (0.0, 0.0, 10.0, 10.0)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, (10.0, 10.0, 20.0, 20.0)) == 0.0
    # [DERIVED] half overlap: inter 50, union 150
    assert box_iou(a, (5.0, 0.0, 15.0, 10.0)) == pytest.approx(50.0 / 150.0)


def test_roi_spec_circular():
    roi = RoiSpec(kind="circular", center=(1.0, 2.0), radius=5.0)
    assert roi.contains(1.0, 7.0)
    assert not roi.contains(1.0, 7.01)
    with pytest.raises(ValueError):
        RoiSpec(kind="weird")
    with pytest.raises(ValueError):
        RoiSpec(radius=0.0)


def test_roi_spec_fov():
    roi = RoiSpec(kind="fov", center=(0.0, 0.0), max_range=100.0,
                  fov_direction=0.0, fov_half_angle=math.pi / 4.0)
    assert roi.contains(50.0, 0.0)
    assert roi.contains(50.0, 49.0)
    assert not roi.contains(50.0, 51.0)  # outside the 45-degree half angle
    assert not roi.contains(150.0, 0.0)  # beyond max range
    assert not roi.contains(-50.0, 0.0)  # behind


def test_voc07_perfect_detections():
    gts = [(0, (0.0, 0.0, 10.0, 10.0)), (1, (5.0, 5.0, 15.0, 15.0))]
    dets = [(0, (0.0, 0.0, 10.0, 10.0), 0.9), (1, (5.0, 5.0, 15.0, 15.0), 0.8)]
    assert voc07_ap(dets, gts) == pytest.approx(1.0)


def test_voc07_single_fp():
    gts = [(0, (0.0, 0.0, 10.0, 10.0))]
    dets = [(0, (50.0, 50.0, 60.0, 60.0), 0.9)]
    assert voc07_ap(dets, gts) == 0.0


def test_voc07_duplicate_detection_is_fp():
    # The second detection of an already-matched ground truth counts as FP.
    gts = [(0, (0.0, 0.0, 10.0, 10.0))]
    dets = [
        (0, (0.0, 0.0, 10.0, 10.0), 0.9),
        (0, (0.5, 0.5, 10.5, 10.5), 0.8),
    ]
    # [DERIVED] recall hits 1.0 at rank 1 with precision 1 -> all 11 points 1.
    assert voc07_ap(dets, gts) == pytest.approx(1.0)


def test_voc07_iou_threshold():
    gts = [(0, (0.0, 0.0, 10.0, 10.0))]
    dets = [(0, (5.0, 0.0, 15.0, 10.0), 0.9)]  # IoU 1/3
    assert voc07_ap(dets, gts, iou_threshold=0.5) == 0.0
    assert voc07_ap(dets, gts, iou_threshold=0.3) == pytest.approx(1.0)


def test_trajectory_error_on_polyline_zero():
    poly = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
    pts = np.array([[0.0, 0.0], [5.0, 0.0], [10.0, 3.0], [10.0, 10.0]])
    stats = trajectory_error(pts, poly)
    assert np.allclose(stats.errors, 0.0)
    assert stats.in_roi_mean == 0.0


def test_trajectory_error_perpendicular():
    poly = np.array([[0.0, 0.0], [10.0, 0.0]])
    stats = trajectory_error(np.array([[5.0, 2.0]]), poly)
    assert stats.errors[0] == pytest.approx(2.0, abs=1e-12)
    # Beyond an endpoint the distance is to the endpoint itself.
    stats = trajectory_error(np.array([[13.0, 4.0]]), poly)
    assert stats.errors[0] == pytest.approx(5.0, abs=1e-12)


def test_trajectory_error_roi_split():
    poly = np.array([[-50.0, 0.0], [50.0, 0.0]])
    roi = RoiSpec(kind="circular", center=(0.0, 0.0), radius=25.0)
    pts = np.array([[0.0, 1.0], [40.0, 3.0]])
    stats = trajectory_error(pts, poly, roi)
    assert stats.n_in == 1 and stats.n_out == 1
    assert stats.in_roi_mean == pytest.approx(1.0)
    assert stats.out_roi_mean == pytest.approx(3.0)


def test_trajectory_error_validation():
    with pytest.raises(ValueError):
        trajectory_error(np.zeros((0, 2)), np.array([[0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        trajectory_error(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]))


def test_pose_size_error():
    yaw_deg, size_err = pose_size_error(
        [0.1, math.pi - 0.05], [0.0, -math.pi + 0.05],
        [[1.8, 4.5]], [[1.8, 4.4]],
    )
    # Wrapped heading differences: 0.1 rad and 0.1 rad across the cut.
    assert yaw_deg == pytest.approx(math.degrees(0.1), abs=1e-9)
    assert size_err == pytest.approx(0.1, abs=1e-12)
    assert pose_size_error([], [], np.zeros((0, 2)), np.zeros((0, 2))) == (0.0, 0.0)


def test_fusion_comparison():
    fused = LocalizationRun(scenario_id="s1", errors=np.array([0.1, 0.2]))
    singles = {
        "cam0": LocalizationRun(scenario_id="s1", errors=np.array([0.5, 0.7])),
        "cam1": LocalizationRun(scenario_id="s1", errors=np.array([0.4])),
    }
    out = fusion_comparison(singles, fused)
    assert out["fused_mean"] == pytest.approx(0.15)
    assert out["single_mean_average"] == pytest.approx((0.6 + 0.4) / 2.0)
    assert out["fused_better"]


def test_fusion_comparison_scenario_mismatch():
    fused = LocalizationRun(scenario_id="s1", errors=np.array([0.1]))
    singles = {"cam0": LocalizationRun(scenario_id="s2", errors=np.array([0.5]))}
    with pytest.raises(ScenarioError):
        fusion_comparison(singles, fused)


def _gt_frame(frame, t, positions):
    objs = tuple(
        GroundTruthObject(vehicle_id=vid, x=x, y=y, yaw=0.0, width=1.8, length=4.5, class_id=0)
        for vid, (x, y) in positions.items()
    )
    return FrameGroundTruth(frame=frame, t=t, objects=objs)


def _state(tid, x, y, t):
    return TrackState(track_id=tid, x=x, y=y, vx=0.0, vy=0.0, s=8.1, r=2.5,
                      class_id=0, timestamp=t, camera_ids=("cam0",))


def test_id_consistency_stable():
    gt = [_gt_frame(k, 0.1 * k, {7: (1.0 * k, 0.0)}) for k in range(5)]
    states = [_state(3, 1.0 * k, 0.05, 0.1 * k) for k in range(5)]
    assert id_consistency(states, gt) == 0


def test_id_consistency_counts_switch():
    gt = [_gt_frame(k, 0.1 * k, {7: (1.0 * k, 0.0)}) for k in range(5)]
    states = [_state(3 if k < 3 else 9, 1.0 * k, 0.05, 0.1 * k) for k in range(5)]
    assert id_consistency(states, gt) == 1


def test_id_consistency_gap_is_not_switch():
    # Losing the track for a frame and regaining the same id is no switch.
    gt = [_gt_frame(k, 0.1 * k, {7: (1.0 * k, 0.0)}) for k in range(5)]
    states = [_state(3, 1.0 * k, 0.05, 0.1 * k) for k in range(5) if k != 2]
    assert id_consistency(states, gt) == 0


def test_id_consistency_match_distance():
    gt = [_gt_frame(0, 0.0, {7: (0.0, 0.0)})]
    states = [_state(3, 5.0, 0.0, 0.0)]
    assert id_consistency(states, gt, match_dist=2.0) == 0  # too far to match
