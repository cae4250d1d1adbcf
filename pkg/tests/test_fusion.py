import pytest

from roadpercept.datatypes import WorldDetection
from roadpercept.fusion import FusionParams, build_regions, fuse


def _det(x, y, cam, conf=0.9, t=0.0, frame=0):
    return WorldDetection(
        x=x, y=y, s=8.1, r=2.5, yaw=0.0, class_id=0, confidence=conf,
        camera_id=cam, frame=frame, timestamp=t,
    )


POSITIONS = {
    "cam0": (-30.0, -30.0),
    "cam1": (30.0, -30.0),
    "cam2": (-30.0, 30.0),
    "cam3": (30.0, 30.0),
}


def test_assign_nearest_camera():
    part = build_regions(POSITIONS)
    assert part.assign(-29.0, -29.0) == "cam0"
    assert part.assign(29.0, 31.0) == "cam3"
    assert part.assign(-100.0, 30.0) == "cam2"


def test_assign_tie_breaks_low_id():
    part = build_regions(POSITIONS)
    # The scene center is equidistant from all four cameras.
    assert part.assign(0.0, 0.0) == "cam0"
    # On the vertical midline between cam1 and cam3.
    assert part.assign(30.0, 0.0) == "cam1"


def test_build_regions_validation():
    with pytest.raises(ValueError):
        build_regions({})
    with pytest.raises(ValueError):
        build_regions({"a": (0.0, 0.0), "b": (0.0, 0.0)})


def test_fuse_keeps_own_cell_only():
    part = build_regions(POSITIONS)
    # The same physical object near cam0, seen by two cameras.
    per_cam = {
        "cam0": [_det(-20.0, -20.0, "cam0")],
        "cam1": [_det(-20.1, -19.9, "cam1")],
    }
    out = fuse(per_cam, part, FusionParams())
    assert len(out) == 1
    assert out[0].camera_id == "cam0"


def test_fuse_confidence_threshold():
    part = build_regions(POSITIONS)
    per_cam = {
        "cam0": [_det(-20.0, -20.0, "cam0", conf=0.49)],
        "cam3": [_det(20.0, 20.0, "cam3", conf=0.51)],
    }
    out = fuse(per_cam, part, FusionParams(conf_threshold=0.5))
    assert [d.camera_id for d in out] == ["cam3"]


def test_fuse_output_order():
    part = build_regions(POSITIONS)
    per_cam = {
        "cam3": [_det(20.0, 20.0, "cam3", conf=0.8, t=0.1, frame=1)],
        "cam0": [
            _det(-20.0, -20.0, "cam0", conf=0.6, t=0.1, frame=1),
            _det(-25.0, -25.0, "cam0", conf=0.9, t=0.0, frame=0),
        ],
    }
    out = fuse(per_cam, part, FusionParams())
    keys = [(d.timestamp, -d.confidence, d.camera_id) for d in out]
    assert keys == sorted(keys)
    assert out[0].timestamp == 0.0
    assert out[1].camera_id == "cam3"  # higher confidence at t=0.1


def test_fusion_params_validation():
    with pytest.raises(ValueError):
        FusionParams(conf_threshold=1.5)
