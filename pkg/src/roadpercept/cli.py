"""Command-line front end: calibrate, gen-masks, run, eval, plot.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .calibration import (
    CameraRig,
    LandmarkPair,
    SegmentSpec,
    calibrate_rig,
    calibration_report,
    full_image_segment,
    group_pairs_by_segment,
    quadrant_segments,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateConfigurationError,
    InsufficientPairsError,
    NoConsensusError,
    NumericalError,
    PerceptionError,
    ScenarioError,
)
from .fusion import FusionParams
from .geo import enu_from_lonlat
from .localization import build_masks, save_masks
from .metrics import RoiSpec
from .pipeline import run_pipeline
from .sim import Scenario, read_ground_truth_csv
from .tracking import TrackerParams, read_tracks_csv

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_NUMERICAL_ERRORS = (
    ConvergenceError,
    DegenerateConfigurationError,
    InsufficientPairsError,
    NoConsensusError,
    NumericalError,
    np.linalg.LinAlgError,
)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _NUMERICAL_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (ConfigError, ScenarioError, PerceptionError, KeyError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


@click.group()
def main():
    """Roadside perception pipeline tools."""


def _load_landmarks(path: Path, origin):
    pairs = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id", "pixel_u", "pixel_v", "lon", "lat"]:
            raise ConfigError(
                f"{path}: expected header 'id,pixel_u,pixel_v,lon,lat'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ConfigError(f"{path}: malformed row at line {lineno}")
            try:
                u, v, lon, lat = (float(x) for x in row[1:])
            except ValueError:
                raise ConfigError(f"{path}: non-numeric value at line {lineno}")
            world = enu_from_lonlat(lon, lat, *origin)
            pairs.append(LandmarkPair(pixel=(u, v), world=world, id=row[0]))
    ids = [p.id for p in pairs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{path}: duplicate landmark ids")
    return pairs


def _segments_from_spec(spec: dict):
    width, height = int(spec["width"]), int(spec["height"])
    if "segments" in spec:
        return [
            SegmentSpec(polygon=np.asarray(s["polygon"], dtype=float), index=int(s["index"]))
            for s in spec["segments"]
        ]
    if spec["kind"] == "fisheye":
        return quadrant_segments(width, height, width / 2.0, height / 2.0)
    return [full_image_segment(width, height)]


@main.command()
@click.option("--landmarks", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--camera", "camera_spec", type=click.Path(exists=True, path_type=Path), required=True,
              help="JSON camera spec: camera_id, kind, width, height, origin_lon, origin_lat")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--roi-radius", type=float, default=25.0, show_default=True)
@_guarded
def calibrate(landmarks, camera_spec, out, roi_radius):
    """Estimate a camera rig from a landmark CSV and write calibration JSON."""
    spec = json.loads(camera_spec.read_text())
    origin = (spec.get("origin_lon", 0.0), spec.get("origin_lat", 0.0))
    pairs = _load_landmarks(landmarks, origin)
    segments = _segments_from_spec(spec)
    groups = group_pairs_by_segment(pairs, segments)
    rig = calibrate_rig(
        groups,
        (int(spec["width"]), int(spec["height"])),
        segments,
        kind=spec["kind"],
        camera_id=spec["camera_id"],
    )
    roi_center = tuple(spec.get("roi_center", spec.get("camera_position", (0.0, 0.0))))
    roi = RoiSpec(kind="circular", center=roi_center, radius=roi_radius)
    report = calibration_report(rig, pairs, roi)
    click.echo(f"{'landmark':>12} {'error_m':>10} {'roi':>6}")
    for lid, err, inside in zip(report.ids, report.errors, report.in_roi):
        click.echo(f"{lid:>12} {err:>10.4f} {'in' if inside else 'out':>6}")
    click.echo(
        f"in-ROI {report.in_roi_mean:.4f} +/- {report.in_roi_std:.4f} m; "
        f"out-ROI {report.out_roi_mean:.4f} +/- {report.out_roi_std:.4f} m; "
        f"rmse {rig.rmse:.3g} m"
    )
    payload = rig.to_dict()
    payload["origin"] = {"lon": origin[0], "lat": origin[1]}
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True))
    click.echo(f"wrote {out}")


@main.command("gen-masks")
@click.option("--calibration", "calibration_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_guarded
def gen_masks(calibration_path, out):
    """Build and save the world-coordinate lookup masks for a calibrated rig."""
    payload = json.loads(calibration_path.read_text())
    rig = CameraRig.from_dict(payload)
    lmap = build_masks(rig)
    origin = payload.get("origin", {})
    lmap.origin_lon = origin.get("lon", 0.0)
    lmap.origin_lat = origin.get("lat", 0.0)
    bin_path, json_path = save_masks(lmap, out)
    covered = float((lmap.segment_index > 0).mean())
    click.echo(f"wrote {bin_path} and {json_path} (coverage {covered:.1%})")


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed")
@click.option("--conf-threshold", type=float, default=0.5, show_default=True)
@_guarded
def run(scenario_path, out, seed, conf_threshold):
    """Run detect -> localize -> fuse -> track over a scenario."""
    scenario = Scenario.from_dict(json.loads(scenario_path.read_text()))
    if seed is not None:
        scenario.seed = seed
    result = run_pipeline(
        scenario,
        out_dir=out,
        tracker_params=TrackerParams(),
        fusion_params=FusionParams(conf_threshold=conf_threshold),
    )
    r = result.report
    click.echo(
        f"{r['n_frames']} frames, {r['n_fused_detections']} fused detections, "
        f"loc err {r['loc_error_mean']:.3f} m, {r['id_switches']} id switches"
    )
    click.echo(f"wrote run to {out}")


def _eval_run_dir(run_dir: Path) -> dict:
    from .metrics import id_consistency
    from .pipeline import _match_errors

    gt_path = run_dir / "gt.csv"
    fused_path = run_dir / "fused.csv"
    if not gt_path.exists() or not fused_path.exists():
        raise ConfigError(f"{run_dir} is not a pipeline run directory")
    from .datatypes import read_world_detections_csv

    gt_frames = read_ground_truth_csv(gt_path)
    fused = read_world_detections_csv(fused_path)
    tracks = read_tracks_csv(run_dir / "tracks.csv")
    errors, unmatched = _match_errors(fused, gt_frames)
    return {
        "n_fused_detections": len(fused),
        "n_unmatched": unmatched,
        "loc_error_mean": float(errors.mean()) if len(errors) else None,
        "loc_error_std": float(errors.std()) if len(errors) else None,
        "id_switches": id_consistency(tracks, gt_frames),
    }


@main.command("eval")
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@_guarded
def eval_cmd(run_dir):
    """Re-evaluate a stored run directory against its ground truth."""
    report = _eval_run_dir(run_dir)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None)
@_guarded
def plot(run_dir, out):
    """Render an SVG overlay of tracks against ground-truth trajectories."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    gt_frames = read_ground_truth_csv(run_dir / "gt.csv")
    tracks = read_tracks_csv(run_dir / "tracks.csv")
    fig, ax = plt.subplots(figsize=(7, 7))
    by_vehicle = {}
    for fr in gt_frames:
        for o in fr.objects:
            by_vehicle.setdefault(o.vehicle_id, []).append((o.x, o.y))
    for vid, pts in sorted(by_vehicle.items()):
        xs, ys = zip(*pts)
        ax.plot(xs, ys, color="red", lw=0.8, alpha=0.6)
    by_track = {}
    for st in tracks:
        by_track.setdefault(st.track_id, []).append((st.x, st.y))
    for tid, pts in sorted(by_track.items()):
        xs, ys = zip(*pts)
        ax.plot(xs, ys, color="blue", lw=0.8, alpha=0.8)
    ax.set_aspect("equal")
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_title("ground truth (red) vs tracks (blue)")
    out = out or run_dir / "trajectories.svg"
    fig.savefig(out, format="svg")
    plt.close(fig)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
