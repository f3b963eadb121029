import numpy as np
import pytest

from logsplat.errors import ConfigError
from logsplat.geometry import Cuboid, occlusion_fraction
from logsplat.imgio import load_image, load_mask
from logsplat.logstore import SensorLog, interpolate_cuboid
from logsplat.pipeline import PRESETS, synth_scene, tree_digest


def _cuboid_at(log, track_id, t):
    state, extrapolated = interpolate_cuboid(log.tracks[track_id], t)
    assert not extrapolated
    return Cuboid(state.center, state.dimensions / 2.0, state.orientation)


def test_presets_listed():
    assert PRESETS == ("ring8", "occluded_wall", "blocked")


def test_unknown_preset_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown synth preset"):
        synth_scene("ring9", 0, tmp_path)


def test_ring8_layout(ring8_scene):
    log, truth = ring8_scene
    assert isinstance(log, SensorLog)
    assert len(log.cameras) == 8
    assert len(log.frames) == 8
    assert set(log.tracks) == {"cube0"}
    assert truth.occlusion == {("cube0", f"cam{k:02d}"): 0.0 for k in range(8)}
    for frame in log.frames:
        assert log.image_path(frame).is_file()
        mask = load_mask(log.mask_path(frame, "cube0"))
        assert mask.any(), f"{frame.camera_id} should see the cube"


def test_synth_deterministic_bytes(tmp_path):
    synth_scene("ring8", 3, tmp_path / "a")
    synth_scene("ring8", 3, tmp_path / "b")
    synth_scene("ring8", 4, tmp_path / "c")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_mask_pixels_show_cube_colors(ring8_scene):
    # Foreground pixels differ from the sky gradient, and the mask is the
    # exact set of pixels the raycast assigned to the cube.
    log, _ = ring8_scene
    frame = log.frames[0]
    img = load_image(log.image_path(frame))
    mask = load_mask(log.mask_path(frame, "cube0"))
    sky = img[~mask]
    assert np.all(sky[:, 0] < 0.2), "background stays dark"
    assert img[mask].mean() > sky.mean()


def test_occluded_wall_matches_truth(tmp_path):
    log, truth = synth_scene("occluded_wall", 0, tmp_path)
    cube = _cuboid_at(log, "cube0", 3.5)
    wall = _cuboid_at(log, "wall_half", 3.5)
    for frame in log.frames:
        cam = log.camera(frame.camera_id)
        occ = occlusion_fraction(cube, cam.center, [wall])
        expected = truth.occlusion[("cube0", frame.camera_id)]
        assert occ == pytest.approx(expected, abs=1e-12), frame.camera_id


def test_blocked_hides_cube_completely(tmp_path):
    log, truth = synth_scene("blocked", 0, tmp_path)
    cube = _cuboid_at(log, "cube0", 3.5)
    wall = _cuboid_at(log, "wall0", 3.5)
    for frame in log.frames:
        cam = log.camera(frame.camera_id)
        assert occlusion_fraction(cube, cam.center, [wall]) == 1.0
        # no cube pixels survive, so the synth writes no mask file at all
        assert log.mask_path(frame, "cube0") is None
        assert load_mask(log.mask_path(frame, "wall0")).any()
    assert truth.visible_cameras["cube0"] == []


def test_truth_json_round_trips(tmp_path):
    import json

    _, truth = synth_scene("occluded_wall", 0, tmp_path)
    doc = json.loads((tmp_path / "truth.json").read_text())
    assert doc["track_ids"] == ["cube0", "wall_half"]
    assert doc["occlusion"]["cube0|cam_half"] == 0.5
    assert doc["occlusion"]["cube0|cam_free"] == 0.0
