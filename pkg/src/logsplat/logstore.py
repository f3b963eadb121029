"""Session manifests: calibrated cameras, frame records, cuboid tracks.

A session directory holds ``manifest.json`` plus image (and optional mask)
files referenced by relative paths. All timestamps are seconds, all lengths
meters, in a right-handed z-up world frame shared by every camera and track
of the session.

Cuboid convention: ``dimensions`` are the full extents (length, width,
height) along the object's local +x (forward), +y (left), +z (up) axes;
``orientation`` is the object-to-world rotation as a (w, x, y, z) unit
quaternion, so a local point p maps to ``rotate(orientation, p) + center``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTrack,
    MissingFile,
    SchemaViolation,
    TimestampOrderViolation,
    UnknownCameraId,
)
from .cameras import Camera, camera_from_dict
from .rotations import quat_normalize, quat_slerp

SCHEMA_VERSION = 1

OBJECT_CLASSES = (
    "consumer_vehicle",
    "commercial_vehicle",
    "vru_pedestrian",
    "vru_rider",
    "other",
)


@dataclass(frozen=True)
class CameraCalibration:
    camera_id: str
    camera: Camera


@dataclass(frozen=True)
class CuboidState:
    timestamp: float
    center: np.ndarray  # (3,) world meters
    dimensions: np.ndarray  # (3,) full extents l, w, h
    orientation: np.ndarray  # (4,) unit quaternion w, x, y, z, object -> world


@dataclass(frozen=True)
class CuboidTrack:
    track_id: str
    object_class: str
    states: tuple[CuboidState, ...]  # strictly increasing timestamps

    @property
    def t_min(self) -> float:
        return self.states[0].timestamp

    @property
    def t_max(self) -> float:
        return self.states[-1].timestamp


@dataclass(frozen=True)
class FrameRecord:
    camera_id: str
    frame_index: int
    timestamp: float
    image: str  # path relative to the manifest directory
    masks: dict = field(default_factory=dict)  # track_id -> relative mask path


@dataclass(frozen=True)
class SensorLog:
    session_id: str
    root: Path
    cameras: dict  # camera_id -> CameraCalibration
    frames: tuple[FrameRecord, ...]
    tracks: dict  # track_id -> CuboidTrack

    def camera(self, camera_id: str) -> Camera:
        if camera_id not in self.cameras:
            raise UnknownCameraId(f"no camera {camera_id!r} in session {self.session_id!r}")
        return self.cameras[camera_id].camera

    def image_path(self, frame: FrameRecord) -> Path:
        return self.root / frame.image

    def mask_path(self, frame: FrameRecord, track_id: str) -> Path | None:
        rel = frame.masks.get(track_id)
        return None if rel is None else self.root / rel


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaViolation(msg)


def _state_from_dict(d: dict, track_id: str) -> CuboidState:
    for key in ("timestamp", "center", "dimensions", "orientation"):
        _require(key in d, f"track {track_id!r}: state missing {key!r}")
    center = np.asarray(d["center"], dtype=np.float64)
    dims = np.asarray(d["dimensions"], dtype=np.float64)
    quat = np.asarray(d["orientation"], dtype=np.float64)
    _require(center.shape == (3,), f"track {track_id!r}: center must have 3 components")
    _require(dims.shape == (3,) and np.all(dims > 0), f"track {track_id!r}: dimensions must be 3 positive extents")
    _require(quat.shape == (4,) and np.linalg.norm(quat) > 1e-8, f"track {track_id!r}: orientation must be a nonzero wxyz quaternion")
    return CuboidState(
        timestamp=float(d["timestamp"]),
        center=center,
        dimensions=dims,
        orientation=quat_normalize(quat),
    )


def load_manifest(path: str | Path) -> SensorLog:
    """Parse and validate a session manifest.

    Checks: schema version, unique ids, camera references, strictly
    increasing per-camera frame timestamps, strictly increasing per-track
    state timestamps, known object classes, non-empty tracks.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"manifest is not valid JSON: {e}") from e

    _require(isinstance(raw, dict), "manifest root must be an object")
    _require(raw.get("schema_version") == SCHEMA_VERSION, f"unsupported schema_version {raw.get('schema_version')!r}")
    for key in ("session_id", "cameras", "frames", "tracks"):
        _require(key in raw, f"manifest missing {key!r}")

    cameras: dict[str, CameraCalibration] = {}
    for cd in raw["cameras"]:
        _require("camera_id" in cd, "camera entry missing camera_id")
        cid = cd["camera_id"]
        _require(cid not in cameras, f"duplicate camera_id {cid!r}")
        try:
            cam = camera_from_dict(cd)
        except (KeyError, ValueError) as e:
            raise SchemaViolation(f"camera {cid!r}: {e}") from e
        cameras[cid] = CameraCalibration(camera_id=cid, camera=cam)

    frames: list[FrameRecord] = []
    for fd in raw["frames"]:
        for key in ("camera_id", "frame_index", "timestamp", "image"):
            _require(key in fd, f"frame entry missing {key!r}")
        if fd["camera_id"] not in cameras:
            raise UnknownCameraId(f"frame references unknown camera {fd['camera_id']!r}")
        masks = fd.get("masks", {})
        _require(isinstance(masks, dict), "frame masks must map track_id to a path")
        frames.append(
            FrameRecord(
                camera_id=fd["camera_id"],
                frame_index=int(fd["frame_index"]),
                timestamp=float(fd["timestamp"]),
                image=fd["image"],
                masks=dict(masks),
            )
        )
    per_cam: dict[str, float] = {}
    for fr in frames:
        prev = per_cam.get(fr.camera_id)
        if prev is not None and fr.timestamp <= prev:
            raise TimestampOrderViolation(
                f"camera {fr.camera_id!r}: frame timestamps must be strictly increasing"
            )
        per_cam[fr.camera_id] = fr.timestamp

    tracks: dict[str, CuboidTrack] = {}
    for td in raw["tracks"]:
        for key in ("track_id", "object_class", "states"):
            _require(key in td, f"track entry missing {key!r}")
        tid = td["track_id"]
        _require(tid not in tracks, f"duplicate track_id {tid!r}")
        _require(
            td["object_class"] in OBJECT_CLASSES,
            f"track {tid!r}: unknown object_class {td['object_class']!r}",
        )
        if not td["states"]:
            raise EmptyTrack(f"track {tid!r} has no states")
        states = tuple(_state_from_dict(sd, tid) for sd in td["states"])
        ts = [s.timestamp for s in states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise TimestampOrderViolation(f"track {tid!r}: state timestamps must be strictly increasing")
        tracks[tid] = CuboidTrack(track_id=tid, object_class=td["object_class"], states=states)

    for fr in frames:
        for tid in fr.masks:
            _require(tid in tracks, f"frame mask references unknown track {tid!r}")

    return SensorLog(
        session_id=str(raw["session_id"]),
        root=path.parent,
        cameras=cameras,
        frames=tuple(frames),
        tracks=tracks,
    )


def interpolate_cuboid(track: CuboidTrack, t: float) -> tuple[CuboidState, bool]:
    """Pose of a track at time t: lerp center and extents, slerp orientation.

    Outside the track's time span the nearest boundary state is returned and
    the second element is True. A single-state track is treated as static,
    so it is never flagged as clamped.
    """
    states = track.states
    if len(states) == 1:
        s = states[0]
        return CuboidState(t, s.center, s.dimensions, s.orientation), False
    ts = np.array([s.timestamp for s in states])
    if t <= ts[0]:
        s = states[0]
        return CuboidState(t, s.center, s.dimensions, s.orientation), t < ts[0]
    if t >= ts[-1]:
        s = states[-1]
        return CuboidState(t, s.center, s.dimensions, s.orientation), t > ts[-1]
    hi = int(np.searchsorted(ts, t, side="right"))
    a, b = states[hi - 1], states[hi]
    u = (t - a.timestamp) / (b.timestamp - a.timestamp)
    return (
        CuboidState(
            timestamp=t,
            center=(1.0 - u) * a.center + u * b.center,
            dimensions=(1.0 - u) * a.dimensions + u * b.dimensions,
            orientation=quat_slerp(a.orientation, b.orientation, u),
        ),
        False,
    )


def frames_near(log: SensorLog, t: float, window: float) -> list[FrameRecord]:
    """Frames with |timestamp - t| <= window, closest first.

    Ties break on (camera_id, frame_index) so the order is deterministic.
    """
    hits = [fr for fr in log.frames if abs(fr.timestamp - t) <= window + 1e-12]
    hits.sort(key=lambda fr: (abs(fr.timestamp - t), fr.camera_id, fr.frame_index))
    return hits


def manifest_dict(
    session_id: str,
    cameras: dict,
    frames: list,
    tracks: list,
) -> dict:
    """Assemble a manifest structure from in-memory records (for writers)."""
    cam_entries = []
    for cid, cal in sorted(cameras.items()):
        entry = {"camera_id": cid}
        entry.update(cal.camera.to_dict())
        cam_entries.append(entry)
    frame_entries = []
    for fr in frames:
        entry = {
            "camera_id": fr.camera_id,
            "frame_index": fr.frame_index,
            "timestamp": fr.timestamp,
            "image": fr.image,
        }
        if fr.masks:
            entry["masks"] = dict(sorted(fr.masks.items()))
        frame_entries.append(entry)
    track_entries = []
    for tr in tracks:
        track_entries.append(
            {
                "track_id": tr.track_id,
                "object_class": tr.object_class,
                "states": [
                    {
                        "timestamp": s.timestamp,
                        "center": [float(x) for x in s.center],
                        "dimensions": [float(x) for x in s.dimensions],
                        "orientation": [float(x) for x in s.orientation],
                    }
                    for s in tr.states
                ],
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": session_id,
        "cameras": cam_entries,
        "frames": frame_entries,
        "tracks": track_entries,
    }
