"""Episode persistence and training-sample export.

An episode is a write-once directory::

    <dest>/
      manifest        key = value text block
      records.bin     fixed-width little-endian rows (88 bytes each):
                      frame_no u32, t_us u64,
                      pose 7*f64 (px py pz qw qx qy qz),
                      fingers 6*u16, pose_age_us u32, encoder_age_us u32
      frames/         externally produced images, referenced by frame_no

Training samples use the horizon-relative action layout: each of the
``horizon`` steps is 12 values, a 6-DoF end-effector action expressed
relative to the pose at the start of the horizon (translation delta in
the base frame plus the axis-angle of the relative rotation) and 6
finger commands.  Finger commands are absolute by default; a
first-step-relative variant is available behind a flag.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ToolkitError
from .geometry import Pose, quat_conjugate, quat_log, quat_mul
from .kvformat import (float_field, format_kv, format_number, int_field,
                       parse_kv, require)
from .retarget import CalibrationTable, map_encoder
from .sync_align import AlignedRecord

FORMAT_VERSION = 1
DEFAULT_HORIZON = 16
DEFAULT_EXECUTE = 8

_RECORD = struct.Struct("<IQ7d6HII")

MANIFEST_NAME = "manifest"
RECORDS_NAME = "records.bin"
FRAMES_DIR = "frames"


@dataclass(frozen=True)
class CameraSpec:
    width: int = 640
    height: int = 480
    rate_hz: float = 30.0


@dataclass(frozen=True)
class EpisodeManifest:
    episode_id: str
    created_t_us: int
    record_count: int
    rate_hz: float
    image_dir: str = FRAMES_DIR
    camera: CameraSpec = field(default_factory=CameraSpec)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {self.format_version}")
        if self.record_count < 0:
            raise ValueError("record_count must be non-negative")


def _pack_record(r: AlignedRecord) -> bytes:
    return _RECORD.pack(
        r.frame_no, r.t_us,
        *r.ee_pose.translation, *r.ee_pose.rotation,
        *r.fingers, r.pose_age_us, r.encoder_age_us)


def _unpack_record(buf: bytes) -> AlignedRecord:
    vals = _RECORD.unpack(buf)
    return AlignedRecord(
        frame_no=vals[0], t_us=vals[1],
        ee_pose=Pose(np.array(vals[5:9]), np.array(vals[2:5])),
        fingers=tuple(vals[9:15]),
        pose_age_us=vals[15], encoder_age_us=vals[16])


def write_episode(records: list[AlignedRecord], manifest: EpisodeManifest,
                  dest) -> None:
    """Persist a synchronized episode; ``dest`` must not already exist."""
    if not records:
        raise ToolkitError("cannot write an empty episode")
    if manifest.record_count != len(records):
        raise ToolkitError(
            f"manifest record_count {manifest.record_count} != {len(records)} records")
    dest = Path(dest)
    if dest.exists():
        raise ToolkitError(f"destination {dest} already exists")
    dest.mkdir(parents=True)
    (dest / manifest.image_dir).mkdir()
    (dest / MANIFEST_NAME).write_text(serialize_manifest(manifest))
    with open(dest / RECORDS_NAME, "wb") as fh:
        for r in records:
            fh.write(_pack_record(r))


def read_episode(src) -> tuple[list[AlignedRecord], EpisodeManifest]:
    src = Path(src)
    manifest = parse_manifest((src / MANIFEST_NAME).read_text())
    blob = (src / RECORDS_NAME).read_bytes()
    if len(blob) != manifest.record_count * _RECORD.size:
        raise FormatError(
            f"records.bin holds {len(blob)} bytes; manifest expects "
            f"{manifest.record_count} records of {_RECORD.size} bytes")
    records = [_unpack_record(blob[i:i + _RECORD.size])
               for i in range(0, len(blob), _RECORD.size)]
    return records, manifest


def serialize_manifest(m: EpisodeManifest) -> str:
    return format_kv([
        ("format_version", str(m.format_version)),
        ("episode_id", m.episode_id),
        ("created_t_us", str(m.created_t_us)),
        ("record_count", str(m.record_count)),
        ("rate_hz", format_number(m.rate_hz)),
        ("image_dir", m.image_dir),
        ("camera_width", str(m.camera.width)),
        ("camera_height", str(m.camera.height)),
        ("camera_rate_hz", format_number(m.camera.rate_hz)),
    ])


def parse_manifest(text: str) -> EpisodeManifest:
    kv = parse_kv(text)
    return EpisodeManifest(
        episode_id=require(kv, "episode_id"),
        created_t_us=int_field(kv, "created_t_us"),
        record_count=int_field(kv, "record_count"),
        rate_hz=float_field(kv, "rate_hz"),
        image_dir=require(kv, "image_dir"),
        camera=CameraSpec(width=int_field(kv, "camera_width"),
                          height=int_field(kv, "camera_height"),
                          rate_hz=float_field(kv, "camera_rate_hz")),
        format_version=int_field(kv, "format_version"),
    )


# --- training export --------------------------------------------------------

def relative_pose(t0: Pose, tk: Pose) -> np.ndarray:
    """6-vector action: base-frame translation delta and the axis-angle
    (principal, magnitude <= pi) of the relative rotation R0^-1 Rk."""
    if np.array_equal(t0.rotation, tk.rotation):
        rot = np.zeros(3)
    else:
        rot = quat_log(quat_mul(quat_conjugate(t0.rotation), tk.rotation))
    return np.concatenate([tk.translation - t0.translation, rot])


@dataclass(frozen=True)
class TrainingSample:
    """Receding-horizon sample: (horizon, 12) actions anchored at the
    observation frame; images stay external, referenced by frame number."""

    obs_frame_no: int
    actions: np.ndarray
    horizon: int = DEFAULT_HORIZON
    execute: int = DEFAULT_EXECUTE

    def __post_init__(self):
        if not self.horizon >= self.execute >= 1:
            raise ValueError("need horizon >= execute >= 1")
        actions = np.array(self.actions, dtype=float)
        if actions.shape != (self.horizon, 12):
            raise ValueError(f"actions must be ({self.horizon}, 12)")
        if np.any(actions[0, :6] != 0.0):
            raise ValueError("first end-effector action must be zero")
        actions.setflags(write=False)
        object.__setattr__(self, "actions", actions)


def export_training(records: list[AlignedRecord],
                    horizon: int = DEFAULT_HORIZON,
                    execute: int = DEFAULT_EXECUTE,
                    table: CalibrationTable | None = None,
                    relative_fingers: bool = False) -> list[TrainingSample]:
    """One sample per start index (stride 1): sample count is
    len(records) - horizon + 1.

    End-effector actions come from :func:`relative_pose` against the
    horizon's first record.  Finger values pass through the calibration
    table when one is given (raw counts otherwise) and stay absolute
    unless ``relative_fingers`` subtracts the first step.
    """
    if len(records) < horizon:
        raise ToolkitError(
            f"episode of {len(records)} records shorter than horizon {horizon}")

    def finger_row(rec: AlignedRecord) -> np.ndarray:
        if table is None:
            return np.array(rec.fingers, dtype=float)
        return np.array([map_encoder(table, j, rec.fingers[j]) for j in range(6)])

    samples: list[TrainingSample] = []
    for start in range(len(records) - horizon + 1):
        t0 = records[start].ee_pose
        actions = np.empty((horizon, 12))
        for k in range(horizon):
            rec = records[start + k]
            actions[k, :6] = relative_pose(t0, rec.ee_pose)
            actions[k, 6:] = finger_row(rec)
        if relative_fingers:
            actions[:, 6:] -= actions[0, 6:].copy()
        samples.append(TrainingSample(records[start].frame_no, actions,
                                      horizon, execute))
    return samples


def write_training_text(samples: list[TrainingSample]) -> str:
    """One line per sample: obs_frame_no then the flattened actions."""
    lines = []
    for s in samples:
        vals = " ".join(format_number(v) for v in s.actions.ravel())
        lines.append(f"{s.obs_frame_no} {vals}")
    return "\n".join(lines) + "\n" if lines else ""


def write_training_binary(samples: list[TrainingSample]) -> bytes:
    """Fixed-width rows: obs_frame_no u32, horizon u16, execute u16,
    then horizon*12 f64 actions."""
    out = bytearray()
    for s in samples:
        out += struct.pack("<IHH", s.obs_frame_no, s.horizon, s.execute)
        out += struct.pack(f"<{s.horizon * 12}d", *s.actions.ravel())
    return bytes(out)
