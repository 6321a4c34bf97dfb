"""Multi-rate stream alignment with video timestamps as the master.

Poses are first resampled to a uniform grid (positions lerped,
orientations slerped along the shortest arc); encoder frames are matched
raw (at 1 kHz a nearest-neighbor match is within 0.5 ms of any 30 Hz
master time).  Nearest-neighbor ties resolve to the earlier sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ToolkitError
from .geometry import Pose, quat_slerp
from .stream_ingest import EncoderFrame, FrameIndexEntry, PoseSample

DEFAULT_MAX_STALE_US = 20_000


@dataclass(frozen=True)
class AlignedRecord:
    """One synchronized record per retained video frame."""

    frame_no: int
    t_us: int
    ee_pose: Pose
    fingers: tuple[int, ...]
    pose_age_us: int
    encoder_age_us: int


@dataclass(frozen=True)
class SyncReport:
    records: int
    dropped_head: int
    dropped_tail: int
    max_pose_age_us: int
    max_encoder_age_us: int


def resample_poses(poses: list[PoseSample], rate_hz: float) -> list[PoseSample]:
    """Resample onto a uniform grid from the first to the last timestamp.

    Grid times are t0 + round(k * 1e6 / rate_hz) microseconds, so shared
    grid points reproduce the inputs exactly.
    """
    if rate_hz <= 0.0:
        raise ValueError("rate_hz must be positive")
    if len(poses) < 2:
        raise ToolkitError("resampling needs at least 2 pose samples")
    times = np.array([p.t_us for p in poses], dtype=np.int64)
    if np.any(np.diff(times) <= 0):
        raise ToolkitError("pose timestamps must be strictly increasing")

    t0, t_end = int(times[0]), int(times[-1])
    period_us = 1e6 / rate_hz
    out: list[PoseSample] = []
    k = 0
    while True:
        t = t0 + round(k * period_us)
        if t > t_end:
            break
        j = int(np.searchsorted(times, t, side="right")) - 1
        if times[j] == t:
            src = poses[j]
            out.append(PoseSample(t, src.position, src.orientation))
        else:
            a, b = poses[j], poses[j + 1]
            u = (t - a.t_us) / (b.t_us - a.t_us)
            pos = (1.0 - u) * a.position + u * b.position
            out.append(PoseSample(t, pos, quat_slerp(a.orientation, b.orientation, u)))
        k += 1
    return out


def nearest_align(master_t, sample_t) -> list[int]:
    """Index of the |dt|-minimizing sample for each master time.

    Ties resolve to the earlier sample, both at exact midpoints and
    among duplicate sample timestamps.  Both inputs must be
    non-decreasing; the sweep is O(n + m).
    """
    master = list(master_t)
    samples = list(sample_t)
    if not samples:
        raise ToolkitError("empty sample list")
    if any(b < a for a, b in zip(master, master[1:])):
        raise ToolkitError("master timestamps must be non-decreasing")
    if any(b < a for a, b in zip(samples, samples[1:])):
        raise ToolkitError("sample timestamps must be non-decreasing")

    # first index of each run of equal sample times, for the earlier-tie rule
    plateau_start = [0] * len(samples)
    for i in range(1, len(samples)):
        plateau_start[i] = plateau_start[i - 1] if samples[i] == samples[i - 1] else i

    out: list[int] = []
    p = 0  # first index with samples[p] >= t; monotone over the sweep
    for t in master:
        while p < len(samples) and samples[p] < t:
            p += 1
        if p == 0:
            out.append(0)
        elif p == len(samples):
            out.append(plateau_start[-1])
        elif t - samples[p - 1] <= samples[p] - t:
            out.append(plateau_start[p - 1])
        else:
            out.append(p)
    return out


def build_episode(frames: list[FrameIndexEntry], encoders: list[EncoderFrame],
                  poses: list[PoseSample],
                  max_stale_us: int = DEFAULT_MAX_STALE_US,
                  ) -> tuple[list[AlignedRecord], SyncReport]:
    """One aligned record per retained video frame.

    Frames at the head or tail whose best pose or encoder match is older
    than ``max_stale_us`` are dropped and counted (expected at recording
    boundaries); a staleness violation between retained frames means a
    corrupt stream and raises.
    """
    if not frames or not encoders or not poses:
        raise ToolkitError("all three streams must be non-empty")
    master = [f.t_us for f in frames]
    pose_idx = nearest_align(master, [p.t_us for p in poses])
    enc_idx = nearest_align(master, [e.t_us for e in encoders])

    pose_age = [abs(poses[pose_idx[i]].t_us - t) for i, t in enumerate(master)]
    enc_age = [abs(encoders[enc_idx[i]].t_us - t) for i, t in enumerate(master)]
    stale = [pa > max_stale_us or ea > max_stale_us
             for pa, ea in zip(pose_age, enc_age)]

    n = len(frames)
    head = 0
    while head < n and stale[head]:
        head += 1
    tail = n
    while tail > head and stale[tail - 1]:
        tail -= 1
    for i in range(head, tail):
        if stale[i]:
            raise ToolkitError(
                f"interior gap at frame {frames[i].frame_no}: best match exceeds "
                f"{max_stale_us} us (pose {pose_age[i]} us, encoder {enc_age[i]} us)")

    records: list[AlignedRecord] = []
    for i in range(head, tail):
        sample = poses[pose_idx[i]]
        records.append(AlignedRecord(
            frame_no=frames[i].frame_no,
            t_us=frames[i].t_us,
            ee_pose=Pose.from_parts(sample.orientation, sample.position,
                                    normalize=True),
            fingers=encoders[enc_idx[i]].values,
            pose_age_us=pose_age[i],
            encoder_age_us=enc_age[i],
        ))
    report = SyncReport(
        records=len(records),
        dropped_head=head,
        dropped_tail=n - tail,
        max_pose_age_us=max(pose_age[head:tail], default=0),
        max_encoder_age_us=max(enc_age[head:tail], default=0),
    )
    return records, report
