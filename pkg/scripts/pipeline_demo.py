#!/usr/bin/env python3
"""End-to-end pipeline rehearsal on synthetic capture data.

Generates a 30 Hz frame index, a jittered pose stream, and a 1 kHz
binary encoder stream; then scans, resamples, aligns, persists an
episode, and exports receding-horizon training samples.
"""

import argparse
import math
import tempfile
from pathlib import Path

import numpy as np

from exokit import episode_store, retarget, stream_ingest, sync_align
from exokit.geometry import quat_from_axis_angle

ROOT = Path(__file__).resolve().parent.parent


def synthesize(workdir: Path, seconds: float, seed: int) -> None:
    rng = np.random.default_rng(seed)
    frames = [stream_ingest.FrameIndexEntry(i, round(i * 1e6 / 30.0))
              for i in range(int(seconds * 30))]
    (workdir / "frames.txt").write_text(stream_ingest.write_frame_index(frames))

    poses, t = [], 0.0
    while t < seconds:
        pos = [0.1 * math.sin(t), 0.1 * math.cos(t), 0.05 * t]
        quat = quat_from_axis_angle([0, 0, 1], 0.5 * t)
        poses.append(stream_ingest.PoseSample(round(t * 1e6), pos, quat))
        t += 1.0 / rng.uniform(55.0, 65.0)
    (workdir / "poses.txt").write_text(stream_ingest.write_pose_log(poses))

    blob = bytearray()
    for i in range(int(seconds * 1000)):
        values = tuple(int(2048 + 1500 * math.sin(i / 200.0 + j)) & 0xFFF
                       for j in range(6))
        blob += stream_ingest.encode_encoder_frame(
            stream_ingest.EncoderFrame(i, i * 1000, values))
    (workdir / "encoders.bin").write_bytes(bytes(blob))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, default=4.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workdir", help="keep intermediate files here")
    args = ap.parse_args()

    ctx = (tempfile.TemporaryDirectory() if args.workdir is None else None)
    workdir = Path(args.workdir) if args.workdir else Path(ctx.name)
    workdir.mkdir(parents=True, exist_ok=True)

    synthesize(workdir, args.seconds, args.seed)

    frames = stream_ingest.parse_frame_index((workdir / "frames.txt").read_text())
    encoders, diag = stream_ingest.scan_stream((workdir / "encoders.bin").read_bytes())
    poses = stream_ingest.parse_pose_log((workdir / "poses.txt").read_text())
    print(f"scanned {diag.frames_ok} encoder frames "
          f"({diag.crc_failures} CRC failures, {diag.seq_gaps} gaps)")

    resampled = sync_align.resample_poses(poses, 60.0)
    records, report = sync_align.build_episode(frames, encoders, resampled)
    print(f"aligned {report.records} records "
          f"(dropped {report.dropped_head} head / {report.dropped_tail} tail; "
          f"max ages {report.max_pose_age_us} / {report.max_encoder_age_us} us)")

    episode_dir = workdir / "episode"
    manifest = episode_store.EpisodeManifest(
        episode_id=f"synthetic-{args.seed}", created_t_us=0,
        record_count=len(records), rate_hz=60.0)
    episode_store.write_episode(records, manifest, episode_dir)

    table = retarget.parse_calibration((ROOT / "fixtures/calibration.txt").read_text())
    samples = episode_store.export_training(records, table=table)
    print(f"exported {len(samples)} training samples "
          f"(horizon {samples[0].horizon}, execute {samples[0].execute})")
    out = workdir / "train.txt"
    out.write_text(episode_store.write_training_text(samples))
    print(f"training file: {out}")

    if ctx is not None:
        ctx.cleanup()


if __name__ == "__main__":
    main()
