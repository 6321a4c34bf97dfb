"""Command-line front end for batch workflows.

Results go to stdout, diagnostics and warnings to stderr.  Exit codes:
0 success, 1 domain error (infeasible geometry, validation failure),
2 usage error, 3 I/O error.  Angle flags take degrees; everything inside
the library is radians.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from . import (anthropometry, episode_store, hand_model, retarget,
               stream_ingest, sync_align, thumb_coupling, wiggle_analysis)
from .errors import ToolkitError
from .geometry import Pose
from .kvformat import format_number

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _num(value: float, round_mm: bool) -> str:
    return str(round(value)) if round_mm else format_number(value)


class _UsageError(Exception):
    pass


def _add_slider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", help="key-value params file instead of flags")
    p.add_argument("--L-min", type=float, help="rest ring-to-fingercot distance, mm")
    p.add_argument("--d-max", type=float, help="max slider-permitted distance, mm")
    p.add_argument("--d-curl", type=float, help="free length needed for full flexion, mm")
    p.add_argument("--delta", type=float, help="max ring offset above webbing, mm")
    p.add_argument("--r", type=float, help="middle-finger-to-hand-length ratio")
    p.add_argument("--round-mm", action="store_true", help="round display to whole mm")


def _slider_params(args) -> anthropometry.SliderParams:
    if args.params is not None:
        return anthropometry.parse_slider_params(Path(args.params).read_text())
    flags = (args.L_min, args.d_max, args.d_curl, args.delta, args.r)
    if any(v is None for v in flags):
        raise _UsageError("give --params FILE or all of "
                          "--L-min --d-max --d-curl --delta --r")
    return anthropometry.SliderParams(L_min=args.L_min, d_max=args.d_max,
                                      d_curl=args.d_curl, delta=args.delta,
                                      r=args.r)


def _cmd_anthro_range(args) -> int:
    p = _slider_params(args)
    l_max, mfl_max = anthropometry.slider_bounds(p)
    h_min, h_max = anthropometry.hand_length_range(p)
    rm = args.round_mm
    print(f"L_max={_num(l_max, rm)} MFL_max={_num(mfl_max, rm)}")
    print(f"H_min={_num(h_min, rm)} H_max={_num(h_max, rm)}")
    return EXIT_OK


def _cmd_anthro_check(args) -> int:
    verdict = anthropometry.check_hand(args.hand_length, _slider_params(args))
    rm = args.round_mm
    print(f"compatible={str(verdict.compatible).lower()} "
          f"H_min={_num(verdict.H_min, rm)} H_max={_num(verdict.H_max, rm)} "
          f"margin_low={_num(verdict.margin_low, rm)} "
          f"margin_high={_num(verdict.margin_high, rm)}")
    return EXIT_OK


def _cmd_wiggle_fit(args) -> int:
    cloud = wiggle_analysis.parse_point_cloud(Path(args.points).read_text())
    ellipsoid = wiggle_analysis.fit_ellipsoid(cloud, args.k)
    coverage = wiggle_analysis.coverage_fraction(cloud, ellipsoid)
    sys.stdout.write(wiggle_analysis.format_ellipsoid_report(ellipsoid, coverage))
    return EXIT_OK


def _load_coupling(args):
    chain = hand_model.parse_chain(Path(args.chain).read_text())
    geom = thumb_coupling.parse_geometry(Path(args.geometry).read_text())
    q_p = hand_model.PassiveThumbConfig(math.radians(args.theta2_deg),
                                        math.radians(args.theta4_deg))
    f = hand_model.CouplingFunction.identity()
    vals = [float(t) for t in args.guess.split()]
    if len(vals) != 7:
        raise ToolkitError("--guess needs 7 numbers: px py pz qw qx qy qz")
    guess = Pose.from_parts(vals[3:7], vals[0:3], normalize=True)
    return chain, geom, q_p, f, guess


def _add_coupling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--chain", required=True, help="chain-description file")
    p.add_argument("--geometry", required=True, help="coupling-geometry file")
    p.add_argument("--theta2-deg", type=float, default=0.0, help="passive IP flexion, degrees")
    p.add_argument("--theta4-deg", type=float, default=0.0, help="TM ab/ad, degrees")
    p.add_argument("--guess", default="0 0 0 1 0 0 0",
                   help="initial pose guess: px py pz qw qx qy qz")


def _cmd_manifold_rank(args) -> int:
    chain, geom, q_p, f, guess = _load_coupling(args)
    pose = thumb_coupling.project_to_manifold(guess, q_p, geom, chain, f)
    dim = thumb_coupling.nullspace_dimension(pose, q_p, geom, chain, f)
    print(f"nullspace_dim={dim}")
    return EXIT_OK


def _cmd_manifold_sample(args) -> int:
    chain, geom, q_p, f, guess = _load_coupling(args)
    pose0 = thumb_coupling.project_to_manifold(guess, q_p, geom, chain, f)
    poses = thumb_coupling.sample_self_motion(pose0, q_p, geom, chain, f,
                                              n=args.n, step=args.step,
                                              seed=args.seed)
    samples = [stream_ingest.PoseSample(k, p.translation, p.rotation)
               for k, p in enumerate(poses)]
    text = stream_ingest.write_pose_log(samples)
    if args.out:
        Path(args.out).write_text(text)
        print(f"samples={len(poses)} out={args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_ingest_scan(args) -> int:
    frames, diag = stream_ingest.scan_stream(Path(args.stream).read_bytes())
    if args.out:
        Path(args.out).write_text(stream_ingest.format_encoder_frames(frames))
    sys.stdout.write(stream_ingest.format_diagnostics(diag))
    return EXIT_OK


def _cmd_sync_build(args) -> int:
    frames = stream_ingest.parse_frame_index(Path(args.frames).read_text())
    encoders, diag = stream_ingest.scan_stream(Path(args.encoders).read_bytes())
    poses = stream_ingest.parse_pose_log(Path(args.poses).read_text())
    if diag.crc_failures or diag.seq_gaps:
        print(f"encoder stream: crc_failures={diag.crc_failures} "
              f"seq_gaps={diag.seq_gaps}", file=sys.stderr)
    resampled = sync_align.resample_poses(poses, args.rate)
    records, report = sync_align.build_episode(frames, encoders, resampled,
                                               args.max_stale_us)
    manifest = episode_store.EpisodeManifest(
        episode_id=args.episode_id,
        created_t_us=time.time_ns() // 1000,
        record_count=len(records),
        rate_hz=args.rate)
    episode_store.write_episode(records, manifest, args.out)
    print(f"records={report.records} dropped_head={report.dropped_head} "
          f"dropped_tail={report.dropped_tail} "
          f"max_pose_age_us={report.max_pose_age_us} "
          f"max_encoder_age_us={report.max_encoder_age_us}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    table = retarget.parse_calibration(Path(args.pairs).read_text())
    text = retarget.write_calibration(table)
    if args.out:
        Path(args.out).write_text(text)
        print(f"joints={retarget.NUM_JOINTS} out={args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_retarget(args) -> int:
    table = retarget.parse_calibration(Path(args.table).read_text())
    frames, diag = stream_ingest.scan_stream(Path(args.stream).read_bytes())
    if diag.crc_failures:
        print(f"dropped {diag.crc_failures} CRC-failing frames", file=sys.stderr)
    for frame in frames:
        commands = retarget.apply_table(table, frame)
        print(" ".join([str(frame.seq), str(frame.t_us),
                        *(format_number(c) for c in commands)]))
    return EXIT_OK


def _cmd_export(args) -> int:
    records, _ = episode_store.read_episode(args.episode)
    table = None
    if args.calibration:
        table = retarget.parse_calibration(Path(args.calibration).read_text())
    samples = episode_store.export_training(records, horizon=args.horizon,
                                            execute=args.execute, table=table,
                                            relative_fingers=args.relative_fingers)
    if args.binary:
        Path(args.out).write_bytes(episode_store.write_training_binary(samples))
    else:
        Path(args.out).write_text(episode_store.write_training_text(samples))
    print(f"samples={len(samples)} out={args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exokit",
        description="Exoskeleton capture toolkit: compatibility bounds, thumb "
                    "coupling analysis, stream ingestion, and episode export.")
    sub = parser.add_subparsers(dest="command", required=True)

    anthro = sub.add_parser("anthro", help="anthropometric compatibility")
    anthro_sub = anthro.add_subparsers(dest="subcommand", required=True)
    p = anthro_sub.add_parser("range", help="compatible hand-length range")
    _add_slider_flags(p)
    p.set_defaults(func=_cmd_anthro_range)
    p = anthro_sub.add_parser("check", help="check one hand length")
    p.add_argument("--hand-length", type=float, required=True, help="hand length, mm")
    _add_slider_flags(p)
    p.set_defaults(func=_cmd_anthro_check)

    wiggle = sub.add_parser("wiggle", help="wiggle-space ellipsoid analysis")
    wiggle_sub = wiggle.add_subparsers(dest="subcommand", required=True)
    p = wiggle_sub.add_parser("fit", help="fit the covariance ellipsoid")
    p.add_argument("points", help="point-cloud file (# units=mm|m header)")
    p.add_argument("--k", type=float, default=2.0, help="semi-axis scale factor")
    p.set_defaults(func=_cmd_wiggle_fit)

    manifold = sub.add_parser("manifold", help="thumb-coupling self-motion manifold")
    manifold_sub = manifold.add_subparsers(dest="subcommand", required=True)
    p = manifold_sub.add_parser("rank", help="nullspace dimension at a feasible pose")
    _add_coupling_flags(p)
    p.set_defaults(func=_cmd_manifold_rank)
    p = manifold_sub.add_parser("sample", help="random-walk the self-motion manifold")
    _add_coupling_flags(p)
    p.add_argument("--n", type=int, default=100, help="number of samples")
    p.add_argument("--step", type=float, default=1e-3, help="twist step, meters")
    p.add_argument("--seed", type=int, default=0, help="random-walk seed")
    p.add_argument("--out", help="write samples to this file instead of stdout")
    p.set_defaults(func=_cmd_manifold_sample)

    ingest = sub.add_parser("ingest", help="raw stream ingestion")
    ingest_sub = ingest.add_subparsers(dest="subcommand", required=True)
    p = ingest_sub.add_parser("scan", help="scan a binary encoder stream")
    p.add_argument("stream", help="binary stream file")
    p.add_argument("--out", help="write decoded frames as text rows")
    p.set_defaults(func=_cmd_ingest_scan)

    sync = sub.add_parser("sync", help="multi-rate stream synchronization")
    sync_sub = sync.add_subparsers(dest="subcommand", required=True)
    p = sync_sub.add_parser("build", help="build a synchronized episode")
    p.add_argument("--frames", required=True, help="frame-index file")
    p.add_argument("--encoders", required=True, help="binary encoder stream")
    p.add_argument("--poses", required=True, help="pose-log file")
    p.add_argument("--rate", type=float, default=60.0, help="pose resample rate, Hz")
    p.add_argument("--max-stale-us", type=int,
                   default=sync_align.DEFAULT_MAX_STALE_US,
                   help="max nearest-match age, microseconds")
    p.add_argument("--episode-id", required=True)
    p.add_argument("--out", required=True, help="episode directory to create")
    p.set_defaults(func=_cmd_sync_build)

    p = sub.add_parser("calibrate", help="validate and canonicalize a waypoint table")
    p.add_argument("pairs", help="waypoint file: 'joint <i> <raw> <command>' rows")
    p.add_argument("--out", help="write the canonical table here")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("retarget", help="map an encoder stream to actuator commands")
    p.add_argument("--table", required=True, help="calibration table file")
    p.add_argument("stream", help="binary encoder stream")
    p.set_defaults(func=_cmd_retarget)

    p = sub.add_parser("export", help="export training samples from an episode")
    p.add_argument("--episode", required=True, help="episode directory")
    p.add_argument("--horizon", type=int, default=episode_store.DEFAULT_HORIZON)
    p.add_argument("--execute", type=int, default=episode_store.DEFAULT_EXECUTE)
    p.add_argument("--calibration", help="retarget finger values through this table")
    p.add_argument("--relative-fingers", action="store_true",
                   help="emit finger commands relative to the horizon start")
    p.add_argument("--binary", action="store_true",
                   help="fixed-width binary rows instead of text")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
