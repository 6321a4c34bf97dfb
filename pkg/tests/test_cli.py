import numpy as np

from exokit import episode_store
from exokit.cli import run
from exokit.stream_ingest import (EncoderFrame, FrameIndexEntry, PoseSample,
                                  encode_encoder_frame, write_frame_index,
                                  write_pose_log)

ANTHRO_FLAGS = ["--L-min", "56", "--d-max", "86", "--d-curl", "16",
                "--delta", "17", "--r", "0.40"]


def _coupling_args(fixtures_dir):
    return ["--chain", str(fixtures_dir / "passive_thumb.chain"),
            "--geometry", str(fixtures_dir / "thumb_coupling.geom"),
            "--theta2-deg", "17.2", "--theta4-deg", "8.6",
            "--guess", "0.09 -0.01 0.035 1 0 0 0"]


def _write_capture(tmp_path, n_frames=30):
    frames = [FrameIndexEntry(i, round(i * 1e6 / 30.0)) for i in range(n_frames)]
    (tmp_path / "frames.txt").write_text(write_frame_index(frames))
    t_end = frames[-1].t_us
    poses = []
    for k in range(0, 2 * n_frames):
        t = round(k * 1e6 / 60.0)
        if t > t_end + 10_000:
            break
        poses.append(PoseSample(t, [k * 1e-3, 0.0, 0.0], [1.0, 0, 0, 0]))
    (tmp_path / "poses.txt").write_text(write_pose_log(poses))
    blob = b"".join(encode_encoder_frame(EncoderFrame(i, i * 1_000, (i % 4096,) * 6))
                    for i in range(t_end // 1_000 + 2))
    (tmp_path / "encoders.bin").write_bytes(blob)


def test_anthro_range_reference_output(capsys):
    code = run(["anthro", "range", *ANTHRO_FLAGS])
    out = capsys.readouterr().out
    assert code == 0
    assert "H_min=140 H_max=217.5" in out
    assert "L_max=70 MFL_max=87" in out


def test_anthro_check(capsys):
    code = run(["anthro", "check", "--hand-length", "165", *ANTHRO_FLAGS])
    assert code == 0
    assert "compatible=true" in capsys.readouterr().out


def test_anthro_invalid_params_domain_error(capsys):
    code = run(["anthro", "range", "--L-min", "56", "--d-max", "10",
                "--d-curl", "16", "--delta", "17", "--r", "0.40"])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_anthro_params_file(capsys, tmp_path):
    params = tmp_path / "slider.params"
    params.write_text("L_min = 56\nd_max = 86\nd_curl = 16\ndelta = 17\nr = 0.40\n")
    code = run(["anthro", "range", "--params", str(params)])
    assert code == 0
    assert "H_min=140 H_max=217.5" in capsys.readouterr().out


def test_anthro_missing_flags_usage_error(capsys):
    code = run(["anthro", "range", "--L-min", "56"])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_anthro_round_mm(capsys):
    code = run(["anthro", "range", *ANTHRO_FLAGS, "--round-mm"])
    assert code == 0
    assert "H_min=140 H_max=218" in capsys.readouterr().out


def test_unknown_subcommand_usage_error(capsys):
    code = run(["frobnicate"])
    assert code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "usage" in capsys.readouterr().out.lower()
    for cmd in (["anthro", "range"], ["wiggle", "fit"], ["manifold", "sample"],
                ["ingest", "scan"], ["sync", "build"], ["calibrate"],
                ["retarget"], ["export"]):
        assert run([*cmd, "--help"]) == 0
        capsys.readouterr()


def test_manifold_rank_fixture(capsys, fixtures_dir):
    code = run(["manifold", "rank", *_coupling_args(fixtures_dir)])
    assert code == 0
    assert "nullspace_dim=4" in capsys.readouterr().out


def test_manifold_sample_deterministic_given_seed(capsys, fixtures_dir):
    argv = ["manifold", "sample", *_coupling_args(fixtures_dir),
            "--n", "10", "--step", "0.0005", "--seed", "3"]
    assert run(argv) == 0
    first = capsys.readouterr().out
    assert run(argv) == 0
    assert capsys.readouterr().out == first
    assert len(first.splitlines()) == 10


def test_ingest_scan_empty_file(capsys, tmp_path):
    p = tmp_path / "empty.bin"
    p.write_bytes(b"")
    code = run(["ingest", "scan", str(p)])
    out = capsys.readouterr().out
    assert code == 0
    assert "frames_ok = 0" in out
    assert "crc_failures = 0" in out


def test_ingest_scan_missing_file_io_error(capsys, tmp_path):
    code = run(["ingest", "scan", str(tmp_path / "nope.bin")])
    assert code == 3


def test_sync_build_and_export(capsys, tmp_path, fixtures_dir):
    _write_capture(tmp_path)
    episode_dir = tmp_path / "episode"
    code = run(["sync", "build",
                "--frames", str(tmp_path / "frames.txt"),
                "--encoders", str(tmp_path / "encoders.bin"),
                "--poses", str(tmp_path / "poses.txt"),
                "--rate", "60", "--episode-id", "ep0",
                "--out", str(episode_dir)])
    out = capsys.readouterr().out
    assert code == 0
    assert "records=30" in out
    records, manifest = episode_store.read_episode(episode_dir)
    assert manifest.episode_id == "ep0"
    assert len(records) == 30

    export_file = tmp_path / "train.txt"
    code = run(["export", "--episode", str(episode_dir),
                "--horizon", "16", "--execute", "8",
                "--calibration", str(fixtures_dir / "calibration.txt"),
                "--out", str(export_file)])
    out = capsys.readouterr().out
    assert code == 0
    assert "samples=15" in out
    assert len(export_file.read_text().splitlines()) == 15


def test_calibrate_canonicalizes(capsys, tmp_path, fixtures_dir):
    out_file = tmp_path / "table.txt"
    code = run(["calibrate", str(fixtures_dir / "calibration.txt"),
                "--out", str(out_file)])
    assert code == 0
    assert out_file.exists()


def test_retarget_stream(capsys, tmp_path, fixtures_dir):
    blob = b"".join(encode_encoder_frame(EncoderFrame(i, i * 1_000, (2048,) * 6))
                    for i in range(5))
    stream = tmp_path / "s.bin"
    stream.write_bytes(blob)
    code = run(["retarget", "--table", str(fixtures_dir / "calibration.txt"),
                str(stream)])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 5
    assert lines[0].split()[:2] == ["0", "0"]


def test_wiggle_fit_cli(capsys, tmp_path):
    rng = np.random.default_rng(90)
    pts = rng.standard_normal((500, 3)) * [3.0, 2.0, 1.0]
    rows = "\n".join(" ".join(str(v) for v in p) for p in pts)
    cloud_file = tmp_path / "cloud.txt"
    cloud_file.write_text("# units=mm\n" + rows + "\n")
    code = run(["wiggle", "fit", str(cloud_file), "--k", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "semi_axes" in out and "coverage" in out


def test_export_binary_and_relative_fingers(capsys, tmp_path):
    _write_capture(tmp_path)
    episode_dir = tmp_path / "ep"
    run(["sync", "build", "--frames", str(tmp_path / "frames.txt"),
         "--encoders", str(tmp_path / "encoders.bin"),
         "--poses", str(tmp_path / "poses.txt"),
         "--episode-id", "ep1", "--out", str(episode_dir)])
    capsys.readouterr()
    out_bin = tmp_path / "train.bin"
    code = run(["export", "--episode", str(episode_dir), "--binary",
                "--relative-fingers", "--out", str(out_bin)])
    assert code == 0
    row = 4 + 2 + 2 + 16 * 12 * 8
    assert len(out_bin.read_bytes()) % row == 0


def test_ingest_scan_writes_frame_text(capsys, tmp_path):
    blob = b"".join(encode_encoder_frame(EncoderFrame(i, i * 1000, (i,) * 6))
                    for i in range(3))
    stream = tmp_path / "s.bin"
    stream.write_bytes(blob)
    out_txt = tmp_path / "frames_decoded.txt"
    code = run(["ingest", "scan", str(stream), "--out", str(out_txt)])
    assert code == 0
    lines = out_txt.read_text().splitlines()
    assert lines[1].split() == ["1", "1000", "1", "1", "1", "1", "1", "1"]


def test_manifold_rank_infeasible_geometry_domain_error(capsys, tmp_path, fixtures_dir):
    bad_geom = tmp_path / "bad.geom"
    bad_geom.write_text("r_bar_d = 0.01 0 -0.012\nr_bar_m = -0.035 0.005 -0.015\n"
                        "L_d = 1.0\nL_m = 0.0428\n")
    code = run(["manifold", "rank",
                "--chain", str(fixtures_dir / "passive_thumb.chain"),
                "--geometry", str(bad_geom),
                "--guess", "0.09 -0.01 0.035 1 0 0 0"])
    assert code == 1
    assert "error" in capsys.readouterr().err
