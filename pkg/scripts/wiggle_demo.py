#!/usr/bin/env python3
"""Synthetic wiggle-space experiment on the repo fixture.

Random-walks the thumb-coupling self-motion manifold, records the distal
attachment point like a reflective marker, fits the k=2 covariance
ellipsoid to the resulting cloud, and prints the report.  Mirrors the
physical measurement procedure on model-generated data.
"""

import argparse
from pathlib import Path

import numpy as np

from exokit import hand_model, thumb_coupling, wiggle_analysis
from exokit.geometry import Pose

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000, help="walk length")
    ap.add_argument("--step", type=float, default=1e-3, help="twist step, m")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=float, default=2.0)
    ap.add_argument("--cloud-out", help="also write the marker cloud (mm)")
    args = ap.parse_args()

    chain = hand_model.parse_chain((ROOT / "fixtures/passive_thumb.chain").read_text())
    geom = thumb_coupling.parse_geometry(
        (ROOT / "fixtures/thumb_coupling.geom").read_text())
    f = hand_model.CouplingFunction.identity()
    q_p = hand_model.PassiveThumbConfig(0.3, 0.15)

    guess = Pose.from_parts([1.0, 0, 0, 0], [0.09, -0.01, 0.035])
    pose0 = thumb_coupling.project_to_manifold(guess, q_p, geom, chain, f)
    poses = thumb_coupling.sample_self_motion(pose0, q_p, geom, chain, f,
                                              n=args.n, step=args.step,
                                              seed=args.seed)

    marker = np.array([p.apply(geom.r_bar_d) for p in poses])
    cloud = wiggle_analysis.PointCloud(marker)
    ellipsoid = wiggle_analysis.fit_ellipsoid(cloud, k=args.k)
    coverage = wiggle_analysis.coverage_fraction(cloud, ellipsoid)

    print(f"# self-motion walk: n={args.n} step={args.step} seed={args.seed}")
    print(f"# semi-axes (mm): "
          + " ".join(f"{a * 1e3:.2f}" for a in ellipsoid.semi_axes))
    print(wiggle_analysis.format_ellipsoid_report(ellipsoid, coverage), end="")

    if args.cloud_out:
        Path(args.cloud_out).write_text(
            wiggle_analysis.write_point_cloud(cloud, units="mm"))
        print(f"# cloud written to {args.cloud_out}")


if __name__ == "__main__":
    main()
