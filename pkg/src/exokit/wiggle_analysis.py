"""Wiggle-space characterization of a measured marker trajectory.

Fits a covariance ellipsoid to a 3-D point cloud: unbiased covariance,
eigen-decomposition with a deterministic ordering and sign convention,
semi-axes scaled as k * sqrt(eigenvalue), plus empirical coverage and
volume.  Internal unit is meters; the point-cloud file may declare mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .kvformat import format_kv, format_number, format_vector

_SIGN_EPS = 1e-12
_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray                 # (N, 3), meters
    timestamps: np.ndarray | None = None  # (N,), seconds, non-decreasing

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("points must be an (N, 3) array with N >= 1")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=float).reshape(-1)
            if ts.shape[0] != pts.shape[0]:
                raise ValueError("timestamps length differs from points")
            if np.any(np.diff(ts) < 0.0):
                raise ValueError("timestamps must be non-decreasing")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class Ellipsoid:
    """Principal-axis ellipsoid: center, descending semi-axes a_i = k*sqrt(lambda_i),
    and the orthonormal eigenvector columns."""

    center: np.ndarray
    semi_axes: np.ndarray
    axes: np.ndarray
    k: float

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(3)
        semi = np.array(self.semi_axes, dtype=float).reshape(3)
        axes = np.array(self.axes, dtype=float).reshape(3, 3)
        if np.any(semi < 0.0):
            raise ValueError("semi-axes must be non-negative")
        if np.any(np.diff(semi) > 0.0):
            raise ValueError("semi-axes must be sorted descending")
        if np.max(np.abs(axes.T @ axes - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("axes matrix is not orthonormal")
        for arr in (center, semi, axes):
            arr.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "semi_axes", semi)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "k", float(self.k))


def covariance(cloud: PointCloud) -> np.ndarray:
    """Unbiased (N-1) sample covariance of the trajectory points."""
    n = len(cloud)
    if n < 2:
        raise ValueError("covariance needs at least 2 points")
    centered = cloud.points - cloud.points.mean(axis=0)
    return centered.T @ centered / (n - 1)


def _canonical_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs sorted by descending eigenvalue; each vector's first
    component larger than _SIGN_EPS in magnitude is made positive."""
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    for i in range(3):
        col = evecs[:, i]
        for c in col:
            if abs(c) > _SIGN_EPS:
                if c < 0.0:
                    evecs[:, i] = -col
                break
    return evals, evecs


def fit_ellipsoid(cloud: PointCloud, k: float) -> Ellipsoid:
    """Covariance ellipsoid of the cloud with semi-axes k * sqrt(lambda_i)."""
    if len(cloud) < 4:
        raise ValueError("ellipsoid fit needs at least 4 points")
    if k <= 0.0:
        raise ValueError("k must be positive")
    evals, evecs = _canonical_eigh(covariance(cloud))
    semi = k * np.sqrt(np.clip(evals, 0.0, None))
    return Ellipsoid(center=cloud.points.mean(axis=0), semi_axes=semi,
                     axes=evecs, k=k)


def coverage_fraction(cloud: PointCloud, e: Ellipsoid) -> float:
    """Fraction of points inside the ellipsoid (boundary inclusive).

    A point is inside when sum_j (q_j / a_j)^2 <= 1 with q the point in
    the principal frame; a degenerate axis (a_j = 0) admits only points
    with q_j exactly 0 in that direction.
    """
    q = (cloud.points - e.center) @ e.axes
    total = np.zeros(len(cloud))
    for j in range(3):
        a = e.semi_axes[j]
        if a > 0.0:
            total += (q[:, j] / a) ** 2
        else:
            total = np.where(q[:, j] == 0.0, total, np.inf)
    return float(np.mean(total <= 1.0))


def ellipsoid_volume(e: Ellipsoid) -> float:
    return 4.0 / 3.0 * math.pi * float(np.prod(e.semi_axes))


# --- point-cloud file and report ------------------------------------------

def parse_point_cloud(text: str) -> PointCloud:
    """Text cloud: header ``# units=mm|m``, then ``x y z`` or ``t x y z`` rows."""
    scale = None
    rows: list[list[float]] = []
    times: list[float] = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.startswith("units="):
                unit = body[len("units="):].strip()
                if unit not in ("mm", "m"):
                    raise FormatError(f"unknown units {unit!r}", line=lineno)
                scale = 1e-3 if unit == "mm" else 1.0
            continue
        if not stripped:
            continue
        if scale is None:
            raise FormatError("missing '# units=mm|m' header before data",
                              line=lineno)
        tokens = stripped.split()
        if width is None:
            if len(tokens) not in (3, 4):
                raise FormatError("expected 'x y z' or 't x y z'", line=lineno)
            width = len(tokens)
        elif len(tokens) != width:
            raise FormatError(f"expected {width} columns", line=lineno)
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            raise FormatError("bad number", line=lineno) from None
        if width == 4:
            times.append(vals[0])
            rows.append(vals[1:])
        else:
            rows.append(vals)
    if not rows:
        raise FormatError("no data rows")
    pts = np.array(rows) * scale
    return PointCloud(pts, np.array(times) if width == 4 else None)


def write_point_cloud(cloud: PointCloud, units: str = "m") -> str:
    if units not in ("mm", "m"):
        raise ValueError("units must be 'mm' or 'm'")
    scale = 1e3 if units == "mm" else 1.0
    lines = [f"# units={units}"]
    for i, p in enumerate(cloud.points):
        row = " ".join(format_number(v) for v in p * scale)
        if cloud.timestamps is not None:
            row = f"{format_number(cloud.timestamps[i])} {row}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def format_ellipsoid_report(e: Ellipsoid, coverage: float | None = None) -> str:
    pairs = [
        ("center", format_vector(e.center)),
        ("semi_axes", format_vector(e.semi_axes)),
        ("axes_row_0", format_vector(e.axes[0])),
        ("axes_row_1", format_vector(e.axes[1])),
        ("axes_row_2", format_vector(e.axes[2])),
        ("k", format_number(e.k)),
        ("volume", format_number(ellipsoid_volume(e))),
    ]
    if coverage is not None:
        pairs.append(("coverage", format_number(coverage)))
    return format_kv(pairs)
