"""Encoder-to-actuator retargeting via per-joint piecewise-linear tables.

Waypoints are sampled at identical physical postures on the exoskeleton
and the target hand.  Queries outside the calibrated range clamp to the
end commands: extrapolated actuator commands are a hardware hazard, so
the output never leaves the waypoint command envelope.

Calibration file: text rows ``joint <i> <raw> <command>`` with ``#``
comments; loading always passes through :func:`calibrate` validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ToolkitError
from .kvformat import format_number
from .stream_ingest import EncoderFrame

NUM_JOINTS = 6


@dataclass(frozen=True)
class CalibrationTable:
    """Per-joint waypoint arrays: strictly increasing raw counts and the
    matching actuator commands."""

    raws: tuple[np.ndarray, ...]
    commands: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.raws) != NUM_JOINTS or len(self.commands) != NUM_JOINTS:
            raise ValueError(f"table needs {NUM_JOINTS} joints")
        raws, commands = [], []
        for joint, (r, c) in enumerate(zip(self.raws, self.commands)):
            r = np.array(r, dtype=float)
            c = np.array(c, dtype=float)
            if r.shape != c.shape or r.ndim != 1 or r.size < 2:
                raise ValueError(f"joint {joint}: needs >= 2 waypoint pairs")
            if np.any(np.diff(r) <= 0.0):
                raise ValueError(f"joint {joint}: raw values must strictly increase")
            if not np.all(np.isfinite(c)) or not np.all(np.isfinite(r)):
                raise ValueError(f"joint {joint}: non-finite waypoint")
            r.setflags(write=False)
            c.setflags(write=False)
            raws.append(r)
            commands.append(c)
        object.__setattr__(self, "raws", tuple(raws))
        object.__setattr__(self, "commands", tuple(commands))


def calibrate(pairs) -> CalibrationTable:
    """Build a validated table from 6 per-joint waypoint pair lists.

    Pairs are sorted by raw count; exact duplicates collapse, while a
    repeated raw count with conflicting commands is an error.
    """
    if len(pairs) != NUM_JOINTS:
        raise ToolkitError(f"expected waypoints for {NUM_JOINTS} joints, got {len(pairs)}")
    raws, commands = [], []
    for joint, joint_pairs in enumerate(pairs):
        dedup: dict[float, float] = {}
        for raw, cmd in joint_pairs:
            raw, cmd = float(raw), float(cmd)
            if raw in dedup and dedup[raw] != cmd:
                raise ToolkitError(
                    f"joint {joint}: conflicting commands {dedup[raw]} and {cmd} "
                    f"at raw {raw}")
            dedup[raw] = cmd
        if len(dedup) < 2:
            raise ToolkitError(f"joint {joint}: needs >= 2 distinct waypoints")
        xs = sorted(dedup)
        raws.append(np.array(xs))
        commands.append(np.array([dedup[x] for x in xs]))
    return CalibrationTable(tuple(raws), tuple(commands))


def map_encoder(table: CalibrationTable, joint: int, raw: float) -> float:
    """Piecewise-linear command for a raw count; exact at waypoints,
    clamped to the end commands outside the calibrated range."""
    if not 0 <= joint < NUM_JOINTS:
        raise ToolkitError(f"joint index {joint} out of range")
    return float(np.interp(raw, table.raws[joint], table.commands[joint]))


def invert_map(table: CalibrationTable, joint: int, command: float) -> float:
    """Raw count whose mapped command equals ``command``.

    Defined only when the joint's commands are strictly monotone; the
    inverse clamps outside the command range like the forward map.
    """
    if not 0 <= joint < NUM_JOINTS:
        raise ToolkitError(f"joint index {joint} out of range")
    cmds = table.commands[joint]
    raws = table.raws[joint]
    diffs = np.diff(cmds)
    if np.all(diffs > 0.0):
        return float(np.interp(command, cmds, raws))
    if np.all(diffs < 0.0):
        return float(np.interp(command, cmds[::-1], raws[::-1]))
    raise ToolkitError(f"joint {joint}: commands not strictly monotone; "
                       "inverse undefined")


def apply_table(table: CalibrationTable, frame: EncoderFrame) -> tuple[float, ...]:
    """Channel-wise map of one encoder frame to 6 actuator commands."""
    return tuple(map_encoder(table, j, frame.values[j]) for j in range(NUM_JOINTS))


def parse_calibration(text: str) -> CalibrationTable:
    pairs: list[list[tuple[float, float]]] = [[] for _ in range(NUM_JOINTS)]
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 4 or tokens[0] != "joint":
            raise FormatError("expected 'joint <i> <raw> <command>'", line=lineno)
        try:
            joint = int(tokens[1])
            raw, cmd = float(tokens[2]), float(tokens[3])
        except ValueError:
            raise FormatError("bad number", line=lineno) from None
        if not 0 <= joint < NUM_JOINTS:
            raise FormatError(f"joint index {joint} out of range", line=lineno)
        pairs[joint].append((raw, cmd))
    return calibrate(pairs)


def write_calibration(table: CalibrationTable) -> str:
    lines = []
    for joint in range(NUM_JOINTS):
        for raw, cmd in zip(table.raws[joint], table.commands[joint]):
            lines.append(f"joint {joint} {format_number(raw)} {format_number(cmd)}")
    return "\n".join(lines) + "\n"
