"""Raw sensor stream formats: the binary encoder protocol, the pose log,
and the video frame index.

Encoder wire format (little-endian, 28 bytes per frame)::

    magic   2 B   0xD5 0xE0
    seq     u32   frame counter
    t_us    u64   host-clock timestamp, microseconds
    values  6*u16 raw encoder readings
    crc     u16   CRC16/CCITT-FALSE over the 24 bytes after the magic

Fixed-size frames keep 1 kHz framing trivial: the scanner resynchronizes
on the magic pair and drops CRC-failing candidates without aborting.
Sequence gaps are diagnostics, not errors.

Pose log and frame index are whitespace-separated text with ``#``
comments and integer microsecond timestamps::

    t_us px py pz qw qx qy qz        (pose log, meters)
    frame_no t_us                    (frame index)
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .kvformat import format_kv, format_number

logger = logging.getLogger(__name__)

MAGIC = b"\xd5\xe0"
_PAYLOAD = struct.Struct("<IQ6H")
_CRC = struct.Struct("<H")
FRAME_SIZE = len(MAGIC) + _PAYLOAD.size + _CRC.size  # 28

QUAT_WARN_TOL = 1e-6

_U16_MAX = 0xFFFF
_U32_MAX = 0xFFFFFFFF
_U64_MAX = 0xFFFFFFFFFFFFFFFF


def _crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return table


_CRC_TABLE = _crc_table()


def crc16(data: bytes) -> int:
    """CRC16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


@dataclass(frozen=True)
class EncoderFrame:
    """One 1 kHz sample of the six raw encoder channels."""

    seq: int
    t_us: int
    values: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.seq <= _U32_MAX:
            raise ValueError("seq out of u32 range")
        if not 0 <= self.t_us <= _U64_MAX:
            raise ValueError("t_us out of u64 range")
        values = tuple(int(v) for v in self.values)
        if len(values) != 6 or any(not 0 <= v <= _U16_MAX for v in values):
            raise ValueError("values must be 6 u16 readings")
        object.__setattr__(self, "values", values)


@dataclass
class StreamDiagnostics:
    frames_ok: int = 0
    crc_failures: int = 0
    resyncs: int = 0
    seq_gaps: int = 0
    truncated_tail: bool = False


def encode_encoder_frame(f: EncoderFrame) -> bytes:
    payload = _PAYLOAD.pack(f.seq, f.t_us, *f.values)
    return MAGIC + payload + _CRC.pack(crc16(payload))


def decode_encoder_frame(buf: bytes) -> EncoderFrame:
    """Strict single-frame decode (magic + CRC verified)."""
    if len(buf) != FRAME_SIZE:
        raise FormatError(f"frame must be {FRAME_SIZE} bytes, got {len(buf)}")
    if buf[:2] != MAGIC:
        raise FormatError("bad magic")
    payload = buf[2:-2]
    if crc16(payload) != _CRC.unpack(buf[-2:])[0]:
        raise FormatError("CRC mismatch")
    seq, t_us, *values = _PAYLOAD.unpack(payload)
    return EncoderFrame(seq, t_us, tuple(values))


class StreamScanner:
    """Incremental frame scanner with magic-byte resynchronization.

    Holds at most one partial frame of buffered bytes between ``feed``
    calls; one producer per scanner.  All malformed input turns into
    diagnostics, never exceptions.
    """

    def __init__(self):
        self._buf = b""
        self._diag = StreamDiagnostics()
        self._last_seq: int | None = None
        self._skipped_since_frame = False
        self._finished = False

    def feed(self, data: bytes) -> list[EncoderFrame]:
        if self._finished:
            raise RuntimeError("scanner already finished")
        buf = self._buf + bytes(data)
        frames: list[EncoderFrame] = []
        pos = 0
        while True:
            idx = buf.find(MAGIC, pos)
            if idx < 0:
                # a lone trailing first-magic-byte may be a split magic pair;
                # everything else in the tail is decidably garbage
                tail = buf[pos:]
                if tail.endswith(MAGIC[:1]):
                    if len(tail) > 1:
                        self._skipped_since_frame = True
                    self._buf = tail[-1:]
                else:
                    if tail:
                        self._skipped_since_frame = True
                    self._buf = b""
                return frames
            if idx > pos:
                self._skipped_since_frame = True
            if idx + FRAME_SIZE > len(buf):
                self._buf = buf[idx:]
                return frames
            candidate = buf[idx:idx + FRAME_SIZE]
            payload = candidate[2:-2]
            if crc16(payload) == _CRC.unpack(candidate[-2:])[0]:
                seq, t_us, *values = _PAYLOAD.unpack(payload)
                frames.append(EncoderFrame(seq, t_us, tuple(values)))
                self._diag.frames_ok += 1
                if self._skipped_since_frame:
                    self._diag.resyncs += 1
                    self._skipped_since_frame = False
                if self._last_seq is not None and seq != self._last_seq + 1:
                    self._diag.seq_gaps += 1
                self._last_seq = seq
                pos = idx + FRAME_SIZE
            else:
                self._diag.crc_failures += 1
                self._skipped_since_frame = True
                pos = idx + 1

    def finish(self) -> StreamDiagnostics:
        """Finalize and return diagnostics; the scanner is single-use."""
        if not self._finished:
            self._finished = True
            self._diag.truncated_tail = self._buf.startswith(MAGIC)
        return self._diag


def scan_stream(data: bytes) -> tuple[list[EncoderFrame], StreamDiagnostics]:
    """Batch scan: every well-formed frame in ``data`` plus diagnostics."""
    scanner = StreamScanner()
    frames = scanner.feed(data)
    return frames, scanner.finish()


def format_diagnostics(diag: StreamDiagnostics) -> str:
    return format_kv([
        ("frames_ok", str(diag.frames_ok)),
        ("crc_failures", str(diag.crc_failures)),
        ("resyncs", str(diag.resyncs)),
        ("seq_gaps", str(diag.seq_gaps)),
        ("truncated_tail", str(diag.truncated_tail).lower()),
    ])


# --- pose log ---------------------------------------------------------------

@dataclass(frozen=True)
class PoseSample:
    """Timestamped end-effector sample: position (m) and unit quaternion
    (w, x, y, z), renormalized on ingest."""

    t_us: int
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        if not 0 <= self.t_us <= _U64_MAX:
            raise ValueError("t_us out of u64 range")
        pos = np.array(self.position, dtype=float).reshape(3)
        ori = np.array(self.orientation, dtype=float).reshape(4)
        n = np.linalg.norm(ori)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("orientation quaternion is zero or non-finite")
        if abs(n - 1.0) > QUAT_WARN_TOL:
            raise ValueError(
                f"orientation norm {n!r} not within {QUAT_WARN_TOL} of 1 "
                "(renormalize before constructing)")
        pos.setflags(write=False)
        ori.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", ori)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoseSample):
            return NotImplemented
        return (self.t_us == other.t_us
                and np.array_equal(self.position, other.position)
                and np.array_equal(self.orientation, other.orientation))


def parse_pose_log(text: str) -> list[PoseSample]:
    """Parse pose rows; quaternions are renormalized (deviation beyond
    1e-6 is logged as a warning), timestamps must strictly increase."""
    samples: list[PoseSample] = []
    last_t: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 8:
            raise FormatError(f"expected 8 fields, got {len(tokens)}", line=lineno)
        try:
            t_us = int(tokens[0])
            vals = [float(t) for t in tokens[1:]]
        except ValueError:
            raise FormatError("bad number", line=lineno) from None
        if t_us < 0:
            raise FormatError("negative timestamp", line=lineno)
        if last_t is not None and t_us <= last_t:
            raise FormatError(
                f"non-monotone timestamp {t_us} after {last_t}", line=lineno)
        last_t = t_us
        quat = np.array(vals[3:7])
        n = np.linalg.norm(quat)
        if not np.isfinite(n) or n == 0.0:
            raise FormatError("zero or non-finite quaternion", line=lineno)
        if abs(n - 1.0) > QUAT_WARN_TOL:
            logger.warning("line %d: quaternion norm deviates by %.3e; renormalized",
                           lineno, abs(n - 1.0))
        if abs(n - 1.0) > 1e-12:  # leave already-unit values bit-stable
            quat = quat / n
        samples.append(PoseSample(t_us, np.array(vals[0:3]), quat))
    return samples


def write_pose_log(samples) -> str:
    lines = []
    for s in samples:
        fields = [str(s.t_us)]
        fields += [format_number(v) for v in s.position]
        fields += [format_number(v) for v in s.orientation]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n" if lines else ""


# --- frame index ------------------------------------------------------------

@dataclass(frozen=True)
class FrameIndexEntry:
    frame_no: int
    t_us: int

    def __post_init__(self):
        if not 0 <= self.frame_no <= _U32_MAX:
            raise ValueError("frame_no out of u32 range")
        if not 0 <= self.t_us <= _U64_MAX:
            raise ValueError("t_us out of u64 range")


def parse_frame_index(text: str) -> list[FrameIndexEntry]:
    entries: list[FrameIndexEntry] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise FormatError(f"expected 'frame_no t_us', got {len(tokens)} fields",
                              line=lineno)
        try:
            frame_no, t_us = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise FormatError("bad integer", line=lineno) from None
        if entries:
            if frame_no <= entries[-1].frame_no:
                raise FormatError("frame_no must strictly increase", line=lineno)
            if t_us < entries[-1].t_us:
                raise FormatError("t_us must be non-decreasing", line=lineno)
        entries.append(FrameIndexEntry(frame_no, t_us))
    return entries


def write_frame_index(entries) -> str:
    lines = [f"{e.frame_no} {e.t_us}" for e in entries]
    return "\n".join(lines) + "\n" if lines else ""


def format_encoder_frames(frames) -> str:
    """Human-readable text rows for decoded frames: seq t_us v0..v5."""
    lines = [" ".join([str(f.seq), str(f.t_us), *(str(v) for v in f.values)])
             for f in frames]
    return "\n".join(lines) + "\n" if lines else ""
