"""FSTK frame-stack container.

Layout (all integers little-endian)::

    b"FSTK" | u32 version (=1) | u32 header_len | header (UTF-8 JSON) | float32 LE payload

The payload holds n_frames * height * width samples in row-major frame
order. The header declares the sizes; a reader accepts a file only when the
payload length matches them exactly.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .analysis import FrameStack

MAGIC = b"FSTK"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
REQUIRED = ("width", "height", "n_frames", "pitch_urad", "center_px", "label", "config_hash", "seed")


class FrameStackFormatError(ValueError):
    pass


def _r(x: float) -> float:
    # unit conversion leaves ulp noise; rounding makes write-read-write byte stable
    return round(float(x), 10)


def header_of(stack: FrameStack) -> dict:
    n, h, w = stack.frames.shape
    return {
        "width": int(w),
        "height": int(h),
        "n_frames": int(n),
        "pitch_urad": _r(stack.pitch * 1e6),
        "center_px": [_r(stack.center[0]), _r(stack.center[1])],
        "label": stack.label,
        "config_hash": stack.config_hash,
        "seed": int(stack.seed),
        "region_center_mrad": [_r(stack.region_center[0]), _r(stack.region_center[1])],
    }


def to_bytes(stack: FrameStack) -> bytes:
    header = json.dumps(header_of(stack), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(stack.frames, dtype="<f4").tobytes()
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + payload


def from_bytes(buf: bytes) -> FrameStack:
    header, offset = _parse_header(buf)
    n, h, w = header["n_frames"], header["height"], header["width"]
    expected = n * h * w * 4
    got = len(buf) - offset
    if got != expected:
        raise FrameStackFormatError(
            f"payload is {got} bytes but header declares {n}x{h}x{w} float32 = {expected} bytes"
        )
    frames = np.frombuffer(buf, dtype="<f4", count=n * h * w, offset=offset).reshape(n, h, w).copy()
    return _stack_from(header, frames)


def _parse_header(buf: bytes) -> tuple[dict, int]:
    if len(buf) < _PREFIX.size:
        raise FrameStackFormatError(f"file too short ({len(buf)} bytes) for the FSTK prefix")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise FrameStackFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FrameStackFormatError(f"unsupported FSTK version {version}")
    end = _PREFIX.size + hlen
    if end > len(buf):
        raise FrameStackFormatError(f"header declares {hlen} bytes but only {len(buf) - _PREFIX.size} remain")
    try:
        header = json.loads(buf[_PREFIX.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameStackFormatError(f"corrupt header: {exc}") from None
    if not isinstance(header, dict):
        raise FrameStackFormatError("header is not a JSON object")
    missing = [k for k in REQUIRED if k not in header]
    if missing:
        raise FrameStackFormatError(f"header missing keys: {', '.join(missing)}")
    for k in ("width", "height", "n_frames"):
        v = header[k]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise FrameStackFormatError(f"header field {k!r} must be a non-negative integer, got {v!r}")
    if not isinstance(header["pitch_urad"], (int, float)) or header["pitch_urad"] <= 0:
        raise FrameStackFormatError("header field 'pitch_urad' must be positive")
    c = header["center_px"]
    if not (isinstance(c, list) and len(c) == 2 and all(isinstance(x, (int, float)) for x in c)):
        raise FrameStackFormatError("header field 'center_px' must be a pair of numbers")
    return header, end


def _stack_from(header: dict, frames: np.ndarray) -> FrameStack:
    return FrameStack(
        frames=frames,
        pitch=header["pitch_urad"] * 1e-6,
        center=tuple(header["center_px"]),
        label=str(header["label"]),
        config_hash=str(header["config_hash"]),
        seed=int(header["seed"]),
        region_center=tuple(header.get("region_center_mrad", (0.0, 0.0))),
    )


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(_PREFIX.size)
        if len(head) < _PREFIX.size:
            raise FrameStackFormatError("file too short for the FSTK prefix")
        _, _, hlen = _PREFIX.unpack(head)
        buf = head + fh.read(hlen)
    header, _ = _parse_header(buf)
    return header


def read_stack(path) -> FrameStack:
    return from_bytes(Path(path).read_bytes())


def write_stack(stack: FrameStack, path) -> None:
    """Write atomically: the target either appears complete or not at all."""
    write_many({path: stack})


def write_many(items: dict) -> None:
    """Write several stacks; on any failure none of the targets is created."""
    staged = []
    try:
        for path, stack in items.items():
            path = Path(path)
            fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".part", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "wb") as fh:
                fh.write(to_bytes(stack))
        for tmp, path in staged:
            os.replace(tmp, path)
        staged = []
    finally:
        for tmp, _ in staged:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
