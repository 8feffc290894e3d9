"""Readers and writers for event, image, voxel and parameter files.

Binary layouts (all little-endian):

* EVT1 events: ``"EVT1" | width u16 | height u16 | t_start u64 | t_end u64 |
  count u64`` then ``count`` records of ``t u64 | x u16 | y u16 | p u8 | pad u8``
  with ``p`` stored as 0 for -1 and 1 for +1.
* PGM: binary P5 with maxval 255.
* PFG1 float image: ``"PFG1" | width u16 | height u16`` then float32 values.
* VOX1 voxel grid: ``"VOX1" | width u16 | height u16 | channels u16 | pad u16``
  then float32 values, row-major within channel, channels outermost.

Events may also be stored as CSV (chosen by the ``.csv`` extension): a
``# window t_start t_end width height`` line, the header ``t,x,y,p`` and one
event per line.
"""
from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .core import EventStream, IntensityImage, VoxelGrid

EVT_HEADER = struct.Struct("<4sHHQQQ")
EVT_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")])
PFG_HEADER = struct.Struct("<4sHH")
VOX_HEADER = struct.Struct("<4sHHHH")


class FormatError(ValueError):
    """Raised when a file does not match its declared format."""


# -- events ------------------------------------------------------------------

def write_events(stream: EventStream, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(events_to_csv(stream))
    else:
        path.write_bytes(events_to_bytes(stream))


def read_events(path) -> EventStream:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return events_from_csv(path.read_text())
    return events_from_bytes(path.read_bytes())


def events_to_bytes(stream: EventStream) -> bytes:
    rec = np.zeros(len(stream), dtype=EVT_RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p > 0
    header = EVT_HEADER.pack(b"EVT1", stream.width, stream.height,
                             stream.t_start, stream.t_end, len(stream))
    return header + rec.tobytes()


def events_from_bytes(data: bytes) -> EventStream:
    if len(data) < EVT_HEADER.size:
        raise FormatError("truncated EVT1 header")
    magic, width, height, t0, t1, count = EVT_HEADER.unpack_from(data)
    if magic != b"EVT1":
        raise FormatError(f"bad magic {magic!r}")
    body = data[EVT_HEADER.size:]
    if len(body) != count * EVT_RECORD.itemsize:
        raise FormatError(f"header declares {count} events, body holds {len(body) / EVT_RECORD.itemsize:g}")
    if t0 >= 2**63 or t1 >= 2**63:
        raise FormatError("window exceeds supported timestamp range")
    rec = np.frombuffer(body, dtype=EVT_RECORD)
    if np.any(rec["p"] > 1) or np.any(rec["pad"] != 0):
        raise FormatError("invalid polarity or padding byte")
    if count and rec["t"].max() >= 2**63:
        raise FormatError("timestamp exceeds supported range")
    t = rec["t"].astype(np.int64)
    _check_events(t, t0, t1)
    p = np.where(rec["p"] == 1, 1, -1)
    try:
        return EventStream(width, height, t0, t1, t, rec["x"], rec["y"], p)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def _check_events(t: np.ndarray, t0: int, t1: int) -> None:
    if len(t) and (t.min() < t0 or t.max() > t1):
        raise FormatError("timestamp out of window")
    if np.any(np.diff(t) < 0):
        raise FormatError("timestamps are not sorted")


def events_to_csv(stream: EventStream) -> str:
    lines = [f"# window {stream.t_start} {stream.t_end} {stream.width} {stream.height}", "t,x,y,p"]
    lines.extend(f"{e.t},{e.x},{e.y},{e.p}" for e in stream)
    return "\n".join(lines) + "\n"


def events_from_csv(text: str) -> EventStream:
    window = None
    rows = []
    header_seen = False
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.fullmatch(r"#\s*window\s+(\d+)\s+(\d+)\s+(\d+)\s+(\d+)", line)
            if m:
                window = tuple(int(v) for v in m.groups())
            continue
        if not header_seen:
            if line.replace(" ", "") != "t,x,y,p":
                raise FormatError(f"line {n}: expected header 't,x,y,p'")
            header_seen = True
            continue
        try:
            t, x, y, p = (int(v) for v in line.split(","))
        except ValueError:
            raise FormatError(f"line {n}: malformed event {line!r}") from None
        if p not in (-1, 1):
            raise FormatError(f"line {n}: polarity must be -1 or 1")
        rows.append((t, x, y, p))
    if window is None:
        raise FormatError("missing '# window t_start t_end width height' line")
    if not header_seen:
        raise FormatError("missing header line")
    t0, t1, width, height = window
    cols = np.array(rows, dtype=np.int64).reshape(-1, 4).T
    _check_events(cols[0], t0, t1)
    try:
        return EventStream(width, height, t0, t1, *cols)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# -- images ------------------------------------------------------------------

def quantize(pixels: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to 8-bit codes, rounding half away from zero."""
    v = np.asarray(pixels, dtype=np.float64) * 255.0
    return np.clip(np.sign(v) * np.floor(np.abs(v) + 0.5), 0, 255).astype(np.uint8)


def write_image(image: IntensityImage, path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".pfg", ".pfm"):
        path.write_bytes(pfg_to_bytes(image.pixels))
    else:
        path.write_bytes(pgm_to_bytes(quantize(image.pixels)))


def read_image(path) -> IntensityImage:
    data = Path(path).read_bytes()
    if data[:4] == b"PFG1":
        return IntensityImage(pfg_from_bytes(data))
    if data[:2] == b"P5":
        return IntensityImage(pgm_from_bytes(data) / 255.0)
    raise FormatError(f"unsupported image magic {data[:4]!r}")


def pgm_to_bytes(codes: np.ndarray) -> bytes:
    codes = np.asarray(codes, dtype=np.uint8)
    h, w = codes.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + codes.tobytes()


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def pgm_from_bytes(data: bytes) -> np.ndarray:
    """Parse a binary P5 file into its raw uint8 codes."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise FormatError("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FormatError(f"unsupported PGM magic {fields[0]!r}")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError("non-numeric PGM header field") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = data[pos:]
    if len(body) != w * h:
        raise FormatError(f"PGM declares {w}x{h} but holds {len(body)} bytes")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def pfg_to_bytes(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    h, w = values.shape
    return PFG_HEADER.pack(b"PFG1", w, h) + values.astype("<f4").tobytes()


def pfg_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < PFG_HEADER.size:
        raise FormatError("truncated PFG1 header")
    magic, w, h = PFG_HEADER.unpack_from(data)
    if magic != b"PFG1":
        raise FormatError(f"bad magic {magic!r}")
    body = data[PFG_HEADER.size:]
    if len(body) != 4 * w * h:
        raise FormatError(f"PFG1 declares {w}x{h} but holds {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)


def write_array(values: np.ndarray, path) -> None:
    """Write any 2-D real array (e.g. a threshold map) in the PFG1 layout."""
    Path(path).write_bytes(pfg_to_bytes(values))


def read_array(path) -> np.ndarray:
    return pfg_from_bytes(Path(path).read_bytes())


def write_mask(mask, path) -> None:
    Path(path).write_bytes(pgm_to_bytes(np.asarray(mask.m, dtype=np.uint8) * 255))


# -- voxel grids -------------------------------------------------------------

def voxels_to_bytes(grid: VoxelGrid) -> bytes:
    k, h, w = grid.values.shape
    return VOX_HEADER.pack(b"VOX1", w, h, k, 0) + grid.values.astype("<f4").tobytes()


def voxels_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < VOX_HEADER.size:
        raise FormatError("truncated VOX1 header")
    magic, w, h, k, _ = VOX_HEADER.unpack_from(data)
    if magic != b"VOX1":
        raise FormatError(f"bad magic {magic!r}")
    body = data[VOX_HEADER.size:]
    if len(body) != 4 * w * h * k:
        raise FormatError(f"VOX1 declares {k}x{h}x{w} but holds {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(k, h, w).astype(np.float64)


def write_voxels(grid: VoxelGrid, path) -> None:
    Path(path).write_bytes(voxels_to_bytes(grid))


def read_voxels(path) -> VoxelGrid:
    return VoxelGrid(voxels_from_bytes(Path(path).read_bytes()))


# -- named float64 arrays (attention parameters) -----------------------------

def write_arrays(arrays: dict[str, np.ndarray], path) -> None:
    """Store named float64 arrays: ``"ARR1" | count u16`` then per array
    ``name_len u8 | name | ndim u8 | dims u32... | float64 values``."""
    out = [b"ARR1", struct.pack("<H", len(arrays))]
    for name, a in arrays.items():
        a = np.asarray(a, dtype="<f8")
        key = name.encode("ascii")
        out.append(struct.pack("<B", len(key)) + key + struct.pack("<B", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    Path(path).write_bytes(b"".join(out))


def read_arrays(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != b"ARR1":
        raise FormatError(f"bad magic {data[:4]!r}")
    (count,) = struct.unpack_from("<H", data, 4)
    pos = 6
    arrays = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<B", data, pos)
            name = data[pos + 1: pos + 1 + n].decode("ascii")
            pos += 1 + n
            (ndim,) = struct.unpack_from("<B", data, pos)
            shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape)) * 8
            if pos + size > len(data):
                raise FormatError("truncated array payload")
            arrays[name] = np.frombuffer(data[pos: pos + size], dtype="<f8").reshape(shape).copy()
            pos += size
    except struct.error as exc:
        raise FormatError(f"truncated array container: {exc}") from None
    if pos != len(data):
        raise FormatError("trailing bytes after array container")
    return arrays
