"""Minimal OpenEXR 2.0 codec: single-part, scanline, uncompressed float32.

Covers exactly what the render pipeline writes (RGB or single-channel
linear HDR images). Compressed or tiled files from other tools are
rejected loudly.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import MalformedFile, UnsupportedFeature

_MAGIC = 20000630
_PIXEL_FLOAT = 2


def _attr(name: str, typ: str, payload: bytes) -> bytes:
    return name.encode() + b"\0" + typ.encode() + b"\0" + struct.pack("<i", len(payload)) + payload


def _channel_list(names) -> bytes:
    out = b""
    for name in sorted(names):
        out += name.encode() + b"\0"
        out += struct.pack("<i", _PIXEL_FLOAT) + b"\0\0\0\0" + struct.pack("<ii", 1, 1)
    return out + b"\0"


def write_exr(path, image: np.ndarray) -> None:
    """Write an (H, W) or (H, W, 1|3) float array as uncompressed EXR."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    if c == 3:
        names = ["R", "G", "B"]
    elif c == 1:
        names = ["Y"]
    else:
        raise UnsupportedFeature(f"EXR writer supports 1 or 3 channels, got {c}")
    order = sorted(range(c), key=lambda i: names[i])

    header = _attr("channels", "chlist", _channel_list(names))
    header += _attr("compression", "compression", b"\0")
    box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
    header += _attr("dataWindow", "box2i", box)
    header += _attr("displayWindow", "box2i", box)
    header += _attr("lineOrder", "lineOrder", b"\0")
    header += _attr("pixelAspectRatio", "float", struct.pack("<f", 1.0))
    header += _attr("screenWindowCenter", "v2f", struct.pack("<ff", 0.0, 0.0))
    header += _attr("screenWindowWidth", "float", struct.pack("<f", 1.0))
    header += b"\0"

    preamble = struct.pack("<ii", _MAGIC, 2) + header
    table_size = 8 * h
    row_bytes = 8 + c * w * 4
    first_chunk = len(preamble) + table_size
    offsets = struct.pack("<" + "Q" * h, *(first_chunk + y * row_bytes for y in range(h)))

    with open(path, "wb") as fh:
        fh.write(preamble)
        fh.write(offsets)
        for y in range(h):
            fh.write(struct.pack("<ii", y, c * w * 4))
            for i in order:
                fh.write(img[y, :, i].astype("<f4").tobytes())


def _read_cstr(buf: bytes, pos: int):
    end = buf.index(b"\0", pos)
    return buf[pos:end].decode(), end + 1


def read_exr(path) -> np.ndarray:
    """Read an EXR written by :func:`write_exr` (or an equivalent subset)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 8 or struct.unpack("<i", buf[:4])[0] != _MAGIC:
        raise MalformedFile(f"{path}: not an EXR file")
    version = struct.unpack("<i", buf[4:8])[0]
    if version & 0x200 or version & 0x1000:
        raise UnsupportedFeature("tiled or multi-part EXR not supported")

    pos = 8
    channels: list[str] = []
    compression = None
    data_window = None
    while buf[pos] != 0:
        name, pos = _read_cstr(buf, pos)
        typ, pos = _read_cstr(buf, pos)
        size = struct.unpack("<i", buf[pos:pos + 4])[0]
        pos += 4
        payload = buf[pos:pos + size]
        pos += size
        if name == "channels":
            cpos = 0
            while payload[cpos] != 0:
                cname, cpos = _read_cstr(payload, cpos)
                ptype = struct.unpack("<i", payload[cpos:cpos + 4])[0]
                if ptype != _PIXEL_FLOAT:
                    raise UnsupportedFeature("only float32 channels supported")
                cpos += 16
                channels.append(cname)
        elif name == "compression":
            compression = payload[0]
        elif name == "dataWindow":
            data_window = struct.unpack("<iiii", payload)
    pos += 1

    if compression != 0:
        raise UnsupportedFeature("only uncompressed EXR supported")
    if data_window is None or not channels:
        raise MalformedFile(f"{path}: missing required attributes")
    x0, y0, x1, y1 = data_window
    w, h = x1 - x0 + 1, y1 - y0 + 1

    offsets = struct.unpack("<" + "Q" * h, buf[pos:pos + 8 * h])
    img = np.empty((h, len(channels), w), dtype=np.float32)
    for row, off in enumerate(offsets):
        y, nbytes = struct.unpack("<ii", buf[off:off + 8])
        if nbytes != len(channels) * w * 4:
            raise MalformedFile(f"{path}: scanline size mismatch at y={y}")
        line = np.frombuffer(buf[off + 8:off + 8 + nbytes], dtype="<f4").reshape(len(channels), w)
        img[y - y0] = line

    if sorted(channels) == ["B", "G", "R"]:
        out = np.stack([img[:, channels.index(n), :] for n in ("R", "G", "B")], axis=-1)
    elif len(channels) == 1:
        out = img[:, 0, :, None]
    else:
        out = np.stack([img[:, i, :] for i in range(len(channels))], axis=-1)
    return out.astype(np.float64)
