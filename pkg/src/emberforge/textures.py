"""Texture maps, color-space transforms, entropy, and raw float I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTexture, MalformedFile, ShapeMismatch

EMTX_MAGIC = b"EMTX"


@dataclass(frozen=True)
class TextureMap:
    """Row-major float texture, 1 or 3 channels, immutable after construction.

    ``data`` has shape (height, width, channels). Values are linear and
    usually in [0, 1]; HDR render passes may exceed 1.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ShapeMismatch(f"channels must be 1 or 3, got {self.channels}")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != (self.height, self.width, self.channels):
            raise ShapeMismatch(
                f"data shape {arr.shape} != {(self.height, self.width, self.channels)}"
            )
        if not np.all(np.isfinite(arr)):
            raise ShapeMismatch("texture contains non-finite samples")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "TextureMap":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    @classmethod
    def constant(cls, value, channels: int = 3) -> "TextureMap":
        arr = np.full((1, 1, channels), 0.0)
        arr[0, 0, :] = value
        return cls(width=1, height=1, channels=channels, data=arr)

    @property
    def is_constant(self) -> bool:
        return self.width == 1 and self.height == 1

    def resized_nearest(self, width: int, height: int) -> "TextureMap":
        if width == self.width and height == self.height:
            return self
        ys = (np.arange(height) + 0.5) * self.height / height
        xs = (np.arange(width) + 0.5) * self.width / width
        yy = np.clip(ys.astype(int), 0, self.height - 1)
        xx = np.clip(xs.astype(int), 0, self.width - 1)
        return TextureMap.from_array(self.data[yy[:, None], xx[None, :], :])


def srgb_to_linear(s: np.ndarray) -> np.ndarray:
    """IEC 61966-2-1 piecewise sRGB decode."""
    s = np.asarray(s, dtype=np.float64)
    return np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    """IEC 61966-2-1 piecewise sRGB encode."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.709 luma of a linear (..., 3) array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ np.array([0.2126, 0.7152, 0.0722])


def color_entropy(tex: TextureMap, bins_per_channel: int = 8) -> float:
    """Shannon entropy (bits) of the joint RGB histogram.

    8 bins per channel (512 joint bins) over linear values clipped to [0, 1].
    """
    if tex.channels != 3:
        raise ShapeMismatch("color_entropy requires a 3-channel texture")
    if tex.width * tex.height == 0:
        raise EmptyTexture("texture has no pixels")
    q = np.clip(tex.data, 0.0, 1.0) * bins_per_channel
    idx = np.minimum(q.astype(np.int64), bins_per_channel - 1)
    flat = (idx[..., 0] * bins_per_channel + idx[..., 1]) * bins_per_channel + idx[..., 2]
    counts = np.bincount(flat.ravel(), minlength=bins_per_channel ** 3)
    p = counts[counts > 0] / flat.size
    return float(-np.sum(p * np.log2(p)))


def write_emtx(tex: TextureMap, path) -> None:
    """Raw float32 dump: 16-byte header {magic 'EMTX', u32 w, u32 h, u32 c}."""
    header = EMTX_MAGIC + struct.pack("<III", tex.width, tex.height, tex.channels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(tex.data, dtype="<f4").tobytes())


def read_emtx(path) -> TextureMap:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != EMTX_MAGIC:
            raise MalformedFile(f"{path}: not an EMTX file")
        w, h, c = struct.unpack("<III", header[4:])
        raw = np.frombuffer(fh.read(), dtype="<f4")
    if raw.size != w * h * c:
        raise MalformedFile(f"{path}: payload size mismatch")
    return TextureMap(width=w, height=h, channels=c, data=raw.reshape(h, w, c).astype(np.float64))
