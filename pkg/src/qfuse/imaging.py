"""Image and layer file I/O.

Float layer dumps (``.qf32``) hold a little-endian uint32 header
``(planes, rows, cols)`` followed by ``planes * rows * cols`` little-endian
float32 values, plane by plane, each plane in row-major order.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

_DUMP_HEADER = struct.Struct("<III")


def read_image(path) -> np.ndarray:
    """Read a PNG/JPEG as float RGB in [0, 1] (8-bit values divided by 255)."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return rgb.astype(float) / 255.0


def to_uint8(rgb) -> np.ndarray:
    return np.clip(np.rint(np.asarray(rgb, dtype=float) * 255.0), 0, 255).astype(np.uint8)


def _atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_png(path, img) -> None:
    """Write an RGB float image or a uint8 grayscale/RGB array as PNG."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    _atomic_write(path, lambda fh: Image.fromarray(arr).save(fh, format="PNG"))


def write_layer_dump(path, layer) -> None:
    layer = np.asarray(layer, dtype=float)
    if layer.ndim == 2:
        layer = layer[..., None]
    planes = np.ascontiguousarray(np.moveaxis(layer, -1, 0), dtype="<f4")
    header = _DUMP_HEADER.pack(planes.shape[0], planes.shape[1], planes.shape[2])
    _atomic_write(path, lambda fh: (fh.write(header), fh.write(planes.tobytes())))


def read_layer_dump(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise ValueError(f"{path}: truncated layer dump")
    c, m, n = _DUMP_HEADER.unpack_from(raw)
    data = np.frombuffer(raw, dtype="<f4", offset=_DUMP_HEADER.size)
    if data.size != c * m * n:
        raise ValueError(f"{path}: expected {c}x{m}x{n} values, found {data.size}")
    return np.moveaxis(data.reshape(c, m, n), 0, -1).astype(float)
