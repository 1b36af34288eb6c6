"""Grayscale image files: 8-bit binary PGM (P5) and 8/16-bit PNG.

In memory images stay normalized float arrays in [0, 1]; files quantize with
round-to-nearest.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image as PILImage


def to_uint8(image) -> np.ndarray:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8)


def to_uint16(image) -> np.ndarray:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 65535.0).astype(np.uint16)


def write_pgm(path, image):
    """8-bit binary PGM (P5)."""
    arr = to_uint8(image)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=m.end())
    return (pixels.reshape(h, w).astype(np.float32) / np.float32(255.0))


def write_png(path, image, bitdepth=16):
    if bitdepth == 16:
        PILImage.fromarray(to_uint16(image)).save(path)
    elif bitdepth == 8:
        PILImage.fromarray(to_uint8(image), mode="L").save(path)
    else:
        raise ValueError("bitdepth must be 8 or 16")


def encode_png_bytes(image, bitdepth=8) -> bytes:
    import io

    buf = io.BytesIO()
    if bitdepth == 16:
        PILImage.fromarray(to_uint16(image)).save(buf, format="PNG")
    else:
        PILImage.fromarray(to_uint8(image), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def read_png(path) -> np.ndarray:
    img = PILImage.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., 0]
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / np.float32(255.0)
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float32) / np.float32(65535.0)
    raise ValueError(f"{path}: unsupported PNG pixel type {arr.dtype}")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_png(path)


def write_image(path, image, bitdepth=16):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, image)
    else:
        write_png(path, image, bitdepth=bitdepth)
