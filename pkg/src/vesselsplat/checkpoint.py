"""Binary cloud checkpoints.

Little-endian layout: magic ``TOGS``, format version u32, N u64, L u32,
then the columnar arrays as f32 in fixed order: position (3N), rotation (4N),
log_scale (3N), opacity_logit (N), offset_table (L*N, row-major per Gaussian),
intensity_logit (N).  A sidecar text file ``<path>.meta`` records the training
config hash and iteration count.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .gaussians import GaussianCloud

MAGIC = b"TOGS"
VERSION = 1

_HEADER = struct.Struct("<4sIQI")


def save_checkpoint(cloud: GaussianCloud, path, *, config_hash="", iteration=0):
    """Write the cloud (f32) plus a sidecar metadata file."""
    path = Path(path)
    n, length = cloud.n, cloud.table_len
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, length))
        for arr in (cloud.positions, cloud.rotations, cloud.log_scales,
                    cloud.opacity_logits, cloud.offset_tables, cloud.intensity_logits):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = Path(str(path) + ".meta")
    meta.write_text(f"config_hash={config_hash}\niteration={iteration}\n"
                    f"gaussians={n}\ntable_len={length}\n", encoding="ascii")
    return path


def read_checkpoint_meta(path) -> dict:
    meta = Path(str(path) + ".meta")
    out = {}
    if meta.exists():
        for line in meta.read_text(encoding="ascii").splitlines():
            if "=" in line:
                key, val = line.split("=", 1)
                out[key] = val
    return out


def load_checkpoint(path) -> GaussianCloud:
    """Read a checkpoint; refuses bad magic, unknown versions, and truncation."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, n, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"{path}: format version {version}, this build reads version {VERSION}")
    counts = (3 * n, 4 * n, 3 * n, n, length * n, n)
    total = _HEADER.size + 4 * sum(counts)
    if len(data) != total:
        raise ValueError(f"{path}: expected {total} bytes for N={n}, L={length}, got {len(data)}")
    offset = _HEADER.size
    arrays = []
    for count in counts:
        arrays.append(np.frombuffer(data, dtype="<f4", count=count, offset=offset).copy())
        offset += 4 * count
    pos, rot, ls, op, tab, inten = arrays
    return GaussianCloud(
        positions=pos.reshape(n, 3),
        rotations=rot.reshape(n, 4),
        log_scales=ls.reshape(n, 3),
        opacity_logits=op,
        offset_tables=tab.reshape(n, length),
        intensity_logits=inten,
    )
