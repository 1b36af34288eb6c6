import numpy as np
import pytest

from vesselsplat.checkpoint import MAGIC, load_checkpoint, read_checkpoint_meta, save_checkpoint
from vesselsplat.rasterizer import render

from conftest import make_camera, make_cloud


def test_roundtrip_identical_columns(tmp_path):
    cloud = make_cloud(seed=0, n=1000)
    path = tmp_path / "model.ckpt"
    save_checkpoint(cloud, path, config_hash="abc123", iteration=42)
    back = load_checkpoint(path)
    for name in ("positions", "rotations", "log_scales", "opacity_logits",
                 "offset_tables", "intensity_logits"):
        assert np.array_equal(getattr(back, name), getattr(cloud, name)), name


def test_roundtrip_renders_bit_identically(tmp_path):
    cloud = make_cloud(seed=1, n=120)
    path = tmp_path / "m.ckpt"
    save_checkpoint(cloud, path)
    back = load_checkpoint(path)
    cam = make_camera()
    a = render(cloud, cam, 0.4)
    b = render(back, cam, 0.4)
    assert np.array_equal(a.view(np.uint32), b.view(np.uint32))


def test_sidecar_metadata(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(make_cloud(n=3), path, config_hash="deadbeef", iteration=777)
    meta = read_checkpoint_meta(path)
    assert meta["config_hash"] == "deadbeef"
    assert meta["iteration"] == "777"


def test_corrupted_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(make_cloud(n=3), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"JUNK"
    path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(path)


def test_version_mismatch_names_both(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(make_cloud(n=3), path)
    data = bytearray(path.read_bytes())
    data[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="version 99.*version 1"):
        load_checkpoint(path)


def test_truncation_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(make_cloud(n=10), path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 17])
    with pytest.raises(ValueError, match="expected .* bytes"):
        load_checkpoint(path)
    path.write_bytes(data[:7])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_magic_bytes_layout(tmp_path):
    path = tmp_path / "m.ckpt"
    cloud = make_cloud(n=2, table_len=10)
    save_checkpoint(cloud, path)
    data = path.read_bytes()
    assert data[:4] == MAGIC
    assert int.from_bytes(data[4:8], "little") == 1       # version
    assert int.from_bytes(data[8:16], "little") == 2      # N as u64
    assert int.from_bytes(data[16:20], "little") == 10    # L as u32
    # first f32 is position[0, 0], little-endian
    assert np.frombuffer(data, dtype="<f4", count=1, offset=20)[0] == cloud.positions[0, 0]
