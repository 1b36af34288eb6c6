import numpy as np
import pytest

from vesselsplat.gaussians import opacity_at, table_knots
from vesselsplat.losses import psnr
from vesselsplat.phantom import (PhantomSpec, Segment, TDC, assign_splits, build_oracle,
                                 default_phantom, gamma_variate, generate_dataset, orbit_rig,
                                 render_analytic, sample_phantom)
from vesselsplat.rasterizer import render
from vesselsplat.training import evaluate


class TestGammaVariate:
    def test_zero_before_arrival(self):
        assert gamma_variate(0.1, t0=0.2, rise=2.0, decay=4.0, amplitude=0.8) == 0.0

    def test_peak_value(self):
        t0, rise, decay, A = 0.1, 2.5, 5.0, 0.7
        assert gamma_variate(t0 + rise / decay, t0, rise, decay, A) == pytest.approx(A, abs=1e-12)

    def test_monotone_decay_after_peak(self):
        t0, rise, decay, A = 0.0, 2.0, 4.0, 1.0
        ts = np.linspace(t0 + rise / decay, 5.0, 40)
        vals = gamma_variate(ts, t0, rise, decay, A)
        assert (np.diff(vals) < 0).all()
        assert vals[-1] < 0.05

    def test_nonnegative_and_bounded(self):
        ts = np.linspace(0, 1, 101)
        vals = gamma_variate(ts, 0.15, 3.0, 6.0, 0.9)
        assert (vals >= 0).all() and (vals <= 0.9 + 1e-12).all()

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            gamma_variate(0.5, 0.0, -1.0, 2.0, 0.5)
        with pytest.raises(ValueError):
            gamma_variate(0.5, 0.0, 2.0, 2.0, -0.5)


class TestPhantomSpec:
    def test_default_tree_shape(self):
        spec = default_phantom(seed=0)
        assert len(spec.segments) == 15  # 3-level binary tree
        roots = [s for s in spec.segments if s.parent < 0]
        assert len(roots) == 1
        for i, seg in enumerate(spec.segments):
            assert seg.parent < i

    def test_json_roundtrip(self, tmp_path):
        spec = default_phantom(seed=1)
        path = tmp_path / "spec.json"
        spec.save(path)
        back = PhantomSpec.load(path)
        assert len(back.segments) == len(spec.segments)
        assert back.segments[3].radius == spec.segments[3].radius
        assert back.tdcs[5].t0 == spec.tdcs[5].t0

    def test_validation(self):
        with pytest.raises(ValueError, match="radius"):
            PhantomSpec(segments=[Segment((0, 0, 0), (1, 0, 0), 0.0)], tdcs=[TDC(0, 2, 4, 0.5)])
        with pytest.raises(ValueError, match="amplitude"):
            PhantomSpec(segments=[Segment((0, 0, 0), (1, 0, 0), 0.1)], tdcs=[TDC(0, 2, 4, 1.5)])
        with pytest.raises(ValueError, match="parents-first"):
            PhantomSpec(segments=[Segment((0, 0, 0), (1, 0, 0), 0.1, parent=0)],
                        tdcs=[TDC(0, 2, 4, 0.5)])


def straight_spec(length=5.0, density=10.0):
    return PhantomSpec(
        segments=[Segment((0.0, 0.0, 0.0), (length, 0.0, 0.0), 0.1)],
        tdcs=[TDC(t0=0.1, rise=2.0, decay=5.0, amplitude=0.8)],
        density=density,
    )


class TestBuildOracle:
    def test_sample_count_on_straight_segment(self):
        cloud = build_oracle(straight_spec(length=5.0, density=10.0), table_len=5)
        assert cloud.n == 50
        # all on the segment axis
        assert np.allclose(cloud.positions[:, 1:], 0.0, atol=1e-7)

    def test_opacity_reproduces_tdc_at_knots(self):
        spec = default_phantom(seed=2)
        cloud = build_oracle(spec, table_len=5, dtype=np.float64)
        samples = sample_phantom(spec, 5)
        knots = table_knots(5)
        for i in (0, cloud.n // 3, cloud.n - 1):
            for k, t in enumerate(knots):
                want = samples.knot_opacity[i, k]
                assert opacity_at(cloud.gaussian(i), float(t)) == pytest.approx(want, abs=1e-9)

    def test_oracle_opacities_stay_in_unit_interval(self):
        cloud = build_oracle(default_phantom(seed=4), table_len=5)
        for t in table_knots(5):
            alphas = cloud.alphas_at(float(t))
            assert (alphas >= 0).all() and (alphas <= 1).all()

    def test_deterministic(self):
        a = build_oracle(default_phantom(seed=5), table_len=5)
        b = build_oracle(default_phantom(seed=5), table_len=5)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.offset_tables, b.offset_tables)


class TestGenerateDataset:
    def test_zero_amplitude_black_dataset(self):
        spec = straight_spec()
        for tdc in spec.tdcs:
            tdc.amplitude = 0.0
        cams, times = orbit_rig(4, width=32, height=32)
        ds = generate_dataset(spec, cams, times, mode="oracle")
        for fr in ds.frames:
            assert not fr.image.any()

    def test_oracle_self_consistency(self, phantom_dataset):
        spec = default_phantom(seed=3)
        cloud = build_oracle(spec, 5)
        ev = evaluate(cloud, phantom_dataset.frames[:4])
        assert ev["psnr"] == 99.0
        assert ev["ssim"] == pytest.approx(1.0, abs=1e-7)

    def test_byte_identical_regeneration(self, tmp_path):
        spec = default_phantom(seed=6)
        cams, times = orbit_rig(3, width=48, height=48)
        generate_dataset(spec, cams, times, mode="oracle", out_dir=tmp_path / "a")
        generate_dataset(spec, cams, times, mode="oracle", out_dir=tmp_path / "b")
        for name in ("meta.json", "frame_0000.png", "frame_0002.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_split_tags(self):
        splits = assign_splits(10, 6)
        assert splits.count("train") == 6
        assert splits[0] == "train" and splits[-1] == "train"

    def test_camera_count_mismatch(self):
        cams, times = orbit_rig(4)
        with pytest.raises(ValueError, match="one timestamp per view"):
            generate_dataset(default_phantom(), cams, times[:-1])


class TestCrossMode:
    def test_analytic_close_to_oracle_render(self):
        spec = default_phantom(seed=0)
        cloud = build_oracle(spec, 5)
        samples = sample_phantom(spec, 5)
        cams, times = orbit_rig(5, width=96, height=96)
        scores = []
        for cam, t in ((cams[1], times[1]), (cams[3], times[3])):
            a = render(cloud, cam, t)
            b = render_analytic(samples, cam, t)
            scores.append(psnr(np.asarray(a, np.float64), b))
        assert min(scores) >= 25.0, f"cross-mode PSNR {scores}"

    def test_analytic_validates_time(self):
        samples = sample_phantom(default_phantom(), 5)
        cams, _ = orbit_rig(1)
        with pytest.raises(ValueError, match="time out of range"):
            render_analytic(samples, cams[0], 1.4)
