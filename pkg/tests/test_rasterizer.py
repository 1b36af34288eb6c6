import numpy as np
import pytest

from vesselsplat.cameras import frustum_cull
from vesselsplat.gaussians import GaussianCloud, logit
from vesselsplat.rasterizer import (SIGMA_MAX, TERMINATION, bin_and_sort, composite_pixel,
                                    render, render_backward, render_naive)

from conftest import make_camera, make_cloud


def bits(img):
    return img.view(np.uint32 if img.dtype == np.float32 else np.uint64)


def centered_cloud(alphas, intensities, depths, sigma=0.25, table_len=5):
    """Splats on the optical axis of the default camera (eye z=-4, looking at
    the origin), at camera depth 4 + d."""
    n = len(alphas)
    return GaussianCloud(
        positions=np.array([[0.0, 0.0, d] for d in depths], dtype=np.float32),
        rotations=np.tile(np.array([1, 0, 0, 0], np.float32), (n, 1)),
        log_scales=np.full((n, 3), np.log(sigma), np.float32),
        opacity_logits=np.array([logit(a) for a in alphas], np.float32),
        offset_tables=np.zeros((n, table_len), np.float32),
        intensity_logits=np.array([logit(c) for c in intensities], np.float32),
    )


class TestBinAndSort:
    def test_full_image_gaussian_in_every_tile(self):
        cloud = make_cloud(n=1)
        cloud.positions[0] = [0.0, 0.0, 0.0]
        cloud.log_scales[0] = np.log(5.0)
        cam = make_camera(width=64, height=48)
        proj = frustum_cull(cloud, cam, 0.5)
        bins = bin_and_sort(proj, cam.width, cam.height)
        assert all(len(lst) == 1 for lst in bins.per_tile())

    def test_depth_order(self):
        cloud = centered_cloud([0.5, 0.5], [0.9, 0.9], depths=[2.0, 1.0])
        cam = make_camera()
        proj = frustum_cull(cloud, cam, 0.0)
        bins = bin_and_sort(proj, cam.width, cam.height)
        lists = [lst for lst in bins.per_tile() if len(lst) == 2]
        assert lists, "expected a tile containing both"
        for lst in lists:
            assert proj.depths[lst[0]] < proj.depths[lst[1]]

    def test_equal_depth_tiebreak_by_source(self):
        cloud = centered_cloud([0.3] * 8, [0.9] * 8, depths=[1.0] * 8)
        cam = make_camera()
        proj = frustum_cull(cloud, cam, 0.0)
        bins = bin_and_sort(proj, cam.width, cam.height)
        for lst in bins.per_tile():
            src = proj.source[lst]
            assert (np.diff(src) > 0).all()

    def test_tile_size_validation(self):
        proj = frustum_cull(make_cloud(n=3), make_camera(), 0.5)
        with pytest.raises(ValueError, match="tile_size"):
            bin_and_sort(proj, 32, 32, tile_size=0)


class TestCompositePixel:
    def test_no_contributors(self):
        c, t, aux = composite_pixel(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0), np.zeros(0), (8.0, 8.0))
        assert c == 0.0 and t == 1.0 and aux["processed"] == 0

    def test_single_centered(self):
        c, t, _ = composite_pixel([[8.0, 8.0]], [[0.5, 0.0, 0.5]], [0.5], [1.0], (8.0, 8.0))
        assert c == pytest.approx(0.5, abs=1e-7)
        assert t == pytest.approx(0.5, abs=1e-7)

    def test_two_identical_centered(self):
        means = [[8.0, 8.0], [8.0, 8.0]]
        conics = [[0.5, 0.0, 0.5]] * 2
        c, t, _ = composite_pixel(means, conics, [0.5, 0.5], [1.0, 1.0], (8.0, 8.0))
        assert c == pytest.approx(0.75, abs=1e-7)
        assert t == pytest.approx(0.25, abs=1e-7)

    def test_sigma_clamped(self):
        c, t, aux = composite_pixel([[8.0, 8.0]], [[0.5, 0.0, 0.5]], [1.0], [1.0], (8.0, 8.0))
        assert aux["sigmas"][0] == pytest.approx(SIGMA_MAX)
        assert c == pytest.approx(SIGMA_MAX)

    def test_early_termination(self):
        n = 60
        means = [[8.0, 8.0]] * n
        conics = [[2.0, 0.0, 2.0]] * n
        c, t, aux = composite_pixel(means, conics, [0.9] * n, [1.0] * n, (8.0, 8.0))
        assert aux["processed"] < n
        assert t < TERMINATION


class TestRender:
    def test_empty_cloud(self):
        cloud = GaussianCloud.empty(5)
        img = render(cloud, make_camera(), 0.5)
        assert img.shape == (32, 32) and not img.any()

    def test_single_opaque_brightest_at_projected_mean(self):
        cloud = centered_cloud([0.95], [0.99], depths=[0.0], sigma=0.1)
        cam = make_camera()
        img = render(cloud, cam, 0.0)
        iy, ix = np.unravel_index(np.argmax(img), img.shape)
        # the mean projects to the shared corner of pixels 15 and 16
        assert ix in (15, 16) and iy in (15, 16)
        assert img.max() > 0.75

    def test_tiled_matches_naive_bitwise_random_scenes(self):
        for seed in range(6):
            n = int(np.random.default_rng(seed).integers(10, 200))
            cloud = make_cloud(seed=seed, n=n, pos_range=1.2, alpha_logit=(-3, 3), table_range=0.4)
            cam = make_camera(width=64, height=64)
            t = float(np.random.default_rng(100 + seed).uniform(0, 1))
            a = render(cloud, cam, t)
            b = render_naive(cloud, cam, t)
            assert np.array_equal(bits(a), bits(b)), f"seed {seed} diverged"

    def test_worker_count_invariance(self):
        cloud = make_cloud(seed=21, n=150, pos_range=1.5)
        cam = make_camera(width=80, height=64)
        ref = render(cloud, cam, 0.4, workers=1)
        for workers in (2, 3, 5):
            assert np.array_equal(bits(ref), bits(render(cloud, cam, 0.4, workers=workers)))

    def test_intensity_bounds(self):
        cloud = make_cloud(seed=22, n=120, alpha_logit=(1.0, 6.0))
        img = render(cloud, make_camera(), 0.7)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_time_only_enters_through_tables(self):
        cloud = make_cloud(seed=23, n=40)
        cloud.offset_tables[:] = 0
        cam = make_camera()
        a = render(cloud, cam, 0.1)
        b = render(cloud, cam, 0.9)
        assert np.array_equal(bits(a), bits(b))

    def test_time_range_validated(self):
        with pytest.raises(ValueError, match="time out of range"):
            render(make_cloud(n=3), make_camera(), 1.2)

    def test_f64_mode(self):
        cloud = make_cloud(seed=24, n=30, dtype=np.float64)
        img = render(cloud, make_camera(), 0.5)
        assert img.dtype == np.float64
        assert np.array_equal(bits(img), bits(render_naive(cloud, make_camera(), 0.5)))


class TestRenderBackwardBasics:
    def test_zero_upstream_gives_zero_grads(self):
        cloud = make_cloud(seed=30, n=25)
        cam = make_camera()
        buf = render_backward(cloud, cam, 0.5, np.zeros((32, 32)))
        for name in ("positions", "rotations", "log_scales", "opacity_logits",
                     "offset_tables", "intensity_logits", "screen_means"):
            assert not getattr(buf, name).any()
        assert len(buf.visible) > 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dL_dimage shape"):
            render_backward(make_cloud(n=4), make_camera(), 0.5, np.zeros((16, 16)))

    def test_nonfinite_rejected(self):
        bad = np.zeros((32, 32))
        bad[3, 3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            render_backward(make_cloud(n=4), make_camera(), 0.5, bad)

    def test_knot_time_touches_single_table_entry(self):
        cloud = make_cloud(seed=31, n=12, dtype=np.float64)
        cam = make_camera(width=16, height=16)
        buf = render_backward(cloud, cam, 0.25, np.ones((16, 16)))
        touched = np.unique(np.nonzero(buf.offset_tables)[1])
        assert touched.tolist() == [1]

    def test_gradient_completeness(self):
        # every splat with a visible forward contribution gets a nonzero row
        cloud = make_cloud(seed=32, n=15, pos_range=0.7, alpha_logit=(-1.0, 1.0))
        cam = make_camera(width=48, height=48)
        img = render(cloud, cam, 0.5)
        assert img.max() > 1e-3
        buf = render_backward(cloud, cam, 0.5, np.ones((48, 48)))
        contributing = []
        for i in range(cloud.n):
            solo = cloud.select(np.array([i]))
            if render(solo, cam, 0.5).max() > 1e-6:
                contributing.append(i)
        assert contributing
        for i in contributing:
            row_norm = (np.abs(buf.positions[i]).sum() + np.abs(buf.opacity_logits[i])
                        + np.abs(buf.intensity_logits[i]))
            assert row_norm > 0, f"splat {i} contributes but has zero gradient"

    def test_visible_matches_cull(self):
        cloud = make_cloud(seed=33, n=60, pos_range=4.0)
        cam = make_camera()
        buf = render_backward(cloud, cam, 0.5, np.ones((32, 32)))
        assert buf.visible.tolist() == frustum_cull(cloud, cam, 0.5).source.tolist()
