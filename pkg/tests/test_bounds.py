import numpy as np
import pytest

from curlopt import bounds as bd
from curlopt import geometry as geo
from curlopt.errors import CurloptError


class TestClosedForms:
    def test_unit_ball_bound_exact(self):
        assert bd.volume_lower_bound(4 * np.pi / 3) == 1.0

    def test_cube_root_homogeneity(self):
        v = 4 * np.pi / 3
        assert bd.volume_lower_bound(8 * v) == pytest.approx(
            bd.volume_lower_bound(v) / 2.0, rel=1e-14)

    def test_ball_slack(self):
        rep = bd.bound_report(4 * np.pi / 3, 4.4934)
        assert rep.bound == 1.0
        assert rep.slack == pytest.approx(3.4934, abs=1e-4)

    def test_nonpositive_volume_rejected(self):
        with pytest.raises(CurloptError):
            bd.volume_lower_bound(0.0)
        with pytest.raises(CurloptError):
            bd.rearrangement_constant(-1.0)

    @pytest.mark.parametrize("a", [1.0, 2.0, 0.3])
    def test_rearrangement_equals_4pi_a(self, a):
        vol = 4 * np.pi * a ** 3 / 3
        assert bd.rearrangement_constant(vol) == pytest.approx(4 * np.pi * a,
                                                               rel=1e-12)

    def test_rearrangement_dominates_torus_monte_carlo(self, torus_domain):
        # seeded MC estimate of sup_x ∫_Ω dy/|x-y|² over a few interior probes
        rng = np.random.default_rng(2024)
        n = 1_000_000
        box_lo = np.array([-4.0, -4.0, -1.0])
        box_hi = np.array([4.0, 4.0, 1.0])
        y = rng.uniform(box_lo, box_hi, (n, 3))
        r_cyl = np.hypot(y[:, 0], y[:, 1])
        inside = (r_cyl - 3.0) ** 2 + y[:, 2] ** 2 < 1.0
        y = y[inside]
        box_vol = np.prod(box_hi - box_lo)
        w = box_vol / n
        vol_mc = len(y) * w
        vol = geo.volume(torus_domain)
        assert vol_mc == pytest.approx(vol, rel=5e-3)
        probes = np.array([[3.0, 0.0, 0.0], [-3.0, 0.0, 0.0], [0.0, 3.0, 0.0],
                           [2.5, 0.0, 0.2], [0.0, -3.4, -0.3]])
        best = 0.0
        for x in probes:
            d2 = np.sum((y - x) ** 2, axis=1)
            best = max(best, float(np.sum(1.0 / d2) * w))
        assert best <= bd.rearrangement_constant(vol)


class TestBiotSavart:
    def test_zero_field_maps_to_zero(self):
        f = bd.random_divfree_ball_field(10, seed=0)
        f.values[:] = 0.0
        out = bd.biot_savart_apply(f, np.array([[0.1, 0.0, 0.0]]))
        assert np.all(out == 0.0)

    def test_linearity(self):
        f1 = bd.random_divfree_ball_field(10, seed=1)
        f2 = bd.random_divfree_ball_field(10, seed=2)
        pts = np.array([[0.2, 0.1, -0.3], [0.0, 0.0, 0.5]])
        a, b = 2.5, -1.25
        comb = bd.VoxelField(centers=f1.centers,
                             values=a * f1.values + b * f2.values,
                             weight=f1.weight, spacing=f1.spacing,
                             volume_masked=f1.volume_masked)
        lhs = bd.biot_savart_apply(comb, pts)
        rhs = a * bd.biot_savart_apply(f1, pts) + b * bd.biot_savart_apply(f2, pts)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)

    def test_kernel_symmetry(self):
        f1 = bd.random_divfree_ball_field(12, seed=3)
        f2 = bd.random_divfree_ball_field(12, seed=4)
        bs1 = bd.biot_savart_apply(f1, f1.centers)
        bs2 = bd.biot_savart_apply(f2, f2.centers)
        lhs = np.sum(bs1 * f2.values) * f1.weight
        rhs = np.sum(f1.values * bs2) * f1.weight
        assert lhs == pytest.approx(rhs, rel=1e-11)

    def test_empty_mask_rejected(self):
        f = bd.VoxelField(centers=np.empty((0, 3)), values=np.empty((0, 3)),
                          weight=1.0, spacing=0.1, volume_masked=0.0)
        with pytest.raises(CurloptError):
            bd.biot_savart_apply(f, np.zeros((1, 3)))

    def test_self_voxel_rule(self):
        f = bd.random_divfree_ball_field(10, seed=5)
        out = bd.biot_savart_apply(f, f.centers[:3])
        assert np.all(np.isfinite(out))


class TestNormBound:
    def test_zero_field_rejected(self):
        f = bd.random_divfree_ball_field(8, seed=0)
        f.values[:] = 0.0
        with pytest.raises(CurloptError):
            bd.verify_bs_norm_bound(f)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_fields_below_bound(self, seed):
        f = bd.random_divfree_ball_field(16, seed=seed)
        rep = bd.verify_bs_norm_bound(f, volume=4 * np.pi / 3)
        assert rep.passed
        assert rep.ratio <= rep.bound

    def test_small_support_far_from_sharp(self):
        f = bd.random_divfree_ball_field(16, seed=7)
        keep = np.linalg.norm(f.centers, axis=1) < 0.3
        sub = bd.VoxelField(centers=f.centers[keep], values=f.values[keep],
                            weight=f.weight, spacing=f.spacing,
                            volume_masked=float(np.sum(keep) * f.weight))
        rep = bd.verify_bs_norm_bound(sub, volume=4 * np.pi / 3)
        assert rep.ratio < 0.5 * rep.bound

    def test_volume_estimate_tracks(self):
        coarse = bd.random_divfree_ball_field(12, seed=0)
        fine = bd.random_divfree_ball_field(48, seed=0)
        exact = 4 * np.pi / 3
        assert abs(fine.volume_masked - exact) < abs(coarse.volume_masked - exact)


class TestEigenfieldChecks:
    def test_rasterization_mask_inside(self, ball_mesh, ball_field):
        vox = bd.rasterize_eigenfield(ball_mesh, ball_field, 24)
        assert np.all(np.linalg.norm(vox.centers, axis=1) < 1.0)
        assert vox.volume_masked == pytest.approx(4 * np.pi / 3, rel=0.05)

    def test_reciprocity_quick(self, ball_mesh, ball_field, ball_solution):
        inner, norm2, _ = bd.bs_reciprocity(ball_mesh, ball_field,
                                            ball_solution, n_grid=24)
        assert inner * ball_solution.mu1 == pytest.approx(1.0, abs=0.05)
        assert norm2 == pytest.approx(1.0, abs=0.02)

    def test_eigenfield_norm_ratio(self, ball_mesh, ball_field, ball_solution):
        vox = bd.rasterize_eigenfield(ball_mesh, ball_field, 20)
        rep = bd.verify_bs_norm_bound(vox, volume=4 * np.pi / 3)
        assert rep.passed
        assert rep.ratio == pytest.approx(1.0 / ball_solution.mu1, abs=0.05)

    def test_divergence_of_bs_small(self, ball_mesh, ball_field):
        vox = bd.rasterize_eigenfield(ball_mesh, ball_field, 24)
        rng = np.random.default_rng(11)
        pts = rng.uniform(-0.4, 0.4, (30, 3))
        d = vox.spacing
        div = np.zeros(len(pts))
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = d
            fp = bd.biot_savart_apply(vox, pts + e)
            fm = bd.biot_savart_apply(vox, pts - e)
            div += (fp[:, ax] - fm[:, ax]) / (2 * d)
        scale = np.max(np.linalg.norm(bd.biot_savart_apply(vox, pts), axis=1)) / d
        assert np.max(np.abs(div)) < 0.1 * scale
