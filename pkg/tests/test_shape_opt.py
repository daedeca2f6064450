import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curlopt import field_recon as fr
from curlopt import shape_opt as so

finite = dict(allow_nan=False, allow_infinity=False)


def synthetic_trace(kind="toroidal", n=256, q_func=None):
    """Trace built directly from arrays, no solver involved."""
    if kind == "toroidal":
        L = 2 * np.pi
        s = np.linspace(0.0, L, n, endpoint=False)
        r = 3.0 + np.sin(s)
    else:
        L = np.pi
        s = np.linspace(0.0, L, n)
        r = np.sin(s)
    q = q_func(s) if q_func else 1.0 + 0.3 * np.cos(2 * np.pi * s / L)
    dl = fr._line_weights(s, L, closed=(kind == "toroidal"))
    w = r * dl
    q_mean = float(np.sum(q * w) / np.sum(w))
    q_var = float(np.sum((q - q_mean) ** 2 * w) / np.sum(w))
    return fr.BoundaryTrace(kind=kind, arclength=s, z=np.zeros(n), r=r, q=q,
                            dn_psi=np.zeros(n), total_length=L,
                            q_min=float(np.min(q)), q_max=float(np.max(q)),
                            q_mean=q_mean, q_var=q_var,
                            wall_weight=float(np.sum(w)), mu=2.0, c1=0.1)


class FakeSolution:
    mu1 = 2.0


class TestShapeDerivative:
    def test_null_variation(self):
        tr = synthetic_trace()
        th = so.NormalVelocity(kind=tr.kind, arclength=tr.arclength,
                               samples=np.zeros_like(tr.q), r=tr.r,
                               total_length=tr.total_length)
        assert so.shape_derivative(FakeSolution(), tr, th) == 0.0

    @given(a=st.floats(min_value=-5, max_value=5, **finite),
           b=st.floats(min_value=-5, max_value=5, **finite))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b):
        tr = synthetic_trace()
        th1 = so.volume_preserving_mode(tr, 1)
        th2 = so.volume_preserving_mode(tr, 2, use_sin=True)
        comb = so.NormalVelocity(kind=tr.kind, arclength=tr.arclength,
                                 samples=a * th1.samples + b * th2.samples,
                                 r=tr.r, total_length=tr.total_length)
        lhs = so.shape_derivative(FakeSolution(), tr, comb)
        rhs = a * so.shape_derivative(FakeSolution(), tr, th1) \
            + b * so.shape_derivative(FakeSolution(), tr, th2)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_contract_violation(self):
        tr = synthetic_trace()
        th = so.NormalVelocity(kind=tr.kind, arclength=tr.arclength,
                               samples=np.ones_like(tr.q), r=tr.r,
                               total_length=tr.total_length)
        assert not th.volume_preserving
        with pytest.raises(so.ContractViolationError):
            so.shape_derivative(FakeSolution(), tr, th)

    def test_wrong_grid_rejected(self):
        tr = synthetic_trace(n=256)
        other = synthetic_trace(n=128)
        th = so.steepest_descent_velocity(other)
        with pytest.raises(so.ContractViolationError):
            so.shape_derivative(FakeSolution(), tr, th)


class TestSteepestDescent:
    def test_variance_identity_toroidal(self):
        tr = synthetic_trace()
        th = so.steepest_descent_velocity(tr)
        dmu = so.shape_derivative(FakeSolution(), tr, th)
        w = tr.line_weights() * tr.r
        var_int = float(np.sum((tr.q - tr.q_mean) ** 2 * w))
        assert dmu == pytest.approx(-2 * np.pi * FakeSolution.mu1 * var_int,
                                    rel=1e-12)

    def test_constant_q_gives_zero(self):
        tr = synthetic_trace(q_func=lambda s: np.full_like(s, 2.5))
        th = so.steepest_descent_velocity(tr)
        assert np.max(np.abs(th.samples)) < 1e-14

    def test_constant_q_axis_touching(self):
        tr = synthetic_trace(kind="axis_touching",
                             q_func=lambda s: np.full_like(s, 2.5))
        th = so.steepest_descent_velocity(tr)
        assert np.max(np.abs(th.samples)) < 1e-12

    def test_volume_preserving_by_construction(self, torus_trace, ball_trace):
        for tr in (torus_trace, ball_trace):
            th = so.steepest_descent_velocity(tr)
            assert th.volume_preserving

    def test_axis_touching_endpoints_zero(self, ball_trace):
        th = so.steepest_descent_velocity(ball_trace)
        assert th.samples[0] == 0.0
        assert th.samples[-1] == 0.0

    def test_descent_negative_on_torus(self, torus_solution, torus_trace):
        th = so.steepest_descent_velocity(torus_trace)
        assert so.shape_derivative(torus_solution, torus_trace, th) < 0

    def test_projected_modes_volume_preserving(self, torus_trace, ball_trace):
        for tr in (torus_trace, ball_trace):
            for k in (1, 2, 3):
                assert so.volume_preserving_mode(tr, k).volume_preserving


class TestFDConsistency:
    def test_torus_mode_quick(self, torus_domain, torus_solution, torus_trace):
        th = so.volume_preserving_mode(torus_trace, 2)
        pred = so.shape_derivative(torus_solution, torus_trace, th)
        fd = so.fd_eigenvalue_derivative(torus_domain, th, 0.05, 1e-3)
        assert pred == pytest.approx(fd, rel=0.05)

    def test_ball_symmetric_mode_quick(self, ball_domain, ball_solution,
                                       ball_trace):
        s, L = ball_trace.arclength, ball_trace.total_length
        th = so.project_volume_preserving(ball_trace, np.sin(3 * np.pi * s / L))
        pred = so.shape_derivative(ball_solution, ball_trace, th)
        fd = so.fd_eigenvalue_derivative(ball_domain, th, 0.05, 1e-3)
        assert pred == pytest.approx(fd, rel=0.05)


class TestOptimize:
    def test_zero_steps_single_row(self, torus_domain):
        traj = so.optimize(torus_domain, steps=0, mesh_h=0.15)
        assert len(traj.steps) == 1
        assert traj.status == "completed"
        assert np.isnan(traj.steps[0].step_size)

    def test_ball_descent(self, ball_domain):
        traj = so.optimize(ball_domain, steps=3, mesh_h=0.1)
        Js = [r.J for r in traj.steps]
        assert len(Js) == 4
        assert all(b < a for a, b in zip(Js, Js[1:]))
        vols = [r.volume for r in traj.steps]
        assert max(abs(v - vols[0]) / vols[0] for v in vols) < 1e-12

    def test_trajectory_csv(self, torus_domain, tmp_path):
        traj = so.optimize(torus_domain, steps=1, mesh_h=0.15)
        path = tmp_path / "traj.csv"
        so.write_trajectory_csv(traj, path, header_comment="h")
        lines = path.read_text().splitlines()
        assert lines[1] == ("step,mu1,volume,J,q_min,q_max,q_var,"
                            "dmu1_pred,dmu1_obs,step_size")
        assert len(lines) == 2 + len(traj.steps)


class TestCheckOptimality:
    def test_torus_report(self, torus_domain):
        rep = so.check_optimality(torus_domain, mesh_h=0.08)
        assert rep.rd_component_count == 1
        assert rep.rd_connected
        assert rep.q_ratio_minus_1 > rep.q_threshold
        assert "necessary condition violated" in rep.verdict
        assert rep.descent_dmu1 < 0
        assert rep.flux_identity_residual <= 1e-6
        assert len(rep.zeros) >= 2
        assert not rep.c1_zero_flag

    def test_ball_report(self, ball_domain):
        rep = so.check_optimality(ball_domain, mesh_h=0.08)
        assert "not locally optimal: descent direction found" in rep.verdict
        assert rep.descent_dmu1 < 0
        assert rep.rd_component_count == 0

    def test_no_certificate_when_within_threshold(self, torus_domain):
        rep = so.check_optimality(torus_domain, mesh_h=0.1, q_threshold=1e9)
        assert rep.descent_dmu1 == 0.0
        assert rep.descent_theta_max == 0.0
        assert "no descent certificate" in rep.verdict

    def test_c1_zero_flag_propagates_to_verdict(self):
        assert "c1 = 0 branch" in so._verdict(True, True)
        assert "c1 = 0 branch" not in so._verdict(True, False)

    def test_derivative_report(self, torus_solution, torus_trace):
        th = so.steepest_descent_velocity(torus_trace)
        rep = so.derivative_report(torus_solution, torus_trace, th,
                                   fd_estimate=-0.01, relative_gap=0.07)
        expected = -2 * np.pi * torus_solution.mu1 * rep.q_variance_weighted
        assert rep.dmu1_predicted == pytest.approx(expected, rel=1e-12)
        assert rep.fd_estimate == -0.01
        assert rep.relative_gap == 0.07

    def test_json_export(self, torus_domain, tmp_path):
        rep = so.check_optimality(torus_domain, mesh_h=0.1)
        path = tmp_path / "rep.json"
        so.write_optimality_json(rep, path, extra={"config_hash": "x"})
        import json
        data = json.loads(path.read_text())
        assert data["rd_component_count"] == 1
        assert data["config_hash"] == "x"
