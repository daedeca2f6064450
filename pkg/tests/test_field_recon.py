import copy

import numpy as np
import pytest

from curlopt import field_recon as fr
from curlopt import gs_solver as gs
from curlopt import meshing as msh
from curlopt.errors import ReconstructionError
from curlopt.shape_opt import trace_noise_floor


class TestReconstruct:
    def test_norm_identity_chain(self, ball_mesh, ball_solution):
        forms = gs.assemble(ball_mesh)
        psi, mu = ball_solution.psi, ball_solution.mu1
        direct = fr.norm_squared_direct(ball_mesh, psi, mu)
        two_pi_form = 2 * np.pi * (forms.a(psi, psi) + mu ** 2 * forms.b(psi, psi))
        closed = 4 * np.pi * mu ** 2 * forms.b(psi, psi)
        assert direct == pytest.approx(two_pi_form, rel=1e-8)
        assert two_pi_form == pytest.approx(closed, rel=1e-8)
        assert direct == pytest.approx(1.0, abs=1e-6)

    def test_unit_norm_after_reconstruct(self, ball_field):
        assert ball_field.norm_closed_form == pytest.approx(1.0, rel=1e-12)

    def test_ball_u_phi_vanishes_on_wall(self, ball_mesh, ball_field):
        wall = [n for n in ball_mesh.wall_nodes
                if ball_mesh.nodes[n, 1] > 1e-8]
        assert np.max(np.abs(ball_field.u_phi[wall])) == 0.0

    def test_ball_field_vanishes_at_poles(self, ball_mesh, ball_field):
        poles = [n for n in ball_mesh.wall_nodes
                 if ball_mesh.nodes[n, 1] <= 1e-8]
        assert len(poles) == 2
        mag = np.hypot(ball_field.u_z[poles], ball_field.u_r[poles])
        assert np.max(mag) < 0.35 * ball_mesh.h  # O(h) pole limit

    def test_axis_values_finite(self, ball_mesh, ball_field):
        axis = sorted(ball_mesh.axis_node_set())
        assert np.all(np.isfinite(ball_field.u_z[axis]))
        assert np.all(ball_field.u_r[axis] == 0.0)
        assert np.all(ball_field.u_phi[axis] == 0.0)

    def test_zero_psi_rejected(self, ball_mesh, ball_solution):
        bad = copy.copy(ball_solution)
        bad.psi = np.zeros_like(ball_solution.psi)
        with pytest.raises(ReconstructionError):
            fr.reconstruct(bad, ball_mesh)

    def test_harmonic_orthogonality_toroidal(self, torus_mesh, torus_solution):
        # ∫ u·h dx = 2π μ b(ψ, 1) vanishes by the solver constraint
        forms = gs.assemble(torus_mesh)
        ones = np.ones(len(torus_solution.psi))
        inner = 2 * np.pi * torus_solution.mu1 * forms.b(torus_solution.psi, ones)
        assert abs(inner) < 1e-11

    def test_weak_divergence_small(self, ball_mesh, ball_field):
        res = fr.weak_divergence_residual(ball_field, ball_mesh)
        assert res < 1.5 * ball_mesh.h


class TestBoundaryTrace:
    def test_grid_matches_curve_samples(self, ball_mesh, ball_trace):
        assert np.array_equal(ball_trace.arclength, ball_mesh.curve.arclength)

    def test_ball_q_vanishes_at_poles(self, ball_trace):
        assert ball_trace.q[0] == 0.0
        assert ball_trace.q[-1] == 0.0
        # and stays small in the neighborhood (q -> 0 limit)
        assert ball_trace.q[1] < 0.05 * ball_trace.q_max

    def test_torus_q_measurably_nonconstant(self, torus_trace):
        assert torus_trace.q_max / torus_trace.q_min > 1.05

    def test_stats_bracket(self, torus_trace):
        assert torus_trace.q_min <= torus_trace.q_mean <= torus_trace.q_max
        assert torus_trace.q_var >= 0

    def test_sign_flip_invariance(self, torus_mesh, torus_solution):
        flipped = copy.copy(torus_solution)
        flipped.psi = -torus_solution.psi
        flipped.c1 = -torus_solution.c1
        t0 = fr.boundary_trace(torus_solution, torus_mesh)
        t1 = fr.boundary_trace(flipped, torus_mesh)
        assert np.allclose(t0.q, t1.q, rtol=1e-12, atol=1e-300)

    def test_manufactured_constant_q(self):
        # fixture with exactly constant ∂_nψ / r: deviation is the noise floor
        noise = trace_noise_floor("toroidal", 0.05, 1.0, center_r=3.0)
        assert noise < 5e-3

    def test_noise_floor_second_order(self):
        n1 = trace_noise_floor("toroidal", 0.1, 1.0, center_r=3.0)
        n2 = trace_noise_floor("toroidal", 0.05, 1.0, center_r=3.0)
        assert n1 / n2 > 2.0

    def test_csv_export(self, ball_trace, tmp_path):
        path = tmp_path / "trace.csv"
        fr.write_trace_csv(ball_trace, path, header_comment="hash=x")
        lines = path.read_text().splitlines()
        assert lines[0] == "# hash=x"
        assert lines[1] == "arclength,z,r,q,dn_psi"
        assert len(lines) == 2 + len(ball_trace.arclength)
        row = lines[2].split(",")
        assert len(row) == 5
        float(row[3])


class TestTangency:
    def test_residual_is_discretization_scale(self, ball_mesh, ball_field):
        res = fr.tangency_residual(ball_field, ball_mesh)
        umax = np.max(np.hypot(ball_field.u_z, ball_field.u_r))
        assert res < 0.1 * umax

    def test_refinement_ratio(self, ball_domain):
        vals = []
        mesh = msh.mesh_section(ball_domain, 0.1)
        for _ in range(2):
            sol = gs.solve(gs.assemble(mesh))
            ef = fr.reconstruct(sol, mesh)
            vals.append(fr.tangency_residual(ef, mesh))
            mesh = msh.refine(mesh)
        assert vals[1] < vals[0]
        assert 1.2 < vals[0] / vals[1] < 6.0

    def test_constant_psi_field_exactly_tangent(self, ball_mesh):
        f = fr.EigenField(mu=1.0, u_z=np.zeros(len(ball_mesh.nodes)),
                          u_r=np.zeros(len(ball_mesh.nodes)),
                          u_phi=np.ones(len(ball_mesh.nodes)),
                          norm_closed_form=1.0)
        assert fr.tangency_residual(f, ball_mesh) == 0.0
