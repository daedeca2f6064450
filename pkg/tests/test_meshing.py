import numpy as np
import pytest

from curlopt import geometry as geo
from curlopt import meshing as msh
from curlopt.errors import MeshError, UnsupportedShapeError


def polygon_area(loop_nodes):
    r, z = loop_nodes[:, 1], loop_nodes[:, 0]
    rn, zn = np.roll(r, -1), np.roll(z, -1)
    return 0.5 * np.sum(r * zn - rn * z)


def boundary_loop_nodes(mesh):
    nxt = {int(a): int(b) for a, b in mesh.boundary_edges}
    start = int(mesh.boundary_edges[0, 0])
    loop = [start]
    n = nxt[start]
    while n != start:
        loop.append(n)
        n = nxt[n]
    return mesh.nodes[loop], loop


class TestMeshSection:
    def test_ball_invariants(self, ball_domain):
        mesh = msh.mesh_section(ball_domain, 0.05)
        mesh.validate()
        assert np.all(mesh.signed_areas() > 0)
        assert mesh.min_angle_deg() >= msh.MIN_ANGLE_DEG
        assert mesh.edge_lengths().max() <= 1.5 * 0.05

    def test_node_count_scaling(self, ball_domain):
        n_coarse = len(msh.mesh_section(ball_domain, 0.1).nodes)
        n_fine = len(msh.mesh_section(ball_domain, 0.05).nodes)
        assert 3.0 < n_fine / n_coarse < 5.0

    def test_torus_nodes_stay_off_axis(self, torus_domain):
        mesh = msh.mesh_section(torus_domain, 0.05)
        delta = torus_domain.delta
        assert mesh.nodes[:, 1].min() >= delta - 0.05 ** 2

    def test_nonpositive_h_rejected(self, ball_domain):
        with pytest.raises(MeshError):
            msh.mesh_section(ball_domain, 0.0)

    def test_area_matches_boundary_polygon(self, torus_domain):
        mesh = msh.mesh_section(torus_domain, 0.08)
        loop, _ = boundary_loop_nodes(mesh)
        assert mesh.signed_areas().sum() == pytest.approx(polygon_area(loop),
                                                          rel=1e-12)

    def test_euler_characteristic(self, ball_domain):
        mesh = msh.mesh_section(ball_domain, 0.1)
        edges = set()
        for a, b, c in mesh.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                edges.add(frozenset((int(u), int(v))))
        assert len(mesh.nodes) - len(edges) + len(mesh.triangles) == 1

    def test_wall_arclength_increasing_along_loop(self, torus_domain):
        mesh = msh.mesh_section(torus_domain, 0.08)
        _, loop = boundary_loop_nodes(mesh)
        smap = mesh.wall_arclength
        svals = [smap[n] for n in loop if n in smap]
        # rotate so the loop starts at the minimum arclength
        k = int(np.argmin(svals))
        svals = svals[k:] + svals[:k]
        assert all(b > a for a, b in zip(svals, svals[1:]))

    def test_non_star_shaped_rejected(self):
        # an L-shaped section is not star-shaped about its centroid
        outline = [(0.0, 2.0), (3.0, 2.0), (3.0, 2.8), (0.8, 2.8),
                   (0.8, 4.6), (0.0, 4.6)]
        pts = []
        for (z0, r0), (z1, r1) in zip(outline, outline[1:] + outline[:1]):
            for t in np.linspace(0.0, 1.0, 20, endpoint=False):
                pts.append((z0 + t * (z1 - z0), r0 + t * (r1 - r0)))
        curve = geo.SectionCurve.build(geo.TOROIDAL, np.asarray(pts)[::-1])
        dom = geo.AxisymmetricDomain.from_curve(curve)
        with pytest.raises(UnsupportedShapeError):
            msh.mesh_section(dom, 0.1)

    def test_pinned_ring_count(self, ball_domain):
        mesh = msh.mesh_section(ball_domain, 0.1, n_r=12)
        assert mesh.n_rings == 12
        mesh.validate()

    def test_wall_edges_trace_curve_second_order(self, torus_domain):
        # chord midpoints stay within O(h²) of the spline (sagitta bound)
        for h in (0.1, 0.05):
            mesh = msh.mesh_section(torus_domain, h)
            wall = mesh.wall_nodes
            s = mesh.wall_s
            mids = 0.5 * (mesh.nodes[wall] + mesh.nodes[np.roll(wall, -1)])
            L = torus_domain.curve.total_length
            diff = (np.roll(s, -1) - s) % L
            s_mid = (s + diff / 2) % L
            on_curve = torus_domain.curve.point_at(s_mid)
            hausdorff = np.max(np.hypot(*(mids - on_curve).T))
            assert hausdorff < 0.3 * h ** 2


class TestRefine:
    def test_triangle_count_quadruples(self, ball_domain):
        mesh = msh.mesh_section(ball_domain, 0.1)
        fine = msh.refine(mesh)
        assert len(fine.triangles) == 4 * len(mesh.triangles)

    def test_two_refinements_quarter_edges(self, ball_domain):
        mesh = msh.mesh_section(ball_domain, 0.1)
        fine = msh.refine(msh.refine(mesh))
        assert fine.edge_lengths().max() <= 1.02 * mesh.edge_lengths().max() / 4

    def test_axis_nodes_stay_exact(self, ball_domain):
        mesh = msh.refine(msh.mesh_section(ball_domain, 0.1))
        axis = sorted(mesh.axis_node_set())
        assert np.all(mesh.nodes[axis, 1] == 0.0)

    def test_wall_nodes_snap_to_curve(self, torus_domain):
        mesh = msh.refine(msh.mesh_section(torus_domain, 0.1))
        pts = torus_domain.curve.point_at(mesh.wall_s)
        dist = np.hypot(*(mesh.nodes[mesh.wall_nodes] - pts).T)
        assert dist.max() < 1e-12

    def test_invariants_preserved(self, torus_domain):
        fine = msh.refine(msh.mesh_section(torus_domain, 0.1))
        fine.validate()


class TestDump:
    def test_roundtrip(self, torus_domain, tmp_path):
        mesh = msh.mesh_section(torus_domain, 0.15)
        path = tmp_path / "mesh.txt"
        msh.write_mesh(mesh, path)
        first = path.read_text().splitlines()[0]
        assert first == "trimesh v1"
        nodes, tris, edges, tags = msh.read_mesh(path)
        assert np.array_equal(nodes, mesh.nodes)
        assert np.array_equal(tris, mesh.triangles)
        assert np.array_equal(edges, mesh.boundary_edges)
        assert np.array_equal(tags, mesh.boundary_tags)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "mesh.txt"
        path.write_text("not a mesh\n")
        with pytest.raises(MeshError):
            msh.read_mesh(path)
