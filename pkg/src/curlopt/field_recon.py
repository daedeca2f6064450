"""Eigenfield reconstruction and wall-trace extraction.

From a converged flux function ψ the 3D eigenfield in the cylindrical
orthonormal frame is

    u = (∂_r ψ / r) e_z - (∂_z ψ / r) e_r + (μ ψ / r) e_φ ,

with the closed-form norm identity

    ∫_Ω |u|² dx = 2π (a(ψ,ψ) + μ² b(ψ,ψ)) = 4π μ² b(ψ,ψ).

On the wall, ψ is constant, so the tangential derivative vanishes and
the pointwise squared field norm reduces to

    q = ((∂_n ψ)² + μ² c₁²) / r² ,

the trace whose constancy is the stationarity test of the shape
optimization module.  Near the axis ψ ~ r², so pointwise division is
replaced by the quadratic-fit limit at axis nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ReconstructionError
from .geometry import AXIS_TOUCHING, TOROIDAL
from .gs_solver import EigenSolution
from .meshing import TriMesh

#: nodes with r below this fraction of the diameter use axis-limit values
AXIS_R_FRACTION = 1e-8

#: uniform arclength grid size for mesh-independent trace signatures
TRACE_GRID = 512


@dataclass(eq=False)
class EigenField:
    """Nodal cylindrical-frame components of the unit-norm eigenfield."""

    mu: float
    u_z: np.ndarray
    u_r: np.ndarray
    u_phi: np.ndarray
    norm_closed_form: float    # 4πμ²b(ψ,ψ) of the underlying flux function


@dataclass(eq=False)
class BoundaryTrace:
    """q = |u|² on the wall, resampled to a uniform arclength grid.

    Statistics use the surface measure dS = 2π r dl, i.e. weights r dl
    on the section wall: q̄ = ∮ q r dl / ∮ r dl and the variance is
    weighted the same way.
    """

    kind: str
    arclength: np.ndarray
    z: np.ndarray
    r: np.ndarray
    q: np.ndarray
    dn_psi: np.ndarray
    total_length: float
    q_min: float
    q_max: float
    q_mean: float
    q_var: float          # ∮ (q - q̄)² r dl / ∮ r dl
    wall_weight: float    # ∮ r dl
    mu: float
    c1: float

    def line_weights(self):
        return _line_weights(self.arclength, self.total_length,
                             closed=(self.kind == TOROIDAL))


def _line_weights(s, total, closed):
    """Trapezoidal dl weights on an arclength grid (cyclic when closed)."""
    if closed:
        nxt = np.roll(s, -1)
        prv = np.roll(s, 1)
        return ((nxt - s) % total + (s - prv) % total) / 2.0
    w = np.empty_like(s)
    w[1:-1] = (s[2:] - s[:-2]) / 2.0
    w[0] = (s[1] - s[0]) / 2.0
    w[-1] = (s[-1] - s[-2]) / 2.0
    return w


def _triangle_gradients(mesh, psi):
    p = mesh.nodes[mesh.triangles]
    z, r = p[..., 0], p[..., 1]
    two_a = (z[:, 1] - z[:, 0]) * (r[:, 2] - r[:, 0]) \
        - (r[:, 1] - r[:, 0]) * (z[:, 2] - z[:, 0])
    v = psi[mesh.triangles]
    gz = (v[:, 0] * (r[:, 1] - r[:, 2]) + v[:, 1] * (r[:, 2] - r[:, 0])
          + v[:, 2] * (r[:, 0] - r[:, 1])) / two_a
    gr = (v[:, 0] * (z[:, 2] - z[:, 1]) + v[:, 1] * (z[:, 0] - z[:, 2])
          + v[:, 2] * (z[:, 1] - z[:, 0])) / two_a
    return gz, gr, np.abs(two_a) / 2.0


def _node_average(mesh, tri_values, areas):
    """Area-weighted triangle-to-node averaging of per-triangle scalars."""
    acc = np.zeros(len(mesh.nodes))
    wgt = np.zeros(len(mesh.nodes))
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], tri_values * areas)
        np.add.at(wgt, mesh.triangles[:, k], areas)
    return acc / wgt


def norm_squared_direct(mesh, psi, mu):
    """∫_Ω |u|² dx by an element-by-element quadrature independent of the
    assembled matrices: 2π Σ_T (1/r_c)(|∇ψ|_T|² |T| + μ² ∫_T ψ²)."""
    gz, gr, area = _triangle_gradients(mesh, psi)
    p = mesh.nodes[mesh.triangles]
    r_c = np.mean(p[..., 1], axis=1)
    v = psi[mesh.triangles]
    # exact ∫_T ψ² for P1: |T|/12 * Σ_i Σ_j ψ_i ψ_j (1 + δ_ij)
    psi2 = (np.sum(v, axis=1) ** 2 + np.sum(v * v, axis=1)) / 12.0 * area
    grad2 = (gz * gz + gr * gr) * area
    return 2.0 * np.pi * float(np.sum((grad2 + mu * mu * psi2) / r_c))


def reconstruct(solution: EigenSolution, mesh: TriMesh) -> EigenField:
    """Nodal eigenfield from ψ: per-triangle gradients averaged to nodes,
    divided by nodal r, with quadratic-fit limits at axis nodes."""
    psi = solution.psi
    mu = solution.mu1
    if not np.any(psi):
        raise ReconstructionError("flux function is identically zero")
    gz, gr, area = _triangle_gradients(mesh, psi)
    gz_n = _node_average(mesh, gz, area)
    gr_n = _node_average(mesh, gr, area)

    r = mesh.nodes[:, 1]
    r_floor = AXIS_R_FRACTION * mesh.curve.diameter
    off_axis = r > r_floor
    u_z = np.zeros(len(r))
    u_r = np.zeros(len(r))
    u_phi = np.zeros(len(r))
    u_z[off_axis] = gr_n[off_axis] / r[off_axis]
    u_r[off_axis] = -gz_n[off_axis] / r[off_axis]
    u_phi[off_axis] = mu * psi[off_axis] / r[off_axis]

    if mesh.kind == AXIS_TOUCHING and np.any(~off_axis):
        # ψ ~ c(z) r² near the axis: u_z -> 2c, u_r and u_phi -> 0
        neighbors = _node_neighbors(mesh)
        for i in np.nonzero(~off_axis)[0]:
            nb = [j for j in neighbors[i] if r[j] > r_floor]
            if not nb:
                raise ReconstructionError(f"axis node {i} has no off-axis neighbor "
                                          "for the quadratic fit")
            r2 = r[nb] ** 2
            c = float(r2 @ psi[nb] / (r2 @ r2))
            u_z[i] = 2.0 * c

    n2 = 4.0 * np.pi * mu * mu * _b_quadrature(mesh, psi)
    if not np.isfinite(n2) or n2 <= 0:
        raise ReconstructionError("degenerate field normalization")
    scale = 1.0 / np.sqrt(n2)
    return EigenField(mu=mu, u_z=u_z * scale, u_r=u_r * scale,
                      u_phi=u_phi * scale, norm_closed_form=n2)


def _b_quadrature(mesh, psi):
    """b(ψ, ψ) by the same centroid rule as assembly, matrix-free."""
    _, _, area = _triangle_gradients(mesh, psi)
    p = mesh.nodes[mesh.triangles]
    r_c = np.mean(p[..., 1], axis=1)
    v = psi[mesh.triangles]
    psi2 = (np.sum(v, axis=1) ** 2 + np.sum(v * v, axis=1)) / 12.0 * area
    return float(np.sum(psi2 / r_c))


def _node_neighbors(mesh):
    nb = [set() for _ in range(len(mesh.nodes))]
    for a, b, c in mesh.triangles:
        a, b, c = int(a), int(b), int(c)
        nb[a].update((b, c))
        nb[b].update((a, c))
        nb[c].update((a, b))
    return [sorted(s) for s in nb]


def boundary_trace(solution: EigenSolution, mesh: TriMesh,
                   n_grid=None) -> BoundaryTrace:
    """Wall trace q(ℓ) = ((∂_nψ)² + μ²c₁²)/r² on the uniform arclength grid.

    ∂_nψ per wall node comes from a quadratic least-squares fit of ψ over
    the two-ring node patch (one-sided averaging of the adjacent triangle
    layer is only O(h); the patch fit restores O(h²) at the wall), dotted
    with the spline normal.  For axis-touching domains the two pole nodes
    carry the limit q = 0 (the field vanishes there when c₁ = 0).
    """
    return _trace_from_psi(mesh, solution.psi, solution.mu1, solution.c1,
                           n_grid=n_grid)


def _wall_gradients_patch(mesh, psi):
    """(∂_zψ, ∂_rψ) at wall nodes from quadratic fits on two-ring patches."""
    neighbors = _node_neighbors(mesh)
    h = mesh.h
    out = np.empty((len(mesh.wall_nodes), 2))
    for k, i in enumerate(mesh.wall_nodes):
        patch = set(neighbors[i])
        for j in list(patch):
            patch.update(neighbors[j])
        patch.add(int(i))
        idx = np.fromiter(patch, dtype=np.int64)
        dz = (mesh.nodes[idx, 0] - mesh.nodes[i, 0]) / h
        dr = (mesh.nodes[idx, 1] - mesh.nodes[i, 1]) / h
        A = np.column_stack([np.ones_like(dz), dz, dr, dz * dz, dz * dr, dr * dr])
        coef, *_ = np.linalg.lstsq(A, psi[idx], rcond=None)
        out[k, 0] = coef[1] / h
        out[k, 1] = coef[2] / h
    return out


def _trace_from_psi(mesh, psi, mu, c1, n_grid=None):
    curve = mesh.curve
    wall = mesh.wall_nodes
    s_w = mesh.wall_s
    normals = curve.normal_at(s_w)
    grad_w = _wall_gradients_patch(mesh, psi)
    dn = grad_w[:, 0] * normals[:, 0] + grad_w[:, 1] * normals[:, 1]
    r_w = mesh.nodes[wall, 1]
    r_floor = AXIS_R_FRACTION * curve.diameter
    q_w = np.zeros(len(wall))
    ok = r_w > r_floor
    q_w[ok] = (dn[ok] ** 2 + (mu * c1) ** 2) / r_w[ok] ** 2
    # pole nodes: |u|² -> 0 along the wall (removable 0/0 handled by limit)

    # resample to the uniform grid shared with the section-curve samples
    closed = curve.is_closed
    L = curve.total_length
    if n_grid is None:
        s_grid = curve.arclength.copy()
    else:
        s_grid = (np.linspace(0.0, L, n_grid, endpoint=False) if closed
                  else np.linspace(0.0, L, n_grid))
    if closed:
        order = np.argsort(s_w)
        s_ext = np.concatenate([s_w[order], [s_w[order][0] + L]])
        q_ext = np.concatenate([q_w[order], [q_w[order][0]]])
        dn_ext = np.concatenate([dn[order], [dn[order][0]]])
        q_g = np.interp(s_grid, s_ext, q_ext, period=L)
        dn_g = np.interp(s_grid, s_ext, dn_ext, period=L)
    else:
        q_g = np.interp(s_grid, s_w, q_w)
        dn_g = np.interp(s_grid, s_w, dn)
    pts = curve.point_at(s_grid)

    dl = _line_weights(s_grid, L, closed)
    w = pts[:, 1] * dl
    wall_weight = float(np.sum(w))
    q_mean = float(np.sum(q_g * w) / wall_weight)
    q_var = float(np.sum((q_g - q_mean) ** 2 * w) / wall_weight)
    return BoundaryTrace(kind=curve.kind, arclength=s_grid, z=pts[:, 0],
                         r=pts[:, 1], q=q_g, dn_psi=dn_g, total_length=L,
                         q_min=float(np.min(q_g)), q_max=float(np.max(q_g)),
                         q_mean=q_mean, q_var=q_var, wall_weight=wall_weight,
                         mu=float(mu), c1=float(c1))


def tangency_residual(fieldv: EigenField, mesh: TriMesh) -> float:
    """max over wall nodes of |u·N| (meridional normal component).

    Equals |∂_t ψ| / r on the wall, i.e. pure discretization error, O(h).
    Pole nodes (r below the axis floor) are excluded from the max: the
    division is a removable 0/0 there.
    """
    wall = mesh.wall_nodes
    normals = mesh.curve.normal_at(mesh.wall_s)
    r_w = mesh.nodes[wall, 1]
    ok = r_w > AXIS_R_FRACTION * mesh.curve.diameter
    un = fieldv.u_z[wall] * normals[:, 0] + fieldv.u_r[wall] * normals[:, 1]
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(un[ok])))


def weak_divergence_residual(fieldv: EigenField, mesh: TriMesh) -> float:
    """max over interior hat functions φ of |∫ u·∇φ dx| / ‖φ‖_{L²}.

    The continuum field is divergence-free; for the reconstructed field
    this measures the discrete divergence defect (O(h))."""
    p = mesh.nodes[mesh.triangles]
    z, r = p[..., 0], p[..., 1]
    two_a = (z[:, 1] - z[:, 0]) * (r[:, 2] - r[:, 0]) \
        - (r[:, 1] - r[:, 0]) * (z[:, 2] - z[:, 0])
    area = np.abs(two_a) / 2.0
    r_c = np.mean(r, axis=1)
    uz_t = np.mean(fieldv.u_z[mesh.triangles], axis=1)
    ur_t = np.mean(fieldv.u_r[mesh.triangles], axis=1)
    acc = np.zeros(len(mesh.nodes))
    norm2 = np.zeros(len(mesh.nodes))
    for k in range(3):
        bk = r[:, (k + 1) % 3] - r[:, (k + 2) % 3]
        ck = z[:, (k + 2) % 3] - z[:, (k + 1) % 3]
        gphi_z = bk / two_a
        gphi_r = ck / two_a
        contrib = (uz_t * gphi_z + ur_t * gphi_r) * r_c * area
        np.add.at(acc, mesh.triangles[:, k], 2.0 * np.pi * contrib)
        np.add.at(norm2, mesh.triangles[:, k], 2.0 * np.pi * r_c * area / 6.0)
    boundary = np.zeros(len(mesh.nodes), dtype=bool)
    boundary[mesh.boundary_edges.ravel()] = True
    interior = ~boundary
    if not np.any(interior):
        return 0.0
    return float(np.max(np.abs(acc[interior]) / np.sqrt(norm2[interior])))


def write_trace_csv(trace: BoundaryTrace, path, header_comment=None):
    """CSV export: columns arclength,z,r,q,dn_psi."""
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("arclength,z,r,q,dn_psi\n")
        for s, z, r, q, dn in zip(trace.arclength, trace.z, trace.r,
                                  trace.q, trace.dn_psi):
            fh.write(f"{float(s)!r},{float(z)!r},{float(r)!r},"
                     f"{float(q)!r},{float(dn)!r}\n")
