"""Structured triangulation of a star-shaped section.

The mesh is built by transfinite polar blending: rays are cast from a
blending center (the section centroid for toroidal domains, the midpoint
of the two axis endpoints for axis-touching ones) to the wall, and nodes
are placed at uniform fractions along each ray.  The number of sectors
doubles at every power-of-two ring so that azimuthal and radial spacing
stay comparable from the center fan out to the wall; the 1:2 transition
rings use a fixed three-triangle template.

Restrictions are deliberate: the section must be star-shaped with respect
to the blending center (checked by ray casting) and quality violations
raise instead of degrading silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError, MeshQualityError, UnsupportedShapeError
from .geometry import AXIS_TOUCHING, TOROIDAL, AxisymmetricDomain, SectionCurve

WALL = 0
AXIS = 1
TAG_NAMES = {WALL: "Wall", AXIS: "Axis"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}

MIN_ANGLE_DEG = 20.0
MAX_EDGE_FACTOR = 1.5

#: sectors of the innermost ring (full 2π ring for toroidal, π for axis-touching)
BASE_SECTORS = {TOROIDAL: 12, AXIS_TOUCHING: 6}


@dataclass(eq=False)
class TriMesh:
    nodes: np.ndarray             # (N, 2) of (z, r)
    triangles: np.ndarray         # (T, 3) node indices, positively oriented
    boundary_edges: np.ndarray    # (E, 2) node indices, ordered along the loop
    boundary_tags: np.ndarray     # (E,) WALL or AXIS
    wall_nodes: np.ndarray        # wall-curve node indices, sorted by arclength
    wall_s: np.ndarray            # arclength on the section curve per wall node
    h: float                      # target resolution of this mesh
    curve: SectionCurve = field(repr=False)
    n_rings: int = 0              # radial rings of the generating construction

    @property
    def kind(self):
        return self.curve.kind

    @property
    def wall_arclength(self):
        """Mapping wall node index -> arclength on the section curve."""
        return dict(zip(self.wall_nodes.tolist(), self.wall_s.tolist()))

    def signed_areas(self):
        """Triangle areas, positive for the interior-on-the-left orientation."""
        p = self.nodes[self.triangles]
        z, r = p[..., 0], p[..., 1]
        return 0.5 * ((r[:, 1] - r[:, 0]) * (z[:, 2] - z[:, 0])
                      - (z[:, 1] - z[:, 0]) * (r[:, 2] - r[:, 0]))

    def edge_lengths(self):
        p = self.nodes[self.triangles]
        e = p - np.roll(p, -1, axis=1)
        return np.hypot(e[..., 0], e[..., 1])

    def min_angle_deg(self):
        p = self.nodes[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            na = np.hypot(a[:, 0], a[:, 1])
            nb = np.hypot(b[:, 0], b[:, 1])
            cosang = np.clip(np.sum(a * b, axis=1) / (na * nb), -1.0, 1.0)
            angles.append(np.degrees(np.arccos(cosang)))
        return float(np.min(angles))

    def axis_node_set(self):
        if not len(self.boundary_edges):
            return set()
        ax = self.boundary_edges[self.boundary_tags == AXIS]
        return set(ax.ravel().tolist())

    def validate(self):
        areas = self.signed_areas()
        if np.any(areas <= 0):
            raise MeshQualityError("mesh contains non-positively-oriented triangles")
        r = self.nodes[:, 1]
        if np.any(r < 0):
            raise MeshQualityError("mesh node below the axis (r < 0)")
        axis_nodes = self.axis_node_set()
        on_axis = np.where(r == 0.0)[0]
        if not set(on_axis.tolist()) <= axis_nodes:
            raise MeshQualityError("r = 0 at a node that is not on an Axis boundary edge")
        ang = self.min_angle_deg()
        if ang < MIN_ANGLE_DEG:
            raise MeshQualityError(f"minimum triangle angle {ang:.2f}° below "
                                   f"{MIN_ANGLE_DEG}° floor")
        emax = float(np.max(self.edge_lengths()))
        if emax > MAX_EDGE_FACTOR * self.h:
            raise MeshQualityError(f"max edge length {emax:.4g} exceeds "
                                   f"{MAX_EDGE_FACTOR} h = {MAX_EDGE_FACTOR * self.h:.4g}")
        self._validate_boundary_loop()

    def _validate_boundary_loop(self):
        edges = self.boundary_edges
        count = {}
        for a, b in edges:
            for n in (int(a), int(b)):
                count[n] = count.get(n, 0) + 1
        if any(c != 2 for c in count.values()):
            raise MeshQualityError("boundary edges do not form a single closed loop")
        nxt = {int(a): int(b) for a, b in edges}
        start = int(edges[0, 0])
        n, seen = start, 0
        while True:
            n = nxt[n]
            seen += 1
            if n == start:
                break
            if seen > len(edges):
                raise MeshQualityError("boundary loop does not close")
        if seen != len(edges):
            raise MeshQualityError("boundary edges form more than one loop")


# ----------------------------------------------------------------------
# ray casting
# ----------------------------------------------------------------------

def _cast_rays(curve, center, angles):
    """Intersect rays center + u·d(α) with the sampled wall polyline.

    d(α) = (-cos α, sin α) in (z, r), so α = 0 points toward -z and
    α = π/2 straight away from the axis.  Returns (rho, s_hit) and raises
    if any ray crosses the wall more than once (not star-shaped).
    """
    pts = curve.samples
    closed = curve.is_closed
    p = pts
    q = np.roll(pts, -1, axis=0)
    nseg = len(pts) if closed else len(pts) - 1
    p, q = p[:nseg], q[:nseg]
    seg = q - p
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    s0 = curve.arclength[:nseg]
    cz, cr = center

    rho = np.empty(len(angles))
    s_hit = np.empty(len(angles))
    scale = curve.diameter
    for i, a in enumerate(angles):
        d = np.array([-np.cos(a), np.sin(a)])
        rel = p - np.array([cz, cr])
        denom = d[0] * seg[:, 1] - d[1] * seg[:, 0]
        ok = np.abs(denom) > 1e-14
        u = np.where(ok, (rel[:, 0] * seg[:, 1] - rel[:, 1] * seg[:, 0]) / denom, -1.0)
        v = np.where(ok, (rel[:, 0] * d[1] - rel[:, 1] * d[0]) / denom, -1.0)
        # the v window is widened past [0, 1): a ray through a shared vertex
        # must not fall in the floating-point gap between the two segments
        # (near-duplicate hits are merged by the u dedup below)
        mask = (u > 1e-12 * scale) & (v >= -1e-9) & (v < 1.0 + 1e-9)
        hits = u[mask]
        vhit = np.clip(v[mask], 0.0, 1.0)
        khit = np.nonzero(mask)[0]
        if len(hits) == 0:
            raise UnsupportedShapeError("ray from blending center misses the wall; "
                                        "section not star-shaped about the center")
        order = np.argsort(hits)
        hits, vhit, khit = hits[order], vhit[order], khit[order]
        distinct = [0]
        for j in range(1, len(hits)):
            if hits[j] - hits[distinct[-1]] > 1e-9 * scale:
                distinct.append(j)
        if len(distinct) > 1:
            raise UnsupportedShapeError("section is not star-shaped with respect to "
                                        "the blending center (multiple wall crossings)")
        j = distinct[0]
        rho[i] = hits[j]
        s_hit[i] = s0[khit[j]] + vhit[j] * seg_len[khit[j]]
    return rho, s_hit


def _ring_sectors(n_r, base):
    return [base * (1 << int(np.log2(i))) for i in range(1, n_r + 1)]


# ----------------------------------------------------------------------
# mesh generation
# ----------------------------------------------------------------------

def mesh_section(domain, h, n_r=None) -> TriMesh:
    """Triangulate the section of ``domain`` at target resolution ``h``.

    Max edge length is bounded by 1.5 h and the minimum angle by 20°;
    violations raise MeshQualityError.  Sections that are not star-shaped
    with respect to the blending center raise UnsupportedShapeError.

    ``n_r`` pins the ring count, which keeps the connectivity identical
    across slightly perturbed domains (matched-discretization studies
    such as finite-difference derivative checks).
    """
    if h <= 0:
        raise MeshError("mesh size h must be positive")
    curve = domain.curve if isinstance(domain, AxisymmetricDomain) else domain
    kind = curve.kind
    base = BASE_SECTORS[kind]
    span = 2.0 * np.pi if kind == TOROIDAL else np.pi

    if kind == TOROIDAL:
        center = curve.centroid
    else:
        z0, z1 = curve.samples[0, 0], curve.samples[-1, 0]
        center = (0.5 * (z0 + z1), 0.0)

    # probe geometry for sizing: wall stretch |w'(α)| and max ray length
    probe = np.linspace(0.0, span, 4 * base, endpoint=(kind == AXIS_TOUCHING))
    if kind == AXIS_TOUCHING:
        probe = probe[1:-1]
    rho_p, _ = _cast_rays(curve, center, probe)
    rho_max = float(np.max(rho_p))
    wall_p = _wall_points(center, probe, rho_p)
    dw = np.linalg.norm(np.diff(wall_p, axis=0), axis=1)
    stretch = float(np.max(dw / np.diff(probe)))  # ≈ max |dwall/dα|

    # radial spacing ≤ h along the longest ray; outer azimuthal chord ≤ ~1.1 h
    # (sector count trails n_r by at most a factor 2 between doublings);
    # the 1e-9 nudge keeps exact ratios like 1.0/0.05 off the ceil knife edge
    if n_r is None:
        n_r = max(2, int(np.ceil(rho_max / h - 1e-9)),
                  int(np.ceil(2.0 * stretch * span / (1.1 * base * h) - 1e-9)))

    sectors = _ring_sectors(n_r, base)
    m_out = sectors[-1]

    if kind == TOROIDAL:
        angles_out = np.arange(m_out) * (span / m_out)
        _, s_out = _cast_rays(curve, center, angles_out)
    else:
        angles_out = np.arange(m_out + 1) * (span / m_out)
        s_out = np.empty(m_out + 1)
        _, s_out[1:-1] = _cast_rays(curve, center, angles_out[1:-1])
        # pole rays lie along the axis: endpoints of the generating curve
        if curve.samples[0, 0] >= center[0] or curve.samples[-1, 0] <= center[0]:
            raise UnsupportedShapeError("blending center outside the axis segment")
        s_out[0] = 0.0
        s_out[-1] = curve.total_length

    # wall nodes live exactly on the spline at the ray-cast arclengths,
    # consistent with the snapping rule used by refine()
    wall_pts = curve.point_at(s_out)
    if kind == AXIS_TOUCHING:
        wall_pts[0, 1] = 0.0
        wall_pts[-1, 1] = 0.0

    # ---- nodes -------------------------------------------------------
    nodes = [np.array(center)]
    ring_index = []  # per ring: array of node ids
    for i, m in enumerate(sectors, start=1):
        t = i / n_r
        stride = m_out // m
        cols = np.arange(m if kind == TOROIDAL else m + 1) * stride
        blend = np.array(center)[None, :] + t * (wall_pts[cols] - np.array(center)[None, :])
        if i == n_r:
            blend = wall_pts[cols]
        if kind == AXIS_TOUCHING:
            blend[0, 1] = 0.0
            blend[-1, 1] = 0.0
        ids = np.arange(len(nodes), len(nodes) + len(cols))
        nodes.extend(blend)
        ring_index.append(ids)
    nodes = np.asarray(nodes)

    # ---- triangles ----------------------------------------------------
    tris = []
    first = ring_index[0]
    m1 = sectors[0]
    for j in range(m1):
        jn = (j + 1) % m1 if kind == TOROIDAL else j + 1
        tris.append((0, first[j], first[jn]))
    for i in range(1, n_r):
        inner, outer = ring_index[i - 1], ring_index[i]
        mi, mo = sectors[i - 1], sectors[i]
        if mo == mi:
            for j in range(mi):
                jn = (j + 1) % mi if kind == TOROIDAL else j + 1
                tris.append((inner[j], outer[j], outer[jn]))
                tris.append((inner[j], outer[jn], inner[jn]))
        else:  # 1:2 transition
            for j in range(mi):
                jn = (j + 1) % mi if kind == TOROIDAL else j + 1
                b0 = outer[(2 * j) % mo if kind == TOROIDAL else 2 * j]
                b1 = outer[(2 * j + 1) % mo if kind == TOROIDAL else 2 * j + 1]
                b2 = outer[(2 * j + 2) % mo if kind == TOROIDAL else 2 * j + 2]
                tris.append((inner[j], b0, b1))
                tris.append((inner[j], b1, inner[jn]))
                tris.append((inner[jn], b1, b2))
    triangles = np.asarray(tris, dtype=np.int64)

    # ---- boundary -----------------------------------------------------
    outer_ids = ring_index[-1]
    edges, tags = [], []
    if kind == TOROIDAL:
        for j in range(m_out):
            edges.append((outer_ids[j], outer_ids[(j + 1) % m_out]))
            tags.append(WALL)
        wall_nodes = outer_ids
        wall_s = s_out
    else:
        for j in range(m_out):
            edges.append((outer_ids[j], outer_ids[j + 1]))
            tags.append(WALL)
        # axis return path: outer pole (α = π) inward to the center, then out to α = 0
        chain = [outer_ids[-1]]
        for i in range(n_r - 2, -1, -1):
            chain.append(ring_index[i][-1])
        chain.append(0)
        for i in range(0, n_r):
            chain.append(ring_index[i][0])
        for a, b in zip(chain[:-1], chain[1:]):
            edges.append((a, b))
            tags.append(AXIS)
        wall_nodes = outer_ids
        wall_s = s_out

    mesh = TriMesh(nodes=nodes, triangles=triangles,
                   boundary_edges=np.asarray(edges, dtype=np.int64),
                   boundary_tags=np.asarray(tags, dtype=np.int64),
                   wall_nodes=np.asarray(wall_nodes, dtype=np.int64),
                   wall_s=np.asarray(wall_s, dtype=float),
                   h=float(h), curve=curve, n_rings=n_r)
    mesh.validate()
    return mesh


def _wall_points(center, angles, rho):
    z = center[0] + rho * (-np.cos(angles))
    r = center[1] + rho * np.sin(angles)
    return np.stack([z, r], axis=-1)


# ----------------------------------------------------------------------
# refinement
# ----------------------------------------------------------------------

def refine(mesh: TriMesh) -> TriMesh:
    """Uniform 1:4 refinement with new wall nodes snapped back to the curve."""
    curve = mesh.curve
    L = curve.total_length
    nodes = [mesh.nodes]
    n_old = len(mesh.nodes)
    wall_s_map = dict(zip(mesh.wall_nodes.tolist(), mesh.wall_s.tolist()))
    edge_tag = {}
    for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
        edge_tag[frozenset((int(a), int(b)))] = int(t)

    midpoints = {}
    new_pts = []

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key in midpoints:
            return midpoints[key]
        tag = edge_tag.get(frozenset(key))
        if tag == WALL:
            sa, sb = wall_s_map[a], wall_s_map[b]
            if curve.is_closed:
                diff = (sb - sa + 0.5 * L) % L - 0.5 * L
                sm = (sa + 0.5 * diff) % L
            else:
                sm = 0.5 * (sa + sb)
            p = curve.point_at(sm)
            idx = n_old + len(new_pts)
            new_pts.append(p)
            wall_s_map[idx] = float(sm)
        elif tag == AXIS:
            p = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
            p[1] = 0.0
            idx = n_old + len(new_pts)
            new_pts.append(p)
        else:
            p = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
            idx = n_old + len(new_pts)
            new_pts.append(p)
        midpoints[key] = idx
        return idx

    tris = []
    for a, b, c in mesh.triangles:
        a, b, c = int(a), int(b), int(c)
        mab = midpoint(a, b)
        mbc = midpoint(b, c)
        mca = midpoint(c, a)
        tris.extend([(a, mab, mca), (b, mbc, mab), (c, mca, mbc), (mab, mbc, mca)])

    edges, tags = [], []
    for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
        m = midpoints[(int(a), int(b)) if a < b else (int(b), int(a))]
        edges.append((int(a), m))
        edges.append((m, int(b)))
        tags.extend([int(t), int(t)])

    nodes = np.vstack([mesh.nodes, np.asarray(new_pts)])
    wall_items = sorted(wall_s_map.items(), key=lambda kv: kv[1])
    out = TriMesh(nodes=nodes, triangles=np.asarray(tris, dtype=np.int64),
                  boundary_edges=np.asarray(edges, dtype=np.int64),
                  boundary_tags=np.asarray(tags, dtype=np.int64),
                  wall_nodes=np.asarray([k for k, _ in wall_items], dtype=np.int64),
                  wall_s=np.asarray([v for _, v in wall_items], dtype=float),
                  h=0.5 * mesh.h, curve=curve, n_rings=2 * mesh.n_rings)
    out.validate()
    return out


# ----------------------------------------------------------------------
# ASCII dump
# ----------------------------------------------------------------------

def write_mesh(mesh: TriMesh, path):
    """Dump: header 'trimesh v1', node count, 'z r' lines, triangle count,
    'i j k' lines, then one 'i j TAG' line per boundary edge."""
    with open(path, "w") as fh:
        fh.write("trimesh v1\n")
        fh.write(f"{len(mesh.nodes)}\n")
        for z, r in mesh.nodes:
            fh.write(f"{float(z)!r} {float(r)!r}\n")
        fh.write(f"{len(mesh.triangles)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for (i, j), t in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {TAG_NAMES[int(t)]}\n")


def read_mesh(path):
    """Parse a dump back into raw arrays (nodes, triangles, edges, tags)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "trimesh v1":
        raise MeshError(f"not a trimesh v1 file: header {lines[0]!r}")
    n = int(lines[1])
    nodes = np.array([[float(x) for x in ln.split()] for ln in lines[2:2 + n]])
    t = int(lines[2 + n])
    tris = np.array([[int(x) for x in ln.split()] for ln in lines[3 + n:3 + n + t]],
                    dtype=np.int64)
    edges, tags = [], []
    for ln in lines[3 + n + t:]:
        i, j, name = ln.split()
        edges.append((int(i), int(j)))
        tags.append(TAG_CODES[name])
    return nodes, tris, np.asarray(edges, dtype=np.int64), np.asarray(tags, dtype=np.int64)
