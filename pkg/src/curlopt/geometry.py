"""Axisymmetric domains described by their planar section in the (z, r) half-plane.

The 3D domain is the solid of revolution of a planar section D about the
z-axis.  Two topologies are supported:

* ``toroidal``: the closed section stays strictly away from the axis
  (solid torus, first Betti number 1);
* ``axis_touching``: the generating curve is open with both endpoints on
  the axis r = 0 (solid of revolution diffeomorphic to a ball, Betti 0).

Curves are stored as dense arclength samples (z_i, r_i), oriented
counterclockwise in the (r, z) plane (section interior on the left).
With this orientation the solid volume is 2π ∮ (r²/2) dz > 0; for an
axis-touching curve the implicit closure along the axis contributes
nothing to the contour integral.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GeometryError, UnsupportedTopologyError

TOROIDAL = "toroidal"
AXIS_TOUCHING = "axis_touching"

#: default number of arclength samples per curve
N_SAMPLES = 512

#: minimum |dr/ds| at an axis endpoint; excludes cusped axis contact
AXIS_SLOPE_MIN = 0.1

#: default innermost-set tolerance, as a fraction of the domain diameter
INNERMOST_TOL_FRACTION = 1e-6


# ----------------------------------------------------------------------
# low-level polygon helpers (z, r) sample arrays of shape (M, 2)
# ----------------------------------------------------------------------

def _signed_area(pts, closed):
    """Shoelace area in the (r, z) frame; positive for our orientation."""
    z, r = pts[:, 0], pts[:, 1]
    zn, rn = np.roll(z, -1), np.roll(r, -1)
    terms = r * zn - rn * z
    if not closed:
        # open curve: the wrap term is the implicit axis segment, which
        # contributes r*zn - rn*z = 0 only if both endpoint r vanish;
        # keep it, endpoint validation makes it exact.
        pass
    return 0.5 * float(np.sum(terms))


def _volume_contour(pts, closed):
    """2π ∮ (r²/2) dz, exact for the sampled polygon."""
    z, r = pts[:, 0], pts[:, 1]
    zn, rn = np.roll(z, -1), np.roll(r, -1)
    terms = (r * r + r * rn + rn * rn) / 6.0 * (zn - z)
    return 2.0 * np.pi * float(np.sum(terms))


def _cum_arclength(pts, closed):
    d = np.diff(pts, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    if closed:
        wrap = np.hypot(pts[0, 0] - pts[-1, 0], pts[0, 1] - pts[-1, 1])
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return s, float(s[-1] + wrap)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s, float(s[-1])


def _has_self_intersection(pts, closed):
    """Brute-force proper-crossing test over all non-adjacent segment pairs."""
    p = pts
    q = np.roll(pts, -1, axis=0)
    m = len(pts) if closed else len(pts) - 1
    p, q = p[:m], q[:m]

    def cross(ax, ay, bx, by):
        return ax * by - ay * bx

    # chunk rows to bound memory at large M
    block = 256
    for i0 in range(0, m, block):
        i1 = min(i0 + block, m)
        pi = p[i0:i1, None, :]
        qi = q[i0:i1, None, :]
        pj = p[None, :, :]
        qj = q[None, :, :]
        d = qi - pi
        d1 = cross(d[..., 0], d[..., 1], (pj - pi)[..., 0], (pj - pi)[..., 1])
        d2 = cross(d[..., 0], d[..., 1], (qj - pi)[..., 0], (qj - pi)[..., 1])
        e = qj - pj
        d3 = cross(e[..., 0], e[..., 1], (pi - pj)[..., 0], (pi - pj)[..., 1])
        d4 = cross(e[..., 0], e[..., 1], (qi - pj)[..., 0], (qi - pj)[..., 1])
        hit = (d1 * d2 < 0) & (d3 * d4 < 0)
        # mask out self and adjacent pairs (cyclically adjacent when closed)
        ii = np.arange(i0, i1)[:, None]
        jj = np.arange(m)[None, :]
        adj = (jj == ii) | (jj == (ii + 1) % m) | (jj == (ii - 1) % m)
        if not closed:
            adj = (jj == ii) | (jj == ii + 1) | (jj == ii - 1)
        if np.any(hit & ~adj):
            return True
    return False


# ----------------------------------------------------------------------
# section curve
# ----------------------------------------------------------------------

@dataclass(eq=False)
class SectionCurve:
    """Generating curve of an axisymmetric domain, sampled by arclength.

    samples hold (z, r) rows; for ``toroidal`` the sequence is cyclic
    (the first point is not repeated), for ``axis_touching`` it is open
    with samples[0] and samples[-1] exactly on the axis.
    """

    kind: str
    samples: np.ndarray
    arclength: np.ndarray = field(repr=False)
    total_length: float

    # -- construction ---------------------------------------------------

    @classmethod
    def build(cls, kind, points, n_samples=N_SAMPLES, resample=True):
        """Fit a curve through ordered (z, r) points and validate it.

        Resampling to uniform arclength goes through a cubic spline
        (periodic for toroidal, clamped with estimated end slopes for
        axis-touching).
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 8:
            raise GeometryError("need at least 8 (z, r) points")
        if kind not in (TOROIDAL, AXIS_TOUCHING):
            raise GeometryError(f"unknown curve kind {kind!r}")
        if kind == TOROIDAL and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if kind == AXIS_TOUCHING:
            scale = float(np.max(np.abs(pts)))
            if abs(pts[0, 1]) > 1e-9 * scale or abs(pts[-1, 1]) > 1e-9 * scale:
                raise GeometryError("axis-touching curve endpoints must have r = 0")
            pts[0, 1] = 0.0
            pts[-1, 1] = 0.0
        if resample:
            pts = _uniform_resample(pts, kind, n_samples)
            if kind == AXIS_TOUCHING:
                pts[0, 1] = 0.0
                pts[-1, 1] = 0.0
        s, L = _cum_arclength(pts, closed=(kind == TOROIDAL))
        curve = cls(kind=kind, samples=pts, arclength=s, total_length=L)
        curve.validate()
        return curve

    def validate(self):
        pts = self.samples
        closed = self.is_closed
        if self.kind == TOROIDAL:
            if np.min(pts[:, 1]) <= 0.0:
                raise GeometryError("toroidal section must satisfy r > 0 everywhere")
        else:
            interior = pts[1:-1, 1]
            if np.min(interior) <= 0.0:
                raise GeometryError("axis-touching curve must have r > 0 except at endpoints")
            if pts[0, 1] != 0.0 or pts[-1, 1] != 0.0:
                raise GeometryError("axis-touching endpoints must sit exactly on r = 0")
            for idx, nb in ((0, 1), (-1, -2)):
                ds = np.hypot(*(pts[nb] - pts[idx]))
                drds = abs(pts[nb, 1] - pts[idx, 1]) / ds
                if drds < AXIS_SLOPE_MIN:
                    raise GeometryError(
                        f"axis contact too shallow: |dr/ds| = {drds:.3f} < {AXIS_SLOPE_MIN}")
        if _signed_area(pts, closed) <= 0.0:
            raise GeometryError("curve misoriented: interior must lie on the left "
                                "(counterclockwise in the (r, z) plane)")
        if _has_self_intersection(pts, closed):
            raise GeometryError("curve self-intersects")

    # -- basic queries ----------------------------------------------------

    @property
    def is_closed(self):
        return self.kind == TOROIDAL

    @property
    def min_r(self):
        return float(np.min(self.samples[:, 1]))

    @property
    def diameter(self):
        z, r = self.samples[:, 0], self.samples[:, 1]
        return float(np.hypot(z.max() - z.min(), r.max() - r.min()))

    @property
    def centroid(self):
        """Area centroid of the section polygon (z̄, r̄)."""
        pts = self.samples
        z, r = pts[:, 0], pts[:, 1]
        zn, rn = np.roll(z, -1), np.roll(r, -1)
        # shoelace in the (r, z) frame, consistent with _signed_area
        w = r * zn - rn * z
        A = 0.5 * np.sum(w)
        zc = np.sum((z + zn) * w) / (6.0 * A)
        rc = np.sum((r + rn) * w) / (6.0 * A)
        return float(zc), float(rc)

    # -- spline evaluation ------------------------------------------------

    @cached_property
    def _spline(self):
        pts, s = self.samples, self.arclength
        if self.is_closed:
            s_ext = np.concatenate([s, [self.total_length]])
            z_ext = np.concatenate([pts[:, 0], [pts[0, 0]]])
            r_ext = np.concatenate([pts[:, 1], [pts[0, 1]]])
            return (CubicSpline(s_ext, z_ext, bc_type="periodic"),
                    CubicSpline(s_ext, r_ext, bc_type="periodic"))
        # clamped spline with one-sided second-order end-slope estimates
        def end_slopes(v):
            h0 = s[1] - s[0]
            h1 = s[2] - s[1]
            d0 = (-(2 * h0 + h1) * v[0] + (h0 + h1) ** 2 / h1 * v[1]
                  - h0 ** 2 / h1 * v[2]) / (h0 * (h0 + h1))
            g0 = s[-1] - s[-2]
            g1 = s[-2] - s[-3]
            dn = ((2 * g0 + g1) * v[-1] - (g0 + g1) ** 2 / g1 * v[-2]
                  + g0 ** 2 / g1 * v[-3]) / (g0 * (g0 + g1))
            return d0, dn

        dz = end_slopes(pts[:, 0])
        dr = end_slopes(pts[:, 1])
        return (CubicSpline(s, pts[:, 0], bc_type=((1, dz[0]), (1, dz[1]))),
                CubicSpline(s, pts[:, 1], bc_type=((1, dr[0]), (1, dr[1]))))

    def _wrap(self, s):
        if self.is_closed:
            return np.mod(s, self.total_length)
        return np.clip(s, 0.0, self.total_length)

    def point_at(self, s):
        sz, sr = self._spline
        s = self._wrap(np.asarray(s, dtype=float))
        return np.stack([sz(s), sr(s)], axis=-1)

    def tangent_at(self, s):
        sz, sr = self._spline
        s = self._wrap(np.asarray(s, dtype=float))
        t = np.stack([sz(s, 1), sr(s, 1)], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def normal_at(self, s):
        """Outward unit normal: the tangent rotated so the interior is on the left."""
        t = self.tangent_at(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def curvature_at(self, s):
        """Signed curvature, positive where the wall is convex (bulges outward)."""
        sz, sr = self._spline
        s = self._wrap(np.asarray(s, dtype=float))
        z1, r1 = sz(s, 1), sr(s, 1)
        z2, r2 = sz(s, 2), sr(s, 2)
        return (z2 * r1 - r2 * z1) / np.power(z1 * z1 + r1 * r1, 1.5)

    def resampled(self, n_samples=N_SAMPLES):
        """Re-fit through the current samples and return a uniform-arclength copy."""
        return SectionCurve.build(self.kind, self.samples, n_samples=n_samples)


def _uniform_resample(pts, kind, n):
    """Resample ordered points to n uniform-arclength nodes via spline refits."""
    closed = kind == TOROIDAL
    for _ in range(3):
        s, L = _cum_arclength(pts, closed)
        if closed:
            s_ext = np.concatenate([s, [L]])
            z = np.concatenate([pts[:, 0], [pts[0, 0]]])
            r = np.concatenate([pts[:, 1], [pts[0, 1]]])
            spz = CubicSpline(s_ext, z, bc_type="periodic")
            spr = CubicSpline(s_ext, r, bc_type="periodic")
            s_new = np.linspace(0.0, L, n, endpoint=False)
        else:
            spz = CubicSpline(s, pts[:, 0])
            spr = CubicSpline(s, pts[:, 1])
            s_new = np.linspace(0.0, L, n)
        pts = np.stack([spz(s_new), spr(s_new)], axis=-1)
    return pts


# ----------------------------------------------------------------------
# domain
# ----------------------------------------------------------------------

@dataclass(eq=False)
class AxisymmetricDomain:
    """Solid of revolution of a section curve about the z-axis."""

    curve: SectionCurve
    delta: float      # distance from the domain to the axis, min r of the section
    betti1: int       # 1 for toroidal, 0 for axis-touching

    @classmethod
    def from_curve(cls, curve):
        delta = curve.min_r if curve.kind == TOROIDAL else 0.0
        return cls(curve=curve, delta=delta,
                   betti1=1 if curve.kind == TOROIDAL else 0)

    @property
    def kind(self):
        return self.curve.kind


@dataclass
class InnermostSet:
    """Wall arcs whose distance to the axis is within ``tolerance`` of the minimum.

    Arc endpoints are wall arclengths; an arc that wraps the closed curve
    is reported with end > total_length.
    """

    tolerance: float
    arcs: list
    component_count: int


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def volume(domain) -> float:
    """Solid volume 2π ∮ (r²/2) dz over the section boundary, exact for the polygon."""
    curve = domain.curve if isinstance(domain, AxisymmetricDomain) else domain
    curve.validate()
    vol = _volume_contour(curve.samples, closed=True)
    if vol <= 0.0:
        raise GeometryError("non-positive volume: curve degenerate or misoriented")
    return vol


def innermost_set(domain, tol=None) -> InnermostSet:
    """Maximal wall arcs with r ≤ (min r) + tol.  Toroidal domains only."""
    curve = domain.curve if isinstance(domain, AxisymmetricDomain) else domain
    if curve.kind != TOROIDAL:
        raise UnsupportedTopologyError(
            "innermost set is defined for toroidal domains (min r > 0)")
    if tol is None:
        tol = INNERMOST_TOL_FRACTION * curve.diameter
    r = curve.samples[:, 1]
    s = curve.arclength
    L = curve.total_length
    mask = r <= np.min(r) + tol
    if mask.all():
        return InnermostSet(tolerance=float(tol), arcs=[(0.0, L)], component_count=1)
    # contiguous runs on the cyclic index set
    idx = np.arange(len(mask))
    starts = idx[mask & ~np.roll(mask, 1)]
    ends = idx[mask & ~np.roll(mask, -1)]
    arcs = []
    for a in starts:
        b = ends[np.searchsorted(ends, a)] if np.any(ends >= a) else ends[0]
        if b >= a:
            arcs.append((float(s[a]), float(s[b])))
        else:  # run wraps past the end of the sample list
            arcs.append((float(s[a]), float(s[b]) + L))
    arcs.sort()
    return InnermostSet(tolerance=float(tol), arcs=arcs, component_count=len(arcs))


def perturb(curve: SectionCurve, theta, eps: float) -> SectionCurve:
    """Move every sample by eps·theta along the outward normal and revalidate.

    ``theta`` must be sampled at the curve's arclength nodes; for an
    axis-touching curve it must vanish at the two axis endpoints (the
    endpoint normals need not be axis-parallel, so a nonzero endpoint
    velocity would pull the curve off the axis).
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(curve.samples),):
        raise GeometryError("theta must be sampled at the curve's arclength nodes")
    if eps == 0.0:
        return curve
    if curve.kind == AXIS_TOUCHING:
        scale = float(np.max(np.abs(theta))) or 1.0
        if abs(theta[0]) > 1e-12 * scale or abs(theta[-1]) > 1e-12 * scale:
            raise GeometryError("theta must vanish at the axis endpoints")
    normals = curve.normal_at(curve.arclength)
    pts = curve.samples + eps * theta[:, None] * normals
    if curve.kind == AXIS_TOUCHING:
        pts[0, 1] = 0.0
        pts[-1, 1] = 0.0
    if np.min(pts[:, 1]) < 0.0:
        raise GeometryError("perturbation pushed the curve below the axis (r < 0)")
    s, L = _cum_arclength(pts, closed=curve.is_closed)
    out = SectionCurve(kind=curve.kind, samples=pts, arclength=s, total_length=L)
    out.validate()
    return out


def scale(curve: SectionCurve, lam: float) -> SectionCurve:
    """Dilate the section (z, r) -> (λz, λr); volume scales exactly by λ³."""
    if lam <= 0.0:
        raise GeometryError("scale factor must be positive")
    return SectionCurve(kind=curve.kind, samples=curve.samples * lam,
                        arclength=curve.arclength * lam,
                        total_length=curve.total_length * lam)


def translate_z(curve: SectionCurve, dz: float) -> SectionCurve:
    pts = curve.samples.copy()
    pts[:, 0] += dz
    return SectionCurve(kind=curve.kind, samples=pts,
                        arclength=curve.arclength.copy(),
                        total_length=curve.total_length)


# ----------------------------------------------------------------------
# analytic constructors and the domain-spec file format
# ----------------------------------------------------------------------

def circle_section(center_z, center_r, radius, kind=TOROIDAL, n_samples=N_SAMPLES):
    """Circular section.  Toroidal needs center_r > radius; axis-touching
    needs center_r = 0 (the generating curve is the upper half circle)."""
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if kind == TOROIDAL:
        if center_r <= radius:
            raise GeometryError("toroidal circle must stay off the axis (center_r > radius)")
        t = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    else:
        if abs(center_r) > 1e-12 * radius:
            raise GeometryError("axis-touching circle must be centered on the axis")
        center_r = 0.0
        t = np.linspace(0.0, np.pi, n_samples)
    pts = np.stack([center_z - radius * np.cos(t),
                    center_r + radius * np.sin(t)], axis=-1)
    return SectionCurve.build(kind, pts, n_samples=n_samples, resample=(kind == TOROIDAL))


def fourier_section(center_z, center_r, radius, modes, kind=TOROIDAL, n_samples=N_SAMPLES):
    """Star-shaped boundary ρ(t) = radius·(1 + Σ_k cos_k·cos(kt) + sin_k·sin(kt))
    about (center_z, center_r); modes is [[cos_1, sin_1], [cos_2, sin_2], ...]."""
    modes = np.asarray(modes, dtype=float).reshape(-1, 2)
    dense = 8 * n_samples
    if kind == TOROIDAL:
        t = np.linspace(0.0, 2.0 * np.pi, dense, endpoint=False)
    else:
        t = np.linspace(0.0, np.pi, dense)
    rho = np.ones_like(t)
    for k, (ck, sk) in enumerate(modes, start=1):
        rho += ck * np.cos(k * t) + sk * np.sin(k * t)
    rho *= radius
    if np.min(rho) <= 0:
        raise GeometryError("fourier modes too large: boundary radius crosses zero")
    pts = np.stack([center_z - rho * np.cos(t),
                    center_r + rho * np.sin(t)], axis=-1)
    if kind == AXIS_TOUCHING:
        pts[0, 1] = 0.0
        pts[-1, 1] = 0.0
    return SectionCurve.build(kind, pts, n_samples=n_samples)


def domain_from_spec(spec: dict, n_samples=N_SAMPLES) -> AxisymmetricDomain:
    """Build a domain from the JSON domain-spec structure.

    {"kind": "toroidal"|"axis_touching",
     "boundary": {"type": "circle", "center_z": f, "center_r": f, "radius": f}
               | {"type": "fourier", "center_z": f, "center_r": f, "radius": f,
                  "modes": [[cos_k, sin_k], ...]}
               | {"type": "polyline", "points": [[z, r], ...]}}
    """
    try:
        kind = spec["kind"]
        boundary = spec["boundary"]
        btype = boundary["type"]
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"malformed domain spec: missing {exc}") from exc
    if kind not in (TOROIDAL, AXIS_TOUCHING):
        raise GeometryError(f"unknown domain kind {kind!r}")
    if btype == "circle":
        curve = circle_section(boundary["center_z"], boundary["center_r"],
                               boundary["radius"], kind=kind, n_samples=n_samples)
    elif btype == "fourier":
        curve = fourier_section(boundary["center_z"], boundary["center_r"],
                                boundary["radius"], boundary.get("modes", []),
                                kind=kind, n_samples=n_samples)
    elif btype == "polyline":
        curve = SectionCurve.build(kind, boundary["points"], n_samples=n_samples)
    else:
        raise GeometryError(f"unknown boundary type {btype!r}")
    return AxisymmetricDomain.from_curve(curve)


def load_domain(path, n_samples=N_SAMPLES) -> AxisymmetricDomain:
    with open(path) as fh:
        spec = json.load(fh)
    return domain_from_spec(spec, n_samples=n_samples)
