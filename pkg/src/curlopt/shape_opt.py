"""Boundary shape derivative, steepest descent, and the optimality check.

For a volume-preserving normal velocity θ on the wall (∮ θ r dl = 0) and
a simple eigenvalue normalized to a unit-norm eigenfield, the first-order
eigenvalue change under the boundary flow is

    dμ₁[θ] = -μ₁ ∮_{∂Ω} θ |u₁|² dS = -2π μ₁ ∮_{∂D} θ(ℓ) q(ℓ) r(ℓ) dl .

Stationarity of μ₁ under all volume-preserving deformations therefore
forces q = |u₁|² to be constant on the wall; whenever q is measurably
non-constant, θ = q - q̄ is an explicit descent direction with

    dμ₁[q - q̄] = -2π μ₁ ∮ (q - q̄)² r dl ≤ 0 ,

and the optimizer walks it under an exact volume restoration each step.
The scale-invariant objective J = μ₁ |Ω|^{1/3} makes steps comparable
across the rescalings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import CurloptError, GeometryError, MeshError, SolverError
from .geometry import (TOROIDAL, AxisymmetricDomain, innermost_set, perturb,
                       scale, volume)
from .meshing import mesh_section
from . import gs_solver
from .field_recon import BoundaryTrace, _line_weights, _trace_from_psi, boundary_trace

#: relative volume-flux threshold for the volume_preserving flag
VOLUME_PRESERVING_RTOL = 1e-10

#: initial line-search step scaled so max |εθ| equals this fraction of the diameter
STEP_DIAMETER_FRACTION = 0.02

MAX_HALVINGS = 25

#: q-constancy threshold = this factor times the manufactured-trace noise floor
NOISE_FACTOR = 3.0


class ContractViolationError(CurloptError):
    """Operation called outside its derivation hypotheses."""


@dataclass(eq=False)
class NormalVelocity:
    """Normal velocity θ(ℓ) sampled on the uniform wall arclength grid."""

    kind: str
    arclength: np.ndarray
    samples: np.ndarray
    r: np.ndarray               # wall radius on the same grid, for quadrature
    total_length: float
    volume_preserving: bool = field(init=False)

    def __post_init__(self):
        w = _line_weights(self.arclength, self.total_length,
                          closed=(self.kind == TOROIDAL)) * self.r
        flux = abs(float(np.sum(self.samples * w)))
        mass = float(np.sum(np.abs(self.samples) * w))
        self.volume_preserving = flux <= VOLUME_PRESERVING_RTOL * max(mass, 1e-300)


@dataclass
class ShapeStep:
    """One descent step: state before the step and the step taken from it."""

    step: int
    mu1: float
    volume: float
    J: float
    q_min: float
    q_max: float
    q_var: float
    dmu1_pred: float
    dmu1_obs: float
    step_size: float


@dataclass
class Trajectory:
    steps: list
    status: str
    final_curve: object


@dataclass
class ShapeDerivativeReport:
    dmu1_predicted: float
    q_variance_weighted: float       # ∮ (q - q̄)² r dl (surface-measure weighted)
    fd_estimate: float = None
    relative_gap: float = None


@dataclass
class OptimalityReport:
    verdict: str
    mu1: float
    mu2: float
    c1: float
    volume: float
    q_min: float
    q_max: float
    q_mean: float
    q_var: float
    q_ratio_minus_1: float
    q_threshold: float
    flux_identity_residual: float
    flux_boundary_quadrature: float
    rd_component_count: int
    rd_arcs: list
    rd_connected: bool
    zeros: list                      # [{"s":, "z":, "r":}, ...] zeros of ∂_nψ
    zeros_in_rd_neighborhood: bool
    zero_rd_distance_max: float
    descent_dmu1: float              # 0.0 when no certificate is emitted
    descent_theta_max: float
    c1_zero_flag: bool

    def to_json_dict(self):
        d = asdict(self)
        return d


# ----------------------------------------------------------------------
# derivative and descent velocity
# ----------------------------------------------------------------------

def _check_grid(trace, theta):
    if len(theta.arclength) != len(trace.arclength) or \
            not np.allclose(theta.arclength, trace.arclength):
        raise ContractViolationError("velocity and trace live on different grids")


def shape_derivative(solution, trace: BoundaryTrace, theta: NormalVelocity) -> float:
    """-2π μ₁ ∮ θ q r dl by trapezoidal quadrature on the trace grid.

    The formula is derived for volume-preserving variations only; calling
    it with any other θ is a contract violation.
    """
    if not theta.volume_preserving:
        raise ContractViolationError(
            "shape derivative is only valid for volume-preserving velocities")
    _check_grid(trace, theta)
    w = trace.line_weights() * trace.r
    return -2.0 * np.pi * solution.mu1 * float(np.sum(theta.samples * trace.q * w))


def steepest_descent_velocity(trace: BoundaryTrace) -> NormalVelocity:
    """Volume-preserving steepest descent θ built from the wall trace.

    Toroidal walls use θ = q - q̄ directly.  On an axis-touching wall the
    admissible velocities vanish at the two poles (otherwise the endpoint
    would leave the axis), so the descent direction is taken within that
    cone: θ = w (q - c) with taper w = sin(π ℓ/L) and c chosen to cancel
    the volume flux; the predicted change stays ≤ 0 by Cauchy-Schwarz.
    """
    wq = trace.line_weights() * trace.r
    if trace.kind == TOROIDAL:
        theta = trace.q - trace.q_mean
    else:
        w = np.sin(np.pi * trace.arclength / trace.total_length)
        denom = float(np.sum(w * wq))
        c = float(np.sum(w * trace.q * wq)) / denom
        theta = w * (trace.q - c)
        theta[0] = 0.0
        theta[-1] = 0.0
    return NormalVelocity(kind=trace.kind, arclength=trace.arclength.copy(),
                          samples=theta, r=trace.r.copy(),
                          total_length=trace.total_length)


def project_volume_preserving(trace: BoundaryTrace, raw) -> NormalVelocity:
    """Remove the volume flux from a raw velocity profile.

    Toroidal walls subtract the weighted mean; axis-touching walls
    subtract a multiple of the half-sine taper instead, which keeps the
    endpoint values at zero (``raw`` must already vanish at the poles).
    """
    raw = np.asarray(raw, dtype=float)
    s, L = trace.arclength, trace.total_length
    wq = trace.line_weights() * trace.r
    if trace.kind == TOROIDAL:
        theta = raw - float(np.sum(raw * wq)) / float(np.sum(wq))
    else:
        tol = 1e-12 * max(float(np.max(np.abs(raw))), 1e-300)
        if abs(raw[0]) > tol or abs(raw[-1]) > tol:
            raise ContractViolationError("raw velocity must vanish at the poles")
        taper = np.sin(np.pi * s / L)
        c = float(np.sum(raw * wq)) / float(np.sum(taper * wq))
        theta = raw - c * taper
        theta[0] = 0.0
        theta[-1] = 0.0
    return NormalVelocity(kind=trace.kind, arclength=s.copy(), samples=theta,
                          r=trace.r.copy(), total_length=L)


def volume_preserving_mode(trace: BoundaryTrace, k: int, use_sin=False) -> NormalVelocity:
    """Smooth volume-preserving Fourier test velocity.

    On a closed wall, mode k of cos (default) or sin.  On an open wall,
    sin(π(k+1)ℓ/L): the k = 1 half-sine is the projection taper itself
    and would vanish identically.
    """
    s, L = trace.arclength, trace.total_length
    if trace.kind == TOROIDAL:
        raw = np.sin(2 * np.pi * k * s / L) if use_sin else np.cos(2 * np.pi * k * s / L)
    else:
        raw = np.sin(np.pi * (k + 1) * s / L)
    return project_volume_preserving(trace, raw)


def derivative_report(solution, trace, theta, fd_estimate=None,
                      relative_gap=None) -> ShapeDerivativeReport:
    w = trace.line_weights() * trace.r
    var_int = float(np.sum((trace.q - trace.q_mean) ** 2 * w))
    return ShapeDerivativeReport(
        dmu1_predicted=shape_derivative(solution, trace, theta),
        q_variance_weighted=var_int, fd_estimate=fd_estimate,
        relative_gap=relative_gap)


def fd_eigenvalue_derivative(domain, theta: NormalVelocity, mesh_h, eps,
                             tol=gs_solver.DEFAULT_TOL,
                             seed=gs_solver.DEFAULT_SEED) -> float:
    """Central finite difference (μ₁(+ε) - μ₁(-ε)) / 2ε with full re-mesh
    and re-solve on the raw perturbed curves; the independent check of the
    analytic derivative.

    The ring count is pinned from the unperturbed domain so both solves
    use matched connectivity (otherwise a perturbation crossing a sizing
    threshold would change the discretization error discontinuously)."""
    curve = domain.curve
    base = mesh_section(domain, mesh_h)
    mus = []
    for sgn in (+1.0, -1.0):
        pert = perturb(curve, theta.samples, sgn * eps)
        dom = AxisymmetricDomain.from_curve(pert)
        forms = gs_solver.assemble(mesh_section(dom, mesh_h, n_r=base.n_rings))
        mus.append(gs_solver.solve(forms, tol=tol, seed=seed).mu1)
    return (mus[0] - mus[1]) / (2.0 * eps)


# ----------------------------------------------------------------------
# descent loop
# ----------------------------------------------------------------------

def optimize(domain, steps, mesh_h, tol=gs_solver.DEFAULT_TOL,
             seed=gs_solver.DEFAULT_SEED, n_samples=None, verbose=False) -> Trajectory:
    """Steepest-descent loop at fixed volume.

    Each iteration solves, extracts the trace, builds θ = steepest descent,
    line-searches the step size (halving until J = μ₁|Ω|^{1/3} decreases),
    and restores the volume exactly by a dilation.  The trajectory records
    the state before each accepted step plus a final row (step fields NaN).
    """
    curve = domain.curve if isinstance(domain, AxisymmetricDomain) else domain
    n_samples = n_samples or len(curve.samples)
    curve = curve.resampled(n_samples)
    v_target = volume(AxisymmetricDomain.from_curve(curve))
    rows = []
    status = "completed"

    def solve_state(cv):
        dom = AxisymmetricDomain.from_curve(cv)
        mesh = mesh_section(dom, mesh_h)
        forms = gs_solver.assemble(mesh)
        sol, mu2 = gs_solver.solve_with_gap(forms, tol=tol, seed=seed)
        trace = boundary_trace(sol, mesh)
        return dom, mesh, forms, sol, mu2, trace

    dom, mesh, forms, sol, mu2, trace = solve_state(curve)
    final_row_written = False
    for k in range(steps):
        vol_k = volume(dom)
        J_k = sol.mu1 * vol_k ** (1.0 / 3.0)
        gap = mu2 ** 2 - sol.mu1 ** 2
        if gap < 10.0 * sol.residual * sol.mu1 ** 2:
            status = "eigenvalue_crossing_alarm"
            rows.append(_row(k, sol, vol_k, J_k, trace, np.nan, np.nan, np.nan))
            final_row_written = True
            break
        theta = steepest_descent_velocity(trace)
        dmu_pred = shape_derivative(sol, trace, theta)
        theta_max = float(np.max(np.abs(theta.samples)))
        if theta_max == 0.0:
            status = "stationary"
            rows.append(_row(k, sol, vol_k, J_k, trace, dmu_pred, np.nan, np.nan))
            final_row_written = True
            break
        eps = STEP_DIAMETER_FRACTION * curve.diameter / theta_max
        accepted = None
        for _ in range(MAX_HALVINGS):
            try:
                cand = perturb(curve, theta.samples, eps).resampled(n_samples)
                v_c = volume(AxisymmetricDomain.from_curve(cand))
                cand = scale(cand, (v_target / v_c) ** (1.0 / 3.0))
                state = solve_state(cand)
            except (GeometryError, MeshError, SolverError):
                eps *= 0.5
                continue
            J_new = state[3].mu1 * volume(state[0]) ** (1.0 / 3.0)
            if J_new < J_k:
                accepted = (cand, state, eps, J_new)
                break
            eps *= 0.5
        if accepted is None:
            status = "line_search_failed"
            rows.append(_row(k, sol, vol_k, J_k, trace, dmu_pred, np.nan, np.nan))
            final_row_written = True
            break
        cand, state, eps, J_new = accepted
        rows.append(_row(k, sol, vol_k, J_k, trace, dmu_pred,
                         state[3].mu1 - sol.mu1, eps))
        if verbose:
            print(f"[optimize] step {k}: J {J_k:.6f} -> {J_new:.6f} "
                  f"(eps {eps:.3e}, dmu pred {dmu_pred:.3e})")
        curve = cand
        dom, mesh, forms, sol, mu2, trace = state
    if not final_row_written:
        vol_f = volume(dom)
        rows.append(_row(len(rows), sol, vol_f, sol.mu1 * vol_f ** (1.0 / 3.0),
                         trace, np.nan, np.nan, np.nan))
    return Trajectory(steps=rows, status=status, final_curve=curve)


def _row(k, sol, vol, J, trace, dmu_pred, dmu_obs, eps):
    return ShapeStep(step=k, mu1=sol.mu1, volume=vol, J=J, q_min=trace.q_min,
                     q_max=trace.q_max, q_var=trace.q_var, dmu1_pred=dmu_pred,
                     dmu1_obs=dmu_obs, step_size=eps)


def write_trajectory_csv(traj: Trajectory, path, header_comment=None):
    cols = ["step", "mu1", "volume", "J", "q_min", "q_max", "q_var",
            "dmu1_pred", "dmu1_obs", "step_size"]
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(cols) + "\n")
        for row in traj.steps:
            d = asdict(row)
            fh.write(",".join(repr(float(d[c])) if c != "step" else str(d[c])
                              for c in cols) + "\n")


# ----------------------------------------------------------------------
# optimality check
# ----------------------------------------------------------------------

def trace_noise_floor(kind, mesh_h, radius, center_r=None):
    """Discretization noise of the wall trace at resolution mesh_h,
    measured on a manufactured flux function with exactly constant
    ∂_nψ / r on a circular fixture section of comparable size.

    The fixture ψ̃ = R ρ²/(2a) + (ρ³/(2a) - aρ/2) cos α - Ra/2 (polar
    coordinates about the section center) satisfies ψ̃|∂ = 0 and
    ∂_nψ̃ = r on the circle, so the exact trace is q ≡ 1; the measured
    max |q - 1| is the noise floor.
    """
    from .geometry import circle_section
    a = radius
    R = center_r if center_r is not None else max(3.0 * a, 2.0 * a + mesh_h)
    curve = circle_section(0.0, R, a, kind=TOROIDAL)
    fixture = AxisymmetricDomain.from_curve(curve)
    mesh = mesh_section(fixture, mesh_h)
    z = mesh.nodes[:, 0]
    r = mesh.nodes[:, 1]
    rho = np.hypot(z, r - R)
    cos_a = np.divide(r - R, rho, out=np.zeros_like(rho), where=rho > 0)
    psi = R * rho ** 2 / (2 * a) + (rho ** 3 / (2 * a) - a * rho / 2) * cos_a - R * a / 2
    tr = _trace_from_psi(mesh, psi, mu=1.0, c1=0.0)
    return float(np.max(np.abs(tr.q - 1.0)))


def _locate_zeros(trace):
    """Sign changes of ∂_nψ on the arclength grid, linearly interpolated."""
    dn = trace.dn_psi
    s = trace.arclength
    L = trace.total_length
    closed = trace.kind == TOROIDAL
    zeros = []
    m = len(dn) if closed else len(dn) - 1
    for i in range(m):
        j = (i + 1) % len(dn)
        if dn[i] == 0.0:
            zeros.append(float(s[i]))
        elif dn[i] * dn[j] < 0.0:
            t = dn[i] / (dn[i] - dn[j])
            ds = (s[j] - s[i]) % L if closed else s[j] - s[i]
            zeros.append(float((s[i] + t * ds) % L))
    return zeros


def _arc_distance(s, arcs, L, closed):
    """Distance in arclength from s to the nearest innermost arc."""
    best = np.inf
    for a, b in arcs:
        if a <= s <= b or (closed and a <= s + L <= b):
            return 0.0
        for endpoint in (a, b):
            d = abs(s - endpoint % L)
            if closed:
                d = min(d, L - d)
            best = min(best, d)
    return best


def _verdict(nonconstant, c1_flag):
    if nonconstant:
        verdict = ("necessary condition violated: boundary field norm "
                   "non-constant; not locally optimal: descent direction found")
    else:
        verdict = ("necessary condition satisfied within discretization "
                   "tolerance; no descent certificate")
    if c1_flag:
        verdict += ("; c1 = 0 branch: wall flux constant vanishes, boundary "
                    "norm would vanish identically (contradiction branch)")
    return verdict


def check_optimality(domain, mesh_h, tol=gs_solver.DEFAULT_TOL,
                     seed=gs_solver.DEFAULT_SEED, rd_tol=None,
                     zero_neighborhood=None, q_threshold=None) -> OptimalityReport:
    """Evaluate the stationarity conditions on one domain.

    The report carries (i) the q-constancy measure against a calibrated
    discretization threshold, (ii) the discrete flux-identity residual,
    (iii) zeros of ∂_nψ on the wall and whether they all fall inside the
    tolerance neighborhood of the innermost set, (iv) the innermost-set
    component count (connectedness hypothesis), and (v) a descent
    certificate whenever q is measurably non-constant.
    """
    curve = domain.curve if isinstance(domain, AxisymmetricDomain) else domain
    domain = AxisymmetricDomain.from_curve(curve)
    mesh = mesh_section(domain, mesh_h)
    forms = gs_solver.assemble(mesh)
    sol, mu2 = gs_solver.solve_with_gap(forms, tol=tol, seed=seed)
    trace = boundary_trace(sol, mesh)
    vol = volume(domain)

    # (i) q constancy vs noise floor (overridable for calibration studies)
    if q_threshold is None:
        rho_scale = 0.5 * curve.diameter
        _, r_centroid = curve.centroid
        noise = trace_noise_floor(curve.kind, mesh_h, rho_scale,
                                  center_r=max(r_centroid, 1.5 * rho_scale) if
                                  curve.kind == TOROIDAL else None)
        threshold = NOISE_FACTOR * noise
    else:
        threshold = q_threshold
    q_ratio = trace.q_max / trace.q_min - 1.0 if trace.q_min > 0 else np.inf
    nonconstant = q_ratio > threshold

    # (ii) flux identity
    flux_var = gs_solver.flux_identity_residual(forms, sol)
    wgt = trace.line_weights()
    flux_quad = abs(float(np.sum(trace.dn_psi / trace.r * wgt))) \
        if np.all(trace.r > 0) else float("nan")

    # (iii) zeros of the normal derivative
    zeros_s = _locate_zeros(trace)
    L = trace.total_length
    zero_records = []
    for s in zeros_s:
        p = curve.point_at(s)
        zero_records.append({"s": s, "z": float(p[0]), "r": float(p[1])})

    # (iv) innermost set (toroidal only)
    if curve.kind == TOROIDAL:
        inn = innermost_set(domain, tol=rd_tol)
        rd_count = inn.component_count
        rd_arcs = [list(a) for a in inn.arcs]
        rd_connected = rd_count == 1
        if zero_neighborhood is None:
            # resolution-scale padding around the innermost arcs
            zero_neighborhood = 3.0 * mesh_h
        dists = [_arc_distance(s, inn.arcs, L, True) for s in zeros_s]
        zero_dist_max = max(dists) if dists else 0.0
        zeros_in_rd = bool(zeros_s) and all(d <= zero_neighborhood for d in dists)
    else:
        rd_count = 0
        rd_arcs = []
        rd_connected = True
        zero_dist_max = float("nan")
        zeros_in_rd = False

    # (v) descent certificate
    theta = steepest_descent_velocity(trace)
    dmu_pred = shape_derivative(sol, trace, theta)
    c1_flag = curve.kind == TOROIDAL and \
        abs(sol.c1) <= 1e-8 * float(np.max(np.abs(sol.psi)))

    verdict = _verdict(nonconstant, c1_flag)
    if nonconstant:
        descent_dmu1 = dmu_pred
        descent_theta_max = float(np.max(np.abs(theta.samples)))
    else:
        descent_dmu1 = 0.0
        descent_theta_max = 0.0

    return OptimalityReport(
        verdict=verdict, mu1=sol.mu1, mu2=mu2, c1=sol.c1, volume=vol,
        q_min=trace.q_min, q_max=trace.q_max, q_mean=trace.q_mean,
        q_var=trace.q_var, q_ratio_minus_1=float(q_ratio),
        q_threshold=float(threshold), flux_identity_residual=float(flux_var),
        flux_boundary_quadrature=float(flux_quad), rd_component_count=rd_count,
        rd_arcs=rd_arcs, rd_connected=rd_connected, zeros=zero_records,
        zeros_in_rd_neighborhood=zeros_in_rd, zero_rd_distance_max=float(zero_dist_max),
        descent_dmu1=float(descent_dmu1), descent_theta_max=descent_theta_max,
        c1_zero_flag=bool(c1_flag))


def write_optimality_json(report: OptimalityReport, path, extra=None):
    d = report.to_json_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, sort_keys=True, indent=2)
        fh.write("\n")
