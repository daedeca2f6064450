"""Weighted finite-element eigensolver for the axisymmetric flux function.

The first axisymmetric curl eigenfield of a solid of revolution is
encoded by a flux function ψ(z, r) on the section D solving

    ∂_zz ψ + ∂_rr ψ - (1/r) ∂_r ψ = -μ² ψ,

an eigenproblem that is self-adjoint in the 1/r-weighted inner product.
The weak form uses the bilinear forms

    a(u, v) = ∫_D ∇u·∇v (1/r) dz dr,     b(u, v) = ∫_D u v (1/r) dz dr,

discretized with piecewise-linear elements; the 1/r weight is evaluated
by one-point centroid quadrature times the exact unweighted element
integrals (the weight is smooth away from the axis, and ψ ~ r² keeps the
integrand regular near it).

Boundary handling depends on the topology:

* axis-touching: ψ = 0 on the whole section boundary (wall and axis; the
  eigenfield stays bounded at the axis only if ψ vanishes there), so all
  boundary nodes are eliminated;
* toroidal: ψ is an unknown constant c₁ on the wall, implemented by
  condensing every wall node into one shared floating degree of freedom,
  and the solve is restricted to the B-orthogonal complement of the
  constant function, which enforces the flux constraint b(ψ, 1) = 0.

Only the positive root μ = +√(μ²) is reported: flipping the sign of the
azimuthal field component turns a +μ eigenfield into a -μ one, so within
the axisymmetric sector |μ₋₁| = μ₁ and nothing more needs solving.

The computed value is the axisymmetric-sector first eigenvalue; for a
general domain the full 3D spectrum may contain non-axisymmetric modes
below it, so reports label it accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, IllConditionedError, SolverError
from .geometry import AXIS_TOUCHING, TOROIDAL
from .meshing import TriMesh

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
DEFAULT_SEED = 7081

FLOATING = -2   # dof_of_node marker for wall nodes sharing the floating constant
ELIMINATED = -1


@dataclass(eq=False)
class WeightedForms:
    """Assembled 1/r-weighted stiffness and mass forms plus the dof map."""

    kind: str
    A: sp.csr_matrix               # condensed stiffness, symmetric PSD
    B: sp.csr_matrix               # condensed mass, symmetric PD
    R: sp.csr_matrix               # (n_nodes, n_dof) dof -> nodal expansion
    dof_of_node: np.ndarray        # per-node dof index; -1 eliminated
    n_dof: int
    A_full: sp.csr_matrix = field(repr=False)   # unconstrained nodal forms
    B_full: sp.csr_matrix = field(repr=False)

    def a(self, u, v):
        """a(u, v) on nodal vectors."""
        return float(u @ (self.A_full @ v))

    def b(self, u, v):
        return float(u @ (self.B_full @ v))


@dataclass
class EigenSolution:
    """First eigenpair of the weighted problem.

    psi is nodal and normalized so the reconstructed 3D field has unit
    L² norm: 4π μ² b(ψ, ψ) = 1.  ``residual`` is the relative eigen
    residual ‖Aψ - μ²Bψ‖_{B⁻¹} / (μ² ‖ψ‖_B); ``constraint_residual`` is
    |b(ψ, 1)| (toroidal flux constraint; 0 for axis-touching).
    """

    mu1: float
    psi: np.ndarray
    c1: float
    residual: float
    constraint_residual: float
    kind: str
    n_dof: int
    iterations: int


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

def _element_arrays(mesh):
    """Per-triangle |area|, centroid r, and the (z, r)-frame b/c coefficients."""
    p = mesh.nodes[mesh.triangles]          # (T, 3, 2)
    z, r = p[..., 0], p[..., 1]
    # shoelace in (z, r); negative for our orientation, take |.|
    two_a = (z[:, 1] - z[:, 0]) * (r[:, 2] - r[:, 0]) \
        - (r[:, 1] - r[:, 0]) * (z[:, 2] - z[:, 0])
    area = 0.5 * np.abs(two_a)
    r_c = np.mean(r, axis=1)
    b = np.stack([r[:, 1] - r[:, 2], r[:, 2] - r[:, 0], r[:, 0] - r[:, 1]], axis=1)
    c = np.stack([z[:, 2] - z[:, 1], z[:, 0] - z[:, 2], z[:, 1] - z[:, 0]], axis=1)
    return area, r_c, b, c


def assemble(mesh: TriMesh, kind=None) -> WeightedForms:
    """Assemble the weighted forms and condense the boundary per topology."""
    if kind is None:
        kind = mesh.kind
    if kind != mesh.kind:
        raise SolverError(f"mesh is {mesh.kind} but assembly requested {kind}")
    n = len(mesh.nodes)
    area, r_c, b, c = _element_arrays(mesh)
    if np.any(r_c <= 0.0):
        raise SolverError("triangle centroid at r <= 0; weighted quadrature undefined")
    if kind == AXIS_TOUCHING:
        axis_nodes = mesh.axis_node_set()
        n_axis = np.sum(np.isin(mesh.triangles, list(axis_nodes)), axis=1)
        if np.any(n_axis > 2):
            raise SolverError("triangle with three axis nodes")

    w = 1.0 / r_c
    # element stiffness (b⊗b + c⊗c)/(4|A|), mass |A|/12 [[2,1,1],[1,2,1],[1,1,2]]
    k_el = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
        / (4.0 * area)[:, None, None]
    m_pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_el = area[:, None, None] * m_pattern[None, :, :]

    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    A_full = sp.coo_matrix(((w[:, None, None] * k_el).ravel(), (rows, cols)),
                           shape=(n, n)).tocsr()
    B_full = sp.coo_matrix(((w[:, None, None] * m_el).ravel(), (rows, cols)),
                           shape=(n, n)).tocsr()

    dof_of_node = np.full(n, ELIMINATED, dtype=np.int64)
    boundary = set(mesh.boundary_edges.ravel().tolist())
    interior = [i for i in range(n) if i not in boundary]
    dof_of_node[interior] = np.arange(len(interior))
    if kind == TOROIDAL:
        n_dof = len(interior) + 1
        wall = sorted(boundary)
        dof_of_node[wall] = n_dof - 1
    else:
        n_dof = len(interior)

    keep = dof_of_node >= 0
    R = sp.coo_matrix((np.ones(np.sum(keep)),
                       (np.nonzero(keep)[0], dof_of_node[keep])),
                      shape=(n, n_dof)).tocsr()
    A = (R.T @ A_full @ R).tocsr()
    B = (R.T @ B_full @ R).tocsr()
    return WeightedForms(kind=kind, A=A, B=B, R=R, dof_of_node=dof_of_node,
                         n_dof=n_dof, A_full=A_full, B_full=B_full)


# ----------------------------------------------------------------------
# constrained inverse iteration
# ----------------------------------------------------------------------

def _b_project(X, V, BV, gram_inv):
    if V is None:
        return X
    return X - V @ (gram_inv @ (BV.T @ X))


def _b_orthonormalize(Y, B):
    """Whiten the block in the B inner product via the small Gram eigenbasis."""
    G = Y.T @ (B @ Y)
    w, U = np.linalg.eigh(0.5 * (G + G.T))
    good = w > 1e-13 * np.max(w)
    if not np.any(good):
        raise IllConditionedError("iteration block collapsed to rank zero")
    return Y @ (U[:, good] / np.sqrt(w[good]))


def _smallest_eigenpairs(A, B, constraints, k, tol, max_iter, seed, b_factor=None):
    """k smallest eigenpairs of A x = λ B x on the B-orthogonal complement
    of the constraint vectors.

    Block inverse iteration at shift 0 with Rayleigh-Ritz extraction: the
    bordered symmetric factorization [[A, BV], [VᵀB, 0]] applies the
    constrained inverse exactly, and a block wider than k keeps the
    iteration fast when the low eigenvalues cluster (thin tori).
    """
    n = A.shape[0]
    V = None
    if constraints is not None and len(constraints):
        V = np.column_stack(constraints)
    n_con = 0 if V is None else V.shape[1]
    if n - n_con < k:
        raise SolverError(f"need {k} eigenpairs but only {n - n_con} "
                          "constrained degrees of freedom")
    q = min(max(k + 2, 4), n - n_con)

    if V is not None:
        BV = B @ V
        gram = V.T @ BV
        gram_inv = np.linalg.inv(np.atleast_2d(gram))
        M = sp.bmat([[A, sp.csc_matrix(BV)],
                     [sp.csc_matrix(BV.T), None]], format="csc")
    else:
        BV = gram_inv = None
        M = A.tocsc()
    try:
        lu = splu(M)
    except RuntimeError as exc:
        raise IllConditionedError(f"sparse factorization failed: {exc}") from exc
    if b_factor is None:
        b_factor = splu(B.tocsc())

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, q))
    X = _b_orthonormalize(_b_project(X, V, BV, gram_inv), B)

    rels = np.full(k, np.inf)
    for it in range(1, max_iter + 1):
        rhs = B @ X
        if n_con:
            Y = lu.solve(np.vstack([rhs, np.zeros((n_con, q))]))[:n]
        else:
            Y = lu.solve(rhs)
        Y = _b_orthonormalize(_b_project(Y, V, BV, gram_inv), B)
        H = Y.T @ (A @ Y)
        theta, S = np.linalg.eigh(0.5 * (H + H.T))
        X = Y @ S
        q = X.shape[1]
        for i in range(k):
            r = A @ X[:, i] - theta[i] * (B @ X[:, i])
            rels[i] = np.sqrt(r @ b_factor.solve(r)) / max(abs(theta[i]),
                                                           np.finfo(float).tiny)
        if np.all(rels <= tol):
            return theta[:k], X[:, :k], rels, it
    raise ConvergenceError(f"block inverse iteration: relative residuals "
                           f"{rels!r} above {tol:.1e} after {max_iter} iterations")


def _finalize(forms, rho, x, rel, iters):
    if rho <= 0.0:
        raise SolverError(f"nonpositive eigenvalue {rho!r}; discretization degenerate")
    mu = float(np.sqrt(rho))
    psi = forms.R @ x
    b_pp = forms.b(psi, psi)
    psi = psi / np.sqrt(4.0 * np.pi * rho * b_pp)
    i_max = int(np.argmax(np.abs(psi)))
    if psi[i_max] < 0:
        psi = -psi
    if forms.kind == TOROIDAL:
        wall = np.nonzero(forms.dof_of_node == forms.n_dof - 1)[0]
        c1 = float(psi[wall[0]])
        ones = np.ones(len(psi))
        constraint = abs(forms.b(psi, ones))
    else:
        c1 = 0.0
        constraint = 0.0
    return EigenSolution(mu1=mu, psi=psi, c1=c1, residual=float(rel),
                         constraint_residual=float(constraint), kind=forms.kind,
                         n_dof=forms.n_dof, iterations=iters)


def solve_axis_touching(forms: WeightedForms, tol=DEFAULT_TOL,
                        max_iter=DEFAULT_MAX_ITER, seed=DEFAULT_SEED) -> EigenSolution:
    """Smallest eigenvalue on the interior degrees of freedom (ψ = 0 on ∂D)."""
    if forms.kind != AXIS_TOUCHING:
        raise SolverError("forms are not axis-touching")
    theta, X, rels, it = _smallest_eigenpairs(forms.A, forms.B, None, 1,
                                              tol, max_iter, seed)
    return _finalize(forms, theta[0], X[:, 0], rels[0], it)


def solve_toroidal(forms: WeightedForms, tol=DEFAULT_TOL,
                   max_iter=DEFAULT_MAX_ITER, seed=DEFAULT_SEED) -> EigenSolution:
    """Smallest eigenvalue with floating wall constant, restricted to the
    B-orthogonal complement of the constant function (flux constraint)."""
    if forms.kind != TOROIDAL:
        raise SolverError("forms are not toroidal")
    ones = np.ones(forms.n_dof)
    theta, X, rels, it = _smallest_eigenpairs(forms.A, forms.B, [ones], 1,
                                              tol, max_iter, seed)
    return _finalize(forms, theta[0], X[:, 0], rels[0], it)


def solve(forms: WeightedForms, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
          seed=DEFAULT_SEED) -> EigenSolution:
    if forms.kind == TOROIDAL:
        return solve_toroidal(forms, tol=tol, max_iter=max_iter, seed=seed)
    return solve_axis_touching(forms, tol=tol, max_iter=max_iter, seed=seed)


def spectral_gap(forms: WeightedForms, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 seed=DEFAULT_SEED):
    """Two smallest constrained eigenvalues (μ₁, μ₂), deflation via the
    Rayleigh-Ritz block.

    The gap μ₂² - μ₁² is a numerical simplicity diagnostic for the
    first-order shape derivative, which presumes a simple eigenvalue.
    """
    constraints = [np.ones(forms.n_dof)] if forms.kind == TOROIDAL else None
    theta, _, _, _ = _smallest_eigenpairs(forms.A, forms.B, constraints, 2,
                                          tol, max_iter, seed)
    if theta[0] <= 0 or theta[1] <= 0:
        raise SolverError("nonpositive eigenvalue in spectral gap computation")
    return float(np.sqrt(theta[0])), float(np.sqrt(theta[1]))


def solve_with_gap(forms: WeightedForms, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                   seed=DEFAULT_SEED):
    """First eigensolution plus μ₂ from the same Rayleigh-Ritz block."""
    constraints = [np.ones(forms.n_dof)] if forms.kind == TOROIDAL else None
    theta, X, rels, it = _smallest_eigenpairs(forms.A, forms.B, constraints, 2,
                                              tol, max_iter, seed)
    sol = _finalize(forms, theta[0], X[:, 0], rels[0], it)
    if theta[1] <= 0:
        raise SolverError("nonpositive second eigenvalue")
    return sol, float(np.sqrt(theta[1]))


def flux_identity_residual(forms: WeightedForms, solution: EigenSolution) -> float:
    """Discrete counterpart of the boundary flux identity ∮ (∇ψ·N)/r dl = 0.

    Evaluated variationally as |a(ψ, 1) - μ² b(ψ, 1)| on the nodal forms
    with the all-ones test function; for the converged constrained
    solution both terms vanish to solver tolerance.
    """
    ones = np.ones(len(solution.psi))
    return abs(forms.a(solution.psi, ones)
               - solution.mu1 ** 2 * forms.b(solution.psi, ones))
