"""curlopt: first curl (Beltrami) eigenvalue of axisymmetric domains.

The axisymmetric eigenproblem reduces to a weighted elliptic eigenproblem
for a flux function on the planar section; this package assembles and
solves that problem, reconstructs the 3D eigenfield, evaluates boundary
shape derivatives, runs volume-constrained descent, and checks the
volume lower bound via direct Biot-Savart quadrature.
"""

from .geometry import (AxisymmetricDomain, SectionCurve, InnermostSet,
                       circle_section, fourier_section, domain_from_spec,
                       load_domain, volume, innermost_set, perturb)
from .meshing import TriMesh, mesh_section, refine
from .gs_solver import (WeightedForms, EigenSolution, assemble, solve,
                        solve_axis_touching, solve_toroidal, spectral_gap)
from .field_recon import (EigenField, BoundaryTrace, reconstruct,
                          boundary_trace, tangency_residual)
from .shape_opt import (NormalVelocity, ShapeStep, Trajectory, OptimalityReport,
                        ShapeDerivativeReport, shape_derivative,
                        steepest_descent_velocity, project_volume_preserving,
                        volume_preserving_mode, derivative_report,
                        fd_eigenvalue_derivative, optimize, check_optimality)
from .bounds import (VoxelField, BoundReport, volume_lower_bound,
                     rearrangement_constant, biot_savart_apply,
                     verify_bs_norm_bound)

__version__ = "0.1.0"
