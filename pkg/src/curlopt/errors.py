"""Exception hierarchy.

The CLI maps these onto exit codes: geometry errors -> 2, meshing
errors -> 3, solver/post-processing errors -> 4, I/O problems -> 5.
"""


class CurloptError(Exception):
    """Base class for all library errors."""


class GeometryError(CurloptError):
    """Invalid section curve: self-intersection, wrong orientation, r < 0, ..."""


class UnsupportedTopologyError(GeometryError):
    """Operation requires the other domain topology (toroidal vs axis-touching)."""


class MeshError(CurloptError):
    """Mesh generation failed."""


class UnsupportedShapeError(MeshError):
    """Section is not star-shaped with respect to the blending center."""


class MeshQualityError(MeshError):
    """Generated mesh violates the minimum-angle or edge-length floor."""


class SolverError(CurloptError):
    """Eigenvalue solve or field post-processing failed."""


class IllConditionedError(SolverError):
    """Sparse factorization failed."""


class ConvergenceError(SolverError):
    """Iteration did not reach the requested residual within max iterations."""


class ReconstructionError(SolverError):
    """Eigenfield reconstruction failed (degenerate input, axis fit failure)."""
