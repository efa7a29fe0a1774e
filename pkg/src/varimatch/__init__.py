"""Partial shape matching with oriented varifolds and LDDMM geodesic shooting."""

from .geometry import (
    Atom,
    Atoms,
    DiscreteShape,
    Polylines,
    ShapeError,
    TriMesh,
    align_barycenters,
    apply_rigid,
    barycenter,
    bbox_diagonal,
    curve_shape,
    discretize_curves,
    discretize_mesh,
    mesh_shape,
)
from .kernels import (
    ConfigError,
    DeformationKernelConfig,
    VarifoldKernelConfig,
    atom_kernel,
    deformation_kernel,
    direction_kernel,
    spatial_kernel,
)
from .dissimilarity import (
    VARIANTS,
    MatchingConfig,
    dissimilarity_value,
    dissimilarity_with_vertex_gradient,
    local_mass,
    naive_half,
    partial_dissimilarity,
    partial_normalized_dissimilarity,
    smooth_min_one,
    source_vertex_gradient,
    varifold_distance_sq,
    varifold_inner,
)

__version__ = "0.1.0"
