"""Fiber-flux tractometry for white-matter fiber bundles.

Computes flux-based descriptors at planar cross-sections along a bundle's
mean fiber, aligns tract profiles by fast marching over a descriptor
dissimilarity map, and runs pairwise and group-wise along-tract statistics
against standardized cohort atlases.
"""

__version__ = "0.1.0"

from .bundle import (
    CosineSeries,
    FiberBundle,
    FiberStreamline,
    MeanFiber,
    fit_cosine_series,
    mean_fiber,
    reorient_bundle,
    sample_at,
)
from .descriptors import (
    CuttingPlane,
    FFDDVector,
    PlaneIntersections,
    ProfileConfig,
    TractProfile,
    ffd_at,
    ffdd_at,
    optimize_plane_normal,
    plane_intersections,
    scalar_mean_profile,
    tract_profile,
)
from .align import (
    AlignmentPath,
    DissimilarityGrid,
    DistanceMap,
    align_profiles,
    backtrack_path,
    dissimilarity_grid,
    fmm_solve,
    resample_path,
)
from .stats import (
    AnomalyMap,
    GroupAtlas,
    PointwiseStats,
    align_to_atlas,
    build_atlas,
    fdr_correct,
    global_dissimilarity,
    pairwise_dissimilarity,
    pointwise_ttest,
    reference_profile,
    zscore_profile,
)
from .synthetic import (
    BundleGroundTruth,
    ChannelSpec,
    GeometryLesion,
    Lesion,
    SyntheticSpec,
    generate_bundle,
)
from .tractio import (
    export_anomaly,
    export_atlas,
    export_ground_truth,
    export_profile,
    export_stats,
    import_anomaly,
    import_atlas,
    import_profile,
    import_stats,
    load_bundle,
    load_synthetic_spec,
    save_bundle,
)
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
