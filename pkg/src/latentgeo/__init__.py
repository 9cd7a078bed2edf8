"""Local Riemannian geometry diagnostics for black-box generative maps.

The package probes any generator (latent vector in, image tensor out) with
finite differences restricted to a random orthonormal subspace, and computes
a battery of instability descriptors: local scaling, local complexity,
projected high-frequency energy, spectral isolation, interpolation-trajectory
statistics, and rank-correlation / detection summaries.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DimensionMismatchError,
    EvaluationError,
    MalformedFrameError,
    PairingError,
    ProtocolError,
    RemoteGeneratorError,
    ServerDisconnectedError,
    TransportTimeoutError,
    UndefinedStatisticError,
    VersionMismatchError,
)
from .geometry import (
    CouplingProfile,
    GeometricRecord,
    NeighborhoodAnalysis,
    SpectralDecomposition,
    SubspaceBasis,
    SubspaceJacobian,
    dimensional_coupling_ratio,
    eigendecompose,
    explained_variance,
    fd_jacobian,
    local_complexity,
    local_scaling,
    metric_tensor,
    neighborhood_analysis,
    paired_axis_similarity,
    principal_projection,
    sample_orthonormal_basis,
    spectral_isolation,
)
from .generators import (
    AnalyticGenerator,
    Generator,
    GeneratorDescriptor,
    make_builtin,
)
from .imaging import (
    HeatMap,
    jacobian_norm_map,
    laplacian,
    mav_energy,
    phfe,
    render_heatmap,
    topk_hf_share,
    topk_share,
    variance_energy,
)
from .protocol import connect_external
from .stats import (
    CorrelationSummary,
    DetectionResult,
    auroc,
    bootstrap_ci,
    correlation_drop,
    ood_score,
    spearman,
    subsampled_correlation,
    transfer_efficiency,
)
from .trajectory import (
    InterpolationPath,
    PairedComparison,
    ResampleSummary,
    TrajectoryRecord,
    build_path,
    extremal_increments,
    induce_trajectory,
    monte_carlo_ratio,
    paired_frac,
    slerp,
)
