"""bicm-mmse: mutual information, MMSE and power allocation for CM and BICM."""

__version__ = "0.1.0"

from .constellation import (  # noqa: E402
    Constellation,
    ConstellationError,
    ConstellationParseError,
    SubConstellation,
    all_subsets,
    build_constellation,
    load_constellation,
    normalize,
    resolve_constellation,
    subset,
)
from .infotheory import (  # noqa: E402
    Curve,
    CurveKind,
    NumericalError,
    bicm_mi_derivative,
    gaussian_mi,
    gaussian_mmse,
    low_snr_slope,
    mi_bicm_decomposed,
    mi_bicm_direct,
    mi_cm,
    minimum_ebno_db,
    mmse_cm,
    mmse_zero_snr_limit,
    sweep,
)
from .montecarlo import McEstimate, mc_mi_bicm, mc_mi_cm, mc_mmse  # noqa: E402
from .powerfill import (  # noqa: E402
    Allocation,
    AllocationError,
    Channel,
    ParallelChannelSet,
    PowerAllocator,
    allocate,
    gaussian_reference_allocate,
    marginal_utility,
)
from .quadrature import QuadratureError, QuadratureRule, expect_complex_gaussian, gauss_hermite  # noqa: E402
