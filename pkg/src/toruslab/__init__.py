"""Numerical rigidity experiments for volume-preserving maps of the 3-torus.

The package builds exactly volume-preserving maps (an integer Anosov
matrix composed with trigonometric shears), estimates their invariant
splitting, Lyapunov exponents and periodic data, solves for the conjugacy
to the linear part, integrates one-dimensional invariant foliations with
their conditional densities, and aggregates everything into a rigidity
report with machine-checkable predicates.
"""

from .conjugacy import (
    CenterDerivativeStats,
    ConjugacyApprox,
    center_derivative_check,
    conjugacy_residual,
    evaluate_h,
    holder_probe,
    solve_conjugacy,
)
from .errors import (
    ConfigError,
    DegenerateIntersection,
    FrameFailure,
    InvalidShear,
    InversionDiverged,
    IOFailure,
    NewtonDiverged,
    NonExpandingBundle,
    NonHyperbolicOrbit,
    NoPositiveExponents,
    NoSpectralGap,
    NotOnLeaf,
    NotPartiallyHyperbolic,
    NotUnimodular,
    NumericalBlowup,
    PeriodTooLarge,
    SegmentTooShort,
    ToruslabError,
)
from .foliation import (
    CocycleRatioStatistic,
    DensityProfile,
    LeafSegment,
    UBDStatistic,
    cocycle_ratio_statistic,
    delta_density_ratio,
    equivariance_check,
    integrate_leaf,
    leaf_density_profile,
    leaf_jacobian,
    ubd_statistic,
)
from .lyapunov import (
    ExponentEstimate,
    ExponentFieldStats,
    PeriodicDataSummary,
    PeriodicOrbit,
    continue_periodic,
    exponent_field,
    orbit_exponents,
    periodic_data_spread,
    periodic_points_linear,
)
from .rigidity import (
    BalanceCheck,
    ReportConfig,
    RigidityReport,
    entropy_balance_check,
    pesin_entropy,
    report_from_json_dict,
    rigidity_report,
)
from .splitting import (
    ConeCertificate,
    Frame,
    bundle_vectors,
    cone_certificate,
    finite_time_frame,
    invariance_residual,
)
from .torus_core import (
    DAMap,
    ShearSpec,
    ToralAutomorphism,
    da_map_from_json,
    da_map_to_json,
    linear_da_map,
    make_da_map,
    make_linear_map,
    nearest_delta,
    torus_distance,
    wrap,
)

__version__ = "0.1.0"
