"""LT fountain codes for coded edge caching: exact failure analysis, backhaul model, placement and simulation."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .analysis import (
    FailureCurve,
    average_overhead,
    brute_force_failure,
    failure_curve,
    failure_probability,
    monte_carlo_failure,
    monte_carlo_overhead,
)
from .errors import (
    BudgetError,
    InstanceTooLargeError,
    InvalidInputError,
    InvalidParameterError,
    LTCacheError,
    RunawayTrialError,
    TruncatedCurveError,
)
from .fountain import (
    DecodeResult,
    DegreeDistribution,
    EncodedSymbol,
    SourceBlock,
    encode_symbol,
    encode_symbols,
    ideal_soliton,
    peel_decode,
    point_mass,
    robust_soliton,
)
from .montecarlo import DeliveryOutcome, estimate_rate, simulate_request
from .netmodel import (
    REFERENCE_CONNECTIVITY,
    CacheSystem,
    GridGeometry,
    Placement,
    backhaul_upper_bound,
    derive_connectivity,
    expected_backhaul,
    mds_expected_backhaul,
    symbol_supply_pmf,
)
from .placement import PlacementProblem, optimize_integer, optimize_relaxed
