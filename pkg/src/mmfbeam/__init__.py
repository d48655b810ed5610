"""Max-min fair multicast beamforming: rate-balancing solver and benchmark tools."""

from .channels import (
    ChannelSet,
    CollinearGroups,
    ChannelFormatError,
    ChannelDimensionError,
    ChannelValidationError,
    generate_iid,
    save_channels,
    load_channels,
    detect_collinear,
)
from .solver import (
    Precoder,
    SolverConfig,
    DualLinearSystem,
    DualSolution,
    KktResiduals,
    RankDiagnostics,
    SolveReport,
    SolveResult,
    SolverError,
    RankDeficiencyError,
    InfeasibleDualError,
    BracketFailureError,
    DegenerateDirectionError,
    snr,
    per_user_snr,
    canonical_phase,
    update_beta,
    surrogate,
    build_dual_system,
    solve_lambda_qp,
    solve_lambda_linear,
    bisect_mu,
    reconstruct_w,
    kkt_residuals,
    rank_case,
    active_set_fallback,
    solve,
    solve_multistart,
)
from .baselines import OracleConfig, random_sampling_oracle, mrt_weakest, sum_eig

__version__ = "0.1.0"
