"""Numerical lab for singular fractional diffusion.

Solves ``u_t + (-Delta)^s phi(u) = 0`` and ``u + (-Delta)^s phi(u) = f`` for
singular nonlinearities ``phi(u) = -u^(-n)`` or ``log u`` through the
eps-shifted problems ``u_eps = v + eps``, and tests extinction against
persistence across the ``(s, n)`` plane.
"""

from .classification import Classification, ClassificationRule, SweepResult, classify_extinction, loglog_slope
from .config import ConfigError, RunConfig, default_config, parse_config, serialize_config
from .elliptic import (
    EllipticProblem,
    SolveReport,
    elliptic_epsilon_sweep,
    jacobian_apply,
    residual,
    solve_elliptic,
)
from .errors import (
    DomainError,
    InconclusiveError,
    InvalidInputError,
    InvalidParameterError,
    InvalidSpecError,
    SfdError,
    StepFailure,
    SubcriticalError,
    UnsupportedDimensionError,
    UnsupportedRegimeError,
)
from .extinction import (
    GreenIdentityReport,
    GreenRegime,
    LogHalf,
    PhasePoint,
    PhaseProtocol,
    VerySingular,
    chebyshev_times,
    epsilon_sweep,
    expected_phase,
    explicit_solution,
    holder_constant,
    phase_diagram,
    s_continuity_probe,
    tail_decay_probe,
    verify_green_identity,
)
from .grid import (
    BallSpec,
    Exterior,
    Field,
    Order,
    Topology,
    UniformGrid,
    ball_mass,
    concentration_compare,
    decreasing_rearrangement,
    integral,
    lp_norm,
)
from .nonlinearity import (
    Nonlinearity,
    RegularizedNonlinearity,
    Slowness,
    beta,
    is_slower,
    parse_nonlinearity,
    phi,
    phi_eps,
    phi_eps_prime,
    phi_prime,
    singular_bound_constant,
)
from .operators import (
    DiscreteOperator,
    OperatorKind,
    OperatorSpec,
    apply,
    build_operator,
    normalization_constant,
    one_d_kernel,
    riesz_constant,
    riesz_potential,
    stroock_varopoulos_pairing,
)
from .parabolic import (
    ParabolicProblem,
    Trajectory,
    ab_violation,
    contraction_check,
    diagnostics,
    dirichlet_chain_check,
    evolve,
    step,
)

__version__ = "0.1.0"
