"""Guessing with a distortion criterion under i.i.d. randomized strategies."""
from .distortion import (
    BallIndex, DistortionModel, FiniteSource, block_ball_membership, block_distortion,
    build_ball_index, check_pmf,
)
from .errors import (
    AlphaOutOfRange, CapTooLowWarning, ConfigError, DimensionMismatch, EmptyBall,
    GuessworkError, InfiniteExponent, InstanceTooLarge, InvalidDistribution, LengthMismatch,
    NegativeEntry, NoFeasibleChannel, NonConvergence, RhoNonpositive, RhoTooLarge, ZeroBallMass,
)
from .exponents import (
    ExponentReport, concavity_probe, danskin_check, iid_penalty, iid_strategy_exponent,
    optimal_iid_exponent, primal_strategy_exponent, primal_synchronous_exponent,
    strategy_objective, synchronous_exponent, uncertainty_exponent,
)
from .moments import (
    MomentReport, ball_mass, ball_masses, expected_moments, g_moment, g_moment_integer,
    g_moment_series, generalized_binomial, geometric_moment_lower_bound,
    geometric_moment_upper_envelope, oneshot_achievability, optimal_sync_guesswork,
    tilted_strategy, v_moment, v_moment_series,
)
from .quantizer import (
    Quantizer, distortion_renyi, exhaustive_quantizer_oracle, greedy_quantizer,
    greedy_renyi_upper_bound, majorizes, renyi_entropy, sample_feasible_channel,
)
from .rd import (
    DEFAULT_CONTROLS, RDResult, SolverControls, divergence, mismatched_rd, mutual_info,
    rate_distortion, verify_min_identity,
)
from .simulate import SimConfig, SimReport, sample_guesswork, simulate_block, simulate_geometric
from .types_oracle import (
    ConditionalType, TypeClass, conditional_type_census, enumerate_types,
    exact_ball_probability, exact_block_moment, exponent_convergence_check,
)

__version__ = "0.1.0"
