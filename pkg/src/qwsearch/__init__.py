"""Exact desk-scale simulation of quantum-walk search via interpolated Markov chains."""

from .chain import (
    InterpolatedChain,
    MarkovChain,
    discriminant,
    discriminant_derivative,
    grid_walk,
    interpolate,
    lazify,
    s_star,
    sin2_theta,
    stationary_interpolated,
    theta,
    uniform_chain,
)
from .classical import monte_carlo_hitting_time, random_walk_search
from .errors import (
    BudgetExceededError,
    CapacityError,
    CircuitError,
    DegenerateBlockError,
    DomainError,
    ErgodicityError,
    InvalidParameterError,
    InvalidStateError,
    LocalityError,
    QWSearchError,
    ReversibilityError,
    SingularityError,
    VerificationError,
)
from .graph import Graph, MarkedSet, make_complete, make_cycle, make_grid_2d, make_hypercube
from .hitting import (
    extended_hitting_time,
    hitting_time_matrix,
    hitting_time_spectral,
    ht_derivative_check,
)
from .ledger import CostLedger
from .oracles import CheckOracle, SimulationCircuit, circuit_equivalence, simulate_V_interpolated
from .outcome import NO_MARKED, SearchOutcome
from .phase import (
    PhaseEstimationOutput,
    delta_magnitude,
    phase_estimation_dense,
    phase_estimation_spectral,
)
from .search import (
    QuantumWalkSearcher,
    fact4_window_check,
    quantum_walk_search,
    quantum_walk_search_auto,
    search_with_htmax,
    search_with_pmin,
    success_lower_bound,
)
from .walk import (
    ImplicitWalk,
    WalkSpectralForm,
    build_walk_dense,
    build_walk_spectral,
    verify_lemma1,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
