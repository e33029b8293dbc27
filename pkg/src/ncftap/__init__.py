"""Finite-dimensional non-commutative markets: sharp integrals, martingale states, arbitrage."""
from __future__ import annotations

from .algebra import (
    AlgebraElement,
    Filtration,
    MultiMatrixAlgebra,
    Subalgebra,
    check_positive,
    conditional_expectation,
    full_subalgebra,
    gns_inner,
    gns_norm,
    lp_norm,
    make_subalgebra,
    min_eigenvalue,
    scalar_subalgebra,
    trace,
    validate_filtration,
    validate_subalgebra,
)
from .errors import DomainError, NCFTAPError, StructuralError
from .ftap import (
    Outcome,
    PayoffSubspace,
    Verdict,
    check_nfl,
    classical_oracle,
    find_arbitrage,
    find_martingale_state,
    payoff_subspace,
    verify_certificate,
)
from .integration import (
    AdaptedProcess,
    SimpleBiprocess,
    TradingStrategy,
    biprocess_adjoint,
    identity_strategy,
    running_integral,
    stochastic_integral,
    stopped_integral,
    strategy_to_biprocess,
    validate_adapted,
)
from .martingale import State, integral_martingale_check, is_martingale, zero_integral_criterion
from .models import (
    ClassicalNode,
    ClassicalTree,
    QuantumBinomialSpec,
    binomial_tree,
    embed_classical,
    quantum_binomial,
    random_market,
    trinomial_tree,
)
from .validation import ValidationReport

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement",
    "Filtration",
    "MultiMatrixAlgebra",
    "Subalgebra",
    "check_positive",
    "conditional_expectation",
    "full_subalgebra",
    "gns_inner",
    "gns_norm",
    "lp_norm",
    "make_subalgebra",
    "min_eigenvalue",
    "scalar_subalgebra",
    "trace",
    "validate_filtration",
    "validate_subalgebra",
    "DomainError",
    "NCFTAPError",
    "StructuralError",
    "Outcome",
    "PayoffSubspace",
    "Verdict",
    "check_nfl",
    "classical_oracle",
    "find_arbitrage",
    "find_martingale_state",
    "payoff_subspace",
    "verify_certificate",
    "AdaptedProcess",
    "SimpleBiprocess",
    "TradingStrategy",
    "biprocess_adjoint",
    "identity_strategy",
    "running_integral",
    "stochastic_integral",
    "stopped_integral",
    "strategy_to_biprocess",
    "validate_adapted",
    "State",
    "integral_martingale_check",
    "is_martingale",
    "zero_integral_criterion",
    "ClassicalNode",
    "ClassicalTree",
    "QuantumBinomialSpec",
    "binomial_tree",
    "embed_classical",
    "quantum_binomial",
    "random_market",
    "trinomial_tree",
    "ValidationReport",
]

