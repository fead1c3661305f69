"""LTI assume/guarantee contracts on networks, verified with linear programming."""

from __future__ import annotations

from .contracts import (
    ContractError,
    InequalityBlock,
    LtiRdContract,
    check_assumption_prefix,
    check_guarantee_prefix,
    contract_from_terms,
    eval_alpha,
    eval_gamma,
    is_srd,
)
from .network import CycleError, Finding, Network, NetworkError, Node
from .simplex import LpOutcome, LpProblem, SimplexNumericalError, solve, solve_all
from .verification import (
    OMEGA,
    Report,
    RhoResult,
    VerificationError,
    VerificationOptions,
    VerificationProblem,
    build_assumption_lps,
    build_guarantee_lps,
    build_two_system_feedback_lps,
    compute_rho,
    validate_witness,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "OMEGA",
    "ContractError",
    "CycleError",
    "Finding",
    "InequalityBlock",
    "LpOutcome",
    "LpProblem",
    "LtiRdContract",
    "Network",
    "NetworkError",
    "Node",
    "Report",
    "RhoResult",
    "SimplexNumericalError",
    "VerificationError",
    "VerificationOptions",
    "VerificationProblem",
    "build_assumption_lps",
    "build_guarantee_lps",
    "build_two_system_feedback_lps",
    "check_assumption_prefix",
    "check_guarantee_prefix",
    "compute_rho",
    "contract_from_terms",
    "eval_alpha",
    "eval_gamma",
    "is_srd",
    "solve",
    "solve_all",
    "validate_witness",
    "verify",
]
