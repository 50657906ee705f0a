"""Sum-of-squares certification toolkit.

Decides whether a multivariate polynomial is a sum of squares via a
five-step pipeline backed by a Gram-matrix PSD feasibility solver,
generates labeled benchmark datasets, and scores classifier predictions
(including remote chat-completion endpoints).
"""

from soskit.poly import Polynomial, canonical_text, expand_squares
from soskit.parsing import ParseError, parse, parse_tree
from soskit.gram import (
    GramResult,
    GramStatus,
    MonomialBasis,
    SolverConfig,
    SosCertificate,
    UnreachableSupportError,
    build_gram_system,
    extract_decomposition,
    monomial_basis,
    solve_psd_feasibility,
    verify_certificate,
)
from soskit.checker import CheckerConfig, Label, Verdict, classify

__all__ = [
    "CheckerConfig",
    "GramResult",
    "GramStatus",
    "Label",
    "MonomialBasis",
    "ParseError",
    "Polynomial",
    "SolverConfig",
    "SosCertificate",
    "UnreachableSupportError",
    "Verdict",
    "build_gram_system",
    "canonical_text",
    "classify",
    "expand_squares",
    "extract_decomposition",
    "monomial_basis",
    "parse",
    "parse_tree",
    "solve_psd_feasibility",
    "verify_certificate",
]

__version__ = "0.1.0"
