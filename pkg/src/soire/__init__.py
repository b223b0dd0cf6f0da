"""Learning single-occurrence regular expressions with interleaving (SOIREs)
from positive/negative, possibly noisy, string samples.

The package matches SOIREs against strings with a cubic dynamic program,
simulates that matcher in a differentiable network trained by projected
AdamW, and decodes the learnt parameters back into a SOIRE through faithful
encodings and beam search.
"""

from .core import (
    Alphabet,
    DuplicateSymbolError,
    InvalidInfixError,
    InvalidPrefixError,
    Soire,
    SoireError,
    UnknownCharacterError,
    Vertex,
    alpha,
    filter_string,
    normalize_unary,
    parse_infix,
    parse_prefix,
    to_infix,
    to_prefix,
    validate_prefix,
)

__all__ = [
    "Alphabet",
    "DuplicateSymbolError",
    "InvalidInfixError",
    "InvalidPrefixError",
    "Soire",
    "SoireError",
    "UnknownCharacterError",
    "Vertex",
    "alpha",
    "filter_string",
    "normalize_unary",
    "parse_infix",
    "parse_prefix",
    "to_infix",
    "to_prefix",
    "validate_prefix",
]

__version__ = "0.1.0"
