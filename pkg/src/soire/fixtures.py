"""Thirty ground-truth SOIREs used as regeneration targets.

Drawn from practical schema expressions across the SIRE / ICHARE /
RSOIRE / SOIRE subclasses; infix strings are parsed left-associatively.
"""

from __future__ import annotations

from .core import Alphabet, Soire, parse_infix

GROUND_TRUTHS: dict[int, str] = {
    1: "((a|b)c*)+d",
    2: "(a|b|c|d|e?)*",
    3: "a+|(b|c)*|d+",
    4: "(ab*)+|c+",
    5: "ab(c|d|e|f|g)*",
    6: "a(b|c|d|e)+f*",
    7: "a*|(b|c|d|e)*",
    8: "(a|b|c|d|e)+&f*&g*",
    9: "a+|b|(c|d)+",
    10: "(a|b)+c",
    11: "a?(b|c|d)*e",
    12: "(a|b|c|d?)*",
    13: "a?&b*&c?",
    14: "(a(bc?)*)*d?e?",
    15: "a?&b*&c*&d?",
    16: "a*&b?&c*",
    17: "a+&(b|c|d|e)+",
    18: "a?(b|c)*(d|e)",
    19: "a(b|c|d)*e*",
    20: "(a+|b?|c?|(d|e)*)fgh*",
    21: "(a*b)+",
    22: "(a|b)*c*d*",
    23: "((ab*)+|c+)d",
    24: "(a|b|c)+|(de*f*)+",
    25: "a|(b?c)+",
    26: "a*(b|c|d)*",
    27: "a?(b+&c*&d*&e*&f*)",
    28: "(a?b)+",
    29: "(a+|b+|(c|d)*)e",
    30: "a?(b?c+d)+",
}


def fixture(number: int, sigma: Alphabet | None = None) -> Soire:
    """Ground-truth expression by its dataset number (1..30).

    By default the expression is parsed over exactly its own symbols;
    pass a larger alphabet (e.g. Alphabet.default()) to embed it in the
    ten-letter setting used for dataset generation.
    """
    if number not in GROUND_TRUTHS:
        raise KeyError(f"fixture number must be 1..30, got {number}")
    infix = GROUND_TRUTHS[number]
    if sigma is None:
        symbols = sorted({c for c in infix if c.isalpha()})
        sigma = Alphabet("".join(symbols))
    return parse_infix(infix, sigma)
