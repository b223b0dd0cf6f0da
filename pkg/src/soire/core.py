"""Syntax trees and text notations for single-occurrence regular expressions
with interleaving (SOIREs).

A SOIRE over an alphabet of single-character symbols is built from the
operators ``?`` ``*`` ``+`` (postfix repetition), ``.`` (concatenation),
``&`` (interleaving) and ``|`` (disjunction), with every alphabet symbol
occurring at most once.  The canonical machine form is the *prefix notation*:
the preorder traversal of the syntax tree, e.g. ``.&ab*c`` for ``(a&b)c*``.

Vertices are numbered 1..size in preorder.  The left child of an inner
vertex t is always t+1; binary vertices additionally store the index of
their right child.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

UNARY_OPS = "?*+"
BINARY_OPS = ".&|"
OPERATOR_CHARS = UNARY_OPS + BINARY_OPS

# "·" is accepted as an input alias for the ASCII concatenation glyph ".".
_CDOT = "·"

# Rewrites for directly nested repetition operators, keyed (outer, inner).
_UNARY_REWRITE = {
    ("?", "?"): "?", ("?", "*"): "*", ("?", "+"): "*",
    ("*", "?"): "*", ("*", "*"): "*", ("*", "+"): "*",
    ("+", "?"): "*", ("+", "*"): "*", ("+", "+"): "+",
}


class SoireError(Exception):
    """Base class for errors raised by this package."""


class InvalidPrefixError(SoireError):
    """Text is not the prefix notation of any SOIRE."""


class InvalidInfixError(SoireError):
    """Text is not the infix notation of any SOIRE."""


class DuplicateSymbolError(SoireError):
    """A symbol occurs more than once in the expression."""


class UnknownCharacterError(SoireError):
    """A character is neither an operator nor a symbol of the alphabet."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct single-character symbols.

    The order is fixed and defines the column order of learnt parameter
    matrices, so two alphabets with the same symbols in different orders
    are distinct.
    """

    symbols: str

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("alphabet must not be empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"alphabet has duplicate symbols: {self.symbols!r}")
        for c in self.symbols:
            if len(c) != 1 or c in OPERATOR_CHARS or c == _CDOT or c.isspace():
                raise ValueError(f"invalid alphabet symbol: {c!r}")

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, c):
        return c in self.symbols

    def index(self, c: str) -> int:
        return self.symbols.index(c)

    @classmethod
    def default(cls, size: int = 10) -> "Alphabet":
        """The ten letters a..j (or a prefix of them)."""
        if not 1 <= size <= 26:
            raise ValueError("default alphabet size must be in 1..26")
        return cls("abcdefghijklmnopqrstuvwxyz"[:size])


@dataclass(frozen=True)
class Vertex:
    """One preorder vertex: a symbol or operator label, and for binary
    operators the 1-based index of the right child."""

    label: str
    right_child: int | None = None


@dataclass(frozen=True)
class Soire:
    """Immutable syntax tree of a SOIRE, stored as its preorder vertex list."""

    vertices: tuple[Vertex, ...]
    alphabet: Alphabet

    @property
    def size(self) -> int:
        return len(self.vertices)

    def __len__(self):
        return len(self.vertices)

    def label(self, t: int) -> str:
        """Label of vertex t (1-based)."""
        self._check_index(t)
        return self.vertices[t - 1].label

    def eta(self, t: int) -> int:
        """Index of the right child of binary vertex t."""
        self._check_index(t)
        rc = self.vertices[t - 1].right_child
        if rc is None:
            raise ValueError(f"vertex {t} ({self.label(t)!r}) has no right child")
        return rc

    def alpha(self, t: int = 1) -> frozenset[str]:
        """Set of symbols in the subtree rooted at vertex t."""
        self._check_index(t)
        return self._alphas[t - 1]

    def subtree_end(self, t: int) -> int:
        """Last vertex index of the subtree rooted at t (subtrees are
        contiguous preorder ranges)."""
        self._check_index(t)
        return self._ends[t - 1]

    @property
    def prefix(self) -> str:
        return "".join(v.label for v in self.vertices)

    @property
    def infix(self) -> str:
        return to_infix(self.prefix)

    def _check_index(self, t: int):
        if not 1 <= t <= len(self.vertices):
            raise IndexError(f"vertex index {t} out of range 1..{len(self.vertices)}")

    @cached_property
    def _ends(self) -> tuple[int, ...]:
        ends = [0] * len(self.vertices)
        for t in range(len(self.vertices), 0, -1):
            v = self.vertices[t - 1]
            if v.label not in OPERATOR_CHARS:
                ends[t - 1] = t
            elif v.label in UNARY_OPS:
                ends[t - 1] = ends[t]
            else:
                ends[t - 1] = ends[v.right_child - 1]
        return tuple(ends)

    @cached_property
    def _alphas(self) -> tuple[frozenset[str], ...]:
        alphas: list[frozenset[str]] = [frozenset()] * len(self.vertices)
        for t in range(len(self.vertices), 0, -1):
            v = self.vertices[t - 1]
            if v.label not in OPERATOR_CHARS:
                alphas[t - 1] = frozenset(v.label)
            elif v.label in UNARY_OPS:
                alphas[t - 1] = alphas[t]
            else:
                alphas[t - 1] = alphas[t] | alphas[v.right_child - 1]
        return tuple(alphas)

    def __str__(self):
        return self.prefix


def _clean(text: str) -> str:
    """Drop insignificant whitespace and map the `·` alias to `.`."""
    return "".join(c for c in text if not c.isspace()).replace(_CDOT, ".")


def validate_prefix(text: str) -> bool:
    """Check the running-sum property of prefix notations.

    Scoring symbols +1, binary operators -1 and repetition operators 0,
    a string is a prefix notation iff every suffix sums to at least 1 and
    the whole string sums to exactly 1.  Any non-operator character counts
    as a symbol here; alphabet membership is parse_prefix's job.
    """
    text = _clean(text)
    if not text:
        return False
    total = 0
    for c in reversed(text):
        if c in BINARY_OPS:
            total -= 1
        elif c not in UNARY_OPS:
            total += 1
        if total < 1:
            return False
    return total == 1


def parse_prefix(text: str, sigma: Alphabet) -> Soire:
    """Build the syntax tree whose preorder traversal equals ``text``.

    Scans the prefix notation back to front, maintaining a stack of built
    subtrees: a symbol pushes a leaf, a repetition operator wraps the top
    of the stack, and a binary operator pops its left then its right child.
    """
    text = _clean(text)
    if not text:
        raise InvalidPrefixError("empty prefix notation")
    seen: set[str] = set()
    for c in text:
        if c in OPERATOR_CHARS:
            continue
        if c not in sigma:
            raise UnknownCharacterError(f"character {c!r} not in alphabet {sigma.symbols!r}")
        if c in seen:
            raise DuplicateSymbolError(f"symbol {c!r} occurs more than once")
        seen.add(c)

    # Stack of (labels, right_children) fragments in preorder, with
    # right-child indices local to the fragment.
    stack: list[tuple[list[str], list[int | None]]] = []
    for c in reversed(text):
        if c in UNARY_OPS:
            if not stack:
                raise InvalidPrefixError(f"operator {c!r} lacks an operand in {text!r}")
            labels, rights = stack.pop()
            shifted = [None if r is None else r + 1 for r in rights]
            stack.append(([c] + labels, [None] + shifted))
        elif c in BINARY_OPS:
            if len(stack) < 2:
                raise InvalidPrefixError(f"operator {c!r} lacks two operands in {text!r}")
            left_labels, left_rights = stack.pop()
            right_labels, right_rights = stack.pop()
            labels = [c] + left_labels + right_labels
            rights = [2 + len(left_labels)] + [
                None if r is None else r + 1 for r in left_rights
            ] + [
                None if r is None else r + 1 + len(left_labels) for r in right_rights
            ]
            stack.append((labels, rights))
        else:
            stack.append(([c], [None]))
    if len(stack) != 1:
        raise InvalidPrefixError(f"{text!r} leaves {len(stack)} disconnected parts")
    labels, rights = stack[0]
    vertices = tuple(Vertex(l, r) for l, r in zip(labels, rights))
    return Soire(vertices, sigma)


def to_prefix(r: Soire) -> str:
    """Prefix notation of a syntax tree (its preorder label sequence)."""
    return r.prefix


def to_infix(prefix: str) -> str:
    """Fully parenthesized infix notation for a prefix notation.

    Scans back to front with a stack: symbols push themselves, a repetition
    operator o rewrites the top fragment r to ``(ro)``, and a binary
    operator o pops the left fragment r1 then the right fragment r2 and
    pushes ``(r1 o r2)``.
    """
    prefix = _clean(prefix)
    if not prefix:
        raise InvalidPrefixError("empty prefix notation")
    stack: list[str] = []
    for c in reversed(prefix):
        if c in UNARY_OPS:
            if not stack:
                raise InvalidPrefixError(f"operator {c!r} lacks an operand in {prefix!r}")
            r = stack.pop()
            stack.append(f"({r}{c})")
        elif c in BINARY_OPS:
            if len(stack) < 2:
                raise InvalidPrefixError(f"operator {c!r} lacks two operands in {prefix!r}")
            r1 = stack.pop()
            r2 = stack.pop()
            stack.append(f"({r1}{c}{r2})")
        else:
            stack.append(c)
    if len(stack) != 1:
        raise InvalidPrefixError(f"{prefix!r} leaves {len(stack)} disconnected parts")
    return stack[0]


def parse_infix(text: str, sigma: Alphabet) -> Soire:
    """Parse an infix expression such as ``(a&b)c*`` or ``a?(b|c)+``.

    Precedence, loosest first: ``|``, ``&``, concatenation (juxtaposition
    or an explicit ``.``), postfix ``? * +``.  Binary operators associate
    to the left.
    """
    text = _clean(text)
    if not text:
        raise InvalidInfixError("empty infix expression")
    pos = 0

    def peek() -> str | None:
        return text[pos] if pos < len(text) else None

    def parse_alt() -> str:
        nonlocal pos
        node = parse_amp()
        while peek() == "|":
            pos += 1
            node = "|" + node + parse_amp()
        return node

    def parse_amp() -> str:
        nonlocal pos
        node = parse_cat()
        while peek() == "&":
            pos += 1
            node = "&" + node + parse_cat()
        return node

    def parse_cat() -> str:
        nonlocal pos
        node = parse_post()
        while True:
            c = peek()
            if c == ".":
                pos += 1
                node = "." + node + parse_post()
            elif c is not None and (c == "(" or c not in OPERATOR_CHARS + ")"):
                node = "." + node + parse_post()
            else:
                return node

    def parse_post() -> str:
        nonlocal pos
        node = parse_atom()
        while peek() in ("?", "*", "+"):
            node = text[pos] + node
            pos += 1
        return node

    def parse_atom() -> str:
        nonlocal pos
        c = peek()
        if c is None:
            raise InvalidInfixError(f"unexpected end of expression in {text!r}")
        if c == "(":
            pos += 1
            node = parse_alt()
            if peek() != ")":
                raise InvalidInfixError(f"missing ')' at position {pos} in {text!r}")
            pos += 1
            return node
        if c in OPERATOR_CHARS + ")":
            raise InvalidInfixError(f"unexpected {c!r} at position {pos} in {text!r}")
        pos += 1
        return c

    prefix = parse_alt()
    if pos != len(text):
        raise InvalidInfixError(f"trailing {text[pos:]!r} at position {pos} in {text!r}")
    return parse_prefix(prefix, sigma)


def alpha(r: Soire, t: int = 1) -> frozenset[str]:
    """Symbols of the subtree of r rooted at vertex t."""
    return r.alpha(t)


def filter_string(s: str, keep) -> str:
    """Subsequence of s keeping exactly the characters in ``keep``."""
    return "".join(c for c in s if c in keep)


def size(r: Soire) -> int:
    """Number of vertices in the syntax tree of r."""
    return r.size


def normalize_unary(r: Soire) -> Soire:
    """Collapse directly nested repetition operators to a single one.

    Applies the identities such as (r?)? = r? and (r+)* = r* until no
    repetition operator has a repetition child.  The result accepts the
    same language and has at most 4*|alpha(r)|-2 vertices.
    """

    def walk(t: int) -> str:
        v = r.vertices[t - 1]
        if v.label not in OPERATOR_CHARS:
            return v.label
        if v.label in BINARY_OPS:
            return v.label + walk(t + 1) + walk(v.right_child)
        op = v.label
        child = t + 1
        while r.label(child) in UNARY_OPS:
            op = _UNARY_REWRITE[(op, r.label(child))]
            child += 1
        return op + walk(child)

    return parse_prefix(walk(1), r.alphabet)
