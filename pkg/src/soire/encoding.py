"""The parameter container (w, u) and the faithful-encoding codec.

An encoding of bounded size T assigns each vertex slot t a row w^t of
probabilities over the alphabet, the six operators and a padding label
``none``, plus right-child probabilities u^t_{t'} for t' >= t+2.  The seven
faithfulness conditions carve out exactly the encodings that describe a
syntax tree laid out in preorder; those are in one-to-one correspondence
with prefix notations of size at most T.

Arrays are padded with an unused row/column 0 so that indices match the
1-based vertex numbering used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Alphabet, BINARY_OPS, OPERATOR_CHARS, Soire, SoireError, parse_prefix, validate_prefix

OP_COLUMNS = ("?", "*", "+", ".", "&", "|", "none")

CHECKPOINT_MAGIC = "soire encoding checkpoint"
CHECKPOINT_VERSION = 1


class NotFaithfulError(SoireError):
    """decode was given an encoding violating a faithfulness condition."""


class SizeExceedsBoundError(SoireError):
    """encode was given an expression larger than the bounded size."""


class CheckpointError(SoireError):
    """A checkpoint file could not be read."""


@dataclass
class Encoding:
    """Trainable parameters (w, u) over an alphabet with bounded size T.

    w has shape (T+1, len(alphabet)+7) and u has shape (T+1, T+1); row and
    column 0 are unused padding, and only u[t, t'] with t+2 <= t' <= T are
    meaningful.  All live entries stay in [0, 1].
    """

    alphabet: Alphabet
    w: np.ndarray
    u: np.ndarray

    @property
    def T(self) -> int:
        return self.w.shape[0] - 1

    @property
    def n_columns(self) -> int:
        return len(self.alphabet) + len(OP_COLUMNS)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(self.alphabet) + OP_COLUMNS

    def column(self, label: str) -> int:
        """Column index of a symbol or operator label."""
        if label in self.alphabet:
            return self.alphabet.index(label)
        return len(self.alphabet) + OP_COLUMNS.index(label)

    def w_at(self, t: int, label: str) -> float:
        return float(self.w[t, self.column(label)])

    def u_at(self, t: int, t_prime: int) -> float:
        return float(self.u[t, t_prime])

    def parameter_count(self) -> int:
        """Number of trainable entries: T*|columns| + (T-1)(T-2)/2."""
        T = self.T
        return T * self.n_columns + (T - 1) * (T - 2) // 2

    def copy(self) -> "Encoding":
        return Encoding(self.alphabet, self.w.copy(), self.u.copy())

    def u_valid_mask(self) -> np.ndarray:
        """Boolean mask of the meaningful region of u."""
        T = self.T
        t = np.arange(T + 1)[:, None]
        tp = np.arange(T + 1)[None, :]
        return (t >= 1) & (tp >= t + 2) & (tp <= T)

    @classmethod
    def zeros(cls, alphabet: Alphabet, T: int) -> "Encoding":
        if T < 1:
            raise ValueError("bounded size T must be at least 1")
        w = np.zeros((T + 1, len(alphabet) + len(OP_COLUMNS)))
        u = np.zeros((T + 1, T + 1))
        return cls(alphabet, w, u)


def required_bound(sigma: Alphabet) -> int:
    """Bounded size sufficient for any SOIRE over sigma, after collapsing
    nested repetition operators: 4*|sigma| - 2."""
    return 4 * len(sigma) - 2


def project(theta: Encoding) -> Encoding:
    """Clamp every entry into [0, 1] (and zero the unused u region)."""
    out = theta.copy()
    np.clip(out.w, 0.0, 1.0, out=out.w)
    np.clip(out.u, 0.0, 1.0, out=out.u)
    out.w[0, :] = 0.0
    out.u[~out.u_valid_mask()] = 0.0
    return out


def random_encoding(alphabet: Alphabet, T: int, rng: np.random.Generator) -> Encoding:
    """Initialization for training: each w row and each nonempty u row is
    sampled uniformly and normalized to sum 1."""
    enc = Encoding.zeros(alphabet, T)
    for t in range(1, T + 1):
        row = rng.uniform(size=enc.n_columns)
        enc.w[t] = row / row.sum()
        if t + 2 <= T:
            urow = rng.uniform(size=T - t - 1)
            enc.u[t, t + 2 : T + 1] = urow / urow.sum()
    return enc


def faithfulness_violations(theta: Encoding, tol: float = 1e-9) -> list[int]:
    """Indices of the faithfulness conditions theta violates.

    Indices 1..7 are the defining conditions; two boundary cases the
    one-to-one correspondence needs are also enforced (a trailing operator
    at slot T extends condition 5; an all-padding encoding reports 8).
    With the default tolerance, entries within tol of 0 or 1 count as
    exact; pass tol=0.0 for the strict codec check.
    """
    T = theta.T
    ns = len(theta.alphabet)
    w = theta.w
    u = theta.u
    col = theta.column
    violated: list[int] = []

    def is01(x, target):
        return abs(float(x) - target) <= tol

    def one_hot(vec) -> bool:
        ones = sum(1 for x in vec if is01(x, 1.0))
        zeros = sum(1 for x in vec if is01(x, 0.0))
        return ones == 1 and ones + zeros == len(vec)

    def all_zero(vec) -> bool:
        return all(is01(x, 0.0) for x in vec)

    # 1: every w row is one-hot.
    if not all(one_hot(w[t]) for t in range(1, T + 1)):
        violated.append(1)
    # 2: every u row is one-hot or all-zero.
    for t in range(1, T + 1):
        row = u[t, t + 2 : T + 1]
        if not (all_zero(row) or one_hot(row)):
            violated.append(2)
            break
    # 3: right-child mass plus symbol/unary/none mass is 1.
    leaf_cols = list(range(ns)) + [col("?"), col("*"), col("+"), col("none")]
    for t in range(1, T + 1):
        total = u[t, t + 2 : T + 1].sum() + w[t, leaf_cols].sum()
        if not is01(total, 1.0):
            violated.append(3)
            break
    # 4: none mass never decreases along t.
    if any(w[t + 1, col("none")] - w[t, col("none")] < -tol for t in range(1, T)):
        violated.append(4)
    # 5: vertex t is a left child, a right child, or none -- exactly one.
    # Extended to the virtual all-none slot T+1, which forces the last
    # vertex to be a symbol or none (operators would dangle otherwise).
    op_cols = [col(o) for o in "?+*.&|"]
    for t in range(2, T + 2):
        total = w[t - 1, op_cols].sum() + (u[1 : t - 1, t].sum() + w[t, col("none")] if t <= T else 1.0)
        if not is01(total, 1.0):
            violated.append(5)
            break
    # 6: right-child edges respect the preorder numbering.
    for t in range(3, T + 1):
        for p in range(1, t - 1):
            lhs = (t - 1 - p) * u[p, t] + u[p + 1 : t, t + 1 : T + 1].sum()
            if lhs > t - 1 - p + tol:
                violated.append(6)
                break
        if 6 in violated:
            break
    # 7: each symbol is used at most once.
    for a in range(ns):
        if w[1 : T + 1, a].sum() > 1 + tol:
            violated.append(7)
            break
    # 8: the first vertex is not padding, so the encoding names a nonempty
    # expression (reported beyond the seven listed conditions).
    if w[1, col("none")] >= 1.0 - tol:
        violated.append(8)
    return violated


def is_faithful(theta: Encoding, tol: float = 1e-9) -> bool:
    return not faithfulness_violations(theta, tol)


def decode(theta: Encoding, tol: float = 1e-9) -> str:
    """Prefix notation of the SOIRE a faithful encoding describes.

    Concatenates the labels selected by w row by row until the first
    ``none`` vertex.  Refuses non-faithful encodings rather than guessing.
    """
    violated = faithfulness_violations(theta, tol)
    if violated:
        raise NotFaithfulError(f"encoding violates conditions {violated}")
    labels = []
    none_col = theta.column("none")
    for t in range(1, theta.T + 1):
        if theta.w[t, none_col] >= 1.0 - tol:
            break
        labels.append(theta.columns[int(np.argmax(theta.w[t]))])
    prefix = "".join(labels)
    if not validate_prefix(prefix):
        raise NotFaithfulError(f"decoded text {prefix!r} is not a prefix notation")
    return prefix


def decode_soire(theta: Encoding, tol: float = 1e-9) -> Soire:
    """decode, then parse into a syntax tree over theta's alphabet."""
    return parse_prefix(decode(theta, tol), theta.alphabet)


def encode(r: Soire, T: int) -> Encoding:
    """The faithful encoding of r with bounded size T: one-hot w rows by
    vertex label, u set at each binary vertex's right child, none rows
    past the end."""
    if r.size > T:
        raise SizeExceedsBoundError(f"expression size {r.size} exceeds bound {T}")
    enc = Encoding.zeros(r.alphabet, T)
    for t in range(1, r.size + 1):
        label = r.label(t)
        enc.w[t, enc.column(label)] = 1.0
        if label in BINARY_OPS:
            enc.u[t, r.eta(t)] = 1.0
    for t in range(r.size + 1, T + 1):
        enc.w[t, enc.column("none")] = 1.0
    return enc


def _format(x: float) -> str:
    return format(float(x), ".17g")


def save_checkpoint(theta: Encoding, path) -> None:
    """Write a versioned UTF-8 text checkpoint; round-trips bit-exactly."""
    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}"]
    lines.append(f"alphabet {theta.alphabet.symbols}")
    lines.append(f"T {theta.T}")
    lines.append("columns " + " ".join(theta.columns))
    for t in range(1, theta.T + 1):
        lines.append("w " + " ".join(_format(x) for x in theta.w[t]))
    mask = theta.u_valid_mask()
    for t in range(1, theta.T + 1):
        for tp in range(t + 2, theta.T + 1):
            if mask[t, tp] and theta.u[t, tp] != 0.0:
                lines.append(f"u {t} {tp} {_format(theta.u[t, tp])}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Encoding:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()

    def fail(lineno: int, msg: str):
        raise CheckpointError(f"{path}:{lineno}: {msg}")

    if not lines:
        fail(1, "empty checkpoint")
    header = lines[0].rsplit(" ", 1)
    if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
        fail(1, f"not a checkpoint file: {lines[0]!r}")
    if header[1] != f"v{CHECKPOINT_VERSION}":
        fail(1, f"unsupported checkpoint version {header[1]!r}")

    alphabet: Alphabet | None = None
    T: int | None = None
    columns: tuple[str, ...] | None = None
    w_rows: list[np.ndarray] = []
    u_entries: list[tuple[int, int, float]] = []
    ended = False
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if ended:
            fail(lineno, "content after end marker")
        key, _, rest = line.partition(" ")
        try:
            if key == "alphabet":
                alphabet = Alphabet(rest)
            elif key == "T":
                T = int(rest)
            elif key == "columns":
                columns = tuple(rest.split())
            elif key == "w":
                w_rows.append(np.array([float(x) for x in rest.split()]))
            elif key == "u":
                ts, tps, val = rest.split()
                u_entries.append((int(ts), int(tps), float(val)))
            elif key == "end" and not rest:
                ended = True
            else:
                fail(lineno, f"unrecognized line {line!r}")
        except (ValueError, SoireError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            fail(lineno, str(exc))
    if not ended:
        fail(len(lines), "missing end marker")
    if alphabet is None or T is None:
        fail(1, "missing alphabet or T header")
    enc = Encoding.zeros(alphabet, T)
    if columns is not None and columns != enc.columns:
        fail(1, f"column order {columns} does not match {enc.columns}")
    if len(w_rows) != T:
        fail(1, f"expected {T} w rows, found {len(w_rows)}")
    for t, row in enumerate(w_rows, start=1):
        if row.shape != (enc.n_columns,):
            fail(1, f"w row {t} has {row.shape[0]} entries, expected {enc.n_columns}")
        enc.w[t] = row
    mask = enc.u_valid_mask()
    for t, tp, val in u_entries:
        if not (0 <= t <= T and 0 <= tp <= T and mask[t, tp]):
            fail(1, f"u entry ({t},{tp}) outside the valid region")
        enc.u[t, tp] = val
    return enc
