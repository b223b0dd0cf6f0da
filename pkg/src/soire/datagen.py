"""Labeled dataset generation from a ground-truth SOIRE.

Positives are sampled by walking the syntax tree (repetitions continue
with probability 1/2, branches are uniform, interleavings shuffle their
operands uniformly).  Negatives are edit-distance-1 neighbours of
positives that the expression rejects: one character deleted, inserted,
replaced, or moved.  Label noise flips an exact fraction of labels in the
training and validation splits; test sets stay clean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Alphabet, BINARY_OPS, OPERATOR_CHARS, Soire, SoireError
from .matcher import match, match_batch

NOISE_LEVELS = (0.0, 0.05, 0.1, 0.15, 0.2)
MAX_STRING_LENGTH = 20


class UnsatisfiableError(SoireError):
    """No accepted string exists within the length cap."""


class ExhaustedRetriesError(SoireError):
    """Sampling gave up; the language is (near-)universal or the split
    sizes exceed the number of distinct strings available."""


@dataclass
class Dataset:
    """Labeled strings for one split."""

    alphabet: Alphabet
    entries: list = field(default_factory=list)  # (string, label) pairs
    split: str = "train"
    delta: float = 0.0

    @property
    def positives(self) -> list[str]:
        return [s for s, label in self.entries if label]

    @property
    def negatives(self) -> list[str]:
        return [s for s, label in self.entries if not label]

    def __len__(self):
        return len(self.entries)


def _walk(r: Soire, t: int, rng: np.random.Generator, cont: float) -> str:
    label = r.label(t)
    if label not in OPERATOR_CHARS:
        return label
    if label == "?":
        return "" if rng.random() >= cont else _walk(r, t + 1, rng, cont)
    if label in "*+":
        out = _walk(r, t + 1, rng, cont) if label == "+" else ""
        while rng.random() < cont:
            out += _walk(r, t + 1, rng, cont)
        return out
    left = _walk(r, t + 1, rng, cont)
    if label == "|":
        return left if rng.random() < 0.5 else _walk(r, r.eta(t), rng, cont)
    right = _walk(r, r.eta(t), rng, cont)
    if label == ".":
        return left + right
    # Uniform interleaving: draw the next character from either side with
    # probability proportional to how many characters it still holds.
    out = []
    i = j = 0
    while i < len(left) or j < len(right):
        remaining = (len(left) - i) + (len(right) - j)
        if rng.random() < (len(left) - i) / remaining:
            out.append(left[i])
            i += 1
        else:
            out.append(right[j])
            j += 1
    return "".join(out)


def sample_positive(r: Soire, max_len: int = MAX_STRING_LENGTH,
                    rng: np.random.Generator | None = None,
                    max_attempts: int = 200, continue_prob: float = 0.5) -> str:
    """A string accepted by r, of length at most max_len.

    continue_prob is the chance each repetition keeps going (and that a ?
    keeps its operand); raising it shifts mass toward longer strings, which
    helps fill large splits for languages with few short members.
    """
    if rng is None:
        rng = np.random.default_rng()
    for _ in range(max_attempts):
        s = _walk(r, 1, rng, continue_prob)
        if len(s) <= max_len:
            return s
    raise UnsatisfiableError(
        f"found no accepted string of length <= {max_len} in {max_attempts} walks"
    )


def edit_neighbors(s: str, sigma: Alphabet) -> set[str]:
    """Strings one edit away: a character deleted, inserted, replaced with
    a different one, or moved elsewhere.  s itself is excluded."""
    out: set[str] = set()
    n = len(s)
    for i in range(n):
        out.add(s[:i] + s[i + 1 :])
    for i in range(n + 1):
        for a in sigma:
            out.add(s[:i] + a + s[i:])
    for i in range(n):
        for a in sigma:
            if a != s[i]:
                out.add(s[:i] + a + s[i + 1 :])
    for i in range(n):
        rest = s[:i] + s[i + 1 :]
        for j in range(len(rest) + 1):
            out.add(rest[:j] + s[i] + rest[j:])
    out.discard(s)
    return out


def sample_negative(r: Soire, sigma: Alphabet, max_len: int = MAX_STRING_LENGTH,
                    rng: np.random.Generator | None = None,
                    max_attempts: int = 500, continue_prob: float = 0.5) -> str:
    """A rejected string one edit away from some accepted string.

    Draws a positive, picks one of its edit neighbours uniformly, and
    retries whenever the neighbour is accepted or too long.
    """
    if rng is None:
        rng = np.random.default_rng()
    for _ in range(max_attempts):
        base = sample_positive(r, max_len, rng, continue_prob=continue_prob)
        neighbors = sorted(edit_neighbors(base, sigma))
        if not neighbors:
            continue
        cand = neighbors[int(rng.integers(len(neighbors)))]
        if len(cand) <= max_len and not match(r, cand):
            return cand
    raise ExhaustedRetriesError(
        f"no rejected edit neighbour found in {max_attempts} draws; "
        "the language may be (near-)universal"
    )


def _sample_split(r: Soire, sigma: Alphabet, n_pos: int, n_neg: int,
                  max_len: int, rng: np.random.Generator, split: str,
                  continue_prob: float = 0.5) -> Dataset:
    """Distinct positives and negatives for one split (pre-noise)."""
    used: set[str] = set()
    positives: list[str] = []
    attempts = 0
    cap = 50 * max(n_pos, 1) + 100
    while len(positives) < n_pos:
        if attempts > cap:
            raise ExhaustedRetriesError(
                f"could not collect {n_pos} distinct positives (got {len(positives)})"
            )
        attempts += 1
        s = sample_positive(r, max_len, rng, continue_prob=continue_prob)
        if s not in used:
            used.add(s)
            positives.append(s)
    negatives: list[str] = []
    attempts = 0
    cap = 50 * max(n_neg, 1) + 100
    while len(negatives) < n_neg:
        if attempts > cap:
            raise ExhaustedRetriesError(
                f"could not collect {n_neg} distinct negatives (got {len(negatives)})"
            )
        attempts += 1
        s = sample_negative(r, sigma, max_len, rng, continue_prob=continue_prob)
        if s not in used:
            used.add(s)
            negatives.append(s)
    entries = [(s, True) for s in positives] + [(s, False) for s in negatives]
    return Dataset(sigma, entries, split=split)


def _flip_labels(ds: Dataset, delta: float, rng: np.random.Generator) -> None:
    """Flip exactly floor(n_pos*delta) positive and floor(n_neg*delta)
    negative labels, in place."""
    if delta == 0.0:
        return
    pos_idx = [k for k, (_, label) in enumerate(ds.entries) if label]
    neg_idx = [k for k, (_, label) in enumerate(ds.entries) if not label]
    for idxs in (pos_idx, neg_idx):
        n_flip = int(len(idxs) * delta)
        if n_flip == 0:
            continue
        chosen = rng.choice(len(idxs), size=n_flip, replace=False)
        for c in sorted(int(x) for x in chosen):
            k = idxs[c]
            s, label = ds.entries[k]
            ds.entries[k] = (s, not label)
    ds.delta = delta


def make_dataset(r: Soire, *, sigma: Alphabet | None = None,
                 train_size: int = 250, val_size: int = 50, test_size: int = 250,
                 delta: float = 0.0, seed: int = 0,
                 max_len: int = MAX_STRING_LENGTH,
                 continue_prob: float = 0.5) -> tuple[Dataset, Dataset, Dataset]:
    """Train/validation/test datasets for a ground-truth expression.

    Sizes count positives (= negatives) per split.  Strings are distinct
    within a split; label flips at rate delta touch the train and
    validation splits only.  Deterministic for a fixed seed.
    """
    if sigma is None:
        sigma = r.alphabet
    rng = np.random.default_rng(seed)
    train = _sample_split(r, sigma, train_size, train_size, max_len, rng, "train", continue_prob)
    val = _sample_split(r, sigma, val_size, val_size, max_len, rng, "validation", continue_prob)
    test = _sample_split(r, sigma, test_size, test_size, max_len, rng, "test", continue_prob)
    _flip_labels(train, delta, rng)
    _flip_labels(val, delta, rng)
    return train, val, test


def save_dataset(ds: Dataset, path) -> None:
    """One record per line, `+<TAB>string` or `-<TAB>string`, after an
    alphabet header line."""
    lines = [f"#alphabet={ds.alphabet.symbols}"]
    lines.extend(f"{'+' if label else '-'}\t{s}" for s, label in ds.entries)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path, split: str = "train") -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#alphabet="):
        raise SoireError(f"{path}:1: expected '#alphabet=<symbols>' header")
    sigma = Alphabet(lines[0][len("#alphabet=") :])
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if len(line) < 2 or line[0] not in "+-" or line[1] != "\t":
            raise SoireError(f"{path}:{lineno}: malformed record {line!r}")
        label = line[0] == "+"
        s = line[2:]
        for c in s:
            if c not in sigma:
                raise SoireError(f"{path}:{lineno}: character {c!r} not in alphabet")
        entries.append((s, label))
    return Dataset(sigma, entries, split=split)


def verify_dataset(r: Soire, ds: Dataset) -> bool:
    """Do all labels agree with the matcher?  (True only pre-noise.)"""
    strings = [s for s, _ in ds.entries]
    labels = np.array([label for _, label in ds.entries])
    return bool((match_batch(r, strings) == labels).all())
