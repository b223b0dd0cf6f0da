"""Decode a learnt (generally non-faithful) encoding into a SOIRE.

Bottom-up beam search: every vertex slot t keeps up to beta candidate
subexpressions, built from symbols weighted by w^t, repetitions of slot
t+1's candidates, and merges of slot t+1's candidates with slot t' >= t+2
candidates weighted by the operator and right-child probabilities.  Merges
are admitted only when the operand alphabets are disjoint, so every
candidate honours single occurrence.  Candidates are ranked by the
geometric mean of their chosen probabilities, score**(1/size); the slot-1
survivors are then scored by training-set accuracy and the best one wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Soire, SoireError, parse_prefix, to_infix
from .encoding import Encoding
from .matcher import match_batch

_UNARY = ("?", "*", "+")
_BINARY = (".", "&", "|")


class EmptyBeamError(SoireError):
    """No candidate survived; cannot happen for beta >= 1 and a non-empty
    alphabet."""


@dataclass(frozen=True)
class BeamCandidate:
    """A candidate subexpression with its construction score.

    score is the product of the chosen w/u probabilities; the beam ranking
    key is score**(1/size).  mask caches the candidate's alphabet as a
    bitmask over alphabet indices.
    """

    prefix: str
    score: float
    size: int
    mask: int

    @property
    def key(self) -> float:
        return self.score ** (1.0 / self.size)

    def infix(self) -> str:
        return to_infix(self.prefix)


@dataclass
class InterpretResult:
    soire: Soire
    score: float
    train_accuracy: float
    candidates_evaluated: int


def score_merge(e_i: float, e_j: float, op_weight: float) -> float:
    """Score of a merged candidate: the plain product."""
    return e_i * e_j * op_weight


def _sort_key(c: BeamCandidate):
    # Rank by key descending; ties go to smaller, lexicographically earlier
    # expressions so runs are reproducible.
    return (-c.key, c.size, c.prefix)


def _select_merges(keys: np.ndarray, sizes: np.ndarray, beta: int) -> np.ndarray:
    """Flat indices of one merge group's beam contenders.

    Takes the beta best positive keys; if slots remain, fills them with
    zero-key candidates smallest-first (among equal sizes the construction
    order decides, which only permutes candidates the ranking already
    treats as equal).
    """
    flat = keys.ravel()
    pos = np.flatnonzero(flat > 0.0)
    if pos.size > beta:
        part = np.argpartition(flat[pos], pos.size - beta)[-beta:]
        return pos[part]
    room = beta - pos.size
    if room <= 0:
        return pos
    zeros = np.flatnonzero(flat == 0.0)
    if zeros.size > room:
        order = np.argpartition(sizes.ravel()[zeros], room - 1)[:room]
        zeros = zeros[order]
    return np.concatenate([pos, zeros])


def beam_candidates(theta: Encoding, beta: int) -> dict[int, list[BeamCandidate]]:
    """Candidate sets per vertex slot, bottom-up, each pruned to beta."""
    if beta < 1:
        raise ValueError("beam width must be at least 1")
    sigma = theta.alphabet
    if len(sigma) > 62:
        raise ValueError("alphabets beyond 62 symbols are not supported here")
    T = theta.T

    beams: dict[int, list[BeamCandidate]] = {T + 1: []}
    arrays: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    for t in range(T, 0, -1):
        cands: list[BeamCandidate] = [
            BeamCandidate(a, theta.w_at(t, a), 1, 1 << k) for k, a in enumerate(sigma)
        ]
        prev = beams[t + 1]
        for op in _UNARY:
            w_op = theta.w_at(t, op)
            cands.extend(
                BeamCandidate(op + c.prefix, c.score * w_op, c.size + 1, c.mask)
                for c in prev
            )
        if prev:
            l_scores, l_sizes, l_masks = arrays[t + 1]
            for tp in range(t + 2, T + 1):
                right = beams[tp]
                if not right:
                    continue
                u_val = theta.u_at(t, tp)
                r_scores, r_sizes, r_masks = arrays[tp]
                disjoint = (l_masks[:, None] & r_masks[None, :]) == 0
                if not disjoint.any():
                    continue
                prod = l_scores[:, None] * r_scores[None, :]
                sizes = l_sizes[:, None] + r_sizes[None, :] + 1
                for op in _BINARY:
                    w_op = theta.w_at(t, op) * u_val
                    keys = np.where(disjoint, (prod * w_op) ** (1.0 / sizes), -np.inf)
                    for flat in np.sort(_select_merges(keys, sizes, beta)):
                        i, j = divmod(int(flat), len(right))
                        left_c, right_c = prev[i], right[j]
                        cands.append(
                            BeamCandidate(
                                op + left_c.prefix + right_c.prefix,
                                score_merge(left_c.score, right_c.score, w_op),
                                left_c.size + right_c.size + 1,
                                left_c.mask | right_c.mask,
                            )
                        )
        cands.sort(key=_sort_key)
        kept = cands[:beta]
        beams[t] = kept
        arrays[t] = (
            np.array([c.score for c in kept]),
            np.array([c.size for c in kept]),
            np.array([c.mask for c in kept], dtype=np.int64),
        )
    return beams


def interpret(train_set, theta: Encoding, beta: int = 500) -> InterpretResult:
    """Beam-search the encoding for the best nearby SOIRE.

    train_set provides labeled strings for the final accuracy ranking:
    either a datagen.Dataset or a sequence of (string, label) pairs.
    """
    sigma = theta.alphabet
    finalists = beam_candidates(theta, beta)[1]
    if not finalists:
        raise EmptyBeamError("beam search produced no candidate")

    if hasattr(train_set, "entries"):
        pairs = list(train_set.entries)
    else:
        pairs = [(s, bool(y)) for s, y in train_set]
    strings = [s for s, _ in pairs]
    labels = np.array([bool(y) for _, y in pairs])

    # Identical prefixes match identically; evaluate each expression once.
    seen: dict[str, BeamCandidate] = {}
    for c in finalists:
        if c.prefix not in seen:
            seen[c.prefix] = c
    best_key = None
    best_cand = None
    best_acc = -1.0
    for prefix, cand in seen.items():
        r = parse_prefix(prefix, sigma)
        if labels.size:
            acc = float((match_batch(r, strings) == labels).mean())
        else:
            acc = 0.0
        key = (-acc, cand.size, prefix)
        if best_key is None or key < best_key:
            best_key = key
            best_cand = cand
            best_acc = acc
    return InterpretResult(
        soire=parse_prefix(best_cand.prefix, sigma),
        score=best_cand.score,
        train_accuracy=best_acc,
        candidates_evaluated=len(seen),
    )
