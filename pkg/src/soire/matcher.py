"""SOIRE matching.

Two independent deciders for r |= s:

* :func:`match` / :func:`match_batch` -- a dynamic program over the syntax
  tree, cubic in the string length, that fills a table g[t][i][j] saying
  whether the subexpression at vertex t matches the projection of the
  substring s[i..j] onto that subexpression's symbols.
* :func:`oracle_match` -- a memoized recursion over the matching semantics
  themselves, exponential in the worst case (it enumerates interleavings),
  kept as a reference for the dynamic program.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    OPERATOR_CHARS,
    UNARY_OPS,
    Soire,
    SoireError,
    filter_string,
)


class InstanceTooLargeError(SoireError):
    """oracle_match refused an instance beyond its configured caps."""


@dataclass
class MatchTable:
    """The DP table for one (r, s) pair.

    The table is filled over ``filtered``, the projection of ``string`` onto
    alpha(r); when the projection changes the string the overall match is
    already decided negative, but the table remains well-defined.  Cell
    (t, i, j) with j = i-1 holds the empty-substring column.
    """

    soire: Soire
    string: str
    filtered: str
    matched: bool
    _g: np.ndarray  # bool, shape (size+1, n+2, n+1), 1-based t and i
    _eps: np.ndarray  # bool, shape (size+2,), nullability per vertex

    def value(self, t: int, i: int, j: int) -> bool:
        """g[t][i][j]: does vertex t's subexpression match
        filter(filtered[i..j], alpha(r^t))?  j = i-1 selects epsilon."""
        n = len(self.filtered)
        if not 1 <= t <= self.soire.size:
            raise IndexError(f"vertex index {t} out of range")
        if j == i - 1 and 1 <= i <= n + 1:
            return bool(self._eps[t])
        if not (1 <= i <= j <= n):
            raise IndexError(f"substring ({i},{j}) out of range for length {n}")
        return bool(self._g[t, i, j])


def nullable(r: Soire) -> np.ndarray:
    """Per-vertex nullability (the epsilon column of the table), 1-based."""
    size = r.size
    eps = np.zeros(size + 2, dtype=bool)
    for t in range(size, 0, -1):
        label = r.label(t)
        if label not in OPERATOR_CHARS:
            eps[t] = False
        elif label in "?*":
            eps[t] = True
        elif label == "+":
            eps[t] = eps[t + 1]
        elif label == "|":
            eps[t] = eps[t + 1] or eps[r.eta(t)]
        else:  # "." and "&": both sides must be nullable
            eps[t] = eps[t + 1] and eps[r.eta(t)]
    return eps


def _symbol_masks(r: Soire) -> list[int]:
    """Bitmask of alphabet indices for alpha(r^t), 1-based list."""
    masks = [0] * (r.size + 2)
    for t in range(1, r.size + 1):
        m = 0
        for c in r.alpha(t):
            m |= 1 << r.alphabet.index(c)
        masks[t] = m
    return masks


@lru_cache(maxsize=256)
def _split_grids(n: int, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Column grids splitting every length-`length` substring of a length-n
    string into a nonempty left part (d+1 chars) and the nonempty rest."""
    cols = n - length + 1
    d = np.arange(length - 1)[:, None]
    i = np.arange(cols)[None, :]
    return np.broadcast_to(i, (length - 1, cols)).copy(), (i + d + 1)


def _dp_rows(r: Soire, strings: list[str], masks: list[int], eps: np.ndarray):
    """The boolean DP over a batch of equal-length strings drawn from
    alpha(r).  Returns rows[t][L]: (batch, n-L+1) bool arrays."""
    n = len(strings[0])
    size = r.size
    sigma = r.alphabet
    batch = len(strings)
    codes = np.array([[sigma.index(c) for c in s] for s in strings], dtype=np.int64)
    codes = codes.reshape(batch, n)
    bits = np.left_shift(np.int64(1), codes)

    # presence[L]: bitmask of symbols present in each length-L substring;
    # counts[a][L]: occurrences of symbol a in each length-L substring.
    presence: list[np.ndarray | None] = [None] * (n + 1)
    if n >= 1:
        presence[1] = bits
    for L in range(2, n + 1):
        presence[L] = presence[L - 1][:, : n - L + 1] | bits[:, L - 1 :]
    leaf_symbols = {r.label(t) for t in range(1, size + 1) if r.label(t) not in OPERATOR_CHARS}
    counts: dict[str, list[np.ndarray | None]] = {}
    for a in leaf_symbols:
        is_a = (codes == sigma.index(a)).astype(np.int16)
        col: list[np.ndarray | None] = [None] * (n + 1)
        if n >= 1:
            col[1] = is_a
        for L in range(2, n + 1):
            col[L] = col[L - 1][:, : n - L + 1] + is_a[:, L - 1 :]
        counts[a] = col

    rows: list[list[np.ndarray | None]] = [[None] * (n + 1) for _ in range(size + 2)]
    for L in range(1, n + 1):
        rows[size + 1][L] = np.zeros((batch, n - L + 1), dtype=bool)

    for t in range(size, 0, -1):
        label = r.label(t)
        if label not in OPERATOR_CHARS:
            cnt = counts[label]
            for L in range(1, n + 1):
                rows[t][L] = cnt[L] == 1
            continue
        if label in UNARY_OPS:
            for L in range(1, n + 1):
                cell = rows[t + 1][L].copy()
                if label in "?*":
                    cell |= (presence[L] & masks[t]) == 0
                if label in "*+" and L >= 2:
                    li, ri = _split_grids(n, L)
                    for d in range(L - 1):
                        cell |= rows[t][d + 1][:, li[d]] & rows[t + 1][L - d - 1][:, ri[d]]
                rows[t][L] = cell
            continue
        tp = r.eta(t)
        if label == "&":
            for L in range(1, n + 1):
                rows[t][L] = rows[t + 1][L] & rows[tp][L]
            continue
        only_left = masks[t] & ~masks[t + 1]
        only_right = masks[t] & ~masks[tp]
        for L in range(1, n + 1):
            fl = (presence[L] & only_left) == 0
            fr = (presence[L] & only_right) == 0
            if label == "|":
                rows[t][L] = (fl & rows[t + 1][L]) | (fr & rows[tp][L])
                continue
            cell = np.zeros((batch, n - L + 1), dtype=bool)
            if eps[tp]:
                cell |= fl & rows[t + 1][L]
            if eps[t + 1]:
                cell |= fr & rows[tp][L]
            if L >= 2:
                li, ri = _split_grids(n, L)
                for d in range(L - 1):
                    dl, dr = d + 1, L - d - 1
                    fld = (presence[dl][:, li[d]] & only_left) == 0
                    frd = (presence[dr][:, ri[d]] & only_right) == 0
                    cell |= fld & rows[t + 1][dl][:, li[d]] & frd & rows[tp][dr][:, ri[d]]
            rows[t][L] = cell
    return rows


def match_batch(r: Soire, strings) -> np.ndarray:
    """Decide r |= s for many strings at once.  Returns a bool array."""
    strings = list(strings)
    out = np.zeros(len(strings), dtype=bool)
    if not strings:
        return out
    sym = r.alpha(1)
    filtered = [filter_string(s, sym) for s in strings]
    masks = _symbol_masks(r)
    eps = nullable(r)
    by_len: dict[int, list[int]] = {}
    for idx, (f, s) in enumerate(zip(filtered, strings)):
        if f != s:
            continue  # the projection guard failed: definitely no match
        if not f:
            out[idx] = eps[1]
        else:
            by_len.setdefault(len(f), []).append(idx)
    for n, idxs in sorted(by_len.items()):
        rows = _dp_rows(r, [filtered[i] for i in idxs], masks, eps)
        out[idxs] = rows[1][n][:, 0]
    return out


def match(r: Soire, s: str) -> bool:
    """Decide r |= s.

    Characters outside the alphabet are not an error: they make the
    projection guard fail, so the result is simply False.
    """
    return bool(match_batch(r, [s])[0])


def match_table(r: Soire, s: str) -> MatchTable:
    """Run the matcher and keep the full DP table, built on the projection
    of s onto alpha(r)."""
    filtered = filter_string(s, r.alpha(1))
    masks = _symbol_masks(r)
    eps = nullable(r)
    n = len(filtered)
    table = np.zeros((r.size + 1, n + 2, n + 1), dtype=bool)
    if n > 0:
        rows = _dp_rows(r, [filtered], masks, eps)
        for t in range(1, r.size + 1):
            for L in range(1, n + 1):
                for i0 in range(n - L + 1):
                    table[t, i0 + 1, i0 + L] = rows[t][L][0, i0]
    matched = filtered == s and (bool(table[1, 1, n]) if n else bool(eps[1]))
    return MatchTable(r, s, filtered, matched, table, eps)


def flag(r: Soire, s: str, i: int, j: int, t: int, t_prime: int) -> bool:
    """Do s[i..j]'s projections onto alpha(r^t) and alpha(r^{t'}) agree?

    t' is meant to be a child of t (t+1 or the right child); the indicator
    is defined for any pair.  j = i-1 selects the empty substring.
    """
    sub = "" if j == i - 1 else s[i - 1 : j]
    return filter_string(sub, r.alpha(t)) == filter_string(sub, r.alpha(t_prime))


def oracle_match(
    r: Soire,
    s: str,
    *,
    max_len: int = 10,
    max_size: int = 15,
    interleave: str = "enumerate",
) -> bool:
    """Decide r |= s by direct recursion over the matching semantics.

    An independent reference for :func:`match` on small instances only;
    raises InstanceTooLargeError beyond the caps.  The interleaving case
    either enumerates all subsequence partitions ("enumerate") or,
    exploiting single occurrence, partitions the string by symbol
    ownership ("partition").
    """
    if len(s) > max_len:
        raise InstanceTooLargeError(f"string length {len(s)} exceeds cap {max_len}")
    if r.size > max_size:
        raise InstanceTooLargeError(f"expression size {r.size} exceeds cap {max_size}")
    if interleave not in ("enumerate", "partition"):
        raise ValueError(f"unknown interleave mode {interleave!r}")

    memo: dict[tuple[int, bool, str], bool] = {}

    def matches(t: int, sub: str) -> bool:
        key = (t, False, sub)
        if key in memo:
            return memo[key]
        memo[key] = res = _matches(t, sub)
        return res

    def matches_star(t: int, sub: str) -> bool:
        """Zero or more concatenated matches of vertex t's expression."""
        key = (t, True, sub)
        if key in memo:
            return memo[key]
        res = sub == ""
        if not res:
            # Last chunk nonempty keeps the recursion well-founded.
            for k in range(len(sub)):
                if matches_star(t, sub[:k]) and matches(t, sub[k:]):
                    res = True
                    break
        memo[key] = res
        return res

    def _matches(t: int, sub: str) -> bool:
        label = r.label(t)
        if label not in OPERATOR_CHARS:
            return sub == label
        if label == "?":
            return sub == "" or matches(t + 1, sub)
        if label == "*":
            return matches_star(t + 1, sub)
        if label == "+":
            return any(
                matches_star(t + 1, sub[:k]) and matches(t + 1, sub[k:])
                for k in range(len(sub) + 1)
            )
        tp = r.eta(t)
        if label == ".":
            return any(
                matches(t + 1, sub[:k]) and matches(tp, sub[k:])
                for k in range(len(sub) + 1)
            )
        if label == "|":
            return matches(t + 1, sub) or matches(tp, sub)
        # interleaving
        if interleave == "partition":
            united = r.alpha(t + 1) | r.alpha(tp)
            if any(c not in united for c in sub):
                return False
            return matches(t + 1, filter_string(sub, r.alpha(t + 1))) and matches(
                tp, filter_string(sub, r.alpha(tp))
            )
        n = len(sub)
        for mask in range(1 << n):
            s1 = "".join(sub[k] for k in range(n) if mask >> k & 1)
            s2 = "".join(sub[k] for k in range(n) if not mask >> k & 1)
            if matches(t + 1, s1) and matches(tp, s2):
                return True
        return False

    return matches(1, s)
