"""Shared test utilities: random expression generation and slow, literal
reference implementations used as oracles for the fast production paths."""

from __future__ import annotations

import itertools

import numpy as np

from soire.core import Alphabet, Soire, filter_string, parse_prefix
from soire.encoding import Encoding


def random_soire(rng: np.random.Generator, symbols: str, *, subset: bool = True,
                 unary_prob: float = 0.35, max_chain: int = 3) -> Soire:
    """A random syntax tree over (a random nonempty subset of) symbols,
    with every chosen symbol used exactly once."""
    syms = list(symbols)
    if subset:
        k = int(rng.integers(1, len(syms) + 1))
        idx = rng.choice(len(syms), size=k, replace=False)
        syms = [syms[i] for i in sorted(idx)]

    def wrap(node: str) -> str:
        chain = 0
        while chain < max_chain and rng.random() < unary_prob:
            node = "?*+"[int(rng.integers(3))] + node
            chain += 1
        return node

    def build(avail: list[str]) -> str:
        if len(avail) == 1:
            return wrap(avail[0])
        cut = int(rng.integers(1, len(avail)))
        op = ".&|"[int(rng.integers(3))]
        return wrap(op + build(avail[:cut]) + build(avail[cut:]))

    return parse_prefix(build(syms), Alphabet(symbols))


def random_string(rng: np.random.Generator, symbols: str, max_len: int) -> str:
    n = int(rng.integers(0, max_len + 1))
    return "".join(symbols[int(rng.integers(len(symbols)))] for _ in range(n))


# ---------------------------------------------------------------------------
# Literal scalar re-implementation of the soft matcher (the oracle for the
# vectorized engine).  Follows the defining equations cell by cell with
# plain Python floats; exponentially slower but independent of the
# production code paths.
# ---------------------------------------------------------------------------


def _clamp(x: float, mode: str, slope: float) -> float:
    if mode == "exact":
        return min(max(x, 0.0), 1.0)
    if x < 0.0:
        return slope * x
    if x > 1.0:
        return 1.0 + slope * (x - 1.0)
    return x


def reference_forward(theta: Encoding, s: str, mode: str = "exact",
                      slope: float = 0.01) -> float:
    sigma = list(theta.alphabet)
    ns = len(sigma)
    T = theta.T
    w = theta.w
    u = theta.u
    col = theta.column

    rho = {t: [0.0] * ns for t in range(1, T + 2)}
    for t in range(T, 0, -1):
        for a in range(ns):
            total = w[t, a]
            total += sum(w[t, col(o)] for o in "?*+.&|") * rho[t + 1][a]
            total += sum(w[t, col(o)] for o in ".&|") * sum(
                u[t, tp] * rho[tp][a] for tp in range(t + 2, T + 1)
            )
            rho[t][a] = _clamp(total, mode, slope)

    def present(i: int, j: int, a: int) -> float:
        sub = s[i - 1 : j]
        return 1.0 if sigma[a] in sub else 0.0

    def flag(t: int, tp: int | None, i: int, j: int) -> float:
        total = 0.0
        for a in range(ns):
            other = 0.0 if tp is None or tp > T else rho[tp][a]
            total += _clamp(present(i, j, a) + rho[t][a] - other - 1.0, mode, slope)
        return 1.0 - _clamp(total, mode, slope)

    n = len(s)
    cells = [(1, 0)] + [(i, j) for L in range(1, n + 1)
                        for i in range(1, n - L + 2) for j in (i + L - 1,)]
    g = {}
    for (i, j) in cells:
        for t in range(T + 1, 0, -1):
            if t == T + 1:
                g[(t, i, j)] = 0.0
                continue
            sym = sum(
                w[t, a] * (1.0 if s[i - 1 : j].count(sigma[a]) == 1 else 0.0)
                for a in range(ns)
            )
            eps_ind = flag(t, None, i, j)
            split = 0.0
            if j > i:
                split = max(
                    min(g[(t, i, k)], g[(t + 1, k + 1, j)]) for k in range(i, j)
                )
            elif j == i:
                split = 0.0
            p_q = _clamp(eps_ind + g[(t + 1, i, j)], mode, slope)
            if j >= i:
                p_star = _clamp(eps_ind + g[(t + 1, i, j)] + split, mode, slope)
                p_plus = _clamp(g[(t + 1, i, j)] + split, mode, slope)
            else:
                p_star = _clamp(eps_ind + g[(t + 1, i, j)], mode, slope)
                p_plus = _clamp(g[(t + 1, i, j)], mode, slope)
            total = sym + w[t, col("?")] * p_q + w[t, col("*")] * p_star + w[t, col("+")] * p_plus
            for tp in range(t + 2, T + 1):
                f1 = flag(t, t + 1, i, j)
                fr = flag(t, tp, i, j)
                term1 = min(min(f1, g[(t + 1, i, j)]), g[(tp, 1, 0)])
                term2 = min(min(fr, g[(tp, i, j)]), g[(t + 1, 1, 0)])
                dsplit = 0.0
                if j > i:
                    dsplit = max(
                        min(
                            min(flag(t, t + 1, i, k), g[(t + 1, i, k)]),
                            min(flag(t, tp, k + 1, j), g[(tp, k + 1, j)]),
                        )
                        for k in range(i, j)
                    )
                p_dot = _clamp(term1 + term2 + dsplit, mode, slope)
                p_amp = min(g[(t + 1, i, j)], g[(tp, i, j)])
                p_bar = _clamp(
                    min(f1, g[(t + 1, i, j)]) + min(fr, g[(tp, i, j)]), mode, slope
                )
                total += w[t, col(".")] * u[t, tp] * p_dot
                total += w[t, col("&")] * u[t, tp] * p_amp
                total += w[t, col("|")] * u[t, tp] * p_bar
            g[(t, i, j)] = total
    guard = max(
        _clamp((1.0 if sigma[a] in s else 0.0) - rho[1][a], mode, slope)
        for a in range(ns)
    )
    root = g[(1, 1, n)] if n else g[(1, 1, 0)]
    return _clamp(root - guard, mode, slope)


# ---------------------------------------------------------------------------
# Exhaustive enumeration of faithful encodings (small T only): depth-first
# over 0/1 rows, pruning with the faithfulness conditions themselves rather
# than reusing the codec.
# ---------------------------------------------------------------------------


def enumerate_faithful(alphabet: Alphabet, T: int):
    """Yield every faithful encoding of bounded size T over the alphabet.

    Rows are chosen vertex by vertex; conditions 1-3 hold by construction
    (one-hot w rows, a one-hot u row exactly for binary labels) and
    conditions 4-7 are checked incrementally, so the search prunes hard but
    misses nothing.
    """
    from soire.encoding import is_faithful

    symbols = list(alphabet)
    ops = ["?", "*", "+", ".", "&", "|", "none"]

    def realize(labels, rights):
        enc = Encoding.zeros(alphabet, T)
        for t, label in enumerate(labels, start=1):
            enc.w[t, enc.column(label)] = 1.0
        for t, tp in rights.items():
            enc.u[t, tp] = 1.0
        return enc

    def cond5_ok(labels, rights, t):
        if t < 2:
            return True
        prev_is_op = labels[t - 2] in "?*+.&|"
        parents = sum(1 for p, tp in rights.items() if tp == t and p <= t - 2)
        is_none = labels[t - 1] == "none"
        return int(prev_is_op) + parents + int(is_none) == 1

    def cond6_ok(rights, t):
        for p, tp in rights.items():
            for p2, tp2 in rights.items():
                if p < p2 < tp and tp2 > tp:
                    return False
        return True

    def descend(labels, rights, used):
        t = len(labels) + 1
        if t > T:
            enc = realize(labels, rights)
            if is_faithful(enc, tol=0.0):
                yield enc
            return
        for label in symbols + ops:
            if label in symbols and label in used:
                continue
            if labels and labels[-1] == "none" and label != "none":
                continue  # condition 4
            targets = [None]
            if label in ".&|":
                targets = list(range(t + 2, T + 1))
                if not targets:
                    continue
            for tp in targets:
                new_rights = rights if tp is None else {**rights, t: tp}
                new_labels = labels + [label]
                if not cond5_ok(new_labels, new_rights, t):
                    continue
                if tp is not None and not cond6_ok(new_rights, t):
                    continue
                new_used = used | {label} if label in symbols else used
                yield from descend(new_labels, new_rights, new_used)

    yield from descend([], {}, frozenset())


def enumerate_prefixes(symbols: str, max_size: int) -> set[str]:
    """All prefix notations of size <= max_size whose distinct symbols come
    from `symbols` -- the independent count for the encoding enumeration."""

    def gen(avail: frozenset, budget: int):
        if budget < 1:
            return
        for a in sorted(avail):
            yield a, frozenset([a])
        if budget >= 2:
            for sub, used in gen(avail, budget - 1):
                for op in "?*+":
                    yield op + sub, used
        if budget >= 3:
            for left, lused in gen(avail, budget - 2):
                for right, rused in gen(avail - lused, budget - 1 - len(left)):
                    for op in ".&|":
                        yield op + left + right, lused | rused

    return {p for p, _ in gen(frozenset(symbols), max_size)}


def naive_beam_reference(theta: Encoding, beta: float) -> dict[int, list]:
    """Direct, unoptimized transcription of the candidate-generation loop:
    the oracle for the production beam search at beta = infinity."""
    sigma = list(theta.alphabet)
    T = theta.T
    beams: dict[int, list] = {T + 1: []}
    for t in range(T, 0, -1):
        cands = []
        for a in sigma:
            cands.append((a, theta.w_at(t, a)))
        for r_i, e_i in beams[t + 1]:
            for op in "?*+":
                cands.append((op + r_i, e_i * theta.w_at(t, op)))
        for tp in range(t + 2, T + 1):
            for r_i, e_i in beams[t + 1]:
                for r_j, e_j in beams[tp]:
                    if set(r_i) & set(r_j) & set(sigma):
                        continue
                    for op in ".&|":
                        cands.append(
                            (op + r_i + r_j, e_i * e_j * theta.w_at(t, op) * theta.u_at(t, tp))
                        )
        cands.sort(key=lambda c: (-(c[1] ** (1.0 / len(c[0]))), len(c[0]), c[0]))
        if beta != float("inf"):
            cands = cands[: int(beta)]
        beams[t] = cands
    return beams
