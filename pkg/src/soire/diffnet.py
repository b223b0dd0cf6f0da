"""Differentiable simulation of the SOIRE matcher.

Instead of one fixed syntax tree, every vertex slot t of a bounded-size
encoding carries a probability row w^t over labels and right-child
probabilities u^t.  The matcher's boolean table is then rebuilt in soft
form: rho[t][a] estimates whether symbol a occurs below slot t, flag
values estimate the projection-agreement indicators, and g[t] mixes the
per-operator table rules weighted by w and u.  Conjunctions become
minimum, small disjunctions become a clamped sum, and the wide
split-position disjunctions of * + . become maximum.

On a faithful encoding with exact clamps the whole construction collapses
to the boolean matcher; under the leaky clamp it is differentiable and is
trained with projected AdamW on 0/1 match labels.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .autodiff import Graph, Node, _val
from .core import Alphabet, Soire
from .encoding import Encoding, project, random_encoding

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run."""

    T: int
    learning_rate: float = 0.1
    batch_size: int = 64
    reg_lambda: float = 0.0
    epochs: int = 100
    seed: int = 0
    leaky_slope: float = 0.01
    eval_threshold: float = 0.5
    weight_decay: float = 0.01
    max_len: int = 20

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")
        if not 0.0 < self.eval_threshold < 1.0:
            raise ValueError("eval_threshold must lie strictly between 0 and 1")


@dataclass
class ForwardTrace:
    """Intermediates of one forward evaluation (single string).

    g maps (t, i, j) to the soft table value, with (t, 1, 0) the empty
    column; flags maps (t, t_prime, i, j) with t_prime None for the
    "projection is empty" indicator; p maps (t, op, i, j) for unary and
    (t, op, t_prime, i, j) for binary operator intermediates.
    """

    rho: np.ndarray
    flags: dict = field(default_factory=dict)
    g: dict = field(default_factory=dict)
    p: dict = field(default_factory=dict)
    y_hat: float = 0.0


@dataclass(frozen=True)
class _Layout:
    """Flat enumeration of the substrings of a length-n string, shortest
    first, with index grids for splitting each substring in two."""

    n: int
    ncell: int
    offsets: tuple[int, ...]  # offsets[L] = first cell of length L
    cells: tuple[tuple[int, int], ...]  # (L, i0)
    left_idx: dict
    right_idx: dict


@lru_cache(maxsize=64)
def _layout(n: int) -> _Layout:
    offsets = [0] * (n + 1)
    cells: list[tuple[int, int]] = []
    for L in range(1, n + 1):
        offsets[L] = len(cells)
        cells.extend((L, i0) for i0 in range(n - L + 1))
    left_idx = {}
    right_idx = {}
    for L in range(2, n + 1):
        cols = n - L + 1
        li = np.empty((L - 1, cols), dtype=np.intp)
        ri = np.empty((L - 1, cols), dtype=np.intp)
        for d in range(L - 1):
            li[d] = offsets[d + 1] + np.arange(cols)
            ri[d] = offsets[L - d - 1] + np.arange(cols) + d + 1
        left_idx[L] = li
        right_idx[L] = ri
    return _Layout(n, len(cells), tuple(offsets), tuple(cells), left_idx, right_idx)


def _string_consts(strings: list[str], sigma: Alphabet, layout: _Layout):
    """Presence and exactly-once-count indicators for every substring."""
    n = layout.n
    ns = len(sigma)
    batch = len(strings)
    onehot = np.zeros((batch, n, ns))
    for b, s in enumerate(strings):
        for k, c in enumerate(s):
            onehot[b, k, sigma.index(c)] = 1.0
    presence = np.zeros((batch, layout.ncell, ns))
    count1 = np.zeros((batch, layout.ncell, ns))
    prev_p = None
    prev_c = None
    for L in range(1, n + 1):
        if L == 1:
            cur_c = onehot.copy()
        else:
            cur_c = prev_c[:, : n - L + 1] + onehot[:, L - 1 :]
        cur_p = np.minimum(cur_c, 1.0)
        sl = slice(layout.offsets[L], layout.offsets[L] + (n - L + 1))
        presence[:, sl] = cur_p
        count1[:, sl] = (cur_c == 1.0).astype(float)
        prev_c = cur_c
        prev_p = cur_p
    full = prev_p[:, 0] if n >= 1 else np.zeros((batch, ns))
    return presence, count1, full


def _op_cols(ns: int) -> dict[str, int]:
    return {op: ns + k for k, op in enumerate(("?", "*", "+", ".", "&", "|", "none"))}


def _rho_pass(gr: Graph, w, u, T: int, ns: int):
    """Soft symbol-occurrence table, bottom-up over vertex slots."""
    cols = _op_cols(ns)
    zeros = np.zeros(ns)
    rho: list = [None] * (T + 2)
    rho[T + 1] = zeros
    for t in range(T, 0, -1):
        w_sym = gr.getitem(w, (t, slice(0, ns)))
        s_all = gr.sum(gr.getitem(w, (t, slice(ns, ns + 6))))
        terms = [w_sym, gr.mul(s_all, rho[t + 1])]
        if t + 2 <= T:
            s_bin = gr.sum(gr.getitem(w, (t, slice(cols["."], cols["|"] + 1))))
            u_row = gr.getitem(u, (t, slice(t + 2, T + 1)))
            stacked = gr.stack([rho[tp] for tp in range(t + 2, T + 1)])
            weighted = gr.sum(gr.mul(gr.reshape(u_row, (T - t - 1, 1)), stacked), axis=0)
            terms.append(gr.mul(s_bin, weighted))
        rho[t] = gr.sigma01(gr.add_n(terms))
    return rho


def _flag_stacks(gr: Graph, rho, T: int, ns: int):
    """Per-slot stacks of the rows rho[t+1..T] plus a zero row standing for
    the empty alphabet (used by the epsilon-projection indicator)."""
    zeros = np.zeros(ns)
    stacks = [None] * (T + 1)
    for t in range(1, T + 1):
        stacks[t] = gr.stack([rho[tp] for tp in range(t + 1, T + 1)] + [zeros])
    return stacks


def _eps_pass(gr: Graph, w, u, rho, stacks, T: int, ns: int, capture=None):
    """Empty-string column of the soft table, plus the flags at epsilon.

    Outside recording mode, operator terms whose weights are exactly zero
    are skipped: their contribution is zero, and sparse (near-faithful)
    encodings evaluate much faster.
    """
    cols = _op_cols(ns)
    wv = np.asarray(_val(w))
    uv = np.asarray(_val(u))
    no_presence = np.zeros((1, ns))
    E: list = [None] * (T + 2)
    E[T + 1] = 0.0
    feps: list = [None] * (T + 1)
    for t in range(T, 0, -1):
        dense = gr.record or capture is not None
        f = gr.reshape(gr.flag_agreement(rho[t], stacks[t], no_presence), (T - t + 1,))
        feps[t] = f
        eps_ind = gr.getitem(f, (T - t,))
        p_rep = gr.sigma01(gr.add(eps_ind, E[t + 1]))  # ? and * share this at eps
        p_plus = gr.sigma01(E[t + 1])
        terms = []
        if dense or wv[t, cols["?"]] != 0.0 or wv[t, cols["*"]] != 0.0:
            terms.append(gr.mul(gr.getitem(w, (t, cols["?"])), p_rep))
            terms.append(gr.mul(gr.getitem(w, (t, cols["*"])), p_rep))
        if dense or wv[t, cols["+"]] != 0.0:
            terms.append(gr.mul(gr.getitem(w, (t, cols["+"])), p_plus))
        K = T - t - 1
        if K > 0 and not dense:
            if not uv[t, t + 2 : T + 1].any():
                K = 0
            elif wv[t, cols["."]] == 0.0 and wv[t, cols["&"]] == 0.0 and wv[t, cols["|"]] == 0.0:
                K = 0
        if K > 0:
            e_right = gr.stack([E[tp] for tp in range(t + 2, T + 1)])
            f1 = gr.getitem(f, (0,))
            fr = gr.getitem(f, (slice(1, K + 1),))
            u_row = gr.getitem(u, (t, slice(t + 2, T + 1)))
            p_dot = gr.sigma01(
                gr.add(
                    gr.minimum(gr.minimum(f1, E[t + 1]), e_right),
                    gr.minimum(gr.minimum(fr, e_right), E[t + 1]),
                )
            )
            p_amp = gr.minimum(E[t + 1], e_right)
            p_bar = gr.sigma01(
                gr.add(gr.minimum(f1, E[t + 1]), gr.minimum(fr, e_right))
            )
            for op, parr in ((".", p_dot), ("&", p_amp), ("|", p_bar)):
                wu = gr.mul(u_row, gr.getitem(w, (t, cols[op])))
                terms.append(gr.sum(gr.mul(parr, wu)))
                if capture is not None:
                    for k in range(K):
                        capture["p"][(t, op, t + 2 + k, 1, 0)] = float(_val(parr)[k])
        E[t] = gr.add_n(terms) if terms else 0.0
        if capture is not None:
            fv = _val(f)
            for k in range(T - t):
                capture["flags"][(t, t + 1 + k, 1, 0)] = float(fv[k])
            capture["flags"][(t, None, 1, 0)] = float(fv[T - t])
            capture["g"][(t, 1, 0)] = float(_val(E[t]))
            capture["p"][(t, "?", 1, 0)] = float(_val(p_rep))
            capture["p"][(t, "*", 1, 0)] = float(_val(p_rep))
            capture["p"][(t, "+", 1, 0)] = float(_val(p_plus))
    return E, feps


def _group_forward(gr: Graph, w, u, rho, stacks, E, T: int, ns: int,
                   strings: list[str], sigma: Alphabet, capture=None):
    """Soft table over all substrings of a batch of equal-length strings;
    returns the final match estimates, one per string."""
    cols = _op_cols(ns)
    n = len(strings[0])
    batch = len(strings)
    rho1 = rho[1]
    if n == 0:
        guard = gr.max_reduce(gr.sigma01(gr.sub(np.zeros((batch, ns)), rho1)), axis=1)
        root = E[1]
    else:
        layout = _layout(n)
        presence, count1, full = _string_consts(strings, sigma, layout)
        ncell = layout.ncell
        zeros_cells = np.zeros((batch, ncell))
        G: list = [None] * (T + 2)
        G[T + 1] = zeros_cells

        def cap_cells(store, key_fn, arr):
            vals = _val(arr)
            for cid, (L, i0) in enumerate(layout.cells):
                store[key_fn(i0 + 1, i0 + L)] = float(vals[0, cid])

        wv = np.asarray(_val(w))
        uv = np.asarray(_val(u))
        for t in range(T, 0, -1):
            dense = gr.record or capture is not None
            use_q = dense or wv[t, cols["?"]] != 0.0
            use_rep = dense or wv[t, cols["*"]] != 0.0 or wv[t, cols["+"]] != 0.0
            K = T - t - 1
            if K > 0 and not dense:
                if not uv[t, t + 2 : T + 1].any():
                    K = 0
                elif wv[t, cols["."]] == 0.0 and wv[t, cols["&"]] == 0.0 and wv[t, cols["|"]] == 0.0:
                    K = 0
            g_next = G[t + 1]
            w_sym = gr.getitem(w, (t, slice(0, ns)))
            sym_term = gr.sum(gr.mul(count1, w_sym), axis=2)
            if use_q or use_rep or K > 0:
                flags_t = gr.flag_agreement(rho[t], stacks[t], presence)  # (B, ncell, T-t+1)
                eps_col = gr.getitem(flags_t, (slice(None), slice(None), T - t))
            else:
                flags_t = eps_col = None
            if use_q:
                p_rep = gr.sigma01(gr.add(eps_col, g_next))  # the ?-rule everywhere
                bulk = gr.add(sym_term, gr.mul(gr.getitem(w, (t, cols["?"])), p_rep))
            else:
                p_rep = None
                bulk = sym_term
            if K > 0:
                gs = gr.stack([G[tp] for tp in range(t + 2, T + 1)], axis=2)  # (B,ncell,K)
                f1 = gr.getitem(flags_t, (slice(None), slice(None), 0))
                fr = gr.getitem(flags_t, (slice(None), slice(None), slice(1, K + 1)))
                e_right = gr.stack([E[tp] for tp in range(t + 2, T + 1)])
                lmin = gr.minimum(f1, g_next)
                lmin3 = gr.reshape(lmin, (batch, ncell, 1))
                g_next3 = gr.reshape(g_next, (batch, ncell, 1))
                rs = gr.minimum(fr, gs)
                p_amp = gr.minimum(g_next3, gs)
                p_bar = gr.sigma01(gr.add(lmin3, rs))
                boundary = gr.add(gr.minimum(lmin3, e_right), gr.minimum(rs, E[t + 1]))
                pieces = [np.zeros((batch, n, K))]  # length-1 cells have no split
                for L in range(2, n + 1):
                    li = layout.left_idx[L]
                    ri = layout.right_idx[L]
                    lg = gr.getitem(lmin, (slice(None), li))  # (B, L-1, cols)
                    rg = gr.getitem(rs, (slice(None), ri, slice(None)))  # (B, L-1, cols, K)
                    m = gr.minimum(gr.reshape(lg, (batch, L - 1, n - L + 1, 1)), rg)
                    pieces.append(gr.max_reduce(m, axis=1))
                dsplit = gr.concat(pieces, axis=1)
                p_dot = gr.sigma01(gr.add(boundary, dsplit))
                u_row = gr.getitem(u, (t, slice(t + 2, T + 1)))
                for op, parr in ((".", p_dot), ("&", p_amp), ("|", p_bar)):
                    wu = gr.mul(u_row, gr.getitem(w, (t, cols[op])))
                    bulk = gr.add(bulk, gr.sum(gr.mul(parr, wu), axis=2))
                    if capture is not None:
                        vals = _val(parr)
                        for cid, (L, i0) in enumerate(layout.cells):
                            for k in range(K):
                                capture["p"][(t, op, t + 2 + k, i0 + 1, i0 + L)] = float(vals[0, cid, k])
            if not use_rep:
                G[t] = bulk
                continue
            # * and + need their own row at shorter substrings: go length by length.
            w_star = gr.getitem(w, (t, cols["*"]))
            w_plus = gr.getitem(w, (t, cols["+"]))
            g_t = zeros_cells
            for L in range(1, n + 1):
                sl = (slice(None), slice(layout.offsets[L], layout.offsets[L] + n - L + 1))
                g_next_l = gr.getitem(g_next, sl) if isinstance(g_next, Node) else g_next[sl]
                eps_l = gr.getitem(eps_col, sl)
                if L >= 2:
                    li = layout.left_idx[L]
                    ri = layout.right_idx[L]
                    lown = gr.getitem(g_t, (slice(None), li))
                    rnext = gr.getitem(g_next, (slice(None), ri)) if isinstance(g_next, Node) else g_next[:, ri]
                    split = gr.max_reduce(gr.minimum(lown, rnext), axis=1)
                    p_star = gr.sigma01(gr.add_n([eps_l, g_next_l, split]))
                    p_plus = gr.sigma01(gr.add(g_next_l, split))
                else:
                    p_star = gr.sigma01(gr.add(eps_l, g_next_l))
                    p_plus = gr.sigma01(g_next_l)
                g_l = gr.add_n([
                    gr.getitem(bulk, sl),
                    gr.mul(w_star, p_star),
                    gr.mul(w_plus, p_plus),
                ])
                g_t = gr.index_update(g_t, sl, g_l)
                if capture is not None:
                    ps, pp = _val(p_star), _val(p_plus)
                    for i0 in range(n - L + 1):
                        capture["p"][(t, "*", i0 + 1, i0 + L)] = float(ps[0, i0])
                        capture["p"][(t, "+", i0 + 1, i0 + L)] = float(pp[0, i0])
            G[t] = g_t
            if capture is not None:
                cap_cells(capture["g"], lambda i, j, tt=t: (tt, i, j), g_t)
                pv = _val(p_rep)
                fv = _val(flags_t)
                for cid, (L, i0) in enumerate(layout.cells):
                    i, j = i0 + 1, i0 + L
                    capture["p"][(t, "?", i, j)] = float(pv[0, cid])
                    for k in range(T - t):
                        capture["flags"][(t, t + 1 + k, i, j)] = float(fv[0, cid, k])
                    capture["flags"][(t, None, i, j)] = float(fv[0, cid, T - t])
        guard = gr.max_reduce(gr.sigma01(gr.sub(full, rho1)), axis=1)
        root = gr.getitem(G[1], (slice(None), layout.ncell - 1))
    y_hat = gr.sigma01(gr.sub(root, guard))
    return y_hat


def _forward_strings(gr: Graph, theta: Encoding, strings: list[str], capture=None):
    """rho/eps passes plus per-string match estimates (one graph)."""
    T, ns = theta.T, len(theta.alphabet)
    w = gr.leaf(theta.w) if gr.record else theta.w
    u = gr.leaf(theta.u) if gr.record else theta.u
    rho = _rho_pass(gr, w, u, T, ns)
    stacks = _flag_stacks(gr, rho, T, ns)
    E, feps = _eps_pass(gr, w, u, rho, stacks, T, ns, capture)
    groups: dict[int, list[int]] = {}
    for idx, s in enumerate(strings):
        groups.setdefault(len(s), []).append(idx)
    y_hats = [None] * len(strings)
    for n in sorted(groups):
        idxs = groups[n]
        yh = _group_forward(gr, w, u, rho, stacks, E, T, ns,
                            [strings[i] for i in idxs], theta.alphabet, capture)
        for pos, idx in enumerate(idxs):
            y_hats[idx] = (yh, pos)
    return w, u, rho, y_hats


def sigma01(x, mode: str = "exact", slope: float = 0.01):
    """Box clamp min(max(x, 0), 1); leaky mode slopes outside the box."""
    value = Graph(mode, slope)._sigma01_value(np.asarray(x, dtype=float))
    return value if np.ndim(x) else float(value)


def compute_rho(theta: Encoding, mode: str = "exact", slope: float = 0.01) -> np.ndarray:
    """Soft symbol-occurrence probabilities, shape (T+1, |alphabet|) with
    row 0 unused."""
    gr = Graph(mode, slope, record=False)
    rho = _rho_pass(gr, theta.w, theta.u, theta.T, len(theta.alphabet))
    out = np.zeros((theta.T + 1, len(theta.alphabet)))
    for t in range(1, theta.T + 1):
        out[t] = rho[t]
    return out


def compute_flag_soft(theta: Encoding, s: str, i: int, j: int, t: int, t_prime: int | None,
                      mode: str = "exact", slope: float = 0.01) -> float:
    """Soft projection-agreement flag between slot t and slot t_prime for
    the substring s[i..j] (j = i-1 selects epsilon; t_prime None compares
    against the empty alphabet, the epsilon-projection indicator)."""
    gr = Graph(mode, slope, record=False)
    rho = compute_rho(theta, mode, slope)
    sub = "" if j == i - 1 else s[i - 1 : j]
    mvec = np.array([1.0 if a in sub else 0.0 for a in theta.alphabet])
    row = np.zeros(len(theta.alphabet)) if t_prime is None or t_prime > theta.T else rho[t_prime]
    x = mvec + rho[t] - row - 1.0
    return float(1.0 - gr._sigma01_value(gr._sigma01_value(x).sum()))


def forward(theta: Encoding, s: str, mode: str = "exact", slope: float = 0.01,
            want_trace: bool = False):
    """Evaluate the network on one string.

    Returns (y_hat, trace); trace is None unless requested.
    """
    gr = Graph(mode, slope, record=False)
    capture = {"flags": {}, "g": {}, "p": {}} if want_trace else None
    _, _, rho, y_hats = _forward_strings(gr, theta, [s], capture)
    arr, pos = y_hats[0]
    y_hat = float(_val(arr)[pos])
    if not want_trace:
        return y_hat, None
    rho_table = np.zeros((theta.T + 1, len(theta.alphabet)))
    for t in range(1, theta.T + 1):
        rho_table[t] = _val(rho[t])
    trace = ForwardTrace(rho=rho_table, flags=capture["flags"], g=capture["g"],
                         p=capture["p"], y_hat=y_hat)
    return y_hat, trace


def forward_batch(theta: Encoding, strings, mode: str = "exact", slope: float = 0.01) -> np.ndarray:
    """Match estimates for many strings (no gradients)."""
    strings = list(strings)
    if not strings:
        return np.zeros(0)
    gr = Graph(mode, slope, record=False)
    _, _, _, y_hats = _forward_strings(gr, theta, strings)
    return np.array([float(_val(arr)[pos]) for arr, pos in y_hats])


def predict(theta: Encoding, strings, threshold: float = 0.5) -> np.ndarray:
    """Thresholded network labels (exact clamps)."""
    return forward_batch(theta, strings, mode="exact") >= threshold


def loss(y_hat: float, y) -> float:
    """Squared error halved."""
    return 0.5 * float(y_hat - y) ** 2


def onehot_loss(x) -> float:
    """Mean_i (1-x_i) x_i + (1 - sum_i x_i)^2; zero exactly on one-hot
    vectors."""
    x = np.asarray(x, dtype=float)
    mean = float(((1.0 - x) * x).mean()) if x.size else 0.0
    return mean + float(1.0 - x.sum()) ** 2


def _traced_onehot(gr: Graph, vec):
    n = np.size(_val(vec))
    mean = gr.mean(gr.mul(gr.sub(1.0, vec), vec)) if n else 0.0
    gap = gr.sub(1.0, gr.sum(vec))
    return gr.add(mean, gr.mul(gap, gap))


def _traced_regularizers(gr: Graph, w, u, T: int, ns: int):
    """The seven per-condition penalties; each is zero exactly on faithful
    encodings and positive on encodings violating its condition."""
    cols = _op_cols(ns)
    terms = []
    # 1: w rows one-hot.
    terms.append(gr.mean(gr.stack([_traced_onehot(gr, gr.getitem(w, (t, slice(0, ns + 7))))
                                   for t in range(1, T + 1)])))
    # 2: u rows one-hot or all-zero.  The plain one-hot penalty would charge
    # valid all-zero rows, so the gap term is weighted by the row's mass.
    rows = []
    for t in range(1, T + 1):
        if t + 2 > T:
            rows.append(0.0)
            continue
        row = gr.getitem(u, (t, slice(t + 2, T + 1)))
        mean = gr.mean(gr.mul(gr.sub(1.0, row), row))
        total = gr.sum(row)
        gap = gr.sub(1.0, total)
        rows.append(gr.add(mean, gr.mul(total, gr.mul(gap, gap))))
    terms.append(gr.mean(gr.stack(rows)))
    # 3: right-child mass plus symbol/unary/none mass is one.
    rows = []
    for t in range(1, T + 1):
        pieces = [gr.getitem(u, (t, slice(t + 2, T + 1)))] if t + 2 <= T else []
        pieces.append(gr.getitem(w, (t, slice(0, ns))))
        pieces.append(gr.getitem(w, (t, slice(cols["?"], cols["+"] + 1))))
        pieces.append(gr.reshape(gr.getitem(w, (t, cols["none"])), (1,)))
        rows.append(_traced_onehot(gr, gr.concat(pieces)))
    terms.append(gr.mean(gr.stack(rows)))
    # 4: none mass never decreases.
    none_col = gr.getitem(w, (slice(1, T + 1), cols["none"]))
    steps = gr.sub(gr.getitem(none_col, (slice(0, T - 1),)), gr.getitem(none_col, (slice(1, T),)))
    terms.append(gr.mean(gr.relu(steps)) if T > 1 else 0.0)
    # 5: each vertex after the first is a child exactly once, or none.
    rows = []
    for t in range(2, T + 1):
        pieces = [gr.getitem(w, (t - 1, slice(cols["?"], cols["none"]))),
                  gr.getitem(u, (slice(1, max(t - 1, 1)), t)),
                  gr.reshape(gr.getitem(w, (t, cols["none"])), (1,))]
        rows.append(_traced_onehot(gr, gr.concat(pieces)))
    terms.append(gr.mean(gr.stack(rows)) if rows else 0.0)
    # 6: right-child edges respect the preorder numbering.
    rows = []
    for t in range(3, T + 1):
        inner = []
        for p in range(1, t - 1):
            span = t - 1 - p
            later = gr.sum(gr.getitem(u, (slice(p + 1, t), slice(t + 1, T + 1)))) if t + 1 <= T else 0.0
            lhs = gr.add(gr.mul(float(span), gr.getitem(u, (p, t))), later)
            inner.append(gr.relu(gr.sub(lhs, float(span))))
        rows.append(gr.mean(gr.stack(inner)))
    terms.append(gr.mean(gr.stack(rows)) if rows else 0.0)
    # 7: each symbol used at most once.
    sums = gr.sum(gr.getitem(w, (slice(1, T + 1), slice(0, ns))), axis=0)
    terms.append(gr.mean(gr.relu(gr.sub(sums, 1.0))))
    return terms


def regularizers(theta: Encoding) -> np.ndarray:
    """The seven faithfulness penalties of an encoding."""
    gr = Graph("exact", record=False)
    terms = _traced_regularizers(gr, theta.w, theta.u, theta.T, len(theta.alphabet))
    return np.array([float(_val(t)) for t in terms])


def batch_gradients(theta: Encoding, pairs, mode: str = "leaky", slope: float = 0.01,
                    reg_lambda: float = 0.0):
    """Objective value and (dw, du) for a batch of (string, label) pairs.

    The objective is the mean of the halved squared errors plus
    reg_lambda times the summed penalties; samples are reduced in a fixed
    order so results are reproducible.
    """
    pairs = list(pairs)
    n_total = len(pairs)
    dw = np.zeros_like(theta.w)
    du = np.zeros_like(theta.u)
    objective = 0.0
    gr = Graph(mode, slope, record=True)
    strings = [s for s, _ in pairs]
    labels = np.array([float(y) for _, y in pairs])
    w, u, _, y_hats = _forward_strings(gr, theta, strings)
    per_string = []
    for idx in range(n_total):
        arr, pos = y_hats[idx]
        per_string.append(gr.getitem(arr, (pos,)))
    stacked = gr.stack(per_string)
    diff = gr.sub(stacked, labels)
    sq = gr.mul(diff, diff)
    total = gr.sum(sq)
    objective += 0.5 * float(_val(total)) / n_total
    gr.backward(total, seed=0.5 / n_total)
    if w.grad is not None:
        dw += w.grad
    if u.grad is not None:
        du += u.grad
    if reg_lambda > 0.0:
        gr2 = Graph("exact", slope, record=True)
        w2 = gr2.leaf(theta.w)
        u2 = gr2.leaf(theta.u)
        terms = _traced_regularizers(gr2, w2, u2, theta.T, len(theta.alphabet))
        total2 = gr2.add_n([t for t in terms if isinstance(t, Node)])
        objective += reg_lambda * float(_val(total2))
        gr2.backward(total2, seed=reg_lambda)
        if w2.grad is not None:
            dw += w2.grad
        if u2.grad is not None:
            du += u2.grad
    return objective, dw, du


def backward(theta: Encoding, s: str, y, mode: str = "leaky", slope: float = 0.01):
    """Gradients of loss(forward(theta, s), y) with respect to (w, u)."""
    _, dw, du = batch_gradients(theta, [(s, y)], mode=mode, slope=slope)
    return dw, du


@dataclass
class TrainResult:
    encoding: Encoding
    history: list
    best_epoch: int
    best_val_accuracy: float
    final_encoding: Encoding | None = None


def _as_pairs(data):
    if hasattr(data, "entries"):
        return [(s, 1 if label else 0) for s, label in data.entries]
    return [(s, 1 if y else 0) for s, y in data]


def train(train_data, val_data, config: TrainConfig, alphabet: Alphabet | None = None,
          log_path=None, time_limit: float | None = None,
          init: Encoding | None = None) -> TrainResult:
    """Mini-batch projected AdamW on the match network.

    Returns the checkpoint with the best validation accuracy of the
    thresholded network (earlier epoch wins ties).  Deterministic for a
    fixed seed and single-threaded execution.  Pass init to warm-start
    from an earlier checkpoint instead of the random initialization.
    """
    if alphabet is None:
        if not hasattr(train_data, "alphabet"):
            raise ValueError("pass alphabet= when train_data is a plain sequence")
        alphabet = train_data.alphabet
    train_pairs = _as_pairs(train_data)
    val_pairs = _as_pairs(val_data)
    rng = np.random.default_rng(config.seed)
    theta = init.copy() if init is not None else random_encoding(alphabet, config.T, rng)
    m_w = np.zeros_like(theta.w)
    v_w = np.zeros_like(theta.w)
    m_u = np.zeros_like(theta.u)
    v_u = np.zeros_like(theta.u)
    step = 0
    best = theta.copy()
    best_val = -1.0
    best_epoch = 0
    history = []
    started = time.monotonic()

    def val_accuracy(enc: Encoding) -> float:
        if not val_pairs:
            return 0.0
        preds = predict(enc, [s for s, _ in val_pairs], config.eval_threshold)
        truth = np.array([bool(y) for _, y in val_pairs])
        return float((preds == truth).mean())

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_pairs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_pairs[i] for i in order[start : start + config.batch_size]]
            obj, dw, du = batch_gradients(theta, batch, mode="leaky",
                                          slope=config.leaky_slope,
                                          reg_lambda=config.reg_lambda)
            epoch_loss += obj
            n_batches += 1
            step += 1
            for param, grad, m, v in ((theta.w, dw, m_w, v_w), (theta.u, du, m_u, v_u)):
                m *= ADAM_BETA1
                m += (1 - ADAM_BETA1) * grad
                v *= ADAM_BETA2
                v += (1 - ADAM_BETA2) * grad * grad
                m_hat = m / (1 - ADAM_BETA1 ** step)
                v_hat = v / (1 - ADAM_BETA2 ** step)
                param -= config.learning_rate * (
                    m_hat / (np.sqrt(v_hat) + ADAM_EPS) + config.weight_decay * param
                )
            np.clip(theta.w, 0.0, 1.0, out=theta.w)
            np.clip(theta.u, 0.0, 1.0, out=theta.u)
            theta.w[0, :] = 0.0
            theta.u[~theta.u_valid_mask()] = 0.0
        acc = val_accuracy(theta)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / max(n_batches, 1),
            "val_accuracy": acc,
        })
        if acc > best_val:
            best = theta.copy()
            best_val = acc
            best_epoch = epoch
        if time_limit is not None and time.monotonic() - started > time_limit:
            break
    if log_path is not None:
        with Path(log_path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_accuracy"])
            for row in history:
                writer.writerow([row["epoch"], f"{row['train_loss']:.12g}", f"{row['val_accuracy']:.6f}"])
    if config.epochs == 0:
        best = theta.copy()
        best_val = val_accuracy(theta)
    return TrainResult(best, history, best_epoch, best_val, theta.copy())
