import numpy as np
import pytest

from soire.core import Alphabet, parse_prefix
from soire.datagen import make_dataset
from soire.diffnet import (
    TrainConfig,
    backward,
    batch_gradients,
    compute_flag_soft,
    compute_rho,
    forward,
    forward_batch,
    loss,
    onehot_loss,
    predict,
    regularizers,
    sigma01,
    train,
)
from soire.encoding import Encoding, encode, is_faithful, project, random_encoding
from soire.matcher import flag, match, match_table

from helpers import random_soire, random_string, reference_forward

ABC = Alphabet("abc")
ABCD = Alphabet("abcd")
R_RUNNING = parse_prefix(".&ab*c", ABC)


def faithful_running(T=6, sigma=ABC):
    return encode(parse_prefix(".&ab*c", sigma), T)


def test_sigma01_modes():
    assert sigma01(0.5) == 0.5
    assert sigma01(-2.0) == 0.0
    assert sigma01(3.0) == 1.0
    assert sigma01(-2.0, mode="leaky") == pytest.approx(-0.02)
    assert sigma01(3.0, mode="leaky") == pytest.approx(1.02)
    assert sigma01(0.5, mode="leaky") == 0.5


def test_compute_rho_matches_alpha_indicator():
    enc = faithful_running()
    rho = compute_rho(enc)
    assert rho[1].tolist() == [1.0, 1.0, 1.0]
    assert rho[2].tolist() == [1.0, 1.0, 0.0]
    assert rho[3].tolist() == [1.0, 0.0, 0.0]
    assert rho[6].tolist() == [0.0, 0.0, 1.0]
    leaf = Encoding.zeros(ABC, 1)
    leaf.w[1, leaf.column("a")] = 1.0
    rho2 = compute_rho(leaf)
    assert rho2[1].tolist() == [1.0, 0.0, 0.0]


def test_compute_rho_random_faithful():
    rng = np.random.default_rng(0)
    for _ in range(30):
        r = random_soire(rng, "abcd")
        enc = encode(r, r.size + int(rng.integers(0, 3)))
        rho = compute_rho(enc)
        for t in range(1, r.size + 1):
            want = [1.0 if a in r.alpha(t) else 0.0 for a in "abcd"]
            assert rho[t].tolist() == want


def test_compute_flag_soft_examples():
    enc = faithful_running()
    assert compute_flag_soft(enc, "bac", 1, 2, 1, 2) == 1.0
    assert compute_flag_soft(enc, "bac", 1, 0, 1, 2) == 1.0  # empty substring
    assert compute_flag_soft(enc, "bac", 3, 3, 1, 2) == 0.0
    # On faithful encodings the soft flag equals the boolean indicator for
    # parent/child vertex pairs (the only pairs the table rules consult).
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 40:
        r = random_soire(rng, "abc")
        enc = encode(r, r.size)
        s = random_string(rng, "abc", 5)
        inner = [t for t in range(1, r.size + 1) if r.label(t) in "?*+.&|"]
        if not s or not inner:
            continue
        i = int(rng.integers(1, len(s) + 1))
        j = int(rng.integers(i, len(s) + 1))
        t = inner[int(rng.integers(len(inner)))]
        tp = t + 1 if r.label(t) in "?*+" or rng.random() < 0.5 else r.eta(t)
        assert compute_flag_soft(enc, s, i, j, t, tp) == float(flag(r, s, i, j, t, tp))
        checked += 1


def test_forward_examples():
    sig = ABCD
    enc = faithful_running(8, sig)
    assert forward(enc, "bac")[0] == 1.0
    assert forward(enc, "dbac")[0] == 0.0  # the missing-symbol subtraction fires
    y, trace = forward(enc, "", want_trace=True)
    assert y == trace.g[(1, 1, 0)]  # no guard subtraction on the empty string
    assert y == 0.0


def test_forward_trace_contents():
    enc = faithful_running()
    y, trace = forward(enc, "bac", want_trace=True)
    assert y == 1.0 and trace.y_hat == 1.0
    assert trace.rho[1].tolist() == [1.0, 1.0, 1.0]
    # trace g agrees with the boolean table on the same string
    table = match_table(R_RUNNING, "bac")
    for t in range(1, 7):
        for i in range(1, 4):
            for j in range(i, 4):
                assert trace.g[(t, i, j)] == float(table.value(t, i, j)), (t, i, j)
        assert trace.g[(t, 1, 0)] == float(table.value(t, 1, 0))
    # flags in the trace agree with the boolean flags
    assert trace.flags[(1, 2, 1, 2)] == 1.0
    assert trace.flags[(1, 2, 3, 3)] == 0.0


def test_faithful_forward_exactness_randomized():
    rng = np.random.default_rng(2)
    agree = 0
    for _ in range(200):
        r = random_soire(rng, "abcde")
        enc = encode(r, r.size + int(rng.integers(0, 4)))
        s = random_string(rng, "abcde", 7)
        y = forward_batch(enc, [s])[0]
        assert y in (0.0, 1.0)
        assert bool(y) == match(r, s)
        agree += 1
    assert agree == 200


def test_forward_matches_scalar_reference():
    # the vectorized engine against a literal cell-by-cell transcription
    rng = np.random.default_rng(3)
    for mode in ("exact", "leaky"):
        for _ in range(25):
            T = int(rng.integers(2, 6))
            enc = random_encoding(ABC, T, rng)
            s = random_string(rng, "abc", 4)
            got = forward_batch(enc, [s], mode=mode)[0]
            want = reference_forward(enc, s, mode=mode)
            assert got == pytest.approx(want, abs=1e-12), (mode, T, s)


def test_loss_examples():
    assert loss(1.0, 1) == 0.0
    assert loss(0.0, 1) == 0.5
    assert loss(0.4, 0) == pytest.approx(0.08)


def test_onehot_loss_examples():
    assert onehot_loss([1.0, 0.0, 0.0]) == 0.0
    assert onehot_loss([0.5, 0.5]) == pytest.approx(0.25)
    assert onehot_loss([0.0, 0.0]) == 1.0


def test_regularizers_zero_on_faithful():
    rng = np.random.default_rng(4)
    for _ in range(60):
        r = random_soire(rng, "abc")
        enc = encode(r, r.size + int(rng.integers(0, 4)))
        assert regularizers(enc).tolist() == [0.0] * 7


def test_regularizers_fire_per_condition():
    T = 8
    enc = faithful_running(T)

    turns = []
    bad = enc.copy(); bad.w[3] *= 0.0
    turns.append((1, bad))
    bad = enc.copy(); bad.u[1, 5] = 0.4; bad.u[1, 6] = 0.4
    turns.append((2, bad))
    bad = enc.copy(); bad.u[1, 5] = 0.0
    turns.append((3, bad))
    bad = enc.copy()
    bad.w[7] *= 0.0; bad.w[7, bad.column("none")] = 1.0
    bad.w[8] *= 0.0; bad.w[8, bad.column("none")] = 0.7; bad.w[8, bad.column("c")] = 0.3
    turns.append((4, bad))
    bad = enc.copy(); bad.u[2, 4] = 0.0; bad.u[2, 6] = 1.0
    turns.append((5, bad))
    bad = Encoding.zeros(ABC, 5)
    bad.w[1, bad.column(".")] = 1.0
    bad.w[2, bad.column("&")] = 1.0
    bad.w[3, bad.column("a")] = 1.0
    bad.w[4, bad.column("b")] = 1.0
    bad.w[5, bad.column("c")] = 1.0
    bad.u[1, 4] = 1.0
    bad.u[2, 5] = 1.0
    turns.append((6, bad))
    bad = enc.copy(); bad.w[7, bad.column("a")] = 1.0; bad.w[7, bad.column("none")] = 0.0
    turns.append((7, bad))

    for condition, theta in turns:
        terms = regularizers(theta)
        assert terms[condition - 1] > 0.0, condition


def test_regularizer_condition4_value():
    # one decreasing none step of 0.3 contributes 0.3 / (T-1)
    T = 6
    enc = faithful_running(T)
    bad = enc.copy()
    bad.w[3, bad.column("none")] = 0.3  # vertex 3 gains none mass; vertex 4 has none
    terms = regularizers(bad)
    assert terms[3] == pytest.approx(0.3 / (T - 1))


def test_regularizer_all_zero_term1():
    enc = Encoding.zeros(ABC, 4)
    assert regularizers(enc)[0] == 1.0


def test_backward_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-4
    agree = total = 0
    for _ in range(6):
        T = 6
        theta = random_encoding(ABC, T, rng)
        # nudge off the row-normalized manifold, stay inside the box
        theta.w[1:] = 0.1 + 0.8 * rng.uniform(size=theta.w[1:].shape)
        mask = theta.u_valid_mask()
        theta.u[mask] = 0.1 + 0.8 * rng.uniform(size=int(mask.sum()))
        s = random_string(rng, "abc", 5)
        y = int(rng.integers(2))
        dw, du = backward(theta, s, y, mode="leaky")

        def leaky_loss(enc):
            yh = forward_batch(enc, [s], mode="leaky")[0]
            return 0.5 * (yh - y) ** 2

        coords = [("w", t, c) for t in range(1, T + 1) for c in range(theta.n_columns)]
        coords += [("u", t, tp) for t in range(1, T + 1) for tp in range(T + 1) if mask[t, tp]]
        for k in rng.choice(len(coords), size=25, replace=False):
            kind, a, b = coords[int(k)]
            plus, minus = theta.copy(), theta.copy()
            (plus.w if kind == "w" else plus.u)[a, b] += h
            (minus.w if kind == "w" else minus.u)[a, b] -= h
            fd = (leaky_loss(plus) - leaky_loss(minus)) / (2 * h)
            an = (dw if kind == "w" else du)[a, b]
            total += 1
            if abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-8):
                agree += 1
    assert agree / total >= 0.95


def test_backward_zero_cases():
    enc = faithful_running()
    # perfect prediction: all gradients vanish
    dw, du = backward(enc, "bac", 1, mode="exact")
    assert not dw.any() and not du.any()
    # a coordinate with no influence: u far beyond any mass
    rng = np.random.default_rng(8)
    theta = random_encoding(ABC, 6, rng)
    theta.w[5:] = 0.0
    theta.w[5, theta.column("none")] = 1.0
    theta.w[6, theta.column("none")] = 1.0
    theta.u[4, 6] = 0.0
    dw, du = backward(theta, "ab", 1, mode="leaky")
    assert du[4, 6] == 0.0


def test_regularizer_gradients_finite_differences():
    rng = np.random.default_rng(9)
    theta = random_encoding(ABC, 6, rng)
    theta.w[1:] = 0.2 + 0.6 * rng.uniform(size=theta.w[1:].shape)
    mask = theta.u_valid_mask()
    theta.u[mask] = 0.2 + 0.6 * rng.uniform(size=int(mask.sum()))
    lam = 0.7
    obj0, dw, du = batch_gradients(theta, [("ab", 1)], mode="leaky", reg_lambda=lam)
    h = 1e-6
    checked = 0
    for t in range(1, 7):
        for c in (0, theta.column("?"), theta.column("none")):
            plus, minus = theta.copy(), theta.copy()
            plus.w[t, c] += h
            minus.w[t, c] -= h

            def objective(enc):
                yh = forward_batch(enc, ["ab"], mode="leaky")[0]
                return 0.5 * (yh - 1) ** 2 + lam * regularizers(enc).sum()

            fd = (objective(plus) - objective(minus)) / (2 * h)
            assert dw[t, c] == pytest.approx(fd, abs=1e-4)
            checked += 1
    assert checked == 18


def test_train_zero_epochs_returns_init():
    sig = Alphabet("ab")
    cfg = TrainConfig(T=4, epochs=0, seed=3)
    pairs = [("a", 1), ("b", 0)]
    res = train(pairs, pairs, cfg, alphabet=sig)
    rng = np.random.default_rng(3)
    init = random_encoding(sig, 4, rng)
    assert np.array_equal(res.encoding.w, init.w)
    assert np.array_equal(res.encoding.u, init.u)


def test_train_learns_tiny_language():
    sig = Alphabet("ab")
    r = parse_prefix(".?ab", sig)  # a?b
    import itertools

    strings = [""]
    for n in range(1, 5):
        strings += ["".join(p) for p in itertools.product("ab", repeat=n)]
    pairs = [(s, int(match(r, s))) for s in strings]
    cfg = TrainConfig(T=6, learning_rate=0.1, batch_size=16, epochs=30, seed=0)
    res = train(pairs, pairs, cfg, alphabet=sig)
    assert res.best_val_accuracy >= 0.95


def test_train_deterministic(tmp_path):
    sig = Alphabet("ab")
    pairs = [("ab", 1), ("b", 1), ("a", 0), ("ba", 0), ("abab", 1), ("aa", 0)]
    cfg = TrainConfig(T=5, learning_rate=0.1, batch_size=4, epochs=5, seed=12)
    res1 = train(pairs, pairs, cfg, alphabet=sig, log_path=tmp_path / "log1.csv")
    res2 = train(pairs, pairs, cfg, alphabet=sig, log_path=tmp_path / "log2.csv")
    assert np.array_equal(res1.encoding.w, res2.encoding.w)
    assert np.array_equal(res1.encoding.u, res2.encoding.u)
    assert (tmp_path / "log1.csv").read_bytes() == (tmp_path / "log2.csv").read_bytes()


def test_predict_threshold():
    enc = faithful_running()
    out = predict(enc, ["bac", "cab", ""])
    assert out.tolist() == [True, False, False]
