import numpy as np
import pytest
from hypothesis import given, strategies as st

from sctc.metric_chain import (
    ChainError,
    enumerate_supports,
    extrinsic_prob,
    steady_state,
    transfer,
    transfer_function,
    transition_matrix,
)
from sctc.trellis import trellis_from_string

from oracles import GEN_4STATE, SUPPORTS_4STATE, GEN_3OUT, matrix_4state, closed_form_3out


def bfs_oracle(tr, direction):
    """Closure of {zero state} computed with boolean state vectors."""
    S, n = tr.num_states, tr.n
    start = np.zeros(S, dtype=bool)
    start[0] = True
    seen = {start.tobytes(): start}
    frontier = [start]
    while frontier:
        nxt = []
        for vec in frontier:
            for pattern in range(1 << n):
                out = np.zeros(S, dtype=bool)
                for s, _u, t, o in tr.branches():
                    a, b = (s, t) if direction == "forward" else (t, s)
                    if vec[a] and not (o & pattern):
                        out[b] = True
                key = out.tobytes()
                if key not in seen:
                    seen[key] = out
                    nxt.append(out)
        frontier = nxt
    return {int(sum(1 << i for i in np.nonzero(v)[0])) for v in seen.values()}


def test_4state_supports_and_matrix():
    tr = trellis_from_string(GEN_4STATE)
    for direction in ("forward", "backward"):
        space = enumerate_supports(tr, direction)
        assert sorted(space.supports) == sorted(SUPPORTS_4STATE)
    space = enumerate_supports(tr, "forward")
    order = [space.index_of(s) for s in SUPPORTS_4STATE]
    for p in (0.5, 0.1, 0.37, 0.9):
        M = transition_matrix(space, tr, [p, p, p])[np.ix_(order, order)]
        np.testing.assert_allclose(M.T, matrix_4state(p), atol=1e-12)


@pytest.mark.parametrize("p", np.linspace(0.02, 0.98, 20))
def test_3output_closed_form(p):
    tr = trellis_from_string(*GEN_3OUT)
    np.testing.assert_allclose(transfer(tr, np.full(3, p)), closed_form_3out(p), atol=1e-10)


@pytest.mark.parametrize(
    "text,notation,size",
    [("1,5/7", "octal", 5), ("1,15/13", "octal", 16), ("1,1/3", "octal", 2), (GEN_4STATE, "octal", 5),
     ("1 0 1/11; 0 1 01/11", "binary", 2), ("1 0 0 1/7; 0 1 0 5/7; 0 0 1 3/7", "octal", None)],
)
def test_supports_match_bfs_oracle(text, notation, size):
    tr = trellis_from_string(text, notation)
    for direction in ("forward", "backward"):
        space = enumerate_supports(tr, direction)
        assert set(space.supports) == bfs_oracle(tr, direction)
        assert space.supports[0] == 1
        if size is not None:
            assert space.size == size


def test_memoryless_code_has_single_support():
    space = enumerate_supports(trellis_from_string("1,1"))
    assert space.supports == (1,)


def test_too_many_outputs():
    with pytest.raises(ChainError):
        enumerate_supports(trellis_from_string("1,1,1,1,1,1,1,1,1"))


def test_support_cap():
    with pytest.raises(ChainError):
        enumerate_supports(trellis_from_string("1,15/13"), cap=4)


def gth(P):
    """Grassmann-Taksar-Heyman elimination for a row-stochastic ``P``."""
    P = P.astype(float).copy()
    n = P.shape[0]
    for k in range(n - 1, 0, -1):
        s = P[k, :k].sum()
        P[:k, k] /= s
        P[:k, :k] += np.outer(P[:k, k], P[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ P[:k, k]
    return pi / pi.sum()


@given(seed=st.integers(0, 2**32 - 1), size=st.integers(2, 12))
def test_steady_state_methods_agree(seed, size):
    rng = np.random.default_rng(seed)
    M = rng.random((size, size)) + 0.01
    M /= M.sum(axis=1, keepdims=True)
    ref = gth(M)
    np.testing.assert_allclose(steady_state(M, "solve"), ref, atol=1e-10)
    np.testing.assert_allclose(steady_state(M, "power"), ref, atol=1e-9)


@pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.8])
def test_chain_steady_states_against_gth(p):
    tr = trellis_from_string("1,15/13")
    for direction in ("forward", "backward"):
        space = enumerate_supports(tr, direction)
        M = transition_matrix(space, tr, [p, p])
        pi = steady_state(M)
        np.testing.assert_allclose(pi, gth(M), atol=1e-10)
        np.testing.assert_allclose(pi @ M, pi, atol=1e-12)


def test_periodic_chain_power_iteration():
    M = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(steady_state(M, "power"), [0.5, 0.5], atol=1e-9)


@pytest.mark.parametrize("text", ["1,5/7", "1,15/13", GEN_4STATE])
def test_boundary_values(text):
    tr = trellis_from_string(text)
    np.testing.assert_allclose(transfer(tr, np.zeros(tr.n)), 0.0, atol=1e-14)
    np.testing.assert_allclose(transfer(tr, np.ones(tr.n)), 1.0, atol=1e-12)


@pytest.mark.parametrize("text", ["1,5/7", GEN_4STATE])
def test_monotone_in_every_argument(text):
    # 200 random ordered pairs p <= p'
    tr = trellis_from_string(text)
    tf = transfer_function(tr)
    rng = np.random.default_rng(7)
    lo = rng.random((200, tr.n))
    hi = lo + (1 - lo) * rng.random((200, tr.n))
    assert np.all(tf.evaluate(lo) <= tf.evaluate(hi) + 1e-12)


def test_extrinsic_prob_and_batch_agree():
    tr = trellis_from_string(GEN_4STATE)
    tf = transfer_function(tr)
    p = np.array([0.2, 0.6, 0.45])
    full = tf(p)
    for l in (1, 2, 3):
        assert extrinsic_prob(tr, tf.forward, tf.backward, p, l) == pytest.approx(full[l - 1], abs=1e-15)
    with pytest.raises(ValueError):
        extrinsic_prob(tr, tf.forward, tf.backward, p, 4)
    batch = tf.evaluate(np.tile(p, (3, 2, 1)))
    assert batch.shape == (3, 2, 3)
    np.testing.assert_allclose(batch[2, 1], full, atol=1e-15)


def monte_carlo(tr, p, T=3000, trials=6, seed=11):
    """Erasure BCJR on sampled observations of the all-zero codeword."""
    rng = np.random.default_rng(seed)
    n, S = tr.n, tr.num_states
    branches = list(tr.branches())
    hits = np.zeros(n)
    count = 0
    for _ in range(trials):
        seen = rng.random((T, n)) >= np.asarray(p)  # observed positions
        masks = (seen * (1 << np.arange(n))).sum(axis=1)
        alpha = np.zeros((T + 1, S), dtype=bool)
        alpha[0, 0] = True
        beta = np.zeros((T + 1, S), dtype=bool)
        beta[T] = True
        for t in range(T):
            for s, _u, nxt, out in branches:
                if alpha[t, s] and not out & masks[t]:
                    alpha[t + 1, nxt] = True
        for t in range(T - 1, -1, -1):
            for s, _u, nxt, out in branches:
                if beta[t + 1, nxt] and not out & masks[t]:
                    beta[t, s] = True
        for t in range(T // 4, 3 * T // 4):
            for l in range(n):
                others = masks[t] & ~(1 << l)
                hits[l] += any(
                    (out >> l) & 1 and alpha[t, s] and beta[t + 1, nxt] and not out & others
                    for s, _u, nxt, out in branches
                )
            count += 1
    return hits / count


@pytest.mark.parametrize("text,p", [("1,5/7", [0.5, 0.4]), (GEN_4STATE, [0.3, 0.5, 0.6])])
def test_monte_carlo_decoder(text, p):
    tr = trellis_from_string(text)
    np.testing.assert_allclose(monte_carlo(tr, p), transfer(tr, np.array(p)), atol=0.02)
