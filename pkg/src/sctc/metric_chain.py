"""Exact BCJR extrinsic erasure transfer functions on the BEC.

On the erasure channel the normalized forward/backward BCJR metrics are 0/1
vectors, i.e. sets of trellis states (supports).  Under the all-zero codeword
they form finite Markov chains whose transition probabilities are polynomials
in the per-position erasure probabilities.  The extrinsic erasure probability
of code bit ``l`` is ``pi_alpha @ T_l @ pi_beta``.

Supports are int bitmasks over trellis states.  Erasure patterns are int
bitmasks over the ``n`` code positions where a set bit means *observed*
(observed bits are zero under the all-zero codeword).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .trellis import Trellis

MAX_OUTPUTS = 8
DEFAULT_SUPPORT_CAP = 10**6


class ChainError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MetricStateSpace:
    direction: str
    supports: tuple[int, ...]
    successor: np.ndarray  # (2**n, |M|) index of successor support per pattern

    @property
    def size(self) -> int:
        return len(self.supports)

    def index_of(self, support: int) -> int:
        return self.supports.index(support)

    def membership(self, num_states: int) -> np.ndarray:
        """Boolean ``(|M|, num_states)`` matrix of support membership."""
        out = np.zeros((self.size, num_states), dtype=bool)
        for i, s in enumerate(self.supports):
            for st in range(num_states):
                out[i, st] = (s >> st) & 1
        return out


def _step_tables(trellis: Trellis, direction: str):
    """Per-pattern lists of (from_state, to_state) pairs allowed by the pattern."""
    n = trellis.n
    tables = []
    for pattern in range(1 << n):
        pairs = []
        for s, _u, nxt, out in trellis.branches():
            if out & pattern:
                continue
            pairs.append((s, nxt) if direction == "forward" else (nxt, s))
        tables.append(pairs)
    return tables


def _advance(support: int, pairs) -> int:
    out = 0
    for a, b in pairs:
        if (support >> a) & 1:
            out |= 1 << b
    return out


def enumerate_supports(
    trellis: Trellis, direction: str = "forward", cap: int = DEFAULT_SUPPORT_CAP
) -> MetricStateSpace:
    """Close ``{zero state}`` under every per-section erasure pattern.

    The backward direction runs the same closure on the reversed trellis.
    Supports are listed in discovery order, zero-state singleton first.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    if trellis.n > MAX_OUTPUTS:
        raise ChainError(f"n={trellis.n} exceeds {MAX_OUTPUTS} code bits per section")
    tables = _step_tables(trellis, direction)
    supports = [1]
    index = {1: 0}
    succ_rows = []
    head = 0
    while head < len(supports):
        s = supports[head]
        row = []
        for pairs in tables:
            t = _advance(s, pairs)
            if t not in index:
                if len(supports) >= cap:
                    raise ChainError(f"metric state space exceeds cap of {cap} supports")
                index[t] = len(supports)
                supports.append(t)
            row.append(index[t])
        succ_rows.append(row)
        head += 1
    successor = np.array(succ_rows, dtype=np.int64).T.copy()
    return MetricStateSpace(direction, tuple(supports), successor)


def pattern_weights(p: np.ndarray) -> np.ndarray:
    """Probability of each observation pattern for erasure vectors ``p``.

    ``p`` has shape ``(..., n)``; returns ``(..., 2**n)`` where entry ``e`` is
    ``prod_{l in e} (1 - p_l) * prod_{l not in e} p_l``.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    w = np.ones(p.shape[:-1] + (1,))
    for l in range(n):
        pl = p[..., l : l + 1]
        # pattern bit l: appending doubles the table, new half has bit l set
        w = np.concatenate([w * pl, w * (1.0 - pl)], axis=-1)
    return w


def _pattern_matrices(space: MetricStateSpace) -> np.ndarray:
    n_pat, size = space.successor.shape
    P = np.zeros((n_pat, size, size))
    rows = np.arange(size)
    for e in range(n_pat):
        P[e, rows, space.successor[e]] = 1.0
    return P


def transition_matrix(space: MetricStateSpace, trellis: Trellis, p) -> np.ndarray:
    """Row-stochastic matrix: entry ``(i, j)`` = P(support i -> support j)."""
    del trellis  # successor table already encodes the trellis
    w = pattern_weights(np.asarray(p, dtype=float))
    return np.tensordot(w, _pattern_matrices(space), axes=([-1], [0]))


def steady_state(M: np.ndarray, method: str = "solve", max_iter: int = 100_000) -> np.ndarray:
    """Stationary distribution ``pi`` with ``pi @ M = pi`` for row-stochastic ``M``.

    ``M`` may carry leading batch dimensions.  ``method="power"`` iterates the
    chain (with Cesaro averaging if it oscillates); ``"solve"`` replaces one
    balance equation by the normalization and solves directly, falling back to
    power iteration on singular systems.
    """
    M = np.asarray(M, dtype=float)
    if method == "power":
        return _power_steady_state(M, max_iter)
    if method != "solve":
        raise ValueError(f"unknown method {method!r}")
    size = M.shape[-1]
    A = np.swapaxes(M, -1, -2) - np.eye(size)
    A[..., -1, :] = 1.0
    b = np.zeros(M.shape[:-1])
    b[..., -1] = 1.0
    try:
        pi = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return _power_steady_state(M, max_iter)
    if not np.all(np.isfinite(pi)):
        return _power_steady_state(M, max_iter)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum(axis=-1, keepdims=True)


def _power_steady_state(M: np.ndarray, max_iter: int, tol: float = 1e-12) -> np.ndarray:
    size = M.shape[-1]
    pi = np.full(M.shape[:-1], 1.0 / size)
    avg = np.zeros_like(pi)
    for it in range(1, max_iter + 1):
        nxt = np.einsum("...i,...ij->...j", pi, M)
        avg += nxt
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
        if it % 1000 == 0:
            # periodic chains never settle; their Cesaro mean does
            ces = avg / it
            res = np.einsum("...i,...ij->...j", ces, M) - ces
            if np.max(np.abs(res)) <= tol:
                return ces
    raise ChainError(f"steady state did not converge in {max_iter} iterations")


class TransferFunction:
    """Batched evaluator of ``f_l(p_1..p_n)`` for one trellis.

    All structure (support spaces, per-pattern transition and ambiguity
    matrices) is built once; evaluation is a handful of dense numpy ops.
    Instances are immutable apart from a small memo for scalar calls.
    """

    def __init__(self, trellis: Trellis, cap: int = DEFAULT_SUPPORT_CAP):
        self.trellis = trellis
        self.n = trellis.n
        self.forward = enumerate_supports(trellis, "forward", cap)
        self.backward = enumerate_supports(trellis, "backward", cap)
        self._P_fwd = _pattern_matrices(self.forward)
        self._P_bwd = _pattern_matrices(self.backward)
        self._ambiguity = self._ambiguity_matrices()
        self._memo: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def _ambiguity_matrices(self) -> np.ndarray:
        # A[l, e, i, j]: with alpha support i before the section, beta support j
        # after it, and the other bits observed per pattern e, some consistent
        # branch carries v_l = 1 (the zero branch always carries v_l = 0).
        tr = self.trellis
        S = tr.num_states
        mem_a = self.forward.membership(S).astype(float)
        mem_b = self.backward.membership(S).astype(float)
        n_pat = 1 << self.n
        A = np.zeros((self.n, n_pat, self.forward.size, self.backward.size))
        for l in range(self.n):
            for e in range(n_pat):
                if (e >> l) & 1:
                    continue
                acc = np.zeros((self.forward.size, self.backward.size))
                for s, _u, nxt, out in tr.branches():
                    if (out >> l) & 1 and not (out & e):
                        acc += np.outer(mem_a[:, s], mem_b[:, nxt])
                A[l, e] = acc > 0
        return A

    def steady_states(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = pattern_weights(p)
        Ma = np.tensordot(w, self._P_fwd, axes=([-1], [0]))
        Mb = np.tensordot(w, self._P_bwd, axes=([-1], [0]))
        return steady_state(Ma), steady_state(Mb)

    def evaluate(self, p) -> np.ndarray:
        """``p`` of shape ``(..., n)`` -> extrinsic probabilities ``(..., n)``."""
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        if p.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} erasure probabilities, got {p.shape[-1]}")
        batch = p.shape[:-1]
        p2 = p.reshape(-1, self.n)
        pi_a, pi_b = self.steady_states(p2)
        q = np.repeat(p2[None], self.n, axis=0)
        q[np.arange(self.n), :, np.arange(self.n)] = 1.0  # bit l's own observation is excluded
        w = pattern_weights(q)  # (n, B, 2**n)
        # contract the ambiguity tensors with pi_beta, then pi_alpha, then the weights
        A = self._ambiguity
        Tb = (A.reshape(-1, A.shape[-1]) @ pi_b.T).reshape(A.shape[:3] + (-1,))
        V = np.einsum("leib,bi->lbe", Tb, pi_a)
        out = (w * V).sum(axis=-1).T
        return np.clip(out, 0.0, 1.0).reshape(batch + (self.n,))

    def __call__(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.ndim > 1:
            return self.evaluate(p)
        key = tuple(np.round(p, 14))
        hit = self._memo.get(key)
        if hit is None:
            hit = self.evaluate(p)
            with self._lock:
                if len(self._memo) > 100_000:
                    self._memo.clear()
                self._memo[key] = hit
        return hit.copy()


_cache: dict[bytes, TransferFunction] = {}
_cache_lock = threading.Lock()


def transfer_function(trellis: Trellis) -> TransferFunction:
    """Shared :class:`TransferFunction` per trellis fingerprint."""
    key = trellis.fingerprint()
    with _cache_lock:
        tf = _cache.get(key)
        if tf is None:
            tf = _cache[key] = TransferFunction(trellis)
    return tf


def extrinsic_prob(trellis: Trellis, space_f, space_b, p, l: int) -> float:
    """Extrinsic erasure probability of output ``l`` (1-based)."""
    if not 1 <= l <= trellis.n:
        raise ValueError(f"output index {l} outside 1..{trellis.n}")
    tf = transfer_function(trellis)
    if space_f.supports != tf.forward.supports or space_b.supports != tf.backward.supports:
        raise ValueError("support spaces were not enumerated for this trellis")
    return float(tf(np.asarray(p, dtype=float))[l - 1])


def transfer(trellis: Trellis, p) -> np.ndarray:
    """All ``n`` extrinsic erasure probabilities at ``p``."""
    return transfer_function(trellis)(np.asarray(p, dtype=float))
