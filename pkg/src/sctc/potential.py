"""Scalar admissible systems, potential functions and their thresholds.

For identical component encoders the DE collapses to ``x <- f(g(x); eps)``.
The potential ``U(x; eps) = x g(x) - G(x) - F(g(x); eps)`` (with ``F`` and
``G`` the antiderivatives of ``f`` and ``g`` from 0) is evaluated here by
quadrature over the exact metric-chain transfer functions.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ensembles import EnsembleSpec, eps_rho, scalar_f, scalar_g
from .metric_chain import transfer_function
from .trellis import build_trellis, parse_generator

QUAD_TOL = 1e-10
MAX_INTERVALS = 10**6
GRID_POINTS = 2000

# 8-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class PotentialError(RuntimeError):
    pass


@dataclass
class ScalarSystem:
    f: Callable  # (y, eps) -> array, vectorized in y
    g: Callable  # x -> array, vectorized
    provenance: str
    g_identity: bool = False
    rho: tuple = (1.0, 1.0, 1.0)
    spec: EnsembleSpec | None = None

    def step(self, x, eps):
        return self.f(self.g(x), eps)


def scalar_system(spec: EnsembleSpec) -> ScalarSystem:
    """Scalar system of an identical-component ensemble (PCC, SCC, time-varying BCC)."""
    provenance = {"PCC": "PCC", "SCC": "SCC", "BCC1": "BCC-averaged", "BCC2": "BCC-averaged"}
    scalar_g(spec, 0.0)  # raises for non-scalar ensembles

    def f(y, eps):
        return scalar_f(spec, y, eps)

    def g(x):
        return scalar_g(spec, x)

    return ScalarSystem(
        f, g, f"{provenance[spec.family]} rho={spec.rho}", g_identity=spec.family != "SCC",
        rho=spec.rho, spec=spec,
    )


def check_admissible(sys: ScalarSystem, n: int = 50, tol: float = 1e-12) -> None:
    """Check the zero conditions exactly and monotonicity on an ``n x n`` grid."""
    grid = np.linspace(0.0, 1.0, n)
    if np.any(np.abs(sys.f(np.zeros(n), 0.5)) > 0) and True:
        raise PotentialError("f(0; eps) != 0")
    if np.any(np.abs(sys.f(grid, 0.0)) > 0):
        raise PotentialError("f(x; 0) != 0")
    if float(np.abs(sys.g(np.array([0.0]))[0])) > 0:
        raise PotentialError("g(0) != 0")
    table = np.array([sys.f(grid, e) for e in grid])
    if np.any(np.diff(table, axis=0) < -tol) or np.any(np.diff(table, axis=1) < -tol):
        raise PotentialError("f is not non-decreasing on the test grid")
    if np.any(np.diff(sys.g(grid)) < -tol):
        raise PotentialError("g is not non-decreasing on the test grid")


# --- quadrature ---------------------------------------------------------------------


def adaptive_simpson(func, a: float, b: float, tol: float = QUAD_TOL,
                     max_intervals: int = MAX_INTERVALS) -> tuple[float, float]:
    """Integrate a vectorized ``func`` over ``[a, b]``; returns (value, error estimate).

    All intervals of one refinement level are evaluated in a single batch.
    """
    if b == a:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = func(np.array([a, 0.5 * (a + b), b]))
    lo = np.array([a])
    hi = np.array([b])
    f_lo, f_mid, f_hi = np.array([fa]), np.array([fm]), np.array([fb])
    whole = (hi - lo) / 6.0 * (f_lo + 4 * f_mid + f_hi)
    total, err = 0.0, 0.0
    count = 1
    while lo.size:
        mid = 0.5 * (lo + hi)
        vals = func(np.concatenate([0.5 * (lo + mid), 0.5 * (mid + hi)]))
        f_lm, f_rm = vals[: lo.size], vals[lo.size:]
        left = (mid - lo) / 6.0 * (f_lo + 4 * f_lm + f_mid)
        right = (hi - mid) / 6.0 * (f_mid + 4 * f_rm + f_hi)
        delta = left + right - whole
        local_tol = tol * (hi - lo) / (b - a)
        done = (np.abs(delta) <= 15.0 * local_tol) | ((hi - lo) < 1e-14)
        total += float(np.sum((left + right + delta / 15.0)[done]))
        err += float(np.sum(np.abs(delta[done]) / 15.0))
        keep = ~done
        count += int(keep.sum())
        if count > max_intervals:
            raise PotentialError(f"quadrature exceeded {max_intervals} intervals")
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        f_lo, f_hi, f_mid = (
            np.concatenate([f_lo[keep], f_mid[keep]]),
            np.concatenate([f_mid[keep], f_hi[keep]]),
            np.concatenate([f_lm[keep], f_rm[keep]]),
        )
        whole = np.concatenate([left[keep], right[keep]])
    return sign * total, err


def _cumulative(func, nodes: np.ndarray) -> np.ndarray:
    """``int_0^{nodes[k]} func`` for increasing ``nodes`` (Gauss-Legendre per cell)."""
    edges = np.concatenate([[0.0], nodes])
    width = np.diff(edges)
    pts = edges[:-1, None] + width[:, None] * _GL_X[None, :]
    vals = func(pts.ravel()).reshape(pts.shape)
    return np.cumsum(width * (vals @ _GL_W))


# --- potential --------------------------------------------------------------------


def potential(sys: ScalarSystem, x: float, eps: float, tol: float = QUAD_TOL) -> float:
    """``U(x; eps)`` by adaptive Simpson quadrature."""
    if not (0.0 <= x <= 1.0 and 0.0 <= eps <= 1.0):
        raise ValueError("x and eps must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    gx = float(sys.g(np.array([x]))[0])
    if sys.g_identity:
        G = 0.5 * x * x
    else:
        G, _ = adaptive_simpson(sys.g, 0.0, x, tol / 2)
    F, _ = adaptive_simpson(lambda z: sys.f(z, eps), 0.0, gx, tol / 2)
    return x * gx - G - F


def potential_grid(sys: ScalarSystem, xs, eps: float) -> np.ndarray:
    """``U`` on an increasing grid via cumulative Gauss-Legendre cells."""
    xs = np.asarray(xs, dtype=float)
    gx = sys.g(xs)
    G = 0.5 * xs**2 if sys.g_identity else _cumulative(sys.g, xs)
    order = np.argsort(gx)
    F = np.empty_like(gx)
    F[order] = _cumulative(lambda z: sys.f(z, eps), gx[order])
    return xs * gx - G - F


@dataclass
class PotentialCurve:
    eps: float
    samples: list = field(default_factory=list)  # (x, U)
    tolerance: float = QUAD_TOL

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "U"])
        for x, u in self.samples:
            w.writerow([f"{x:.6f}", f"{u:.6f}"])
        return buf.getvalue()


def potential_curve(sys: ScalarSystem, eps: float, points: int = 201) -> PotentialCurve:
    xs = np.linspace(0.0, 1.0, points)
    U = potential_grid(sys, xs[1:], eps)
    return PotentialCurve(eps, [(0.0, 0.0)] + list(zip(xs[1:].tolist(), U.tolist())))


# --- thresholds ---------------------------------------------------------------------


def _recursion_converges(sys, eps, max_iter=100_000, target=1e-10, stall=1e-15) -> bool:
    x = np.array([1.0])
    for _ in range(max_iter):
        nxt = sys.step(x, eps)
        if nxt[0] < target:
            return True
        if abs(nxt[0] - x[0]) < stall:
            return False
        x = nxt
    return False


def _grid_clear(sys, eps, points=GRID_POINTS) -> bool:
    xs = np.linspace(0.0, 1.0, points + 1)[1:]
    return bool(np.all(xs - sys.step(xs, eps) > 0))


def _bisect(pred, lo, hi, tol):
    # pred(lo) True, pred(hi) False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def bp_threshold_scalar(sys: ScalarSystem, tol: float = 1e-4) -> float:
    """Largest eps for which the recursion from ``x=1`` goes to zero.

    Cross-checked against a sign scan of ``x - f(g(x); eps)`` on a dense grid.
    """
    lo, hi = _bisect(lambda e: _recursion_converges(sys, e), 0.0, 1.0, tol)
    glo, ghi = _bisect(lambda e: _grid_clear(sys, e), 0.0, 1.0, tol)
    value = 0.5 * (lo + hi)
    if abs(value - 0.5 * (glo + ghi)) > tol:
        raise PotentialError(
            f"recursion ({value:.6f}) and grid scan ({0.5 * (glo + ghi):.6f}) disagree"
        )
    return value


def unstable_fixed_point(sys: ScalarSystem, eps: float, points: int = GRID_POINTS) -> float | None:
    """Minimum unstable fixed point ``u(eps)``; None when ``f(g(x)) < x`` on all of (0, 1]."""
    xs = np.linspace(0.0, 1.0, points + 1)[1:]
    h = sys.step(xs, eps) - xs
    hit = np.nonzero(h >= 0)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return 0.0 if h[0] > 0 else float(xs[0])
    a, b = float(xs[k - 1]), float(xs[k])
    while b - a > 1e-10:
        mid = 0.5 * (a + b)
        if float(sys.step(np.array([mid]), eps)[0]) - mid >= 0:
            b = mid
        else:
            a = mid
    return b


def _golden_min(func, a, b, tol=1e-7):
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = func(d)
    x = 0.5 * (a + b)
    return x, func(x)


def min_potential_above(sys: ScalarSystem, eps: float, u: float,
                        points: int = GRID_POINTS) -> tuple[float, float]:
    """``(argmin, min)`` of ``U(.; eps)`` over ``[u, 1]``."""
    xs = np.linspace(u, 1.0, points + 1)
    xs = xs[xs > 0]
    U = potential_grid(sys, xs, eps)
    k = int(np.argmin(U))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    if b - a <= 0:
        return float(xs[k]), float(U[k])
    x, val = _golden_min(lambda t: potential(sys, float(t), eps), float(a), float(b))
    if val > U[k]:
        return float(xs[k]), float(U[k])
    return float(x), float(val)


def potential_threshold(sys: ScalarSystem, tol: float = 1e-4, eps_bp: float | None = None) -> float:
    """Largest eps with ``min_{x in [u(eps), 1]} U(x; eps) > 0``."""
    if eps_bp is None:
        eps_bp = bp_threshold_scalar(sys, tol)

    def positive(e):
        u = unstable_fixed_point(sys, e)
        if u is None:
            return True
        if u <= 0.0:
            return False
        return min_potential_above(sys, e, u)[1] > 0.0

    lo = max(0.0, eps_bp - tol)
    if not positive(lo):
        raise PotentialError("potential is not positive just below the BP threshold")
    if unstable_fixed_point(sys, eps_bp + 2 * tol) is None:
        raise PotentialError("no unstable fixed point found above the BP threshold")
    lo, hi = _bisect(positive, lo, 1.0, tol)
    return 0.5 * (lo + hi)


# --- coupled recursion ----------------------------------------------------------------


def coupled_scalar_update(sys: ScalarSystem, x, eps: float, m: int) -> np.ndarray:
    """One step of the spatially coupled scalar recursion.

    ``x_t <- 1/(m+1) sum_j f_{t+j}( 1/(m+1) sum_k g(x_{t+j-k}); eps )`` with
    ``x`` and every ``f_t`` outside ``1..L`` equal to zero (terminated chain).
    """
    x = np.asarray(x, dtype=float)
    L = x.size
    gx = sys.g(x)
    # positions t' = 1..L carry f; inner average over g(x_{t'-k})
    padded = np.concatenate([np.zeros(m), gx])
    inner = np.array([padded[t : t + m + 1].mean() for t in range(L)])
    fv = sys.f(inner, eps)
    fpad = np.concatenate([fv, np.zeros(m)])
    return np.array([fpad[t : t + m + 1].mean() for t in range(L)])


def run_coupled_scalar(sys: ScalarSystem, eps: float, m: int, L: int,
                       max_iter: int = 100_000, target: float = 1e-10,
                       stall: float = 1e-13) -> tuple[bool, np.ndarray, int]:
    """Iterate the coupled recursion from all ones; returns (to_zero, profile, iterations)."""
    x = np.ones(L)
    for it in range(1, max_iter + 1):
        nxt = coupled_scalar_update(sys, x, eps, m)
        if nxt.max() < target:
            return True, nxt, it
        if np.max(np.abs(nxt - x)) < stall:
            return False, nxt, it
        x = nxt
    return False, x, max_iter


# --- vector-admissible PCC ------------------------------------------------------------


def vector_potential_pcc(upper: str, lower: str, rho, x, eps: float,
                         tol: float = QUAD_TOL) -> tuple[float, float, float]:
    """``(F(x), G(x), U(x))`` of the two-stream PCC system.

    ``f = [f_U(e0 x1, e1), f_L(e0 x2, e2)]`` with ``g(x) = [x2, x1]``,
    ``G = x1 x2`` and ``U = g(x).x - G(x) - F(g(x))``.
    """
    tU = transfer_function(build_trellis(parse_generator(upper)))
    tL = transfer_function(build_trellis(parse_generator(lower)))
    if (tU.n, tU.trellis.k) != (2, 1) or (tL.n, tL.trellis.k) != (2, 1):
        raise ValueError("vector PCC potential needs rate-1/2 components")
    e0, e1, e2 = (eps_rho(eps, r) for r in rho)
    x1, x2 = (float(v) for v in x)

    def fU(z):
        z = np.asarray(z, dtype=float)
        return tU.evaluate(np.stack([e0 * z, np.full_like(z, e1)], axis=-1))[..., 0]

    def fL(z):
        z = np.asarray(z, dtype=float)
        return tL.evaluate(np.stack([e0 * z, np.full_like(z, e2)], axis=-1))[..., 0]

    def F(a, b):
        return adaptive_simpson(fU, 0.0, a, tol / 2)[0] + adaptive_simpson(fL, 0.0, b, tol / 2)[0]

    G = x1 * x2
    U = 2.0 * x1 * x2 - G - F(x2, x1)
    return F(x1, x2), G, U
