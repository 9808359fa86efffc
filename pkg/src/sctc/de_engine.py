"""Fixed-point iteration of the DE equations and threshold extraction."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .ensembles import DEState, EnsembleSpec, aposteriori, average_extrinsic, de_update

log = logging.getLogger(__name__)

DEFAULT_TARGET = 1e-8
DEFAULT_STALL = 1e-12
DEFAULT_MAX_ITER = 20_000
DEFAULT_TOL = 1e-4


class ThresholdError(RuntimeError):
    pass


@dataclass
class DERunResult:
    converged: bool
    iterations: int
    final_state: DEState
    max_aposteriori: float
    stalled: bool = False


@dataclass
class ThresholdResult:
    kind: str  # BP | MAP | SC
    value: float
    tolerance: float
    lower: float
    upper: float
    meta: dict = field(default_factory=dict)


def run_de(
    spec: EnsembleSpec,
    eps: float,
    max_iter: int = DEFAULT_MAX_ITER,
    target: float = DEFAULT_TARGET,
    stall: float = DEFAULT_STALL,
    init: DEState | None = None,
) -> DERunResult:
    """Iterate DE from the all-ones state (or ``init``) at channel erasure ``eps``.

    Success means the largest a-posteriori erasure probability fell below
    ``target``.  The run stops as stalled when no message moved by more than
    ``stall`` in one iteration.  Starting from any state that dominates the
    BP fixed point (e.g. the fixed point of a larger ``eps``) reaches the same
    outcome, by monotonicity of the updates.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps={eps} outside [0,1]")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    s = init.copy() if init is not None else DEState.ones(spec)
    pa = 1.0
    for it in range(1, max_iter + 1):
        nxt = de_update(spec, s, eps)
        pa = float(np.max(aposteriori(spec, nxt, eps)))
        if pa < target:
            return DERunResult(True, it, nxt, pa)
        if nxt.max_diff(s) < stall:
            return DERunResult(False, it, nxt, pa, stalled=True)
        s = nxt
    return DERunResult(False, max_iter, s, pa)


def _meta(spec: EnsembleSpec, max_iter: int) -> dict:
    return {"family": spec.family, "m": spec.m, "L": spec.L, "max_iter": max_iter}


MAX_EXTENSION = 16


def _decide(spec, eps, max_iter, init, counts):
    """Run DE, extending undecided runs from where they stopped.

    A run that neither converged nor stalled within ``max_iter`` is resumed
    from its last state (which still dominates the fixed point) until
    ``MAX_EXTENSION * max_iter`` iterations; past that it counts as failure.
    """
    r = run_de(spec, eps, max_iter, init=init)
    total = r.iterations
    while not (r.converged or r.stalled) and total < MAX_EXTENSION * max_iter:
        counts["extended"] += 1
        r = run_de(spec, eps, max_iter, init=r.final_state)
        total += r.iterations
    if not (r.converged or r.stalled):
        counts["undecided"] += 1
    return r


def bp_threshold(
    spec: EnsembleSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    lo: float = 0.0,
    hi: float | None = None,
) -> ThresholdResult:
    """Bisect on ``eps`` with :func:`run_de` as the success oracle.

    ``lo`` must be a known success point; ``hi`` defaults to the Shannon
    limit ``1 - R`` (widened to 1 if DE still succeeds there).  Slow runs
    near the threshold are extended past ``max_iter`` (see :func:`_decide`);
    the number of extended and still-undecided runs is kept in ``meta``.
    """
    if tol < 1e-5:
        raise ValueError("tol must be >= 1e-5")
    if hi is None:
        hi = min(1.0, 1.0 - spec.rate + 0.01)
    ok = run_de(spec, lo, max_iter)
    if not ok.converged:
        raise ThresholdError(f"DE fails at the lower bracket eps={lo}")
    bad = run_de(spec, hi, max_iter)
    if bad.converged:
        if hi >= 1.0:
            raise ThresholdError("DE succeeds at eps=1")
        lo, hi = hi, 1.0
        bad = run_de(spec, hi, max_iter)
        if bad.converged:
            raise ThresholdError("DE succeeds at eps=1")
    warm = bad.final_state
    counts = {"extended": 0, "undecided": 0}
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r = _decide(spec, mid, max_iter, warm, counts)
        if r.converged:
            lo = mid
        else:
            hi, warm = mid, r.final_state
    kind = "SC" if spec.m > 0 else "BP"
    meta = _meta(spec, max_iter) | counts
    return ThresholdResult(kind, 0.5 * (lo + hi), hi - lo, lo, hi, meta)


def fixed_point_extrinsic(spec: EnsembleSpec, eps_grid, max_iter: int = DEFAULT_MAX_ITER):
    """Average extrinsic erasure probability at the BP fixed point for each eps.

    The grid is swept downward and each run is warm-started from the previous
    fixed point, which is valid because the fixed points are ordered in eps.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    order = np.argsort(-eps_grid)
    out = np.empty_like(eps_grid)
    warm = None
    for idx in order:
        e = float(eps_grid[idx])
        r = run_de(spec, e, max_iter, target=0.0, init=warm)
        out[idx] = average_extrinsic(spec, r.final_state, e)
        warm = r.final_state
    return out


def map_threshold(
    spec: EnsembleSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    bp: ThresholdResult | None = None,
) -> ThresholdResult:
    """Area-theorem threshold: solve ``int_e^1 p_extr(eps) d eps = R`` for ``e``.

    ``p_extr`` is taken at the BP fixed points on a uniform grid above the BP
    threshold.  The cumulative integral from 1 downward uses the trapezoid
    rule with one Richardson step; the grid is doubled until the root moves
    by less than ``tol / 10``.
    """
    if spec.m > 0:
        raise ValueError("MAP threshold is computed for uncoupled ensembles only")
    if bp is None:
        bp = bp_threshold(spec, tol=max(1e-5, tol / 10), max_iter=max_iter)
    a = bp.upper
    R = spec.rate
    n = 32
    prev = None
    cache: dict[float, float] = {}

    def pbar(grid):
        missing = [g for g in grid if g not in cache]
        if missing:
            vals = fixed_point_extrinsic(spec, missing, max_iter)
            cache.update(zip(missing, vals))
        return np.array([cache[g] for g in grid])

    while True:
        grid = [float(x) for x in np.linspace(a, 1.0, n + 1)]
        y = pbar(grid)
        y = _check_monotone(y)
        fine = _tail_integrals(grid, y)
        coarse = _tail_integrals(grid[::2], y[::2])
        # Richardson on the shared (even) nodes
        rich = fine[::2] + (fine[::2] - coarse) / 3.0
        if rich[0] < R:
            raise ThresholdError(
                f"area above the BP threshold ({rich[0]:.6f}) is below the rate {R:.6f}"
            )
        xs = np.asarray(grid[::2])
        i = int(np.nonzero(rich >= R)[0][-1])
        root = _solve_lower_limit(xs[i], xs[i + 1], rich[i + 1], R, pbar, tol / 20)
        if prev is not None and abs(root - prev) < tol / 10:
            break
        prev = root
        n *= 2
        if n > 4096:
            log.warning("MAP threshold grid refinement stopped at n=%d", n)
            break
    return ThresholdResult(
        "MAP", float(root), abs(root - prev), float(root - abs(root - prev)),
        float(root + abs(root - prev)), {**_meta(spec, max_iter), "grid": n, "bp": bp.value},
    )


def _solve_lower_limit(x0, x1, area1, R, pbar, tol):
    """Bisect ``e`` in ``[x0, x1]`` so that ``area1 + int_e^{x1} pbar = R``.

    The partial integral uses Simpson's rule on ``[e, x1]``.
    """
    lo, hi = float(x0), float(x1)  # area(lo) >= R > area(hi) within the cell
    while hi - lo > tol:
        e = 0.5 * (lo + hi)
        y = pbar([e, 0.5 * (e + x1), float(x1)])
        area = area1 + (x1 - e) / 6.0 * (y[0] + 4.0 * y[1] + y[2])
        if area >= R:
            lo = e
        else:
            hi = e
    return 0.5 * (lo + hi)


def _tail_integrals(grid, y) -> np.ndarray:
    """``int_{grid[i]}^{1} y`` by the trapezoid rule, for every node."""
    x = np.asarray(grid)
    seg = 0.5 * (y[1:] + y[:-1]) * np.diff(x)
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return tail


def _check_monotone(y, noise: float = 1e-7) -> np.ndarray:
    if np.any(np.diff(y) < -noise):
        raise ThresholdError("average extrinsic curve is not non-decreasing in eps")
    return y


# --- sweeps and output -----------------------------------------------------------------


def _cell(args):
    spec, kind, tol, max_iter = args
    try:
        if kind == "BP":
            return bp_threshold(spec.with_(m=0, L=1), tol, max_iter), None
        if kind == "MAP":
            return map_threshold(spec.with_(m=0, L=1), tol, max_iter), None
        if kind == "SC":
            return bp_threshold(spec, tol, max_iter), None
        raise ValueError(f"unknown threshold kind {kind!r}")
    except Exception as exc:  # a failed cell must not abort the sweep
        return None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepRow:
    spec: EnsembleSpec
    kind: str
    result: ThresholdResult | None
    error: str | None = None


def run_cells(jobs, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, workers=1):
    """Evaluate ``(spec, kind)`` jobs; returns ``(result, error)`` pairs in input order."""
    args = [(spec, kind, tol, max_iter) for spec, kind in jobs]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_cell, args))
    return [_cell(a) for a in args]


def threshold_sweep(specs, kinds, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, workers=1):
    """Evaluate every requested threshold for every spec, in input order."""
    jobs = [(spec, kind) for spec in specs for kind in kinds]
    results = run_cells(jobs, tol, max_iter, workers)
    return [SweepRow(j[0], j[1], r, err) for j, (r, err) in zip(jobs, results)]


CSV_COLUMNS = ("family", "states", "rate", "m", "L", "kind", "value", "tol")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        spec, res = row.spec, row.result
        m = spec.m if row.kind == "SC" else 0
        L = spec.L if row.kind == "SC" else 1
        value = f"{res.value:.6f}" if res else "nan"
        tol = f"{res.tolerance:.6f}" if res else "nan"
        w.writerow([spec.family, spec.states, f"{spec.rate:.6f}", m, L, row.kind, value, tol])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    out = []
    for row in rows:
        out.append({
            "spec": row.spec.to_dict(),
            "states": row.spec.states,
            "rate": row.spec.rate,
            "kind": row.kind,
            "result": asdict(row.result) if row.result else None,
            "error": row.error,
        })
    return json.dumps(out, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def shannon_gap(rate: float, eps_map: float) -> float:
    return (1.0 - rate) - eps_map


__all__ = [
    "DERunResult", "ThresholdResult", "ThresholdError", "run_de", "bp_threshold",
    "map_threshold", "fixed_point_extrinsic", "run_cells", "threshold_sweep", "rows_to_csv",
    "rows_to_json", "shannon_gap",
]
