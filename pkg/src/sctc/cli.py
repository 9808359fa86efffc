"""Command-line front end.

Exit codes: 0 success, 1 invalid input or configuration, 2 a computation
failed (for table commands: any row failed; the remaining rows still run).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict
from fractions import Fraction

import numpy as np

from . import __version__
from .de_engine import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    SweepRow,
    ThresholdError,
    rows_to_csv,
    rows_to_json,
    run_cells,
    run_de,
    threshold_sweep,
)
from .ensembles import EnsembleError, EnsembleSpec, MESSAGES
from .metric_chain import ChainError, transfer_function
from .potential import (
    PotentialError,
    bp_threshold_scalar,
    potential_curve,
    potential_threshold,
    scalar_system,
)
from .presets import TABLES, preset, select_rows
from .trellis import GeneratorError, trellis_from_string

ENV_WORKERS = "SCTC_WORKERS"
log = logging.getLogger("sctc")


class UsageError(ValueError):
    pass


# --- configuration ---------------------------------------------------------------

_KNOBS = {"tol": "tol", "maxIter": "max_iter", "L": "L", "workers": "workers",
          "format": "format", "eps": "eps", "m": "m"}


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _settings(args) -> dict:
    """Merge config-file knobs with flags; flags win."""
    cfg = _load_config(args.config)
    out = {"tol": DEFAULT_TOL, "max_iter": DEFAULT_MAX_ITER, "L": None, "format": "csv",
           "workers": int(os.environ.get(ENV_WORKERS, "1") or 1), "eps": None, "m": None}
    for key, name in _KNOBS.items():
        if key in cfg:
            out[name] = cfg[key]
    for name in out:
        val = getattr(args, name, None)
        if val is not None:
            out[name] = val
    out["config"] = cfg
    _validate(out)
    return out


def _validate(s):
    if not 1e-5 <= float(s["tol"]) <= 0.1:
        raise UsageError(f"--tol must lie in [1e-5, 0.1], got {s['tol']}")
    if int(s["max_iter"]) < 1:
        raise UsageError("--max-iter must be a positive integer")
    if s["L"] is not None and int(s["L"]) < 1:
        raise UsageError("--L must be a positive integer")
    if s["m"] is not None and int(s["m"]) < 0:
        raise UsageError("--m must be non-negative")
    if int(s["workers"]) < 1:
        raise UsageError(f"worker count must be >= 1 (flag or ${ENV_WORKERS})")
    if s["format"] not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    if s["eps"] is not None and not 0.0 <= float(s["eps"]) <= 1.0:
        raise UsageError("--eps must lie in [0, 1]")


def _ensemble(args, s) -> EnsembleSpec:
    cfg = s["config"]
    if getattr(args, "preset", None):
        spec = preset(args.preset)
    elif "family" in cfg:
        spec = EnsembleSpec.from_dict(cfg)
    elif "preset" in cfg:
        spec = preset(cfg["preset"])
    else:
        raise UsageError("no ensemble given: pass --config with an ensemble or --preset")
    if s["m"] is not None:
        spec = spec.with_(m=int(s["m"]))
    if s["L"] is not None:
        spec = spec.with_(L=int(s["L"]))
    spec.trellises  # surface generator errors before any computation
    return spec


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _floats(text: str) -> list[float]:
    try:
        return [float(Fraction(t)) for t in text.replace(",", " ").split()]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"cannot parse number list {text!r}") from None


# --- commands -----------------------------------------------------------------------


def cmd_transfer(args, s) -> int:
    cfg = s["config"]
    gen = args.generator or cfg.get("generator")
    if not gen:
        raise UsageError("transfer needs --generator (or 'generator' in the config)")
    notation = args.notation or cfg.get("notation", "octal")
    tf = transfer_function(trellis_from_string(gen, notation))
    n = tf.n
    if args.p:
        pts = [_floats(v) for v in args.p.split(";")]
    elif "p" in cfg:
        pts = [list(map(float, v)) for v in cfg["p"]]
    else:
        k = args.p_grid if args.p_grid is not None else int(cfg.get("pGrid", 11))
        if k < 2:
            raise UsageError("--p-grid needs at least 2 points")
        pts = [[x] * n for x in np.linspace(0.0, 1.0, k)]
    for v in pts:
        if len(v) == 1:
            v *= n
        if len(v) != n or not all(0.0 <= x <= 1.0 for x in v):
            raise UsageError(f"each p vector needs {n} values in [0,1], got {v}")
    P = np.array(pts, dtype=float)
    F = tf.evaluate(P)
    if s["format"] == "json":
        text = json.dumps({"generator": gen, "n": n, "states": tf.trellis.num_states,
                           "p": P.tolist(), "f": F.tolist()}, indent=2) + "\n"
    else:
        header = [f"p{i + 1}" for i in range(n)] + [f"f{i + 1}" for i in range(n)]
        text = _csv(header, [list(map(float, p)) + list(map(float, f)) for p, f in zip(P, F)])
    _emit(text, args.out)
    return 0


def cmd_de_run(args, s) -> int:
    spec = _ensemble(args, s)
    if s["eps"] is None:
        raise UsageError("de-run needs --eps")
    r = run_de(spec, float(s["eps"]), int(s["max_iter"]))
    names = MESSAGES[spec.family]
    if s["format"] == "json":
        text = json.dumps({
            "spec": spec.to_dict(), "eps": float(s["eps"]), "converged": r.converged,
            "stalled": r.stalled, "iterations": r.iterations,
            "max_aposteriori": r.max_aposteriori,
            "messages": {k: r.final_state[k].tolist() for k in names},
        }, indent=2) + "\n"
    else:
        L = r.final_state[names[0]].size
        rows = [[t + 1] + [float(r.final_state[k][t]) for k in names] for t in range(L)]
        text = (f"# converged={r.converged} iterations={r.iterations} "
                f"max_aposteriori={r.max_aposteriori:.6e}\n") + _csv(["t", *names], rows)
    _emit(text, args.out)
    return 0


def _sweep_output(rows, fmt, out) -> int:
    _emit(rows_to_json(rows) + "\n" if fmt == "json" else rows_to_csv(rows), out)
    failed = [r for r in rows if r.error]
    for r in failed:
        log.error("%s %s m=%d failed: %s", r.spec.family, r.kind, r.spec.m, r.error)
    return 2 if failed else 0


def cmd_threshold(args, s) -> int:
    spec = _ensemble(args, s)
    kind = (args.kind or ("SC" if spec.m > 0 else "BP")).upper()
    if kind == "SC" and spec.m == 0:
        raise UsageError("SC threshold needs a coupled ensemble (--m >= 1)")
    rows = threshold_sweep([spec], [kind], float(s["tol"]), int(s["max_iter"]), 1)
    return _sweep_output(rows, s["format"], args.out)


def cmd_sweep(args, s) -> int:
    base = _ensemble(args, s).with_(m=0)
    L = int(s["L"]) if s["L"] is not None else (base.L if base.L > 1 else 100)
    if args.rates:
        bases = [_at_rate(base, r) for r in _floats(args.rates)]
    else:
        bases = [base]
    if args.m_list:
        ms = [int(v) for v in _floats(args.m_list)]
    else:
        ms = list(range(0, args.m_max + 1)) if args.m_max is not None else [0]
    if any(m < 0 for m in ms):
        raise UsageError("coupling memories must be non-negative")
    specs, kinds = [], []
    for b in bases:
        for m in ms:
            specs.append(b.with_(m=m, L=L) if m else b)
            kinds.append("SC" if m else "BP")
    res = run_cells(list(zip(specs, kinds)), float(s["tol"]), int(s["max_iter"]), int(s["workers"]))
    rows = [SweepRow(sp, k, r, e) for sp, k, (r, e) in zip(specs, kinds, res)]
    return _sweep_output(rows, s["format"], args.out)


def _at_rate(spec: EnsembleSpec, rate: float) -> EnsembleSpec:
    if not 0.0 < rate < 1.0:
        raise UsageError(f"rate {rate} outside (0,1)")
    r0, r1, _ = spec.rho
    fixed = r0 + (r1 if spec.family == "SCC" else 0.0)
    r2 = (1.0 / rate - fixed) / 2.0
    if not 0.0 <= r2 <= 1.0:
        raise UsageError(f"rate {rate} is not reachable by puncturing the parity streams")
    return spec.with_(rho=(r0, r1, r2))


def cmd_potential(args, s) -> int:
    spec = _ensemble(args, s)
    sys_ = scalar_system(spec)
    if args.thresholds:
        bp = bp_threshold_scalar(sys_, float(s["tol"]))
        star = potential_threshold(sys_, float(s["tol"]), eps_bp=bp)
        if s["format"] == "json":
            text = json.dumps({"spec": spec.to_dict(), "bp": bp, "potential": star,
                               "tol": float(s["tol"])}, indent=2) + "\n"
        else:
            text = _csv(["family", "states", "rate", "bp", "potential", "tol"],
                        [[spec.family, spec.states, spec.rate, bp, star, float(s["tol"])]])
        _emit(text, args.out)
        return 0
    if s["eps"] is None:
        raise UsageError("potential needs --eps (or --thresholds)")
    curve = potential_curve(sys_, float(s["eps"]), args.points)
    if s["format"] == "json":
        text = json.dumps(asdict(curve), indent=2) + "\n"
    else:
        text = curve.to_csv()
    _emit(text, args.out)
    return 0


REPRO_COLUMNS = ("table", "row", "family", "states", "rate", "rho2", "kind",
                 "computed", "published", "deviation")


def cmd_reproduce(args, s) -> int:
    rows = select_rows(args.table, args.rows if args.rows is not None else s["config"].get("rows"))
    L = int(s["L"]) if s["L"] is not None else 100
    jobs, meta = [], []
    for row in rows:
        for kind in row.kinds:
            base = "SC" if kind.startswith("SC") else kind
            jobs.append((row.spec_for(kind, L), base))
            meta.append((row, kind))
    res = run_cells(jobs, float(s["tol"]), int(s["max_iter"]), int(s["workers"]))
    records = []
    failed = 0
    for (row, kind), (r, err) in zip(meta, res):
        ref = row.published[kind]
        value = r.value if r else None
        dev = abs(value - ref) if value is not None and ref is not None else None
        if err:
            failed += 1
            log.error("%s %s failed: %s", row.key, kind, err)
        records.append({
            "table": row.table, "row": row.key, "family": row.spec.family,
            "states": row.spec.states, "rate": row.spec.rate, "rho2": row.spec.rho[2],
            "kind": kind, "computed": value, "published": ref, "deviation": dev, "error": err,
        })
    if s["format"] == "json":
        text = json.dumps(records, indent=2) + "\n"
    else:
        def cell(v):
            if v is None:
                return "nan"
            return f"{v:.6f}" if isinstance(v, float) else v
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPRO_COLUMNS)
        for rec in records:
            w.writerow([cell(rec[c]) for c in REPRO_COLUMNS])
        text = buf.getvalue()
    _emit(text, args.out)
    return 2 if failed else 0


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (ensemble fields plus knobs)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--tol", type=float, default=None, help="threshold bisection tolerance")
    common.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    common.add_argument("--L", type=int, default=None, help="coupled chain length")
    common.add_argument("--workers", type=int, default=None,
                        help=f"parallel worker processes (default ${ENV_WORKERS} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    ens = argparse.ArgumentParser(add_help=False)
    ens.add_argument("--preset", help="named ensemble, e.g. table2:SCC-4-1/2")
    ens.add_argument("--m", type=int, default=None, help="coupling memory")

    p = argparse.ArgumentParser(prog="sctc", description="Exact DE thresholds of coupled turbo-like codes on the BEC.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("transfer", parents=[common], help="evaluate BCJR extrinsic transfer functions")
    t.add_argument("--generator", help='generator matrix, e.g. "1,5/7"')
    t.add_argument("--notation", choices=("octal", "binary"), default=None)
    t.add_argument("--p", help='p vectors separated by ";" (a single value is repeated)')
    t.add_argument("--p-grid", dest="p_grid", type=int, default=None,
                   help="uniform p grid with this many points (default 11)")
    t.set_defaults(func=cmd_transfer)

    d = sub.add_parser("de-run", parents=[common, ens], help="run DE at one channel erasure probability")
    d.add_argument("--eps", type=float, default=None)
    d.set_defaults(func=cmd_de_run)

    th = sub.add_parser("threshold", parents=[common, ens], help="BP, MAP or SC threshold")
    th.add_argument("--kind", default=None, choices=("BP", "MAP", "SC", "bp", "map", "sc"),
                    help="default: SC when --m >= 1, else BP")
    th.set_defaults(func=cmd_threshold)

    sw = sub.add_parser("sweep", parents=[common, ens], help="thresholds versus m or rate")
    sw.add_argument("--m-max", dest="m_max", type=int, default=None, help="sweep m = 0..M")
    sw.add_argument("--m-list", dest="m_list", default=None, help="explicit m values, e.g. 1,3,5")
    sw.add_argument("--rates", default=None, help="rates reached by parity puncturing, e.g. 1/2,2/3")
    sw.set_defaults(func=cmd_sweep)

    po = sub.add_parser("potential", parents=[common, ens], help="scalar potential curve or thresholds")
    po.add_argument("--eps", type=float, default=None)
    po.add_argument("--points", type=int, default=201)
    po.add_argument("--thresholds", action="store_true", help="compute BP and potential thresholds")
    po.set_defaults(func=cmd_potential)

    r = sub.add_parser("reproduce", parents=[common], help="recompute a published threshold table")
    r.add_argument("table", choices=TABLES)
    r.add_argument("--rows", default=None, help="comma-separated row keys or key prefixes")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse signals usage errors with 2; here 2 is reserved for computations
        return 1 if exc.code == 2 else (exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = _settings(args)
        return args.func(args, s)
    except (UsageError, EnsembleError, GeneratorError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except (ThresholdError, ChainError, PotentialError, np.linalg.LinAlgError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
