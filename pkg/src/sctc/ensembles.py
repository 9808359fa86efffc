"""Density-evolution message graphs for PCC, SCC and BCC ensembles.

A DE state maps message names to arrays over the ``L`` positions of the
chain.  Terminated chains read every message outside ``1..L`` as a perfect
(zero-erasure) message; tail-biting chains wrap indices modulo ``L``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import permutations

import numpy as np

from .metric_chain import TransferFunction, transfer_function
from .trellis import build_trellis, parse_generator

FAMILIES = ("PCC", "SCC", "BCC1", "BCC2")

MESSAGES = {
    "PCC": ("Us", "Up", "Ls", "Lp"),
    "SCC": ("Os", "Op", "Is", "Ip"),
    "BCC1": ("U1", "U2", "U3", "L1", "L2", "L3"),
    "BCC2": ("U1", "U2", "U3", "L1", "L2", "L3"),
}


class EnsembleError(ValueError):
    pass


def eps_rho(eps, rho):
    """Erasure probability seen by a stream punctured to permeability ``rho``."""
    return 1.0 - (1.0 - eps) * rho


class PermutedTransfer:
    """Transfer function of a trellis whose output order is re-drawn per section.

    Each edge lands on a uniformly random code position, so its extrinsic
    probability is the average over all output permutations.  With equal
    inputs this is ``(f_1 + ... + f_n) / n``.
    """

    def __init__(self, base: TransferFunction):
        self.base = base
        self.n = base.n
        self._perms = list(permutations(range(self.n)))

    def evaluate(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        for perm in self._perms:
            # edge k sits on position perm[k]
            q = np.empty_like(p)
            q[..., list(perm)] = p
            f = self.base.evaluate(q)
            out += f[..., list(perm)]
        return out / len(self._perms)

    __call__ = evaluate


@dataclass(frozen=True)
class EnsembleSpec:
    family: str
    components: tuple[str, str]
    m: int = 0
    L: int = 1
    rho: tuple[float, float, float] = (1.0, 1.0, 1.0)
    time_varying: bool = False
    tailbiting: bool = False
    bcc_variant: str = "standard"
    notation: str = "octal"
    N: int | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise EnsembleError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if len(self.components) != 2:
            raise EnsembleError("exactly two component encoders are required")
        if self.m < 0 or self.L < 1:
            raise EnsembleError(f"need m >= 0 and L >= 1, got m={self.m}, L={self.L}")
        if len(self.rho) != 3 or not all(0.0 <= r <= 1.0 for r in self.rho):
            raise EnsembleError(f"permeability rates must be three values in [0,1], got {self.rho}")
        if self.bcc_variant not in ("standard", "split"):
            raise EnsembleError(f"unknown BCC variant {self.bcc_variant!r}")
        if self.time_varying and not self.is_bcc:
            raise EnsembleError("time-varying trellises apply to BCC ensembles only")
        if self.rate_denominator <= 0:
            raise EnsembleError("permeability rates leave no transmitted bits")
        want = (2, 3) if self.is_bcc else (1, 2)
        for g in self.generators:
            if (g.k, g.n) != want:
                raise EnsembleError(
                    f"{self.family} needs rate-{want[0]}/{want[1]} components, got {g.k}/{g.n}"
                )

    @property
    def is_bcc(self) -> bool:
        return self.family.startswith("BCC")

    @property
    def coupled(self) -> bool:
        return self.m > 0

    @property
    def identical_components(self) -> bool:
        a, b = self.generators
        return str(a) == str(b)

    @cached_property
    def generators(self):
        return tuple(parse_generator(c, self.notation) for c in self.components)

    @cached_property
    def trellises(self):
        return tuple(build_trellis(g) for g in self.generators)

    @property
    def states(self) -> int:
        return self.trellises[0].num_states

    @cached_property
    def transfers(self):
        tfs = tuple(transfer_function(t) for t in self.trellises)
        if self.time_varying:
            return tuple(PermutedTransfer(tf) for tf in tfs)
        return tfs

    @property
    def rate_denominator(self) -> float:
        r0, r1, r2 = self.rho
        if self.family == "SCC":
            return r0 + r1 + 2.0 * r2
        # PCC and BCC puncture both parity streams with rho2
        return r0 + 2.0 * r2

    @property
    def rate(self) -> float:
        return 1.0 / self.rate_denominator

    # chain geometry actually used by the DE equations
    @property
    def chain(self) -> tuple[int, int, bool]:
        if self.is_bcc and self.m == 0:
            # uncoupled BCC = tail-biting chain of length one with memory one
            return 1, 1, True
        return self.m, self.L, self.tailbiting

    # --- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        a, b = self.components
        keys = ("outer", "inner") if self.family == "SCC" else ("upper", "lower")
        d = {
            "family": self.family,
            keys[0]: a,
            keys[1]: b,
            "m": self.m,
            "L": self.L,
            "rho0": self.rho[0],
            "rho1": self.rho[1],
            "rho2": self.rho[2],
            "timeVarying": self.time_varying,
        }
        if self.tailbiting:
            d["tailbiting"] = True
        if self.bcc_variant != "standard":
            d["variant"] = self.bcc_variant
        if self.notation != "octal":
            d["notation"] = self.notation
        if self.N is not None:
            d["N"] = self.N
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        try:
            family = d["family"]
        except KeyError:
            raise EnsembleError("config is missing 'family'") from None
        keys = ("outer", "inner") if family == "SCC" else ("upper", "lower")
        missing = [k for k in keys if k not in d]
        if missing:
            raise EnsembleError(f"{family} config is missing {missing}")
        return cls(
            family=family,
            components=(str(d[keys[0]]), str(d[keys[1]])),
            m=int(d.get("m", 0)),
            L=int(d.get("L", 1)),
            rho=(float(d.get("rho0", 1.0)), float(d.get("rho1", 1.0)), float(d.get("rho2", 1.0))),
            time_varying=bool(d.get("timeVarying", False)),
            tailbiting=bool(d.get("tailbiting", False)),
            bcc_variant=d.get("variant", "standard"),
            notation=d.get("notation", "octal"),
            N=d.get("N"),
            name=d.get("name", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSpec":
        return cls.from_dict(json.loads(text))

    def with_(self, **changes) -> "EnsembleSpec":
        return replace(self, **changes)


# --- shifted window sums -------------------------------------------------------


def _shift_mean(x: np.ndarray, offsets, wrap: bool) -> np.ndarray:
    """``y[t] = mean_{d in offsets} x[t + d]`` with zero (or wrapped) boundary."""
    L = x.shape[-1]
    y = np.zeros_like(x)
    for d in offsets:
        if wrap:
            y += np.roll(x, -d, axis=-1)
        elif d >= 0:
            if d < L:
                y[..., : L - d] += x[..., d:]
        else:
            if -d < L:
                y[..., -d:] += x[..., : L + d]
    return y / len(offsets)


def forward_mean(x, m, wrap=False):
    return _shift_mean(x, range(0, m + 1), wrap)


def backward_mean(x, m, wrap=False):
    return _shift_mean(x, range(0, -m - 1, -1), wrap)


# --- DE state --------------------------------------------------------------------


@dataclass
class DEState:
    family: str
    messages: dict[str, np.ndarray]

    @classmethod
    def ones(cls, spec: EnsembleSpec) -> "DEState":
        _, L, _ = spec.chain
        return cls(spec.family, {k: np.ones(L) for k in MESSAGES[spec.family]})

    @classmethod
    def zeros(cls, spec: EnsembleSpec) -> "DEState":
        _, L, _ = spec.chain
        return cls(spec.family, {k: np.zeros(L) for k in MESSAGES[spec.family]})

    def __getitem__(self, key) -> np.ndarray:
        return self.messages[key]

    def copy(self) -> "DEState":
        return DEState(self.family, {k: v.copy() for k, v in self.messages.items()})

    def max_diff(self, other: "DEState") -> float:
        return max(float(np.max(np.abs(v - other.messages[k]))) for k, v in self.messages.items())

    def as_array(self) -> np.ndarray:
        return np.stack([self.messages[k] for k in MESSAGES[self.family]])


def _check(spec: EnsembleSpec, s: DEState):
    if s.family != spec.family:
        raise EnsembleError(f"state for {s.family} used with {spec.family} ensemble")
    _, L, _ = spec.chain
    for k in MESSAGES[spec.family]:
        if k not in s.messages or s.messages[k].shape != (L,):
            raise EnsembleError(f"state message {k!r} missing or not of length {L}")


def _apply(tf, *args) -> np.ndarray:
    cols = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
    return tf.evaluate(np.stack(cols, axis=-1))


# --- one flooding iteration per family -----------------------------------------------


def _pcc_update(spec, s, eps):
    m, _, wrap = spec.chain
    fU, fL = spec.transfers
    e0, e2 = eps_rho(eps, spec.rho[0]), eps_rho(eps, spec.rho[2])
    qL = e0 * backward_mean(forward_mean(s["Ls"], m, wrap), m, wrap)
    qU = e0 * backward_mean(forward_mean(s["Us"], m, wrap), m, wrap)
    up = _apply(fU, qL, e2)
    lo = _apply(fL, qU, e2)
    return {"Us": up[:, 0], "Up": up[:, 1], "Ls": lo[:, 0], "Lp": lo[:, 1]}


def _scc_update(spec, s, eps):
    m, _, wrap = spec.chain
    fO, fI = spec.transfers
    e0, e1, e2 = (eps_rho(eps, r) for r in spec.rho)
    q_bar = forward_mean(s["Is"], m, wrap)
    outer = _apply(fO, e0 * q_bar, e1 * q_bar)
    Os, Op = outer[:, 0], outer[:, 1]
    qO = backward_mean((e0 * Os + e1 * Op) / 2.0, m, wrap)
    inner = _apply(fI, qO, e2)
    return {"Os": Os, "Op": Op, "Is": inner[:, 0], "Ip": inner[:, 1]}


def _bcc_parity_offsets(spec):
    m, _, _ = spec.chain
    if spec.bcc_variant == "split":
        return range(0, -m - 1, -1), range(0, m + 1)
    return range(-1, -m - 1, -1), range(1, m + 1)


def _bcc_update(spec, s, eps):
    m, _, wrap = spec.chain
    fU, fL = spec.transfers
    e0, e2 = eps_rho(eps, spec.rho[0]), eps_rho(eps, spec.rho[2])
    past, future = _bcc_parity_offsets(spec)
    info_coupled = spec.family == "BCC2" or spec.bcc_variant == "split"

    def inputs(other):
        o1, o2, o3 = (s[f"{other}{k}"] for k in (1, 2, 3))
        if info_coupled:
            q1 = e0 * backward_mean(forward_mean(o1, m, wrap), m, wrap)
        else:
            q1 = e0 * o1
        q2 = e2 * _shift_mean(o3, past, wrap)
        q3 = e2 * _shift_mean(o2, future, wrap)
        return q1, q2, q3

    up = _apply(fU, *inputs("L"))
    lo = _apply(fL, *inputs("U"))
    out = {}
    for k in range(3):
        out[f"U{k + 1}"] = up[:, k]
        out[f"L{k + 1}"] = lo[:, k]
    return out


_UPDATES = {"PCC": _pcc_update, "SCC": _scc_update, "BCC1": _bcc_update, "BCC2": _bcc_update}


def de_update(spec: EnsembleSpec, s: DEState, eps: float) -> DEState:
    """One flooding iteration of the exact DE equations at channel erasure ``eps``."""
    if not 0.0 <= eps <= 1.0:
        raise EnsembleError(f"channel erasure probability {eps} outside [0,1]")
    _check(spec, s)
    return DEState(spec.family, _UPDATES[spec.family](spec, s, eps))


def aposteriori(spec: EnsembleSpec, s: DEState, eps: float) -> np.ndarray:
    """Per-position a-posteriori erasure probability of the information bits."""
    _check(spec, s)
    m, _, wrap = spec.chain
    e0 = eps_rho(eps, spec.rho[0])
    if spec.family == "PCC":
        return e0 * forward_mean(s["Us"], m, wrap) * forward_mean(s["Ls"], m, wrap)
    if spec.family == "SCC":
        return e0 * s["Os"] * forward_mean(s["Is"], m, wrap)
    if spec.family == "BCC2" or spec.bcc_variant == "split":
        return e0 * forward_mean(s["U1"], m, wrap) * forward_mean(s["L1"], m, wrap)
    return e0 * s["U1"] * s["L1"]


def average_extrinsic(spec: EnsembleSpec, s: DEState, eps: float) -> float:
    """Extrinsic erasure probability averaged over all transmitted bits.

    Each stream enters with the fraction of its bits that survive puncturing.
    ``eps`` is unused by the formulas but kept for a uniform signature.
    """
    del eps
    _check(spec, s)
    m, _, wrap = spec.chain
    r0, r1, r2 = spec.rho
    if spec.family == "PCC":
        info = forward_mean(s["Us"], m, wrap) * forward_mean(s["Ls"], m, wrap)
        total = r0 * info + r2 * (s["Up"] + s["Lp"])
    elif spec.family == "SCC":
        q_bar = forward_mean(s["Is"], m, wrap)
        total = r0 * s["Os"] * q_bar + r1 * s["Op"] * q_bar + 2.0 * r2 * s["Ip"]
    else:
        if spec.family == "BCC2" or spec.bcc_variant == "split":
            info = forward_mean(s["U1"], m, wrap) * forward_mean(s["L1"], m, wrap)
        else:
            info = s["U1"] * s["L1"]
        _, future = _bcc_parity_offsets(spec)
        vU = s["U3"] * _shift_mean(s["L2"], future, wrap)
        vL = s["L3"] * _shift_mean(s["U2"], future, wrap)
        total = r0 * info + r2 * (vU + vL)
    return float(np.mean(total) / spec.rate_denominator)


# --- scalar recursions for identical components ------------------------------------


def _require_scalar(spec: EnsembleSpec):
    if not spec.identical_components:
        raise EnsembleError(
            "scalar recursion needs identical component encoders; use the vector DE instead"
        )
    if spec.is_bcc and not spec.time_varying:
        raise EnsembleError("BCC scalar recursion needs time-varying trellises")
    r0, r1, r2 = spec.rho
    if spec.family == "SCC" and r0 != r1:
        raise EnsembleError("SCC scalar recursion needs rho0 == rho1")
    if spec.is_bcc and r0 != r2:
        raise EnsembleError("BCC scalar recursion needs equal puncturing on all streams")


def scalar_f(spec: EnsembleSpec, y, eps):
    """``f(y; eps)`` of the scalar system (vectorized over ``y``)."""
    _require_scalar(spec)
    y = np.asarray(y, dtype=float)
    tf = spec.transfers[0]
    r0, r1, r2 = spec.rho
    if spec.family == "PCC":
        return _apply(tf, eps_rho(eps, r0) * y, eps_rho(eps, r2))[..., 0]
    if spec.family == "SCC":
        e1 = eps_rho(eps, r1)
        return e1 * _apply(tf, e1 * y, eps_rho(eps, r2))[..., 0]
    e = eps_rho(eps, r0)
    return np.mean(_apply(tf, e * y, e * y, e * y), axis=-1)


def scalar_g(spec: EnsembleSpec, x):
    """``g(x)`` of the scalar system (vectorized over ``x``)."""
    _require_scalar(spec)
    x = np.asarray(x, dtype=float)
    if spec.family == "SCC":
        f = _apply(spec.transfers[0], x, x)
        return (f[..., 0] + f[..., 1]) / 2.0
    return x.copy()


def scalar_update(spec: EnsembleSpec, x, eps):
    """One step ``x <- f(g(x); eps)`` of the scalar recursion."""
    return scalar_f(spec, scalar_g(spec, x), eps)
