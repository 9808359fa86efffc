"""Binary rational generator matrices and their trellis realizations.

Polynomials over GF(2) are stored as Python ints, bit ``i`` holding the
coefficient of ``D**i``.  Octal strings follow the usual convolutional-code
convention where the most significant bit is the constant term, so ``7`` is
``1 + D + D^2`` and ``13`` is ``1 + D^2 + D^3``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

MAX_MEMORY = 32


class GeneratorError(ValueError):
    """Raised for malformed or unrealizable generator matrices."""


# --- GF(2)[D] arithmetic on int bitmasks -------------------------------------


def _deg(a: int) -> int:
    return a.bit_length() - 1


def _mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def _divmod(a: int, b: int) -> tuple[int, int]:
    if b == 0:
        raise ZeroDivisionError("polynomial division by zero")
    q = 0
    db = _deg(b)
    while a and _deg(a) >= db:
        shift = _deg(a) - db
        q ^= 1 << shift
        a ^= b << shift
    return q, a


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _divmod(a, b)[1]
    return a


def _lcm(a: int, b: int) -> int:
    return _divmod(_mul(a, b), _gcd(a, b))[0]


@dataclass(frozen=True)
class BinaryPolynomial:
    """Polynomial in the delay operator with coefficients in GF(2)."""

    bits: int

    @classmethod
    def from_coefficients(cls, coeffs) -> "BinaryPolynomial":
        """Build from a coefficient sequence, lowest degree first."""
        bits = 0
        for i, c in enumerate(coeffs):
            if c not in (0, 1):
                raise GeneratorError(f"coefficient {c!r} is not binary")
            bits |= c << i
        return cls(bits)

    @classmethod
    def from_octal(cls, text: str) -> "BinaryPolynomial":
        value = int(text, 8)
        if value == 0:
            return cls(0)
        # MSB of the octal value is the constant term.
        msb_first = bin(value)[2:]
        return cls.from_coefficients(int(b) for b in msb_first)

    @classmethod
    def from_binary(cls, text: str) -> "BinaryPolynomial":
        return cls.from_coefficients(int(b) for b in text)

    @property
    def degree(self) -> int:
        return _deg(self.bits)

    @property
    def coefficients(self) -> tuple[int, ...]:
        return tuple((self.bits >> i) & 1 for i in range(self.degree + 1))

    def __bool__(self) -> bool:
        return self.bits != 0

    def __str__(self) -> str:
        if not self.bits:
            return "0"
        terms = []
        for i, c in enumerate(self.coefficients):
            if c:
                terms.append("1" if i == 0 else ("D" if i == 1 else f"D^{i}"))
        return "+".join(terms)


ZERO = BinaryPolynomial(0)
ONE = BinaryPolynomial(1)


@dataclass(frozen=True)
class BinaryRationalFunction:
    numerator: BinaryPolynomial
    denominator: BinaryPolynomial = ONE

    def __post_init__(self):
        if not self.denominator:
            raise GeneratorError("zero denominator")
        if not self.denominator.bits & 1:
            raise GeneratorError(
                f"denominator {self.denominator} has no constant term (not realizable)"
            )

    @property
    def degree(self) -> int:
        return max(self.numerator.degree, self.denominator.degree, 0)

    @property
    def is_constant(self) -> bool:
        return self.denominator.bits == 1 and self.numerator.bits in (0, 1)

    def __str__(self) -> str:
        if self.denominator.bits == 1:
            return str(self.numerator)
        return f"({self.numerator})/({self.denominator})"


@dataclass(frozen=True)
class GeneratorMatrix:
    entries: tuple[tuple[BinaryRationalFunction, ...], ...]
    text: str = ""

    def __post_init__(self):
        rows = {len(r) for r in self.entries}
        if len(rows) != 1:
            raise GeneratorError("generator rows have different lengths")
        k, n = self.k, self.n
        if not k < n:
            raise GeneratorError(f"need k < n, got k={k}, n={n}")
        if not (k == 1 or n - k == 1):
            raise GeneratorError("only encoders with k=1 or n-k=1 are supported")

    @property
    def k(self) -> int:
        return len(self.entries)

    @property
    def n(self) -> int:
        return len(self.entries[0])

    @property
    def memory(self) -> int:
        return max(e.degree for row in self.entries for e in row)

    @property
    def is_systematic(self) -> bool:
        for i, row in enumerate(self.entries):
            for j in range(self.k):
                want = 1 if i == j else 0
                e = row[j]
                if not (e.denominator.bits == 1 and e.numerator.bits == want):
                    return False
        return True

    def __str__(self) -> str:
        return " ; ".join(", ".join(str(e) for e in row) for row in self.entries)


_ENTRY_RE = re.compile(r"^([0-9]+)(?:/([0-9]+))?$")


def parse_generator(spec: str, notation: str = "octal") -> GeneratorMatrix:
    """Parse a generator matrix such as ``"1,5/7"`` or ``"1 0 1/7 ; 0 1 5/7"``.

    Rows are separated by ``;``, entries by commas and/or whitespace.  With
    ``notation="binary"`` each polynomial is written as its coefficient string,
    lowest degree first (``"01/11"`` is ``D/(1+D)``).
    """
    if notation not in ("octal", "binary"):
        raise GeneratorError(f"unknown notation {notation!r}")
    digits = "01234567" if notation == "octal" else "01"
    make = BinaryPolynomial.from_octal if notation == "octal" else BinaryPolynomial.from_binary
    rows = []
    for row_text in spec.strip().split(";"):
        tokens = [t for t in re.split(r"[,\s]+", row_text.strip()) if t]
        if not tokens:
            raise GeneratorError(f"empty row in {spec!r}")
        row = []
        for tok in tokens:
            m = _ENTRY_RE.match(tok)
            if not m or any(ch not in digits for ch in tok.replace("/", "")):
                raise GeneratorError(f"malformed entry {tok!r} in {spec!r}")
            num = make(m.group(1))
            den = make(m.group(2)) if m.group(2) is not None else ONE
            if not den:
                raise GeneratorError(f"zero denominator in {tok!r}")
            if not den.bits & 1:
                raise GeneratorError(f"feedback polynomial {m.group(2)} has no constant term")
            row.append(BinaryRationalFunction(num, den))
        rows.append(tuple(row))
    g = GeneratorMatrix(tuple(rows), text=spec.strip())
    if g.memory > MAX_MEMORY:
        raise GeneratorError(f"memory {g.memory} exceeds cap {MAX_MEMORY}")
    return g


# --- trellis realization -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trellis:
    """Explicit state/branch table.

    ``next_state[s, u]`` and ``output[s, u]`` are indexed by state and input
    tuple packed as an int (bit ``i`` = input ``i``); outputs are packed the
    same way (bit ``l`` = code bit ``l``).
    """

    k: int
    n: int
    next_state: np.ndarray
    output: np.ndarray
    name: str = ""
    _fingerprint: bytes = field(default=b"", repr=False)

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def memory(self) -> int:
        return self.num_states.bit_length() - 1

    def fingerprint(self) -> bytes:
        return self._fingerprint

    def branches(self):
        """Yield ``(state, input, next_state, output)`` for every branch."""
        for s in range(self.num_states):
            for u in range(1 << self.k):
                yield s, u, int(self.next_state[s, u]), int(self.output[s, u])

    def encode(self, inputs: np.ndarray, state: int = 0) -> np.ndarray:
        """Encode a ``(T, k)`` bit array; returns ``(T, n)`` code bits."""
        inputs = np.asarray(inputs, dtype=np.int64)
        out = np.zeros((inputs.shape[0], self.n), dtype=np.int64)
        weights = 1 << np.arange(self.k)
        for t, row in enumerate(inputs):
            u = int(row @ weights)
            o = int(self.output[state, u])
            out[t] = (o >> np.arange(self.n)) & 1
            state = int(self.next_state[state, u])
        return out


def _pack(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def _controller_form(g: GeneratorMatrix):
    # k = 1: one shift register over w = u / d with a common denominator d.
    row = g.entries[0]
    d = 1
    for e in row:
        d = _lcm(d, e.denominator.bits)
    nums = [_mul(e.numerator.bits, _divmod(d, e.denominator.bits)[0]) for e in row]
    nu = max([_deg(d)] + [_deg(a) for a in nums if a] + [0])

    def step(state: int, u: tuple[int, ...]):
        # state bit j-1 holds w_{tau-j}
        w_hist = [(state >> (j - 1)) & 1 for j in range(1, nu + 1)]
        w = u[0]
        for j in range(1, nu + 1):
            if (d >> j) & 1:
                w ^= w_hist[j - 1]
        taps = [w] + w_hist
        outs = []
        for a in nums:
            v = 0
            for j in range(nu + 1):
                if (a >> j) & 1:
                    v ^= taps[j]
            outs.append(v)
        nxt = ([w] + w_hist)[:nu]
        return _pack(nxt), outs

    return nu, step


def _observer_form(g: GeneratorMatrix):
    # n - k = 1: memoryless columns pass straight through, one column may hold
    # a rational function realized with a single observer-form register.
    k, n = g.k, g.n
    dynamic = [j for j in range(n) if not all(g.entries[i][j].is_constant for i in range(k))]
    if len(dynamic) > 1:
        raise GeneratorError("observer form supports a single column with memory")
    col = dynamic[0] if dynamic else None
    d, nums, nu = 1, [0] * k, 0
    if col is not None:
        for i in range(k):
            d = _lcm(d, g.entries[i][col].denominator.bits)
        for i in range(k):
            e = g.entries[i][col]
            nums[i] = _mul(e.numerator.bits, _divmod(d, e.denominator.bits)[0])
        nu = max([_deg(d)] + [_deg(a) for a in nums if a] + [0])

    def step(state: int, u: tuple[int, ...]):
        r = [(state >> (j - 1)) & 1 for j in range(1, nu + 1)] + [0]
        outs = []
        v_dyn = 0
        for j in range(n):
            if j == col:
                v = r[0] if nu else 0
                for i in range(k):
                    v ^= u[i] & (nums[i] & 1)
                v_dyn = v
            else:
                v = 0
                for i in range(k):
                    v ^= u[i] & g.entries[i][j].numerator.bits
            outs.append(v)
        nxt = []
        for j in range(1, nu + 1):
            x = r[j]
            for i in range(k):
                x ^= u[i] & ((nums[i] >> j) & 1)
            x ^= v_dyn & ((d >> j) & 1)
            nxt.append(x)
        return _pack(nxt), outs

    return nu, step


def build_trellis(g: GeneratorMatrix) -> Trellis:
    """Realize ``g`` as a trellis: controller form for k=1, observer form otherwise."""
    if g.k == 1:
        nu, step = _controller_form(g)
    else:
        nu, step = _observer_form(g)
    if nu > MAX_MEMORY:
        raise GeneratorError(f"realization needs {nu} memory cells (cap {MAX_MEMORY})")
    S, U = 1 << nu, 1 << g.k
    next_state = np.zeros((S, U), dtype=np.int64)
    output = np.zeros((S, U), dtype=np.int64)
    for s in range(S):
        for u in range(U):
            bits = tuple((u >> i) & 1 for i in range(g.k))
            nxt, outs = step(s, bits)
            next_state[s, u] = nxt
            output[s, u] = _pack(outs)
    fp = f"{g.k}:{g.n}:".encode() + next_state.tobytes() + output.tobytes()
    return Trellis(g.k, g.n, next_state, output, name=g.text or str(g), _fingerprint=fp)


def trellis_from_string(spec: str, notation: str = "octal") -> Trellis:
    return build_trellis(parse_generator(spec, notation))


