"""Named ensembles for the published threshold tables, with their printed values."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .ensembles import EnsembleSpec

PCC4 = "1,5/7"
PCC8 = "1,15/13"  # the printed 11/13 reproduces none of the 8-state rows
BCC4 = "1 0 1/7; 0 1 5/7"

TABLES = ("table1", "table2", "table3")


@dataclass(frozen=True)
class PresetRow:
    table: str
    key: str
    spec: EnsembleSpec  # uncoupled
    published: dict = field(default_factory=dict)  # kind -> printed value (None for "--")
    rho2_printed: float | None = None

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(self.published)

    def spec_for(self, kind: str, L: int) -> EnsembleSpec:
        """Spec evaluated for ``kind`` (BP, MAP or SC<m>)."""
        if kind.startswith("SC"):
            return self.spec.with_(m=int(kind[2:]), L=L)
        return self.spec


def _rho2(rate: Fraction) -> float:
    # all parity puncturing on the rho2 streams; printed values are truncated
    return float((1 / rate - 1) / 2)


def _spec(family: str, states: int, rate: Fraction, name: str) -> EnsembleSpec:
    r2 = _rho2(rate)
    if family in ("PCC", "SCC"):
        comp = PCC4 if states == 4 else PCC8
        rho = (1.0, 0.0, r2) if family == "SCC" else (1.0, 1.0, r2)
        return EnsembleSpec(family, (comp, comp), rho=rho, name=name)
    return EnsembleSpec(family, (BCC4, BCC4), rho=(1.0, 1.0, r2), name=name)


def _row(table, family, states, rate, printed_rho2, values, kinds):
    rate = Fraction(rate)
    label = {"BCC1": "TypeI", "BCC2": "TypeII"}.get(family, family)
    key = f"{label}-{states}" if table == "table1" else f"{label}-{states}-{rate}"
    published = dict(zip(kinds, values))
    return PresetRow(table, key, _spec(family, states, rate, key), published, printed_rho2)


_T1 = ("BP", "MAP", "SC1")
_T2 = ("BP", "MAP", "SC1", "SC3", "SC5")

_TABLE1 = [
    ("PCC", 4, (0.4606, 0.4689, 0.4689)),
    ("SCC", 4, (0.3594, 0.4981, 0.4708)),
    ("PCC", 8, (0.4651, 0.4863, 0.4862)),
    ("SCC", 8, (0.3120, 0.4993, 0.4507)),
    ("BCC1", 4, (0.3013, 0.4993, 0.4932)),
    ("BCC2", 4, (0.3013, 0.4993, 0.4988)),
]

_TABLE2 = [
    ("PCC", "1/3", 4, 1.0, (0.6428, 0.6553, 0.6553, 0.6553, 0.6553)),
    ("SCC", "1/3", 4, 1.0, (0.5405, 0.6654, 0.6437, 0.6650, 0.6654)),
    ("PCC", "1/3", 8, 1.0, (0.6368, 0.6621, 0.6617, 0.6621, 0.6621)),
    ("SCC", "1/3", 8, 1.0, (0.5026, 0.6663, 0.6313, 0.6647, 0.6662)),
    ("PCC", "1/2", 4, 0.5, (0.4606, 0.4689, 0.4689, 0.4689, 0.4689)),
    ("SCC", "1/2", 4, 0.5, (0.3594, 0.4981, 0.4708, 0.4975, 0.4981)),
    ("PCC", "1/2", 8, 0.5, (0.4651, 0.4863, 0.4862, 0.4863, 0.4863)),
    ("SCC", "1/2", 8, 0.5, (0.3120, 0.4993, 0.4507, 0.4970, 0.4992)),
    ("PCC", "2/3", 4, 0.25, (0.2732, 0.2772, 0.2772, 0.2772, 0.2772)),
    ("SCC", "2/3", 4, 0.25, (0.2038, 0.3316, 0.3303, 0.3305, 0.3315)),
    ("PCC", "2/3", 8, 0.25, (0.2945, 0.3080, 0.3080, 0.3080, 0.3080)),
    ("SCC", "2/3", 8, 0.25, (0.1507, 0.3326, 0.2710, 0.3278, 0.3323)),
    ("PCC", "3/4", 4, 0.166, (0.1854, 0.1876, 0.1876, 0.1876, 0.1876)),
    ("SCC", "3/4", 4, 0.166, (0.1337, 0.2486, 0.2155, 0.2471, 0.2486)),
    ("PCC", "3/4", 8, 0.166, (0.2103, 0.2196, 0.2196, 0.2196, 0.2196)),
    ("SCC", "3/4", 8, 0.166, (0.0865, 0.2495, 0.1827, 0.2416, 0.2488)),
    ("PCC", "4/5", 4, 0.125, (0.1376, 0.1391, 0.1391, 0.1391, 0.1391)),
    ("SCC", "4/5", 4, 0.125, (0.0942, 0.1990, 0.1644, 0.1968, 0.1989)),
    ("PCC", "4/5", 8, 0.125, (0.1628, 0.1698, 0.1698, 0.1698, 0.1698)),
    ("SCC", "4/5", 8, 0.125, (0.0517, 0.1996, 0.1302, 0.1885, 0.1982)),
    ("PCC", "9/10", 4, 0.055, (0.0578, 0.0582, 0.0582, 0.0582, 0.0582)),
    ("SCC", "9/10", 4, 0.055, (0.0269, 0.0996, 0.0624, 0.0930, 0.0988)),
    ("PCC", "9/10", 8, 0.055, (0.0732, 0.0761, 0.0761, 0.0761, 0.0761)),
    ("SCC", "9/10", 8, 0.055, (0.0128, 0.0999, 0.0384, 0.0765, 0.0931)),
]

_TABLE3 = [
    ("BCC1", "1/3", 1.0, (0.5541, 0.6653, 0.6609, 0.6644, 0.6650)),
    ("BCC2", "1/3", 1.0, (0.5541, 0.6653, 0.6651, 0.6653, 0.6653)),
    ("BCC1", "1/2", 0.5, (0.3013, 0.4993, 0.4932, 0.4980, 0.4988)),
    ("BCC2", "1/2", 0.5, (0.3013, 0.4993, 0.4988, 0.4993, 0.4993)),
    ("BCC1", "2/3", 0.25, (None, 0.3331, 0.3257, 0.3315, 0.3325)),
    ("BCC2", "2/3", 0.25, (None, 0.3331, 0.3323, 0.3331, 0.3331)),
    ("BCC1", "3/4", 0.166, (None, 0.2491, 0.2411, 0.2473, 0.2484)),
    ("BCC2", "3/4", 0.166, (None, 0.2491, 0.2481, 0.2491, 0.2491)),
    ("BCC1", "4/5", 0.125, (None, 0.1999, 0.1915, 0.1979, 0.1991)),
    ("BCC2", "4/5", 0.125, (None, 0.1999, 0.1986, 0.1999, 0.1999)),
    ("BCC1", "9/10", 0.055, (None, 0.0990, 0.0893, 0.0966, 0.0980)),
    ("BCC2", "9/10", 0.055, (None, 0.0990, 0.0954, 0.0990, 0.0990)),
]


def table_rows(table: str) -> list[PresetRow]:
    if table == "table1":
        return [_row(table, f, s, Fraction(1, 2), 0.5, v, _T1) for f, s, v in _TABLE1]
    if table == "table2":
        return [_row(table, f, s, Fraction(r), p, v, _T2) for f, r, s, p, v in _TABLE2]
    if table == "table3":
        return [_row(table, f, 4, Fraction(r), p, v, _T2) for f, r, p, v in _TABLE3]
    raise KeyError(f"unknown table {table!r}; expected one of {TABLES}")


def select_rows(table: str, rows: str | None = None) -> list[PresetRow]:
    """Rows of ``table`` whose key matches one of the comma-separated filters.

    A filter matches a key exactly (case-insensitive) or, failing that, as a
    prefix.  An empty filter selects the whole table.
    """
    all_rows = table_rows(table)
    if not rows:
        return all_rows
    wanted = [w.strip().lower() for w in rows.split(",") if w.strip()]
    out = []
    for w in wanted:
        exact = [r for r in all_rows if r.key.lower() == w]
        hits = exact or [r for r in all_rows if r.key.lower().startswith(w)]
        if not hits:
            raise KeyError(f"no row of {table} matches {w!r}; keys: {[r.key for r in all_rows]}")
        out.extend(r for r in hits if r not in out)
    return out


def preset(name: str) -> EnsembleSpec:
    """Look up a preset ensemble by ``table:key`` or a bare key from any table."""
    table, _, key = name.rpartition(":")
    tables = (table,) if table else TABLES
    for t in tables:
        for row in table_rows(t):
            if row.key.lower() == key.lower():
                return row.spec
    raise KeyError(f"unknown preset {name!r}")
