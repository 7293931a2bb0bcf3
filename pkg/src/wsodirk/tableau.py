"""Butcher tableaux: value type, named-scheme registry and a text format.

The abscissae are never stored; ``c`` is always the row sum of ``A``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "ButcherTableau",
    "TableauError",
    "make_tableau",
    "registry_get",
    "registry_names",
    "serialize",
    "parse",
    "load",
    "ROW_SUM_TOL",
]

ROW_SUM_TOL = 1e-13


class TableauError(ValueError):
    """Raised for malformed tableaux or tableau text."""


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Immutable Runge-Kutta coefficient set ``(A, b)`` with ``c = A e``."""

    A: np.ndarray
    b: np.ndarray
    name: str = ""
    claimed_order: int | None = None
    claimed_wso: int | None = None
    source: str = ""
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise TableauError(f"A must be a non-empty square matrix, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise TableauError(f"b must have length {A.shape[0]}, got shape {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise TableauError("coefficients must be finite")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(A.sum(axis=1)))

    @property
    def s(self) -> int:
        return self.A.shape[0]

    # cached: the arrays are read-only, and the integrator asks on every step
    @cached_property
    def is_dirk(self) -> bool:
        return not np.any(np.triu(self.A, k=1))

    @cached_property
    def is_stiffly_accurate(self) -> bool:
        return bool(np.array_equal(self.b, self.A[-1]))

    @cached_property
    def rows(self) -> tuple[tuple[float, ...], ...]:
        """``A`` as nested Python floats, for scalar stepping."""
        return tuple(tuple(r) for r in self.A.tolist())

    def is_invertible(self, tol: float = 1e-14) -> bool:
        if self.is_dirk:
            return bool(np.all(self.A.diagonal() != 0.0))
        return abs(np.linalg.det(self.A)) > tol

    @property
    def is_equal_time(self) -> bool:
        return bool(np.allclose(self.c, self.c[0], rtol=0.0, atol=1e-14))

    def __eq__(self, other):
        if not isinstance(other, ButcherTableau):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and self.name == other.name
            and self.claimed_order == other.claimed_order
            and self.claimed_wso == other.claimed_wso
        )

    def __hash__(self):
        return hash((self.A.tobytes(), self.b.tobytes(), self.name))

    def __repr__(self):
        return (
            f"ButcherTableau(name={self.name!r}, s={self.s}, "
            f"claimed_order={self.claimed_order}, claimed_wso={self.claimed_wso})"
        )


def make_tableau(A, b, name: str = "", claimed_order: int | None = None,
                 claimed_wso: int | None = None, source: str = "") -> ButcherTableau:
    return ButcherTableau(A, b, name=name, claimed_order=claimed_order,
                          claimed_wso=claimed_wso, source=source)


# -- registry ---------------------------------------------------------------

def _stiffly_accurate(rows: list[list[str]], **meta) -> ButcherTableau:
    A = np.zeros((len(rows), len(rows)))
    for i, row in enumerate(rows):
        A[i, : len(row)] = [float(v) for v in row]
    return ButcherTableau(A, A[-1].copy(), **meta)


def _wso2_p3():
    return _stiffly_accurate(
        [
            ["0.01900072890"],
            ["0.40434605601", "0.38435717512"],
            ["0.06487908412", "-0.16389640295", "0.51545231222"],
            ["0.02343549374", "-0.41207877888", "0.96661161281", "0.42203167233"],
        ],
        name="wso2-p3", claimed_order=3, claimed_wso=2,
        source="published 4-stage DIRK, order 3, WSO 2 (11-digit coefficients)",
    )


def _wso3_p3():
    return _stiffly_accurate(
        [
            ["0.13756543551"],
            ["0.56695122794", "0.23483888782"],
            ["-1.08354072813", "2.96618223864", "0.44915521951"],
            ["0.59761291500", "-0.43420997584", "-0.05305815322", "0.88965521406"],
        ],
        name="wso3-p3", claimed_order=3, claimed_wso=3,
        source="published 4-stage DIRK, order 3, WSO 3 (11-digit coefficients)",
    )


def _wso3_p4():
    return _stiffly_accurate(
        [
            ["0.079672377876931"],
            ["0.328355391763968", "0.136009256546967"],
            ["-0.650772774016417", "1.742859063495349", "0.256472952467792"],
            ["-0.714580550967259", "1.793745752775934", "-0.078254785672497",
             "0.311753794172585"],
            ["-1.120092779092918", "1.983452339867353", "3.117393885836001",
             "-3.761930177913743", "0.770646024799205"],
            ["0.214823667785537", "0.536367363903245", "0.154488125726409",
             "-0.217748592703941", "0.072226422925896", "0.239843012362853"],
        ],
        name="wso3-p4", claimed_order=4, claimed_wso=3,
        source="published 6-stage DIRK, order 4, WSO 3 (15-digit coefficients)",
    )


def _wso1_p3():
    # gamma: root of x^3 - 3x^2 + 3x/2 - 1/6 in (1/6, 1/2)
    g = 0.435866521508458999416019
    b1 = -(6 * g * g - 16 * g + 1) / 4
    b2 = (6 * g * g - 20 * g + 5) / 4
    A = [[g, 0, 0], [(1 - g) / 2, g, 0], [b1, b2, g]]
    return ButcherTableau(
        A, A[-1], name="wso1-p3", claimed_order=3, claimed_wso=1,
        source="Alexander (1977) 3-stage L-stable SDIRK, order 3, stage order 1",
    )


def _wso1_p4():
    A = [
        [1 / 4, 0, 0, 0, 0],
        [1 / 2, 1 / 4, 0, 0, 0],
        [17 / 50, -1 / 25, 1 / 4, 0, 0],
        [371 / 1360, -137 / 2720, 15 / 544, 1 / 4, 0],
        [25 / 24, -49 / 48, 125 / 16, -85 / 12, 1 / 4],
    ]
    return ButcherTableau(
        A, A[-1], name="wso1-p4", claimed_order=4, claimed_wso=1,
        source="Hairer-Wanner SDIRK4 (Solving ODEs II, IV.6, Table 6.5), L-stable, stage order 1",
    )


def _edirk2_p3():
    g = 1767732205903 / 4055673282236
    A = [
        [0, 0, 0, 0],
        [g, g, 0, 0],
        [2746238789719 / 10658868560708, -640167445237 / 6845629431997, g, 0],
        [1471266399579 / 7840856788654, -4482444167858 / 7529755066697,
         11266239266428 / 11593286722821, g],
    ]
    return ButcherTableau(
        A, A[-1], name="edirk2-p3", claimed_order=3, claimed_wso=2,
        source="Kennedy-Carpenter ESDIRK3(2)4L[2]SA (implicit part of ARK3(2)4L[2]SA), stage order 2",
    )


def _backward_euler():
    return ButcherTableau([[1.0]], [1.0], name="backward-euler", claimed_order=1,
                          claimed_wso=1, source="backward Euler")


def _implicit_midpoint():
    return ButcherTableau([[0.5]], [1.0], name="implicit-midpoint", claimed_order=2,
                          claimed_wso=1, source="implicit midpoint rule")


_REGISTRY: dict[str, Callable[[], ButcherTableau]] = {
    "wso2-p3": _wso2_p3,
    "wso3-p3": _wso3_p3,
    "wso3-p4": _wso3_p4,
    "wso1-p3": _wso1_p3,
    "wso1-p4": _wso1_p4,
    "edirk2-p3": _edirk2_p3,
    "backward-euler": _backward_euler,
    "implicit-midpoint": _implicit_midpoint,
}

PUBLISHED_SCHEMES = ("wso2-p3", "wso3-p3", "wso3-p4")


def registry_names() -> list[str]:
    return list(_REGISTRY)


def registry_get(name: str) -> ButcherTableau:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(
            f"unknown scheme {name!r}; available: {', '.join(_REGISTRY)}"
        ) from None


# -- text format ------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize(t: ButcherTableau) -> str:
    lines = [f"# Butcher tableau, c = A e"]
    if t.name:
        lines.append(f"name {t.name}")
    lines.append(f"s {t.s}")
    lines.append(f"kind {'dirk' if t.is_dirk else 'general'}")
    if t.claimed_order is not None:
        lines.append(f"claimed_order {t.claimed_order}")
    if t.claimed_wso is not None:
        lines.append(f"claimed_wso {t.claimed_wso}")
    for i, j in zip(*np.nonzero(t.A)):
        lines.append(f"a {i + 1} {j + 1} {_fmt(t.A[i, j])}")
    for j in range(t.s):
        lines.append(f"b {j + 1} {_fmt(t.b[j])}")
    for i in range(t.s):
        lines.append(f"c {i + 1} {_fmt(t.c[i])}")
    return "\n".join(lines) + "\n"


def _index(tok: str, s: int, lineno: int, what: str) -> int:
    try:
        k = int(tok)
    except ValueError:
        raise TableauError(f"line {lineno}: bad {what} index {tok!r}") from None
    if not 1 <= k <= s:
        raise TableauError(f"line {lineno}: {what} index {k} outside 1..{s}")
    return k - 1


def _number(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise TableauError(f"line {lineno}: bad number {tok!r}") from None
    if not np.isfinite(v):
        raise TableauError(f"line {lineno}: non-finite value {tok!r}")
    return v


def parse(text: str) -> ButcherTableau:
    """Parse the line-oriented tableau format produced by :func:`serialize`."""
    header: dict[str, object] = {}
    entries: list[tuple[str, list[str], int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key in header:
            raise TableauError(f"line {lineno}: duplicate {key!r} line")
        if key == "name":
            header["name"] = rest
        elif key in ("s", "claimed_order", "claimed_wso"):
            try:
                header[key] = int(rest)
            except ValueError:
                raise TableauError(f"line {lineno}: {key} expects an integer, got {rest!r}") from None
            if key == "s" and header[key] < 1:
                raise TableauError(f"line {lineno}: s must be positive, got {rest}")
        elif key == "kind":
            if rest not in ("dirk", "general"):
                raise TableauError(f"line {lineno}: kind must be 'dirk' or 'general'")
            header["kind"] = rest
        elif key in ("a", "b", "c"):
            entries.append((key, rest.split(), lineno))
        else:
            raise TableauError(f"line {lineno}: unknown keyword {key!r}")

    if "s" not in header:
        raise TableauError("missing 's <int>' line")
    s = header["s"]
    if s < 1:
        raise TableauError(f"s must be positive, got {s}")
    A = np.zeros((s, s))
    b = np.zeros(s)
    c_given: list[tuple[int, float, int]] = []
    for key, toks, lineno in entries:
        if key == "a":
            if len(toks) != 3:
                raise TableauError(f"line {lineno}: expected 'a <i> <j> <value>'")
            i = _index(toks[0], s, lineno, "row")
            j = _index(toks[1], s, lineno, "column")
            v = _number(toks[2], lineno)
            if header.get("kind") == "dirk" and j > i and v != 0.0:
                raise TableauError(
                    f"line {lineno}: entry a {i + 1} {j + 1} above the diagonal in a dirk tableau"
                )
            A[i, j] = v
        else:
            if len(toks) != 2:
                raise TableauError(f"line {lineno}: expected '{key} <j> <value>'")
            j = _index(toks[0], s, lineno, key)
            v = _number(toks[1], lineno)
            if key == "b":
                b[j] = v
            else:
                c_given.append((j, v, lineno))

    rowsum = A.sum(axis=1)
    for j, v, lineno in c_given:
        if abs(v - rowsum[j]) > ROW_SUM_TOL * max(1.0, abs(v)):
            raise TableauError(
                f"line {lineno}: c {j + 1} = {v!r} disagrees with row sum {rowsum[j]!r}"
            )
    return ButcherTableau(
        A, b, name=header.get("name", ""),
        claimed_order=header.get("claimed_order"),
        claimed_wso=header.get("claimed_wso"),
    )


def load(name_or_path: str) -> ButcherTableau:
    """Resolve a registry name, or read a tableau file."""
    if name_or_path in _REGISTRY:
        return registry_get(name_or_path)
    try:
        with open(name_or_path) as fh:
            return parse(fh.read())
    except FileNotFoundError:
        raise KeyError(
            f"{name_or_path!r} is neither a registered scheme nor a readable file; "
            f"available: {', '.join(_REGISTRY)}"
        ) from None


def iter_registry() -> Iterable[ButcherTableau]:
    for name in _REGISTRY:
        yield registry_get(name)
