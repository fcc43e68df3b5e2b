"""Shape DSL: data model, parser, serializer, validator and canonicalizer.

A shape is an ordered list of ``(group, occupancy)`` levels.  Level 1 is the
innermost one and acts first on the origin.  Concrete syntax::

    [(Trans Y,[0.5,0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0..3])]

Groups are ``Trans X``, ``Trans Y``, ``Rot n``, ``Rot 2π`` (continuous
rotation, also written ``Rot 2pi``), ``Mirror`` and ``Scale l``.  Occupancies
are ``full`` or a bracketed list.  On a translation level a comma-separated
pair containing a real literal is an interval; every other list is a discrete
set.  ``a..b`` expands to an inclusive integer range and ``;`` may be used as
a list separator to force a discrete reading.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Union

MAX_LEVELS = 8


class GrammarError(ValueError):
    pass


class ParseError(GrammarError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class ValidationError(GrammarError):
    """Invariant violation.  ``code`` is one of the strings in VALIDATION_CODES."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


VALIDATION_CODES = (
    "too-many-levels",
    "bad-group-parameter",
    "empty-occupancy",
    "index-out-of-range",
    "non-integer-index",
    "non-finite-value",
    "bad-interval",
    "interval-on-discrete-group",
    "full-on-infinite-group",
    "continuous-fiber",
)


# -- groups -------------------------------------------------------------------


@dataclass(frozen=True)
class Trans:
    axis: str  # "X" or "Y"


@dataclass(frozen=True)
class Rot:
    n: int


@dataclass(frozen=True)
class RotFull:
    pass


@dataclass(frozen=True)
class Mirror:
    pass


@dataclass(frozen=True)
class Scale:
    l: float


GroupSpec = Union[Trans, Rot, RotFull, Mirror, Scale]

# -- occupancies --------------------------------------------------------------


@dataclass(frozen=True)
class Discrete:
    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(set(self.indices))))

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float


@dataclass(frozen=True)
class Full:
    pass


Occupancy = Union[Discrete, Interval, Full]

UNIT_INTERVAL = Interval(-0.5, 0.5)


def _index_set_size(group) -> int | None:
    if isinstance(group, Rot):
        return group.n
    if isinstance(group, Mirror):
        return 2
    return None


@dataclass(frozen=True)
class Level:
    group: GroupSpec
    occ: Occupancy

    def __post_init__(self):
        g, occ = self.group, self.occ
        m = _index_set_size(g)
        if isinstance(occ, Full) and m is not None and m >= 1:
            occ = Discrete(range(m))
        elif isinstance(occ, Discrete):
            if isinstance(g, (Trans, RotFull)):
                occ = Discrete(float(v) for v in occ.indices)
            else:
                occ = Discrete(int(v) if float(v).is_integer() else v for v in occ.indices)
        elif isinstance(occ, Interval):
            occ = Interval(float(occ.lo), float(occ.hi))
            if occ.lo == occ.hi and isinstance(g, Trans):
                occ = Discrete((occ.lo,))
        object.__setattr__(self, "occ", occ)

    @property
    def is_continuous(self) -> bool:
        return isinstance(self.occ, (Interval, Full))

    @property
    def is_single(self) -> bool:
        return isinstance(self.occ, Discrete) and len(self.occ) == 1

    def size(self) -> int:
        """Number of copies this level makes of its fiber (a sweep counts once)."""
        return len(self.occ) if isinstance(self.occ, Discrete) else 1

    def values(self) -> tuple:
        """Index values keyed by the noise tree; a continuous sweep is ``None``."""
        return self.occ.indices if isinstance(self.occ, Discrete) else (None,)


@dataclass(frozen=True)
class Shape:
    levels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))

    def __len__(self):
        return len(self.levels)

    def __iter__(self) -> Iterator[Level]:
        return iter(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    def __str__(self):
        return serialize(self)

    def copies(self) -> int:
        return math.prod(level.size() for level in self.levels)


def is_point_fiber(levels) -> bool:
    """True when the listed levels unfold the origin into a single point."""
    return all(isinstance(l.occ, Discrete) and len(l.occ) == 1 for l in levels)


# -- validation ---------------------------------------------------------------


def validate(shape: Shape, max_levels: int = MAX_LEVELS) -> Shape:
    if len(shape) > max_levels:
        raise ValidationError("too-many-levels", f"{len(shape)} levels exceed the maximum of {max_levels}")
    for i, level in enumerate(shape.levels, start=1):
        _validate_level(level, i)
        if level.is_continuous and not is_point_fiber(shape.levels[: i - 1]):
            raise ValidationError(
                "continuous-fiber",
                f"level {i}: continuous occupancy needs single discrete occupancy on every lower level",
            )
    return shape


def _validate_level(level: Level, i: int) -> None:
    g, occ = level.group, level.occ
    where = f"level {i}"
    if isinstance(g, Rot) and (not isinstance(g.n, int) or g.n < 2):
        raise ValidationError("bad-group-parameter", f"{where}: Rot order must be an integer >= 2, got {g.n}")
    if isinstance(g, Scale) and not (math.isfinite(g.l) and g.l > 0):
        raise ValidationError("bad-group-parameter", f"{where}: Scale base must be positive, got {g.l}")
    if isinstance(g, Trans) and g.axis not in ("X", "Y"):
        raise ValidationError("bad-group-parameter", f"{where}: unknown axis {g.axis!r}")

    if isinstance(occ, Interval):
        if not isinstance(g, Trans):
            raise ValidationError("interval-on-discrete-group", f"{where}: intervals are only allowed on translations")
        if not (math.isfinite(occ.lo) and math.isfinite(occ.hi)):
            raise ValidationError("non-finite-value", f"{where}: interval bounds must be finite")
        if occ.lo > occ.hi:
            raise ValidationError("bad-interval", f"{where}: interval [{occ.lo}, {occ.hi}] has lo > hi")
        return
    if isinstance(occ, Full):
        if not isinstance(g, RotFull):
            raise ValidationError("full-on-infinite-group", f"{where}: 'full' is not defined for {_group_text(g)}")
        return

    if len(occ) == 0:
        raise ValidationError("empty-occupancy", f"{where}: occupancy set is empty")
    for v in occ.indices:
        if not math.isfinite(v):
            raise ValidationError("non-finite-value", f"{where}: index {v} is not finite")
    if isinstance(g, (Rot, Mirror, Scale)):
        for v in occ.indices:
            if not isinstance(v, int):
                raise ValidationError("non-integer-index", f"{where}: index {v} must be an integer")
    m = _index_set_size(g)
    if m is not None:
        for v in occ.indices:
            if not 0 <= v < m:
                raise ValidationError("index-out-of-range", f"{where}: index {v} is not in Z_{m}")


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<circle>2(?:π|pi)(?![A-Za-z0-9]))
  | (?P<range>\.\.)
  | (?P<number>[-+]?(?:\d+(?:\.\d+)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[\[\]();,])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return tok

    def fail(self, message: str, tok: _Tok):
        raise ParseError(message, tok.line, tok.col)

    def shape(self) -> Shape:
        self.expect("[")
        levels = []
        if self.peek().text != "]":
            levels.append(self.level())
            while self.peek().text == ";":
                self.next()
                levels.append(self.level())
        self.expect("]")
        tok = self.peek()
        if tok.kind != "eof":
            self.fail(f"unexpected {tok.text!r} after shape", tok)
        return Shape(tuple(levels))

    def level(self) -> Level:
        self.expect("(")
        group = self.group()
        self.expect(",")
        occ = self.occupancy(group)
        self.expect(")")
        return Level(group, occ)

    def group(self) -> GroupSpec:
        tok = self.next()
        if tok.text == "Trans":
            axis = self.next()
            if axis.text not in ("X", "Y"):
                self.fail("translation axis must be X or Y", axis)
            return Trans(axis.text)
        if tok.text == "Rot":
            arg = self.next()
            if arg.kind == "circle":
                return RotFull()
            if arg.kind == "number" and re.fullmatch(r"[-+]?\d+", arg.text):
                return Rot(int(arg.text))
            self.fail("Rot takes an integer order or 2π", arg)
        if tok.text == "Mirror":
            return Mirror()
        if tok.text == "Scale":
            arg = self.next()
            if arg.kind != "number":
                self.fail("Scale takes a number", arg)
            return Scale(float(arg.text))
        self.fail(f"unknown group {tok.text!r}", tok)

    def occupancy(self, group) -> Occupancy:
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "full":
            self.next()
            return Full()
        self.expect("[")
        items = []  # (value, is_real_literal, is_range)
        seps = set()
        if self.peek().text != "]":
            items.extend(self.item())
            while self.peek().text in (",", ";"):
                seps.add(self.next().text)
                items.extend(self.item())
        self.expect("]")
        if (
            isinstance(group, Trans)
            and len(items) == 2
            and seps == {","}
            and not any(r for _, _, r in items)
            and any(real for _, real, _ in items)
        ):
            return Interval(items[0][0], items[1][0])
        return Discrete(v for v, _, _ in items)

    def item(self):
        tok = self.next()
        if tok.kind != "number":
            self.fail(f"expected a number, found {tok.text or 'end of input'!r}", tok)
        if self.peek().kind == "range":
            self.next()
            end = self.next()
            if end.kind != "number":
                self.fail("expected a number after '..'", end)
            for t in (tok, end):
                if not re.fullmatch(r"[-+]?\d+", t.text):
                    self.fail("range bounds must be integers", t)
            a, b = int(tok.text), int(end.text)
            if b < a:
                self.fail(f"empty range {a}..{b}", tok)
            return [(v, False, True) for v in range(a, b + 1)]
        real = bool(re.search(r"[.eE]", tok.text))
        value = float(tok.text) if real else int(tok.text)
        return [(value, real, False)]


def parse(text: str, validate_shape: bool = True, max_levels: int = MAX_LEVELS) -> Shape:
    """Parse DSL text into a Shape.

    Raises ParseError for syntax problems and ValidationError for invariant
    violations (unless ``validate_shape`` is false).
    """
    shape = _Parser(text).shape()
    if validate_shape:
        validate(shape, max_levels=max_levels)
    return shape


# -- serialization ------------------------------------------------------------


def _fmt_real(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt_int_list(values) -> str:
    values = list(values)
    parts = []
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[j + 1] == values[j] + 1:
            j += 1
        if j - i >= 2:
            parts.append(f"{values[i]}..{values[j]}")
            i = j + 1
        else:
            parts.append(str(values[i]))
            i += 1
    return ",".join(parts)


def _group_text(g) -> str:
    if isinstance(g, Trans):
        return f"Trans {g.axis}"
    if isinstance(g, Rot):
        return f"Rot {g.n}"
    if isinstance(g, RotFull):
        return "Rot 2π"
    if isinstance(g, Mirror):
        return "Mirror"
    if isinstance(g, Scale):
        return f"Scale {g.l!r}"
    raise TypeError(f"not a group: {g!r}")


def _occ_text(level: Level) -> str:
    g, occ = level.group, level.occ
    if isinstance(occ, Full):
        return "full"
    if isinstance(occ, Interval):
        return f"[{float(occ.lo)!r},{float(occ.hi)!r}]"
    values = occ.indices
    if all(isinstance(v, int) or float(v).is_integer() for v in values):
        ints = [int(v) for v in values]
        if isinstance(g, (Trans, RotFull)) and any(abs(v) >= 1e15 for v in values):
            return "[" + ";".join(repr(float(v)) for v in values) + "]"
        return "[" + _fmt_int_list(ints) + "]"
    texts = [_fmt_real(v) for v in values]
    if isinstance(g, Trans) and len(values) == 1:
        return f"[{texts[0]},{texts[0]}]"
    sep = ";" if isinstance(g, Trans) and len(values) == 2 else ","
    return "[" + sep.join(texts) + "]"


def serialize(shape: Shape) -> str:
    return "[" + "; ".join(f"({_group_text(l.group)},{_occ_text(l)})" for l in shape.levels) + "]"


# -- canonicalization -----------------------------------------------------------


def _is_identity_level(level: Level) -> bool:
    g, occ = level.group, level.occ
    if not (isinstance(occ, Discrete) and len(occ) == 1):
        return False
    v = occ.indices[0]
    if isinstance(g, (Trans, Mirror)):
        return v == 0
    if isinstance(g, Scale):
        # tolerate bases like tan(pi/4) that miss 1 by an ulp
        return v == 0 or abs(float(g.l) ** v - 1.0) <= 1e-12
    if isinstance(g, Rot):
        return v % g.n == 0
    if isinstance(g, RotFull):
        return math.remainder(v, 2 * math.pi) == 0.0
    return False


def _rewrite_once(levels: list[Level]) -> list[Level]:
    out = []
    for level in levels:
        g, occ = level.group, level.occ
        if isinstance(g, Rot) and isinstance(occ, Discrete) and g.n >= 2:
            if all(isinstance(v, int) for v in occ.indices):
                level = Level(g, Discrete(v % g.n for v in occ.indices))
        elif isinstance(g, Mirror) and isinstance(occ, Discrete):
            if all(isinstance(v, int) for v in occ.indices):
                level = Level(g, Discrete(v % 2 for v in occ.indices))
        out.append(level)

    # identity levels vanish
    out = [l for l in out if not _is_identity_level(l)]

    merged: list[Level] = []
    for level in out:
        prev = merged[-1] if merged else None
        if (
            prev is not None
            and isinstance(prev.group, Trans)
            and isinstance(level.group, Trans)
            and prev.group.axis == level.group.axis
            and prev.is_single
            and level.is_single
        ):
            merged[-1] = Level(prev.group, Discrete((prev.occ.indices[0] + level.occ.indices[0],)))
            continue
        if (
            prev is not None
            and isinstance(prev.group, Rot)
            and isinstance(level.group, Rot)
            and prev.occ == Discrete(range(prev.group.n))
            and level.occ == Discrete(range(level.group.n))
            and math.gcd(prev.group.n, level.group.n) == 1
        ):
            n = prev.group.n * level.group.n
            merged[-1] = Level(Rot(n), Discrete(range(n)))
            continue
        merged.append(level)
    return merged


def canonicalize(shape: Shape) -> Shape:
    """Apply render-preserving rewrites until nothing changes.

    Rules: reduce Rot/Mirror indices modulo the group order; drop levels whose
    only element is the identity; sum adjacent single translations along one
    axis; merge adjacent fully occupied rotations of coprime orders.
    """
    levels = list(shape.levels)
    while True:
        new = _rewrite_once(levels)
        if new == levels:
            return Shape(tuple(new))
        levels = new


# -- predefined structures ------------------------------------------------------


def regular_polygon_control(n: int, t: float, h: float, closed: bool = False) -> Shape:
    """Regular polygon control structure built around a scale sandwich.

    ``l = h * tan(pi/n) / (2t)``; with ``closed=True`` the factor 2 is dropped
    so that adjacent sides meet (apothem ``h``, side ``2 h tan(pi/n)``).
    """
    if not (isinstance(n, int) and n >= 3):
        raise ValidationError("bad-group-parameter", f"polygon order must be an integer >= 3, got {n}")
    if not (t > 0 and h > 0):
        raise ValidationError("bad-group-parameter", f"t and h must be positive, got t={t}, h={h}")
    l = h * math.tan(math.pi / n) / (t if closed else 2.0 * t)
    return Shape(
        (
            Level(Scale(l), Discrete((-1,))),
            Level(Trans("X"), Interval(-t, t)),
            Level(Scale(l), Discrete((1,))),
            Level(Trans("Y"), Discrete((h,))),
            Level(Rot(n), Full()),
        )
    )
