"""Analyst filter criteria: a small conjunctive DSL over event attributes.

Grammar (one clause per attribute, AND-joined):

    criteria := clause ("AND" clause)*
    clause   := attr op rhs priority?
    op       := "==" | "in" | "contains" | ">=" | "<="
    rhs      := literal | lo..hi | a.b.c.d/n | {v1, v2}
    priority := "@p" digits          (default 1; lower relaxes first)

">=" / "<=" desugar to RANGE against the attribute's scale bounds.
Parsing and evaluation are pure; evaluation preserves input order.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from enum import Enum

from .errors import CriteriaSyntaxError, DuplicateAttribute, EmptyKey, TypeMismatch
from .events import PORT_MAX, Protocol, event_value


class Form(Enum):
    EQUALS = "EQUALS"
    IN_SET = "IN_SET"
    RANGE = "RANGE"
    CIDR = "CIDR"
    CONTAINS = "CONTAINS"


class Kind(Enum):
    """Attribute type class; decides which forms are legal."""
    TIME = "TIME"
    ORDINAL = "ORDINAL"
    PORT = "PORT"
    CATEGORICAL = "CATEGORICAL"
    IP = "IP"
    TEXT = "TEXT"


TIME_MAX = 2**62

#: attribute -> (kind, scale bounds for RANGE desugaring, or None)
ATTRIBUTES: dict[str, tuple[Kind, tuple[float, float] | None]] = {
    "t_occur": (Kind.TIME, (0, TIME_MAX)),
    "t_detect": (Kind.TIME, (0, TIME_MAX)),
    "event_type": (Kind.CATEGORICAL, None),
    "attack_prior": (Kind.ORDINAL, (0, 5)),
    "sensor": (Kind.CATEGORICAL, None),
    "protocol": (Kind.CATEGORICAL, None),
    "ip_src": (Kind.IP, None),
    "port_src": (Kind.PORT, (0, PORT_MAX)),
    "ip_dst": (Kind.IP, None),
    "port_dst": (Kind.PORT, (0, PORT_MAX)),
    "severity": (Kind.ORDINAL, (0, 10)),
    "confidence": (Kind.ORDINAL, (0.0, 1.0)),
    "msg": (Kind.TEXT, None),
}


def attribute_kind(attribute: str) -> Kind:
    return ATTRIBUTES[attribute][0]


def attribute_scale(attribute: str) -> tuple[float, float]:
    scale = ATTRIBUTES[attribute][1]
    if scale is None:
        raise TypeMismatch(f"{attribute} has no numeric scale")
    return scale


_BARE_VALUE = re.compile(r"[A-Za-z_][A-Za-z0-9_.:-]*")
_KEYWORDS = {"AND", "in", "contains"}


@dataclass(frozen=True)
class Constraint:
    """One typed predicate over a single event attribute.

    value shape per form: EQUALS scalar; IN_SET sorted tuple; RANGE
    (lo, hi); CIDR canonical "a.b.c.d/n"; CONTAINS substring.
    """

    attribute: str
    form: Form
    value: object
    priority: int = 1

    def __post_init__(self):
        if self.attribute not in ATTRIBUTES:
            raise TypeMismatch(f"unknown attribute {self.attribute!r}")
        if self.priority < 1:
            raise TypeMismatch("priority must be >= 1")
        kind = attribute_kind(self.attribute)
        legal = _LEGAL_FORMS[kind]
        if self.form not in legal:
            raise TypeMismatch(
                f"{self.form.value} not legal for {self.attribute} ({kind.value})")
        _VALIDATORS[self.form](self)

    def matches(self, e) -> bool:
        v = event_value(e, self.attribute)
        if self.form is Form.EQUALS:
            return v == self.value
        if self.form is Form.IN_SET:
            return v in self.value
        if self.form is Form.RANGE:
            lo, hi = self.value
            return lo <= v <= hi
        if self.form is Form.CIDR:
            net_int, mask = _cidr_ints(self.value)
            return (_ip_int(v) & mask) == net_int
        return self.value in v  # CONTAINS


_LEGAL_FORMS = {
    Kind.TIME: (Form.EQUALS, Form.RANGE),
    Kind.ORDINAL: (Form.EQUALS, Form.RANGE),
    Kind.PORT: (Form.EQUALS, Form.RANGE),
    Kind.CATEGORICAL: (Form.EQUALS, Form.IN_SET),
    Kind.IP: (Form.EQUALS, Form.CIDR),
    Kind.TEXT: (Form.CONTAINS,),
}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate_equals(c: Constraint) -> None:
    kind = attribute_kind(c.attribute)
    if kind in (Kind.TIME, Kind.ORDINAL, Kind.PORT):
        if not _is_number(c.value):
            raise TypeMismatch(f"{c.attribute}: expected a number, got {c.value!r}")
        lo, hi = attribute_scale(c.attribute)
        if not lo <= c.value <= hi:
            raise TypeMismatch(f"{c.attribute}: {c.value} outside scale [{lo}, {hi}]")
    elif kind is Kind.CATEGORICAL:
        if not isinstance(c.value, str):
            raise TypeMismatch(f"{c.attribute}: expected a token, got {c.value!r}")
        if c.attribute == "protocol" and c.value not in Protocol.__members__:
            raise TypeMismatch(f"protocol: unknown token {c.value!r}")
    elif kind is Kind.IP:
        if not isinstance(c.value, str):
            raise TypeMismatch(f"{c.attribute}: expected an IPv4 address")
        try:
            ipaddress.IPv4Address(c.value)
        except ValueError:
            raise TypeMismatch(f"{c.attribute}: {c.value!r} is not an IPv4 address") from None


def _validate_in_set(c: Constraint) -> None:
    if not isinstance(c.value, tuple) or not c.value:
        raise TypeMismatch(f"{c.attribute}: IN_SET needs a non-empty value tuple")
    for v in c.value:
        if not isinstance(v, str):
            raise TypeMismatch(f"{c.attribute}: set members must be tokens")
        if c.attribute == "protocol" and v not in Protocol.__members__:
            raise TypeMismatch(f"protocol: unknown token {v!r}")


def _validate_range(c: Constraint) -> None:
    if not (isinstance(c.value, tuple) and len(c.value) == 2
            and all(_is_number(v) for v in c.value)):
        raise TypeMismatch(f"{c.attribute}: RANGE needs (lo, hi)")
    lo, hi = c.value
    if lo > hi:
        raise TypeMismatch(f"{c.attribute}: range {lo}..{hi} has lo > hi")


def _validate_cidr(c: Constraint) -> None:
    if not isinstance(c.value, str):
        raise TypeMismatch(f"{c.attribute}: CIDR needs an a.b.c.d/n string")
    try:
        net = ipaddress.ip_network(c.value, strict=False)
    except ValueError:
        raise TypeMismatch(f"{c.attribute}: bad CIDR {c.value!r}") from None
    if net.version != 4:
        raise TypeMismatch(f"{c.attribute}: IPv4 prefixes only")
    if c.value != net.with_prefixlen:
        object.__setattr__(c, "value", net.with_prefixlen)


def _validate_contains(c: Constraint) -> None:
    if not isinstance(c.value, str):
        raise TypeMismatch(f"{c.attribute}: CONTAINS needs a string")


_VALIDATORS = {
    Form.EQUALS: _validate_equals,
    Form.IN_SET: _validate_in_set,
    Form.RANGE: _validate_range,
    Form.CIDR: _validate_cidr,
    Form.CONTAINS: _validate_contains,
}


def _ip_int(addr: str) -> int:
    a, b, c, d = addr.split(".")
    return (int(a) << 24) | (int(b) << 16) | (int(c) << 8) | int(d)


def _cidr_ints(cidr: str) -> tuple[int, int]:
    addr, prefix = cidr.split("/")
    n = int(prefix)
    mask = ((1 << n) - 1) << (32 - n) if n else 0
    return _ip_int(addr) & mask, mask


@dataclass(frozen=True)
class Criteria:
    """Conjunction of constraints, at most one per attribute. Empty matches all."""

    constraints: tuple[Constraint, ...] = ()
    name: str | None = None

    def __post_init__(self):
        seen = set()
        for c in self.constraints:
            if c.attribute in seen:
                raise DuplicateAttribute(c.attribute)
            seen.add(c.attribute)

    def constraint_for(self, attribute: str) -> Constraint | None:
        for c in self.constraints:
            if c.attribute == attribute:
                return c
        return None

    def canonical(self) -> tuple:
        """Order-insensitive structural key (used for dedup)."""
        return tuple(sorted(
            ((c.attribute, c.form.value, c.value, c.priority) for c in self.constraints)))


class OpKind(Enum):
    SELECT = "SELECT"
    CORRELATE = "CORRELATE"


@dataclass(frozen=True)
class FilterOp:
    """One analyst filter operation over the event stream."""

    kind: OpKind
    criteria: Criteria
    correlate_key: tuple[str, ...] | None = None
    op_id: str = ""
    created_at: int = 0

    def __post_init__(self):
        if self.kind is OpKind.CORRELATE and not self.correlate_key:
            raise EmptyKey("CORRELATE requires a non-empty key list")
        if self.correlate_key:
            for a in self.correlate_key:
                if a not in ATTRIBUTES:
                    raise TypeMismatch(f"unknown key attribute {a!r}")

    def canonical(self) -> tuple:
        return (self.kind.value, self.criteria.canonical(), self.correlate_key or ())


# -- parsing -----------------------------------------------------------------

_TOKEN_SPECS = [
    ("PRIORITY", re.compile(r"@p(\d+)")),
    ("CIDR", re.compile(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}/\d{1,2}")),
    ("IPV4", re.compile(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}")),
    ("NUMBER", re.compile(r"\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+")),
    ("DOTDOT", re.compile(r"\.\.")),
    ("OP", re.compile(r"==|>=|<=")),
    ("LBRACE", re.compile(r"\{")),
    ("RBRACE", re.compile(r"\}")),
    ("COMMA", re.compile(r",")),
    ("STRING", re.compile(r'"(?:[^"\\]|\\.)*"')),
    ("WORD", re.compile(r"[A-Za-z_][A-Za-z0-9_.:-]*")),
]


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Token]:
    tokens, i, n = [], 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        for kind, rx in _TOKEN_SPECS:
            m = rx.match(text, i)
            if m:
                tok = _Token(kind, m.group(0), i)
                if kind == "WORD":
                    if tok.text == "AND":
                        tok.kind = "AND"
                    elif tok.text in ("in", "contains"):
                        tok.kind = "OP"
                tokens.append(tok)
                i = m.end()
                break
        else:
            raise CriteriaSyntaxError(f"unexpected character {text[i]!r}", i)
    tokens.append(_Token("EOF", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise CriteriaSyntaxError(
                f"expected {kind}, found {tok.text or 'end of input'!r}", tok.pos)
        return self.next()

    def parse(self) -> Criteria:
        constraints = []
        if self.peek().kind != "EOF":
            constraints.append(self.clause())
            while self.peek().kind == "AND":
                self.next()
                constraints.append(self.clause())
        tok = self.peek()
        if tok.kind != "EOF":
            raise CriteriaSyntaxError(f"unexpected {tok.text!r}", tok.pos)
        try:
            return Criteria(tuple(constraints))
        except DuplicateAttribute as exc:
            raise DuplicateAttribute(f"attribute constrained twice: {exc}") from None

    def clause(self) -> Constraint:
        attr_tok = self.expect("WORD")
        if attr_tok.text not in ATTRIBUTES:
            raise TypeMismatch(f"unknown attribute {attr_tok.text!r} "
                               f"(at position {attr_tok.pos})")
        op_tok = self.expect("OP")
        attr = attr_tok.text
        op = op_tok.text
        if op == "==":
            constraint = self._equals_clause(attr)
        elif op == "in":
            constraint = self._in_clause(attr)
        elif op == "contains":
            s = self.expect("STRING")
            constraint = Constraint(attr, Form.CONTAINS, _unquote(s.text))
        else:  # >= / <=
            num_tok = self.expect("NUMBER")
            v = _number(num_tok.text)
            lo, hi = attribute_scale(attr)
            rng = (v, hi) if op == ">=" else (lo, v)
            constraint = Constraint(attr, Form.RANGE, rng)
        if self.peek().kind == "PRIORITY":
            p = int(self.next().text[2:])
            if p < 1:
                raise TypeMismatch("priority must be >= 1")
            constraint = Constraint(constraint.attribute, constraint.form,
                                    constraint.value, p)
        return constraint

    def _equals_clause(self, attr: str) -> Constraint:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.next()
            return Constraint(attr, Form.EQUALS, _number(tok.text))
        if tok.kind == "IPV4":
            self.next()
            return Constraint(attr, Form.EQUALS, tok.text)
        if tok.kind in ("WORD", "STRING"):
            self.next()
            text = _unquote(tok.text) if tok.kind == "STRING" else tok.text
            return Constraint(attr, Form.EQUALS, text)
        raise CriteriaSyntaxError("expected a value after '=='", tok.pos)

    def _in_clause(self, attr: str) -> Constraint:
        tok = self.peek()
        if tok.kind == "CIDR":
            self.next()
            return Constraint(attr, Form.CIDR, tok.text)
        if tok.kind == "LBRACE":
            self.next()
            values = [self._set_member()]
            while self.peek().kind == "COMMA":
                self.next()
                values.append(self._set_member())
            self.expect("RBRACE")
            values.sort(key=lambda v: (v.__class__.__name__, str(v)))
            return Constraint(attr, Form.IN_SET, tuple(values))
        if tok.kind == "NUMBER":
            lo_tok = self.next()
            self.expect("DOTDOT")
            hi_tok = self.expect("NUMBER")
            return Constraint(attr, Form.RANGE,
                              (_number(lo_tok.text), _number(hi_tok.text)))
        raise CriteriaSyntaxError(
            "expected a range lo..hi, a CIDR prefix, or a {set} after 'in'", tok.pos)

    def _set_member(self):
        tok = self.peek()
        if tok.kind in ("WORD", "STRING", "IPV4"):
            self.next()
            return _unquote(tok.text) if tok.kind == "STRING" else tok.text
        if tok.kind == "NUMBER":
            self.next()
            return _number(tok.text)
        raise CriteriaSyntaxError("expected a set member", tok.pos)


def _number(text: str):
    return float(text) if ("." in text or "e" in text or "E" in text) else int(text)


def _unquote(text: str) -> str:
    body = text[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


def parse_criteria(text: str) -> Criteria:
    """Parse criteria text; total over the grammar.

    Raises CriteriaSyntaxError (position-reported), TypeMismatch, or
    DuplicateAttribute.
    """
    return _Parser(text).parse()


# -- formatting (inverse of parse_criteria) ----------------------------------

def _format_scalar(v) -> str:
    if isinstance(v, bool):
        raise TypeMismatch("booleans are not DSL values")
    if isinstance(v, (int, float)):
        return repr(v)
    if _BARE_VALUE.fullmatch(v) and v not in _KEYWORDS:
        return v
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_constraint(c: Constraint) -> str:
    if c.form is Form.EQUALS:
        body = f"{c.attribute} == {_format_scalar(c.value)}"
    elif c.form is Form.IN_SET:
        body = f"{c.attribute} in {{{', '.join(_format_scalar(v) for v in c.value)}}}"
    elif c.form is Form.RANGE:
        lo, hi = c.value
        body = f"{c.attribute} in {repr(lo)}..{repr(hi)}"
    elif c.form is Form.CIDR:
        body = f"{c.attribute} in {c.value}"
    else:
        body = f"{c.attribute} contains {_quote_always(c.value)}"
    return body if c.priority == 1 else f"{body} @p{c.priority}"


def _quote_always(v: str) -> str:
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_criteria(criteria: Criteria) -> str:
    """Render back to DSL text; parse_criteria(format_criteria(c)) == c."""
    return " AND ".join(format_constraint(c) for c in criteria.constraints)


# -- evaluation --------------------------------------------------------------

def apply_filter(criteria: Criteria, events) -> list:
    """Events satisfying every constraint, input order preserved."""
    return [e for e in events if all(c.matches(e) for c in criteria.constraints)]


def correlate_groups(key: tuple[str, ...] | list[str], events, window: int) -> list[list]:
    """Partition events into candidate attack chains.

    Two events share a group iff they agree on every key attribute and are
    linked by a chain of t_detect gaps each <= window. Groups are ordered
    by earliest t_detect; events within a group by (t_detect, id).
    """
    if not key:
        raise EmptyKey("correlate key must be non-empty")
    for a in key:
        if a not in ATTRIBUTES:
            raise TypeMismatch(f"unknown key attribute {a!r}")
    if window <= 0:
        raise TypeMismatch("window must be positive")
    buckets: dict[tuple, list] = {}
    for e in events:
        buckets.setdefault(tuple(event_value(e, a) for a in key), []).append(e)
    groups = []
    for bucket in buckets.values():
        bucket.sort(key=lambda e: (e.t_detect, e.id))
        current = [bucket[0]]
        for e in bucket[1:]:
            if e.t_detect - current[-1].t_detect <= window:
                current.append(e)
            else:
                groups.append(current)
                current = [e]
        groups.append(current)
    groups.sort(key=lambda g: (g[0].t_detect, g[0].id))
    return groups
