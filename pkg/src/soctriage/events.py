"""Network event records: validation and the line-oriented wire encoding.

An event is a flat 13-field tuple (plus an engine-assigned id) as reported
by network monitoring sensors. All operations here are pure value code and
safe under arbitrary concurrency.

Wire format: one record per line, UTF-8, a flat JSON object with exactly
the 14 keys listed in WIRE_KEYS. Timestamps are integer UTC seconds, IPs
dotted-quad strings, protocol an upper-case token. Unknown keys are
rejected, nothing is coerced.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterable

from .errors import BadValue, MissingField, OrderViolation


class Protocol(str, Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    OTHER = "OTHER"


#: The 13 tuple fields, in wire order. "id" is appended on the wire.
TUPLE_FIELDS = (
    "t_occur", "t_detect", "event_type", "attack_prior", "sensor",
    "protocol", "ip_src", "port_src", "ip_dst", "port_dst",
    "severity", "confidence", "msg",
)

WIRE_KEYS = TUPLE_FIELDS + ("id",)

ATTACK_PRIOR_MAX = 5
SEVERITY_MAX = 10
PORT_MAX = 65535


def _check_ipv4(field: str, value: object) -> str:
    if not isinstance(value, str):
        raise BadValue(f"{field}: expected dotted-quad string, got {type(value).__name__}")
    try:
        ipaddress.IPv4Address(value)
    except (ipaddress.AddressValueError, ValueError) as exc:
        raise BadValue(f"{field}: {exc}") from None
    return value


def _check_int(field: str, value: object, lo: int, hi: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise BadValue(f"{field}: expected integer, got {type(value).__name__}")
    if not lo <= value <= hi:
        raise BadValue(f"{field}: {value} outside [{lo}, {hi}]")
    return value


@dataclass(frozen=True)
class Event:
    """One network event. Construction validates every invariant."""

    t_occur: int
    t_detect: int
    event_type: str
    attack_prior: int
    sensor: str
    protocol: Protocol
    ip_src: str
    port_src: int
    ip_dst: str
    port_dst: int
    severity: int
    confidence: float
    msg: str
    id: str

    def __post_init__(self):
        _check_int("t_occur", self.t_occur, 0, 2**62)
        _check_int("t_detect", self.t_detect, 0, 2**62)
        if self.t_detect < self.t_occur:
            raise OrderViolation(
                f"t_detect {self.t_detect} earlier than t_occur {self.t_occur}")
        for name in ("event_type", "sensor", "msg", "id"):
            if not isinstance(getattr(self, name), str):
                raise BadValue(f"{name}: expected string")
        if not self.event_type:
            raise BadValue("event_type: must be non-empty")
        if not self.id:
            raise BadValue("id: must be non-empty")
        if not isinstance(self.protocol, Protocol):
            raise BadValue(f"protocol: expected Protocol, got {self.protocol!r}")
        _check_ipv4("ip_src", self.ip_src)
        _check_ipv4("ip_dst", self.ip_dst)
        _check_int("port_src", self.port_src, 0, PORT_MAX)
        _check_int("port_dst", self.port_dst, 0, PORT_MAX)
        _check_int("attack_prior", self.attack_prior, 0, ATTACK_PRIOR_MAX)
        _check_int("severity", self.severity, 0, SEVERITY_MAX)
        if isinstance(self.confidence, bool) or not isinstance(self.confidence, (int, float)):
            raise BadValue("confidence: expected number")
        if isinstance(self.confidence, int):
            object.__setattr__(self, "confidence", float(self.confidence))
        if not 0.0 <= self.confidence <= 1.0:
            raise BadValue(f"confidence: {self.confidence} outside [0, 1]")


def parse_event_line(line: str) -> Event:
    """Parse one wire-format record into a validated Event.

    Raises MissingField, BadValue, or OrderViolation; never coerces a
    value that violates an invariant.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BadValue(f"record is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise BadValue("record is not a flat key-value object")
    for key in WIRE_KEYS:
        if key not in obj:
            raise MissingField(key)
    unknown = set(obj) - set(WIRE_KEYS)
    if unknown:
        raise BadValue(f"unknown keys: {', '.join(sorted(unknown))}")
    proto = obj["protocol"]
    if not isinstance(proto, str) or proto not in Protocol.__members__:
        raise BadValue(f"protocol: expected one of "
                       f"{', '.join(Protocol.__members__)}, got {proto!r}")
    values = dict(obj)
    values["protocol"] = Protocol[proto]
    return Event(**values)


def serialize_event(e: Event) -> str:
    """Encode to one wire-format line; parse_event_line inverts it exactly."""
    obj = {name: getattr(e, name) for name in WIRE_KEYS}
    obj["protocol"] = e.protocol.value
    return json.dumps(obj, separators=(", ", ": "), ensure_ascii=False)


def event_value(e: Event, attribute: str):
    """Attribute value as a plain comparable (protocol becomes its token)."""
    v = getattr(e, attribute)
    return v.value if isinstance(v, Protocol) else v


def read_event_file(path: str) -> list[Event]:
    """Load a wire-format file; re-raises parse errors tagged with the line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(parse_event_line(line))
            except (MissingField, BadValue, OrderViolation) as exc:
                err = type(exc)(f"line {n}: {exc}")
                err.line = n
                raise err from None
    return out


def write_event_file(path: str, events: Iterable[Event]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(serialize_event(e))
            fh.write("\n")


assert tuple(f.name for f in fields(Event) if f.name != "id") == TUPLE_FIELDS
