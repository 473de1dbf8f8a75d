"""Deterministic synthetic event streams with labeled attack chains.

Chains are linear root-to-leaf paths of correlated events generated from
templates; everything else is background noise. The generator is a pure
function of its config: identical GenConfig (seed included) yields a
byte-identical stream. Randomness comes from Python's random.Random
(Mersenne Twister, MT19937), which is stable across platforms.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from .errors import EmptySteps, EmptyTemplateSet, TypeMismatch
from .events import Event, Protocol

NOISE_LABEL = "noise"

#: event types used for background traffic ("Built"/"Deny" are the canonical ones)
NOISE_TYPES = ("Built", "Deny", "Teardown", "Heartbeat")


@dataclass(frozen=True)
class StepSketch:
    """Shape of one chain step: type, protocol, and value bands."""

    event_type: str
    protocol: Protocol
    severity_band: tuple[int, int]
    port_band: tuple[int, int]  # applied to port_dst


@dataclass(frozen=True)
class SharingRule:
    """Which fields correlate across a chain's steps, plus time proximity."""

    fields: tuple[str, ...] = ("ip_src",)
    window: int = 300

    def __post_init__(self):
        if self.window <= 0:
            raise TypeMismatch("proximity window must be > 0")


@dataclass(frozen=True)
class ChainTemplate:
    name: str
    steps: tuple[StepSketch, ...]
    sharing: SharingRule

    def __post_init__(self):
        if not self.steps:
            raise EmptySteps(f"template {self.name!r} has no steps")


def chain_template(name: str, steps: Iterable[StepSketch],
                   sharing: SharingRule) -> ChainTemplate:
    """Validated template constructor; raises EmptySteps."""
    return ChainTemplate(name, tuple(steps), sharing)


@dataclass(frozen=True)
class GenConfig:
    seed: int
    n_noise: int
    n_chains: int
    templates: tuple[ChainTemplate, ...] = ()
    horizon: int = 86400

    def __post_init__(self):
        if self.n_noise < 0 or self.n_chains < 0:
            raise TypeMismatch("counts must be >= 0")
        if self.horizon <= 0:
            raise TypeMismatch("horizon must be > 0")


def default_templates() -> tuple[ChainTemplate, ...]:
    """Three stock intrusion narratives used by the CLI and the test rigs."""
    return (
        chain_template(
            "recon-exploit",
            [StepSketch("PortScan", Protocol.TCP, (3, 5), (1, 1023)),
             StepSketch("Exploit", Protocol.TCP, (7, 9), (1, 1023)),
             StepSketch("C2Beacon", Protocol.TCP, (6, 8), (49152, 65535))],
            SharingRule(("ip_src",), 300),
        ),
        chain_template(
            "privesc-exfil",
            [StepSketch("PrivEsc", Protocol.TCP, (6, 8), (1024, 49151)),
             StepSketch("Exfil", Protocol.TCP, (8, 10), (443, 443))],
            SharingRule(("ip_src",), 600),
        ),
        chain_template(
            "udp-sweep",
            [StepSketch("PortScan", Protocol.UDP, (2, 4), (1, 1023)),
             StepSketch("PortScan", Protocol.UDP, (2, 4), (1, 1023)),
             StepSketch("PortScan", Protocol.UDP, (3, 5), (1, 1023))],
            SharingRule(("ip_src",), 120),
        ),
    )


def _rand_ip(rng: random.Random) -> str:
    return f"10.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"


def _rand_dst_ip(rng: random.Random) -> str:
    return f"192.168.{rng.randrange(256)}.{rng.randrange(1, 255)}"


_SHARED_FIELD_GENS = {
    "ip_src": _rand_ip,
    "ip_dst": _rand_dst_ip,
    "sensor": lambda rng: f"sensor-{rng.randrange(8)}",
    "protocol": lambda rng: rng.choice(list(Protocol)),
}


def generate_stream(cfg: GenConfig) -> tuple[list[Event], dict[str, str]]:
    """Generate a labeled stream.

    Returns events sorted by t_detect and a label per event id: either a
    chain id ("chain-0000"...) or NOISE_LABEL. Every chain's events share
    its template's correlated fields and successive detection gaps within
    the proximity window.
    """
    if cfg.n_chains > 0 and not cfg.templates:
        raise EmptyTemplateSet("n_chains > 0 requires at least one template")
    rng = random.Random(cfg.seed)
    counter = 0

    def next_id() -> str:
        nonlocal counter
        counter += 1
        return f"e{cfg.seed}-{counter:06d}"

    events: list[Event] = []
    labels: dict[str, str] = {}

    for k in range(cfg.n_chains):
        template = cfg.templates[k % len(cfg.templates)]
        label = f"chain-{k:04d}"
        shared = {}
        for f in template.sharing.fields:
            gen = _SHARED_FIELD_GENS.get(f)
            if gen is None:
                raise TypeMismatch(f"no shared-value generator for field {f!r}")
            shared[f] = gen(rng)
        span = template.sharing.window * len(template.steps)
        start = rng.randrange(0, max(1, cfg.horizon - span))
        t = start
        for step in template.steps:
            t += rng.randint(1, template.sharing.window)
            fields = {
                "t_detect": t,
                "t_occur": max(0, t - rng.randint(0, 30)),
                "event_type": step.event_type,
                "attack_prior": rng.randint(2, 5),
                "sensor": f"sensor-{rng.randrange(8)}",
                "protocol": step.protocol,
                "ip_src": _rand_ip(rng),
                "port_src": rng.randint(1024, 65535),
                "ip_dst": _rand_dst_ip(rng),
                "port_dst": rng.randint(*step.port_band),
                "severity": rng.randint(*step.severity_band),
                "confidence": round(rng.uniform(0.5, 1.0), 4),
                "msg": "",
            }
            fields.update(shared)
            fields["msg"] = (f"{step.event_type} {fields['ip_src']} -> "
                             f"{fields['ip_dst']}:{fields['port_dst']}")
            e = Event(id=next_id(), **fields)
            events.append(e)
            labels[e.id] = label

    for _ in range(cfg.n_noise):
        t = rng.randrange(0, cfg.horizon)
        etype = rng.choice(NOISE_TYPES)
        ip_src = _rand_ip(rng)
        ip_dst = _rand_dst_ip(rng)
        port_dst = rng.randint(0, 65535)
        e = Event(
            t_occur=max(0, t - rng.randint(0, 30)),
            t_detect=t,
            event_type=etype,
            attack_prior=rng.randint(0, 3),
            sensor=f"sensor-{rng.randrange(8)}",
            protocol=rng.choice(list(Protocol)),
            ip_src=ip_src,
            port_src=rng.randint(0, 65535),
            ip_dst=ip_dst,
            port_dst=port_dst,
            severity=rng.randint(0, 10),
            confidence=round(rng.uniform(0.0, 1.0), 4),
            msg=f"{etype} {ip_src} -> {ip_dst}:{port_dst}",
            id=next_id(),
        )
        events.append(e)
        labels[e.id] = NOISE_LABEL

    events.sort(key=lambda e: (e.t_detect, e.id))
    return events, labels


def write_labels(path: str, events: list[Event], labels: dict[str, str]) -> None:
    """Sidecar label file: one "<event-id>\\t<label>" line per event, stream order."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(f"{e.id}\t{labels[e.id]}\n")


def read_labels(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            event_id, _, label = line.partition("\t")
            out[event_id] = label
    return out
