"""Frames, stream identification, and wire-time arithmetic."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .core import SimTime

MIN_FRAME_BYTES = 64
MAX_FRAME_BYTES = 9000

NS_PER_SEC = 10 ** 9


class ZeroRateError(Exception):
    pass


class DuplicateExactRuleError(Exception):
    pass


@dataclass(frozen=True, order=True)
class StreamKey:
    """Identifies a stream by (destination MAC, VLAN id, PCP)."""

    dest_mac: int
    vlan_id: int
    pcp: int


@dataclass
class TimestampTrace:
    intended_tx: SimTime = 0
    sw_tx: Optional[SimTime] = None
    hw_tx: Optional[SimTime] = None
    hw_rx: Optional[SimTime] = None
    sw_rx: Optional[SimTime] = None


@dataclass
class Frame:
    id: int
    size_bytes: int
    priority: int
    traffic_class: Optional[int] = None
    stream: Optional[StreamKey] = None
    seq: Optional[int] = None
    ipv: Optional[int] = None  # metadata only, never alters frame bytes
    txtime: Optional[SimTime] = None
    route: Optional[str] = None  # member-path label set by replication
    trace: TimestampTrace = field(default_factory=TimestampTrace)

    def __post_init__(self):
        if self.traffic_class is None:
            self.traffic_class = self.priority

    @property
    def egress_class(self) -> int:
        """Traffic class used by egress queuing: IPV metadata wins."""
        return self.ipv if self.ipv is not None else self.traffic_class

    def clone(self, **changes) -> "Frame":
        f = replace(self, **changes)
        f.trace = replace(self.trace)
        return f


def transmission_time(size_bytes: int, link_rate_bps: int,
                      overhead_bytes: int = 0) -> int:
    """Wire time in ns for a frame, rounded to the nearest nanosecond."""
    if link_rate_bps <= 0:
        raise ZeroRateError(f"link_rate_bps={link_rate_bps}")
    bits = (size_bytes + overhead_bytes) * 8
    q, r = divmod(bits * NS_PER_SEC, link_rate_bps)
    return q + (1 if 2 * r >= link_rate_bps else 0)


@dataclass(frozen=True)
class StreamRule:
    """Wildcard pattern over StreamKey fields; None matches anything."""

    dest_mac: Optional[int]
    vlan_id: Optional[int]
    pcp: Optional[int]
    handle: str

    def matches(self, key: StreamKey) -> bool:
        return ((self.dest_mac is None or self.dest_mac == key.dest_mac)
                and (self.vlan_id is None or self.vlan_id == key.vlan_id)
                and (self.pcp is None or self.pcp == key.pcp))


class StreamRuleSet:
    """Ordered first-match-wins rule list mapping StreamKeys to handles."""

    def __init__(self, rules: list[StreamRule]):
        seen = set()
        for r in rules:
            pattern = (r.dest_mac, r.vlan_id, r.pcp)
            if pattern in seen:
                raise DuplicateExactRuleError(f"duplicate pattern {pattern}")
            seen.add(pattern)
        self.rules = list(rules)

    def identify(self, key: Optional[StreamKey]) -> Optional[str]:
        if key is None:
            return None
        for r in self.rules:
            if r.matches(key):
                return r.handle
        return None


def make_stream_rules(config: list[dict]) -> StreamRuleSet:
    """Build a rule set from config entries of {dest_mac?, vlan_id?, pcp?, handle}."""
    rules = [StreamRule(dest_mac=e.get("dest_mac"),
                        vlan_id=e.get("vlan_id"),
                        pcp=e.get("pcp"),
                        handle=e["handle"]) for e in config]
    return StreamRuleSet(rules)
