"""Links, store-and-forward bridges, and the cyclic queuing/forwarding composer."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .core import CONSTANT_ZERO, Engine, JitterDist, SimTime
from .egress import EgressPort, GateControlList, GclEntry
from .ingress import DROP_NO_STREAM, PASS, StreamGate, StreamGateEntry
from .traffic import Frame, StreamRuleSet


class UnknownEgressError(Exception):
    pass


class ZeroHopsError(Exception):
    pass


@dataclass(frozen=True)
class Link:
    rate_bps: int
    propagation_ns: int = 0
    overhead_bytes: int = 0

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise ValueError("rate_bps must be > 0")


# Default software-switching latency models. These are editable presets
# calibrated only to a qualitative ordering (XDP fastest by median,
# AF_XDP and the plain bridge sharing the worst-case tail), not to any
# measured distribution.
FORWARDING_PRESETS = {
    "zero": CONSTANT_ZERO,
    "xdp": JitterDist.empirical([(1500, 70), (2500, 20), (4000, 9), (8000, 1)]),
    "af_xdp": JitterDist.empirical([(2000, 60), (2600, 25), (5000, 10), (12000, 5)]),
    "linux_bridge": JitterDist.empirical([(3000, 55), (5000, 25), (8000, 15),
                                          (12000, 5)]),
}


class BridgeNode:
    """Store-and-forward bridge: ingress PSFP, forwarding delay, one egress port.

    receive() is keyed to end-of-frame reception; the PSFP decision uses
    that instant.
    """

    def __init__(self, engine: Engine, name: str, egress: EgressPort, *,
                 stream_rules: Optional[StreamRuleSet] = None,
                 gates: Optional[dict] = None,
                 forwarding_latency: JitterDist = CONSTANT_ZERO,
                 rng=None):
        self.engine = engine
        self.name = name
        self.egress = egress
        self.stream_rules = stream_rules
        self.gates = gates or {}
        self.forwarding_latency = forwarding_latency
        self.rng = rng
        self.drops: Counter = Counter()

    def receive(self, frame: Frame, t: SimTime):
        if self.stream_rules is not None:
            handle = self.stream_rules.identify(frame.stream)
            if handle is None:
                self.drops[DROP_NO_STREAM] += 1
                return
            gate = self.gates.get(handle)
            if gate is not None:
                decision = gate.process(frame, t)
                if decision.outcome != PASS:
                    self.drops[decision.outcome] += 1
                    return
        delay = self.forwarding_latency.sample(self.rng)
        self.engine.schedule(t + delay,
                             lambda: self.egress.submit(frame, self.engine.now))


@dataclass(frozen=True)
class CqfConfig:
    cycle_time_ns: int
    ipv_even: int
    ipv_odd: int
    hops: int = 1
    base_time: SimTime = 0

    def __post_init__(self):
        if self.ipv_even == self.ipv_odd:
            raise ValueError("ipv_even and ipv_odd must differ")
        if self.cycle_time_ns <= 0:
            raise ValueError("cycle_time_ns must be > 0")


def cqf_compose(cfg: CqfConfig) -> tuple[StreamGate, GateControlList]:
    """Derive the coordinated ingress gate and egress schedule for one bridge.

    The ingress gate is always open but tags frames with alternating IPVs
    per cycle; the egress schedule keeps the collecting IPV's gate closed
    during its cycle and drains it in the next one. Best-effort classes
    stay open throughout.
    """
    c = cfg.cycle_time_ns
    ingress = StreamGate(cfg.base_time, 2 * c, [
        StreamGateEntry(open=True, duration_ns=c, ipv=cfg.ipv_even),
        StreamGateEntry(open=True, duration_ns=c, ipv=cfg.ipv_odd),
    ])
    egress = GateControlList(cfg.base_time, 2 * c, [
        GclEntry(gate_mask=0xFF & ~(1 << cfg.ipv_even), duration_ns=c),
        GclEntry(gate_mask=0xFF & ~(1 << cfg.ipv_odd), duration_ns=c),
    ])
    return ingress, egress


def cqf_latency_bound(hops: int, cycle_time_ns: int) -> int:
    """Worst-case end-to-end delay of a CQF path with the given hop count."""
    if hops < 1:
        raise ZeroHopsError(f"hops={hops}")
    return (hops + 1) * cycle_time_ns
