"""Per-stream filtering and policing: ingress stream gates with schedules,
internal-priority reassignment, and per-window octet budgets."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .core import SimTime
from .traffic import Frame


class GateScheduleError(Exception):
    pass


PASS = "pass"
DROP_CLOSED_GATE = "drop_closed_gate"
DROP_OCTET_BUDGET = "drop_octet_budget"
DROP_NO_STREAM = "drop_no_stream"


@dataclass(frozen=True)
class PsfpDecision:
    outcome: str
    ipv: Optional[int] = None


@dataclass(frozen=True)
class StreamGateEntry:
    open: bool
    duration_ns: int
    ipv: Optional[int] = None
    max_octets: Optional[int] = None


class StreamGate:
    """Single-stream ingress gate with a cyclic open/close schedule.

    The octet budget, when configured, applies per window occurrence and
    resets at each window start. Frames arriving exactly on a boundary
    belong to the window starting there (half-open intervals).
    """

    def __init__(self, base_time: SimTime, cycle_time_ns: int,
                 entries: list[StreamGateEntry]):
        if not entries:
            raise GateScheduleError("stream gate needs at least one entry")
        if any(e.duration_ns <= 0 for e in entries):
            raise GateScheduleError("every entry duration must be > 0")
        if sum(e.duration_ns for e in entries) != cycle_time_ns:
            raise GateScheduleError("entry durations must sum to cycle_time_ns")
        self.base_time = base_time
        self.cycle_time_ns = cycle_time_ns
        self.entries = list(entries)
        self._starts = []
        acc = 0
        for e in entries:
            self._starts.append(acc)
            acc += e.duration_ns
        self.running_octets = 0
        self._window_key = None
        self.drops: Counter = Counter()

    def _locate(self, t: SimTime) -> tuple[int, int]:
        if t < self.base_time:
            raise GateScheduleError(f"t={t} < base_time={self.base_time}")
        rel = t - self.base_time
        cycle, phase = divmod(rel, self.cycle_time_ns)
        for i in range(len(self.entries) - 1, -1, -1):
            if self._starts[i] <= phase:
                return cycle, i
        raise AssertionError("unreachable: cycle partition")

    def process(self, frame: Frame, t: SimTime) -> PsfpDecision:
        cycle, i = self._locate(t)
        entry = self.entries[i]
        window = (cycle, i)
        if window != self._window_key:
            self._window_key = window
            self.running_octets = 0
        if not entry.open:
            self.drops[DROP_CLOSED_GATE] += 1
            return PsfpDecision(DROP_CLOSED_GATE)
        if entry.max_octets is not None:
            if self.running_octets + frame.size_bytes > entry.max_octets:
                # a frame exceeding the budget does not consume any of it
                self.drops[DROP_OCTET_BUDGET] += 1
                return PsfpDecision(DROP_OCTET_BUDGET)
            self.running_octets += frame.size_bytes
        if entry.ipv is not None:
            assign_ipv(frame, entry.ipv)
        return PsfpDecision(PASS, ipv=entry.ipv)


def psfp_process(gate: StreamGate, frame: Frame, t: SimTime) -> PsfpDecision:
    return gate.process(frame, t)


def assign_ipv(frame: Frame, ipv: int) -> Frame:
    """Attach an internal priority value; metadata only, bytes untouched."""
    if not 0 <= ipv <= 7:
        raise ValueError(f"ipv {ipv} out of range")
    frame.ipv = ipv
    return frame
