"""Frame replication and duplicate elimination with a sliding recovery window."""

from __future__ import annotations

from collections import Counter
from typing import Optional

from .traffic import Frame

SEQ_SPACE = 65536
SEQ_HALF = SEQ_SPACE // 2

ACCEPT = "accept"
DISCARD_DUPLICATE = "discard_duplicate"
DISCARD_STALE = "discard_stale"


class NoPathsError(Exception):
    pass


class MissingSeqError(Exception):
    pass


class SequenceGenerator:
    """Stamps consecutive mod-65536 sequence numbers onto a stream's frames."""

    def __init__(self, stream_handle: str, start: int = 0):
        self.stream_handle = stream_handle
        self.next_seq = start % SEQ_SPACE

    def stamp(self, frame: Frame) -> Frame:
        frame.seq = self.next_seq
        self.next_seq = (self.next_seq + 1) % SEQ_SPACE
        return frame


def replicate(frame: Frame, member_paths: list[str]) -> list[Frame]:
    """One identical copy per member path, tagged with the path label."""
    if not member_paths:
        raise NoPathsError("replication needs at least one member path")
    if frame.seq is None:
        raise MissingSeqError(f"frame {frame.id} has no sequence number")
    return [frame.clone(route=path) for path in member_paths]


def _newer(a: int, b: int) -> bool:
    """True if seq a is newer than b in mod-65536 serial arithmetic."""
    return 0 < (a - b) % SEQ_SPACE < SEQ_HALF


class RecoveryState:
    """Sliding-window duplicate elimination for one stream.

    Each sequence number is accepted at most once while it stays within
    window_size of the highest accepted sequence; older arrivals are
    discarded as stale.
    """

    def __init__(self, stream_handle: str, window_size: int = 64):
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        self.stream_handle = stream_handle
        self.window_size = window_size
        self.highest_seq: Optional[int] = None
        self.seen: set[int] = set()
        self.counters: Counter = Counter()

    def _trim(self):
        self.seen = {s for s in self.seen
                     if (self.highest_seq - s) % SEQ_SPACE < self.window_size}

    def recover(self, frame: Frame) -> str:
        if frame.seq is None:
            raise MissingSeqError(f"frame {frame.id} has no sequence number")
        seq = frame.seq % SEQ_SPACE
        if self.highest_seq is None:
            self.highest_seq = seq
            self.seen = {seq}
            self.counters[ACCEPT] += 1
            return ACCEPT
        if seq == self.highest_seq or not _newer(seq, self.highest_seq):
            dist = (self.highest_seq - seq) % SEQ_SPACE
            if dist >= self.window_size:
                self.counters[DISCARD_STALE] += 1
                return DISCARD_STALE
            if seq in self.seen:
                self.counters[DISCARD_DUPLICATE] += 1
                return DISCARD_DUPLICATE
            self.seen.add(seq)
            self.counters[ACCEPT] += 1
            return ACCEPT
        # newer sequence: accept and slide the window forward
        self.highest_seq = seq
        self.seen.add(seq)
        self._trim()
        self.counters[ACCEPT] += 1
        return ACCEPT


def recover(state: RecoveryState, frame: Frame) -> str:
    return state.recover(frame)
