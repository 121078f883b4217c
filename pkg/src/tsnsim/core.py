"""Discrete-event engine, deterministic RNG streams, clock models, jitter distributions.

All simulation time is integer nanoseconds since the simulation epoch.
Clock arithmetic is exact (Python big ints / Fraction), so two runs with
the same seed are bit-identical.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

SimTime = int

PPM = 10 ** 6

#: identifier recorded in run metadata so outputs are self-describing
RNG_ALGORITHM = "mt19937/sha256-labeled-stream"


class PastTimeError(Exception):
    """Raised when an event is scheduled before the engine's current time."""


def rng_fork(seed: int, stream_label: str) -> random.Random:
    """Return an independent deterministic RNG stream for (seed, label).

    The stream is keyed by hashing the seed together with the label, so
    adding or removing streams never perturbs the samples of the others.
    """
    key = hashlib.sha256(f"{seed}|{stream_label}".encode()).digest()
    return random.Random(key)


@dataclass(frozen=True)
class JitterDist:
    """A nanosecond-valued jitter distribution.

    kinds: constant, uniform(min,max), normal(mean,std) truncated at
    4 sigma (and optionally at a lower bound), empirical weighted points.
    """

    kind: str
    value_ns: int = 0
    min_ns: Optional[int] = None
    max_ns: Optional[int] = None
    mean_ns: float = 0.0
    std_ns: float = 0.0
    points: tuple = ()  # ((value_ns, weight), ...)

    @classmethod
    def constant(cls, value_ns: int) -> "JitterDist":
        return cls(kind="constant", value_ns=value_ns)

    @classmethod
    def uniform(cls, min_ns: int, max_ns: int) -> "JitterDist":
        if min_ns > max_ns:
            raise ValueError("uniform: min_ns > max_ns")
        return cls(kind="uniform", min_ns=min_ns, max_ns=max_ns)

    @classmethod
    def normal(cls, mean_ns: float, std_ns: float,
               min_ns: Optional[int] = None) -> "JitterDist":
        if std_ns < 0:
            raise ValueError("normal: std_ns < 0")
        return cls(kind="normal", mean_ns=mean_ns, std_ns=std_ns, min_ns=min_ns)

    @classmethod
    def empirical(cls, points) -> "JitterDist":
        pts = tuple((int(v), float(w)) for v, w in points)
        if not pts or any(w <= 0 for _, w in pts):
            raise ValueError("empirical: needs points with positive weights")
        return cls(kind="empirical", points=pts)

    @classmethod
    def from_config(cls, cfg: dict) -> "JitterDist":
        kind = cfg.get("kind")
        if kind == "constant":
            return cls.constant(int(cfg["value_ns"]))
        if kind == "uniform":
            return cls.uniform(int(cfg["min_ns"]), int(cfg["max_ns"]))
        if kind == "normal":
            lo = cfg.get("min_ns")
            return cls.normal(float(cfg["mean_ns"]), float(cfg["std_ns"]),
                              None if lo is None else int(lo))
        if kind == "empirical":
            return cls.empirical(cfg["points"])
        raise ValueError(f"unknown jitter kind: {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value_ns": self.value_ns}
        if self.kind == "uniform":
            return {"kind": "uniform", "min_ns": self.min_ns, "max_ns": self.max_ns}
        if self.kind == "normal":
            out = {"kind": "normal", "mean_ns": self.mean_ns, "std_ns": self.std_ns}
            if self.min_ns is not None:
                out["min_ns"] = self.min_ns
            return out
        return {"kind": "empirical", "points": [list(p) for p in self.points]}

    def sample(self, rng: random.Random) -> int:
        if self.kind == "constant":
            return self.value_ns
        if self.kind == "uniform":
            return rng.randint(self.min_ns, self.max_ns)
        if self.kind == "normal":
            v = rng.gauss(self.mean_ns, self.std_ns)
            lo = self.mean_ns - 4 * self.std_ns
            hi = self.mean_ns + 4 * self.std_ns
            v = min(max(v, lo), hi)
            v = round(v)
            if self.min_ns is not None and v < self.min_ns:
                v = self.min_ns
            return int(v)
        # empirical
        values = [p[0] for p in self.points]
        weights = [p[1] for p in self.points]
        return rng.choices(values, weights=weights)[0]

    def bound_max(self) -> Optional[int]:
        """Largest value this distribution can produce, when bounded."""
        if self.kind == "constant":
            return self.value_ns
        if self.kind == "uniform":
            return self.max_ns
        if self.kind == "normal":
            return round(self.mean_ns + 4 * self.std_ns)
        if self.kind == "empirical":
            return max(p[0] for p in self.points)
        return None


CONSTANT_ZERO = JitterDist.constant(0)


def _as_ppm_fraction(drift_ppm) -> Fraction:
    if isinstance(drift_ppm, Fraction):
        return drift_ppm
    if isinstance(drift_ppm, int):
        return Fraction(drift_ppm)
    # floats from JSON: go through the decimal string for reproducibility
    return Fraction(str(drift_ppm))


@dataclass
class ClockModel:
    """Per-node clock with static offset, linear drift, and periodic resync.

    reading(t) = t + offset_ns + drift_ppm * (t - last_sync_true_time) / 1e6,
    integer arithmetic, rounded toward zero.
    """

    offset_ns: int = 0
    drift_ppm: Fraction = Fraction(0)
    sync_interval_ns: Optional[int] = None
    sync_residual: JitterDist = CONSTANT_ZERO
    last_sync_true_time: SimTime = 0

    def __post_init__(self):
        self.drift_ppm = _as_ppm_fraction(self.drift_ppm)

    def read(self, true_time: SimTime) -> SimTime:
        if not self.drift_ppm:
            return true_time + self.offset_ns
        dt = true_time - self.last_sync_true_time
        return true_time + self.offset_ns + int(self.drift_ppm * dt / PPM)

    def when_reading(self, reading: SimTime) -> SimTime:
        """Smallest true time t with read(t) >= reading (read is monotone)."""
        if not self.drift_ppm:
            return reading - self.offset_ns
        ls = self.last_sync_true_time
        # invert the linear model, then fix up the truncation
        t = ls + int((reading - self.offset_ns - ls) * PPM / (PPM + self.drift_ppm))
        while self.read(t) < reading:
            t += 1
        while t > ls and self.read(t - 1) >= reading:
            t -= 1
        return t

    def apply_sync(self, true_time: SimTime, rng: random.Random) -> None:
        """Instant resync: offset becomes a fresh residual sample."""
        self.offset_ns = self.sync_residual.sample(rng)
        self.last_sync_true_time = true_time

    @classmethod
    def identity(cls) -> "ClockModel":
        return cls()


class Engine:
    """Single-threaded event loop over integer-nanosecond time.

    Events with equal fire times run in insertion order.
    """

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.now: SimTime = 0
        self.executed = 0

    def schedule(self, fire_time: SimTime, action: Callable[[], None]) -> int:
        if fire_time < self.now:
            raise PastTimeError(f"fire_time {fire_time} < now {self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (fire_time, self._seq, action))
        return self._seq

    def run_until(self, t_end: SimTime) -> int:
        count = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_time, _, action = heapq.heappop(heap)
            self.now = fire_time
            action()
            count += 1
        self.now = t_end
        self.executed += count
        return count

    def run_all(self) -> int:
        count = 0
        heap = self._heap
        while heap:
            fire_time, _, action = heapq.heappop(heap)
            self.now = fire_time
            action()
            count += 1
        self.executed += count
        return count
