"""Deterministic set-associative cache with LRU replacement and cycle accounting.

This stands in for wall-clock measurement: the simulated cycle counter is the
timing oracle every experiment reads.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError

# indices into CacheState.counters; the array is shared with the compiled kernel
HITS, MISSES, DELAY, CLOCK = range(4)


def _pow2(n):
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class CacheConfig:
    """Geometry and latencies.

    ``compute_cycles`` is the non-memory cost of one cipher substitution step.
    It is charged through the same sink as injected delays.
    """

    line_size: int = 64
    num_sets: int = 64
    associativity: int = 1
    hit_cycles: int = 3
    miss_cycles: int = 100
    replacement: str = "LRU"
    compute_cycles: int = 2

    def __post_init__(self):
        if not _pow2(self.line_size):
            raise ConfigError(f"line_size must be a power of two, got {self.line_size}")
        if not _pow2(self.num_sets):
            raise ConfigError(f"num_sets must be a power of two, got {self.num_sets}")
        if self.associativity < 1:
            raise ConfigError("associativity must be >= 1")
        if self.hit_cycles < 1 or self.miss_cycles <= self.hit_cycles:
            raise ConfigError("need 1 <= hit_cycles < miss_cycles")
        if self.replacement.upper() != "LRU":
            raise ConfigError(f"unsupported replacement policy {self.replacement!r}")
        if self.compute_cycles < 0:
            raise ConfigError("compute_cycles must be >= 0")

    @property
    def capacity(self) -> int:
        return self.line_size * self.num_sets * self.associativity

    @property
    def line_shift(self) -> int:
        return self.line_size.bit_length() - 1

    def to_dict(self) -> dict:
        return asdict(self)


class Snapshot(NamedTuple):
    hit_count: int
    miss_count: int
    elapsed_cycles: int


class AccessResult(NamedTuple):
    hits: tuple  # one bool per touched line, True for a hit
    cycles: int


class CacheState:
    """Mutable cache contents plus counters.  Not thread-safe."""

    def __init__(self, config: CacheConfig | None = None):
        self.config = config or CacheConfig()
        cfg = self.config
        # tag -1 marks an empty way; stamps order ways by last use
        self.tags = np.full((cfg.num_sets, cfg.associativity), -1, dtype=np.int64)
        self.stamps = np.zeros((cfg.num_sets, cfg.associativity), dtype=np.int64)
        self.counters = np.zeros(4, dtype=np.int64)

    @property
    def hit_count(self) -> int:
        return int(self.counters[HITS])

    @property
    def miss_count(self) -> int:
        return int(self.counters[MISSES])

    @property
    def delay_cycles(self) -> int:
        return int(self.counters[DELAY])

    @property
    def elapsed_cycles(self) -> int:
        cfg = self.config
        c = self.counters
        return int(c[HITS] * cfg.hit_cycles + c[MISSES] * cfg.miss_cycles + c[DELAY])

    def _touch(self, line: int) -> bool:
        cfg = self.config
        s = line & (cfg.num_sets - 1)
        tag = line >> (cfg.num_sets.bit_length() - 1)
        self.counters[CLOCK] += 1
        now = self.counters[CLOCK]
        row = self.tags[s]
        for way in range(cfg.associativity):
            if row[way] == tag:
                self.stamps[s, way] = now
                self.counters[HITS] += 1
                return True
        victim = int(np.argmin(np.where(row < 0, -1, self.stamps[s])))
        row[victim] = tag
        self.stamps[s, victim] = now
        self.counters[MISSES] += 1
        return False

    def access(self, addr: int, width: int = 1) -> AccessResult:
        """Touch every line covered by ``[addr, addr + width)``."""
        if width < 1:
            raise ValueError("width must be >= 1")
        shift = self.config.line_shift
        first = addr >> shift
        last = (addr + width - 1) >> shift
        hits = tuple(self._touch(line) for line in range(first, last + 1))
        cfg = self.config
        cycles = sum(cfg.hit_cycles if h else cfg.miss_cycles for h in hits)
        return AccessResult(hits, cycles)

    def flush(self) -> None:
        self.tags.fill(-1)

    def charge_delay(self, cycles: int) -> None:
        if cycles < 0:
            raise ValueError("cannot charge negative cycles")
        self.counters[DELAY] += int(cycles)

    def snapshot(self) -> Snapshot:
        return Snapshot(self.hit_count, self.miss_count, self.elapsed_cycles)

    def resident_lines(self) -> int:
        return int((self.tags >= 0).sum())

    def hit_ratio(self) -> float:
        total = self.hit_count + self.miss_count
        return self.hit_count / total if total else 0.0

    def reset(self) -> None:
        self.flush()
        self.stamps.fill(0)
        self.counters.fill(0)

    def observer(self, base: int, index: int, width: int) -> None:
        """Adapter matching the cipher's observer signature."""
        self.access(base + index * width, width)
