"""Dynamic Cache Flushing around the table-driven cipher.

Three knobs wrap every encryption:

* a countdown timer, drawn uniformly from ``[flush_timer_min, flush_timer_max]``
  and decremented by every simulated cycle charged; it is checked after each
  table access and, once it reaches zero, the cache is flushed and the timer
  re-drawn;
* after each ``chunk_size``-byte chunk a delay of
  ``round(delay_alpha * T_chunk * U)`` cycles, ``U ~ Uniform[0.5, 1.5)``, where
  ``T_chunk`` is the time the chunk just took;
* the table access mode (see :class:`~dcflab.aes_core.AccessMode`).

Blocks are processed in ECB order.  ECB is used because it keeps the timing
study free of chaining state; it is not a mode for protecting real data.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from . import _kernel as K
from .aes_core import (
    DEFAULT_TABLES,
    AccessMode,
    KeySchedule,
    LookupTables,
    encrypt_block,
    full_scan_lookup,
    key_expand,
)
from .cache_sim import CacheConfig, CacheState
from .errors import ConfigError, EmptyInput, InvalidKeyLength

__all__ = [
    "DcfConfig", "DcfGuard", "BlockRun", "StreamJob", "StreamResult",
    "encrypt_stream", "encrypt_file", "next_flush_deadline", "random_delay",
    "full_scan_lookup", "pad", "key_from_string",
]

_MODE_CODES = {
    AccessMode.TTABLE: K.TTABLE,
    AccessMode.SBOX: K.SBOX,
    AccessMode.FULL_SCAN: K.FULL_SCAN,
    AccessMode.LOGICAL: K.LOGICAL,
}


@dataclass(frozen=True)
class DcfConfig:
    flush_timer_min: int = 2000
    flush_timer_max: int = 8000
    delay_alpha: float = 0.5
    chunk_size: int = 64
    access_mode: AccessMode = AccessMode.TTABLE
    flush_enabled: bool = True
    delays_enabled: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "access_mode", AccessMode.parse(self.access_mode))
        except (KeyError, ValueError):
            raise ConfigError(f"unknown access mode {self.access_mode!r}") from None
        if not 0 < self.flush_timer_min <= self.flush_timer_max:
            raise ConfigError("need 0 < flush_timer_min <= flush_timer_max")
        if self.delay_alpha < 0:
            raise ConfigError("delay_alpha must be >= 0")
        if self.chunk_size <= 0 or self.chunk_size % 16:
            raise ConfigError("chunk_size must be a positive multiple of 16")

    @classmethod
    def unprotected(cls, mode: AccessMode = AccessMode.TTABLE, **kw) -> "DcfConfig":
        """Countermeasures off: the guard is an identity wrapper."""
        return cls(access_mode=mode, flush_enabled=False, delays_enabled=False, **kw)

    def with_seed(self, seed: int) -> "DcfConfig":
        return replace(self, rng_seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["access_mode"] = self.access_mode.value
        return d


def next_flush_deadline(cfg: DcfConfig, rng: np.random.Generator) -> int:
    return int(rng.integers(cfg.flush_timer_min, cfg.flush_timer_max + 1))


def random_delay(t_chunk: int, cfg: DcfConfig, rng: np.random.Generator) -> int:
    """Delay proportional to the chunk time, with bounded multiplicative jitter."""
    if t_chunk < 0:
        raise ValueError("chunk time must be >= 0")
    u = 0.5 + rng.random()
    return int(np.rint(cfg.delay_alpha * t_chunk * u))


def pad(data: bytes) -> bytes:
    """PKCS#7-style padding, applied only when the length is not a multiple of 16."""
    rem = len(data) % 16
    if rem == 0:
        return bytes(data)
    n = 16 - rem
    return bytes(data) + bytes([n]) * n


def key_from_string(text: str | bytes) -> bytes:
    """Raw password-as-key: the first 16 bytes of the UTF-8 string.  No KDF."""
    raw = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    if len(raw) < 16:
        raise InvalidKeyLength(f"key string must be at least 16 bytes, got {len(raw)}")
    return raw[:16]


@dataclass
class BlockRun:
    ciphertext: bytes
    cycles: np.ndarray       # per block, including any chunk delay charged after it
    flushes: np.ndarray      # flushes fired while each block ran
    step_fetch: Optional[np.ndarray] = None  # memory cycles charged per cipher step
    step_total: Optional[np.ndarray] = None  # end-to-end cycles per cipher step


def _as_blocks(data) -> np.ndarray:
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) else data
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    if arr.ndim == 1:
        if arr.size % 16:
            raise ValueError("block data must be a multiple of 16 bytes")
        arr = arr.reshape(-1, 16)
    if arr.ndim != 2 or arr.shape[1] != 16:
        raise ValueError("expected an (N, 16) array of blocks")
    return arr.astype(np.int64)


class DcfGuard:
    """A cipher instance bound to one cache, one RNG and one flush timer.

    The guard is the unit of sequential execution: its blocks never
    interleave, and a second concurrent call raises ``RuntimeError``.
    """

    def __init__(self, config: DcfConfig, cache: CacheState | None = None,
                 tables: LookupTables = DEFAULT_TABLES, rng: np.random.Generator | None = None):
        self.config = config
        self.cache = cache if cache is not None else CacheState()
        self.tables = tables
        self.rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        self._lock = threading.Lock()
        self.flush_log = numba.typed.List.empty_list(numba.types.int64)

        st = np.zeros(K.GUARD_STATE_LEN, dtype=np.int64)
        st[K.D_FLUSH] = int(config.flush_enabled)
        st[K.D_TMIN] = config.flush_timer_min
        st[K.D_TMAX] = config.flush_timer_max
        st[K.D_DELAYS] = int(config.delays_enabled)
        st[K.D_CHUNK] = config.chunk_size // 16
        st[K.D_CHUNK_START] = self.cache.elapsed_cycles
        if config.flush_enabled:
            st[K.D_TIMER] = next_flush_deadline(config, self.rng)
        self.state = st

        self._tables_arr = np.array(
            [t.entries for t in tables.t_tables] + [tables.sbox.entries], dtype=np.int64)
        self._bases = np.array([t.base for t in tables.t_tables] + [tables.sbox.base], dtype=np.int64)
        self._widths = np.array([4, 4, 4, 4, 1], dtype=np.int64)
        cc = self.cache.config
        self._geo = np.array([cc.line_shift, cc.num_sets - 1, cc.num_sets.bit_length() - 1,
                              cc.associativity, cc.hit_cycles, cc.miss_cycles, cc.compute_cycles],
                             dtype=np.int64)
        self._fetch = None
        self._starts = None

    @property
    def timer(self) -> int:
        return int(self.state[K.D_TIMER])

    # -- reference path: observer callbacks on the pure-Python cipher ---------

    def _observe(self, base, index, width):
        st = self.state
        res = self.cache.access(base + index * width, width)
        if self._fetch is not None:
            self._fetch[-1] += res.cycles
        if st[K.D_FLUSH]:
            st[K.D_TIMER] -= res.cycles
            if st[K.D_TIMER] <= 0:
                self.cache.flush()
                self.flush_log.append(self.cache.elapsed_cycles)
                st[K.D_BLOCK_FLUSHES] += 1
                st[K.D_TIMER] = next_flush_deadline(self.config, self.rng)

    def _on_step(self):
        if self._starts is not None:
            self._starts.append(self.cache.elapsed_cycles)
            self._fetch.append(0)
        c = self.cache.config.compute_cycles
        self.cache.charge_delay(c)
        if self.state[K.D_FLUSH]:
            self.state[K.D_TIMER] -= c

    def _end_block(self):
        st = self.state
        st[K.D_INCHUNK] += 1
        if st[K.D_INCHUNK] == st[K.D_CHUNK]:
            if st[K.D_DELAYS]:
                x = random_delay(self.cache.elapsed_cycles - int(st[K.D_CHUNK_START]), self.config, self.rng)
                self.cache.charge_delay(x)
                if st[K.D_FLUSH]:
                    st[K.D_TIMER] -= x
            st[K.D_INCHUNK] = 0
            st[K.D_CHUNK_START] = self.cache.elapsed_cycles

    def _run_reference(self, ks, blocks, trace):
        n = blocks.shape[0]
        cycles = np.zeros(n, dtype=np.int64)
        flushes = np.zeros(n, dtype=np.int64)
        out = bytearray()
        if trace:
            self._fetch, self._starts = [], []
        try:
            for b in range(n):
                start = self.cache.elapsed_cycles
                self.state[K.D_BLOCK_FLUSHES] = 0
                out += encrypt_block(ks, bytes(blocks[b].astype(np.uint8)), self.config.access_mode,
                                     observer=self._observe, on_step=self._on_step, tables=self.tables)
                self._end_block()
                cycles[b] = self.cache.elapsed_cycles - start
                flushes[b] = self.state[K.D_BLOCK_FLUSHES]
            run = BlockRun(bytes(out), cycles, flushes)
            if trace:
                run.step_fetch = np.array(self._fetch, dtype=np.int64)
                run.step_total = _step_totals(np.array(self._starts, dtype=np.int64), self.cache.elapsed_cycles)
            return run
        finally:
            self._fetch = self._starts = None

    # -- compiled path -----------------------------------------------------

    def _run_fast(self, ks, blocks, trace):
        n = blocks.shape[0]
        cycles = np.zeros(n, dtype=np.int64)
        flushes = np.zeros(n, dtype=np.int64)
        out = np.zeros((n, 16), dtype=np.int64)
        steps = n * 160 if trace else 0
        fetch = np.zeros(steps, dtype=np.int64)
        starts = np.zeros(steps, dtype=np.int64)
        st = self.state
        st[K.D_STEP] = -1
        c = self.cache
        end = K.run_blocks(blocks, np.array(ks.words, dtype=np.int64), _MODE_CODES[self.config.access_mode],
                           self._tables_arr, self._bases, self._widths, c.tags, c.stamps, c.counters,
                           self._geo, st, float(self.config.delay_alpha), self.rng, self.flush_log,
                           out, cycles, flushes, fetch, starts)
        run = BlockRun(out.astype(np.uint8).tobytes(), cycles, flushes)
        if trace:
            run.step_fetch = fetch
            run.step_total = _step_totals(starts, int(end))
        return run

    def process(self, key, data, *, reference: bool = False, trace: bool = False) -> BlockRun:
        """Encrypt whole blocks (bytes or an (N, 16) array) under the guard.

        ``reference=True`` drives the observer-based pure-Python cipher; the
        default compiled path produces identical results much faster.
        """
        ks = key if isinstance(key, KeySchedule) else key_expand(key)
        blocks = _as_blocks(data)
        if not self._lock.acquire(blocking=False):
            raise RuntimeError("DcfGuard is single-threaded; a job is already running")
        try:
            if reference:
                return self._run_reference(ks, blocks, trace)
            return self._run_fast(ks, blocks, trace)
        finally:
            self._lock.release()


def _step_totals(starts: np.ndarray, end: int) -> np.ndarray:
    if starts.size == 0:
        return starts.copy()
    return np.diff(np.append(starts, end))


@dataclass
class StreamJob:
    plaintext: bytes
    key: bytes
    cycle_log: np.ndarray
    flush_fired: np.ndarray
    flush_events: list = field(default_factory=list)  # cycle offsets from job start


@dataclass
class StreamResult:
    ciphertext: bytes
    job: StreamJob
    run: BlockRun


def encrypt_stream(cfg: DcfConfig, key: bytes, plaintext: bytes, cache: CacheState | None = None,
                   *, reference: bool = False, trace: bool = False,
                   guard: DcfGuard | None = None) -> StreamResult:
    """Encrypt a buffer chunk by chunk under the DCF countermeasures."""
    if not plaintext:
        raise EmptyInput("nothing to encrypt")
    if guard is None:
        guard = DcfGuard(cfg, cache)
    origin = guard.cache.elapsed_cycles
    before = len(guard.flush_log)
    run = guard.process(key, pad(plaintext), reference=reference, trace=trace)
    events = [int(x) - origin for x in list(guard.flush_log)[before:]]
    job = StreamJob(bytes(plaintext), bytes(key), run.cycles, run.flushes, events)
    return StreamResult(run.ciphertext, job, run)


def write_cycle_log(path, job: StreamJob) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_index", "cycles", "flush_fired"])
        for i, (c, f) in enumerate(zip(job.cycle_log, job.flush_fired)):
            w.writerow([i, int(c), int(f > 0)])


def encrypt_file(cfg: DcfConfig, cache_cfg: CacheConfig, key: bytes, in_path, out_path,
                 log_path=None) -> StreamResult:
    """Read ``in_path``, write ciphertext to ``out_path`` and a CSV cycle log."""
    data = Path(in_path).read_bytes()
    result = encrypt_stream(cfg, key, data, CacheState(cache_cfg))
    Path(out_path).write_bytes(result.ciphertext)
    if log_path is None:
        log_path = str(out_path) + ".cycles.csv"
    write_cycle_log(log_path, result.job)
    return result
