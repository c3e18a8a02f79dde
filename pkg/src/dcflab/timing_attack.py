"""First-round cache-timing key recovery.

The victim encrypts many random inputs ``n`` under an unknown key ``k``; the
attacker only sees the total simulated cycles of each encryption.  For a byte
position ``i`` the average time as a function of ``n[i]`` (the attack
profile) is compared against the same statistic gathered with a known key and
re-indexed by ``s = k_ref[i] ^ n[i]`` (the reference profile).  If the
victim's timing depends on ``k[i] ^ n[i]`` the two profiles are XOR-shifts of
each other and the shift is the key byte.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .aes_core import key_expand
from .cache_sim import CacheConfig, CacheState
from .dcf_guard import DcfConfig, DcfGuard
from .errors import AmbiguousMaximum, InsufficientSamples

# _XOR[c, v] = v ^ c
_XOR = np.bitwise_xor.outer(np.arange(256), np.arange(256))
_TIE_EPS = 1e-12


class Method(enum.Enum):
    MAX = "max"
    CORRELATION = "correlation"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class TimingSample:
    n: bytes
    total_cycles: int

    def __post_init__(self):
        if self.total_cycles <= 0:
            raise ValueError("a timing sample must have positive cycles")


@dataclass
class TimingSamples:
    """Column-oriented store of many TimingSample records."""

    inputs: np.ndarray  # (N, 16) uint8
    cycles: np.ndarray  # (N,) int64

    def __len__(self):
        return len(self.cycles)

    def __getitem__(self, i) -> TimingSample:
        return TimingSample(bytes(self.inputs[i]), int(self.cycles[i]))

    def head(self, n: int) -> "TimingSamples":
        return TimingSamples(self.inputs[:n], self.cycles[:n])


def collect_samples(runner: DcfGuard, key: bytes, sample_count: int, rng: np.random.Generator,
                    warmup: int = 1) -> TimingSamples:
    """Time ``sample_count`` encryptions of uniformly random inputs.

    The runner's cache is never reset between encryptions (warm-cache
    regime).  ``warmup`` untimed all-zero blocks are encrypted first so the
    first sample does not see a cold cache.
    """
    if sample_count < 256:
        raise ValueError("need at least 256 samples so every byte value can occur")
    ks = key_expand(key)
    inputs = rng.integers(0, 256, size=(sample_count, 16), dtype=np.uint8)
    if warmup:
        runner.process(ks, np.zeros((warmup, 16), dtype=np.uint8))
    run = runner.process(ks, inputs)
    return TimingSamples(inputs, run.cycles.astype(np.int64))


@dataclass
class TimingProfile:
    position: int
    sum_cycles: np.ndarray
    count: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sum_cycles / self.count

    def require_complete(self):
        empty = np.flatnonzero(self.count == 0)
        if empty.size:
            raise InsufficientSamples(self.position, empty)
        return self

    def reindexed(self, key_byte: int) -> "TimingProfile":
        """Profile indexed by ``v ^ key_byte`` instead of ``v``."""
        perm = np.arange(256) ^ key_byte
        return TimingProfile(self.position, self.sum_cycles[perm], self.count[perm])


def build_profile(samples: TimingSamples, position: int, key_byte: int = 0) -> TimingProfile:
    """Per-value timing totals for byte ``position``.

    With ``key_byte`` set, bins are indexed by ``key_byte ^ n[position]``;
    that is how reference profiles from the profiling phase are stored.
    """
    if len(samples) == 0:
        raise InsufficientSamples(position, range(256))
    idx = samples.inputs[:, position].astype(np.int64) ^ key_byte
    total = np.bincount(idx, weights=samples.cycles.astype(np.float64), minlength=256)
    count = np.bincount(idx, minlength=256)
    return TimingProfile(position, total, count).require_complete()


def build_profiles(samples: TimingSamples, key: bytes | None = None,
                   positions: Iterable[int] = range(16)) -> dict:
    key = key or bytes(16)
    return {p: build_profile(samples, p, key[p]) for p in positions}


def _unique_argmax(scores: np.ndarray, position=None) -> int:
    finite = np.where(np.isnan(scores), -np.inf, scores)
    best = finite.max()
    if not np.isfinite(best):
        raise AmbiguousMaximum(range(len(scores)), position)
    tied = np.flatnonzero(finite >= best - _TIE_EPS * max(1.0, abs(best)))
    if tied.size > 1:
        raise AmbiguousMaximum(tied, position)
    return int(tied[0])


def correlation_scores(attack_mean: np.ndarray, reference_mean: np.ndarray) -> np.ndarray:
    """Pearson correlation of ``attack[v]`` with ``reference[v ^ c]`` for every c."""
    a = attack_mean - attack_mean.mean()
    shifted = reference_mean[_XOR]
    r = shifted - shifted.mean(axis=1, keepdims=True)
    num = r @ a
    den = np.sqrt((r * r).sum(axis=1) * (a @ a))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


@dataclass
class KeyByteGuess:
    byte: int
    scores: np.ndarray


def recover_key_byte(attack: TimingProfile, reference: TimingProfile,
                     method: Method = Method.CORRELATION) -> KeyByteGuess:
    """Raises AmbiguousMaximum when the best candidate is not unique."""
    method = Method.parse(method)
    attack.require_complete()
    reference.require_complete()
    pos = attack.position
    if method is Method.MAX:
        try:
            v_star = _unique_argmax(attack.mean, pos)
            s_star = _unique_argmax(reference.mean, pos)
        except AmbiguousMaximum:
            scores = _max_scores(attack.mean, reference.mean)
            raise AmbiguousMaximum(_tied(scores), pos) from None
        return KeyByteGuess(v_star ^ s_star, attack.mean[_XOR[s_star]])
    scores = correlation_scores(attack.mean, reference.mean)
    return KeyByteGuess(_unique_argmax(scores, pos), scores)


def _max_scores(attack_mean, reference_mean):
    # candidate c scores attack_mean[c ^ s] for the best reference value s
    s_best = np.flatnonzero(reference_mean == reference_mean.max())
    return np.max(attack_mean[_XOR[s_best]], axis=0)


def _tied(scores):
    finite = np.where(np.isnan(scores), -np.inf, scores)
    best = finite.max()
    if not np.isfinite(best):
        return np.arange(len(scores))
    return np.flatnonzero(finite >= best - _TIE_EPS * max(1.0, abs(best)))


@dataclass
class AttackResult:
    """Per-position outcome.  ``recovered[i]`` is None when position i was ambiguous."""

    recovered: list
    scores: np.ndarray  # (16, 256)
    method: Method
    ties: dict = field(default_factory=dict)

    @property
    def recovered_key(self) -> bytes:
        # ambiguous positions fall back to the lowest tied candidate
        return bytes(b if b is not None else min(self.ties[i]) for i, b in enumerate(self.recovered))

    def bytes_correct(self, key: bytes) -> int:
        return sum(1 for i, b in enumerate(self.recovered) if b is not None and b == key[i])

    def high_bits_correct(self, key: bytes, bits: int) -> int:
        """Positions whose top ``bits`` bits are pinned down correctly.

        Ambiguous positions count when every tied candidate agrees on those bits.
        """
        shift = 8 - bits
        n = 0
        for i, b in enumerate(self.recovered):
            cands = [b] if b is not None else list(self.ties.get(i, ()))
            if cands and all((c >> shift) == (key[i] >> shift) for c in cands):
                n += 1
        return n


def recover_key(attack_samples: TimingSamples, reference_profiles: dict,
                method: Method = Method.CORRELATION,
                positions: Iterable[int] = range(16)) -> AttackResult:
    method = Method.parse(method)
    recovered = [None] * 16
    scores = np.full((16, 256), np.nan)
    ties = {}
    for p in positions:
        attack = build_profile(attack_samples, p)
        try:
            guess = recover_key_byte(attack, reference_profiles[p], method)
        except AmbiguousMaximum as exc:
            ties[p] = exc.tied
            if method is Method.CORRELATION:
                scores[p] = correlation_scores(attack.mean, reference_profiles[p].mean)
            else:
                scores[p] = _max_scores(attack.mean, reference_profiles[p].mean)
            continue
        recovered[p] = guess.byte
        scores[p] = guess.scores
    for p in range(16):
        if recovered[p] is None and p not in ties:
            ties[p] = tuple(range(256))  # position not attacked
    return AttackResult(recovered, scores, method, ties)


# ---------------------------------------------------------------------------
# End-to-end experiment

@dataclass
class AttackOutcome:
    result: AttackResult
    true_key: bytes
    reference_key: bytes
    profiling_samples: int
    attack_samples: int
    reference_profiles: dict
    attack_profiles: dict
    line_bits: int

    @property
    def bytes_correct(self) -> int:
        return self.result.bytes_correct(self.true_key)

    @property
    def line_bits_correct(self) -> int:
        return self.result.high_bits_correct(self.true_key, self.line_bits)

    def report(self) -> dict:
        r = self.result
        scores = np.where(np.isnan(r.scores), -np.inf, r.scores)
        return {
            "method": r.method.value,
            "recovered_key": r.recovered_key.hex(),
            "true_key": self.true_key.hex(),
            "reference_key": self.reference_key.hex(),
            "bytes_correct": self.bytes_correct,
            "line_bits": self.line_bits,
            "line_bits_correct": self.line_bits_correct,
            "profiling_samples": self.profiling_samples,
            "attack_samples": self.attack_samples,
            "positions": [
                {
                    "position": p,
                    "recovered": r.recovered[p],
                    "true": self.true_key[p],
                    "ambiguous": r.recovered[p] is None,
                    "tie_count": len(r.ties.get(p, ())),
                    "score_max": float(scores[p].max()) if np.isfinite(scores[p].max()) else None,
                    "scores": [None if np.isnan(x) else float(x) for x in r.scores[p]],
                }
                for p in range(16)
            ],
        }


def line_bits(cache: CacheConfig, entry_width: int = 4) -> int:
    """Key bits a line-granular channel can reveal for a table of 256 entries."""
    per_line = max(1, cache.line_size // entry_width)
    return max(0, 8 - (per_line.bit_length() - 1))


def run_attack(cache_cfg: CacheConfig, dcf_cfg: DcfConfig, samples: int, seed: int,
               method: Method = Method.CORRELATION, positions: Sequence[int] = tuple(range(16)),
               profiling_samples: Optional[int] = None) -> AttackOutcome:
    """Profiling phase with an attacker-chosen key, then the attack phase.

    Both phases use the same cache geometry, access mode and countermeasure
    settings but independent cache instances and RNG streams.
    """
    profiling_samples = profiling_samples or samples
    seq = np.random.SeedSequence(seed)
    key_rng, prof_rng, att_rng, prof_guard_rng, att_guard_rng = (np.random.default_rng(s) for s in seq.spawn(5))
    reference_key = key_rng.bytes(16)
    true_key = key_rng.bytes(16)

    prof_guard = DcfGuard(dcf_cfg, CacheState(cache_cfg), rng=prof_guard_rng)
    prof = collect_samples(prof_guard, reference_key, profiling_samples, prof_rng)
    refs = build_profiles(prof, reference_key, positions)

    att_guard = DcfGuard(dcf_cfg, CacheState(cache_cfg), rng=att_guard_rng)
    att = collect_samples(att_guard, true_key, samples, att_rng)
    result = recover_key(att, refs, method, positions)
    attack_profiles = {p: build_profile(att, p) for p in positions}
    return AttackOutcome(result, true_key, reference_key, profiling_samples, samples, refs,
                         attack_profiles, line_bits(cache_cfg))


def write_profiles_csv(path, profiles: dict, phase: str = "") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "position", "value", "count", "mean"])
        for p in sorted(profiles):
            prof = profiles[p]
            for v in range(256):
                w.writerow([phase, p, v, int(prof.count[v]), f"{prof.mean[v]:.6f}"])
