"""Timing heatmaps over a (key, input) grid and constancy statistics.

Heatmap protocol, per cell: a fresh cache, then ``reps`` rounds of
(random background block, measured cell block) under the cell key.  The
background block leaves the cache warm in a data-dependent state, which is
where a table-driven victim's timing variability comes from.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .aes_core import AccessMode
from .cache_sim import CacheConfig, CacheState
from .dcf_guard import DcfConfig, DcfGuard, encrypt_stream
from .errors import InvalidSpec

ENUMERATION = "cell i -> 16 bytes, byte p = (i mod 256) XOR p"


def cell_bytes(i: int) -> bytes:
    """Deterministic 16-byte key/input for grid cell ``i``."""
    return bytes(((i % 256) ^ p) for p in range(16))


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class HeatmapSpec:
    grid_keys: int = 32
    grid_inputs: int = 32
    reps: int = 16
    block_pixels: int = 4
    levels: int = 16  # gray levels in the palette
    dcf: DcfConfig = field(default_factory=lambda: DcfConfig.unprotected(AccessMode.TTABLE))
    cache: CacheConfig = field(default_factory=CacheConfig)

    def __post_init__(self):
        if self.grid_keys < 1 or self.grid_inputs < 1:
            raise InvalidSpec(f"grid must have positive area, got {self.grid_keys}x{self.grid_inputs}")
        if self.reps < 1:
            raise InvalidSpec("reps must be >= 1")
        if self.block_pixels < 1:
            raise InvalidSpec("block_pixels must be >= 1")
        if not 2 <= self.levels <= 256:
            raise InvalidSpec("levels must be in [2, 256]")

    def to_dict(self) -> dict:
        return {
            "grid_keys": self.grid_keys, "grid_inputs": self.grid_inputs, "reps": self.reps,
            "block_pixels": self.block_pixels, "levels": self.levels,
            "dcf": self.dcf.to_dict(), "cache": self.cache.to_dict(),
        }


@dataclass
class Heatmap:
    spec: HeatmapSpec
    seed: int
    samples: np.ndarray  # (grid_keys, grid_inputs, reps) cycles
    gray: np.ndarray     # (grid_keys, grid_inputs) uint8

    @property
    def stats(self) -> dict:
        s = self.samples
        return {"min": s.min(axis=2), "max": s.max(axis=2), "mean": s.mean(axis=2), "stddev": s.std(axis=2)}

    def image(self) -> np.ndarray:
        bp = self.spec.block_pixels
        return np.kron(self.gray, np.ones((bp, bp), dtype=np.uint8)).astype(np.uint8)

    def pgm_bytes(self) -> bytes:
        img = self.image()
        h, w = img.shape
        return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()

    def csv_text(self) -> str:
        st = self.stats
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key_cell", "input_cell", "min", "max", "mean", "stddev", "gray"])
        for i in range(self.spec.grid_keys):
            for j in range(self.spec.grid_inputs):
                w.writerow([i, j, int(st["min"][i, j]), int(st["max"][i, j]), f"{st['mean'][i, j]:.4f}",
                            f"{st['stddev'][i, j]:.4f}", int(self.gray[i, j])])
        return buf.getvalue()

    def metadata(self) -> dict:
        payload = {"spec": self.spec.to_dict(), "seed": self.seed}
        return {**payload, "config_hash": _config_hash(payload), "enumeration": ENUMERATION,
                "palette": f"{self.spec.levels} levels from quantiles of all per-rep cycles; "
                           "gray rises with the cell mean"}

    def write(self, out_dir, stem: str = "heatmap") -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"pgm": out / f"{stem}.pgm", "csv": out / f"{stem}.csv", "meta": out / f"{stem}.json"}
        paths["pgm"].write_bytes(self.pgm_bytes())
        paths["csv"].write_text(self.csv_text())
        paths["meta"].write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return paths


def _cell_samples(spec: HeatmapSpec, seed: int, i: int, j: int) -> np.ndarray:
    guard_rng, bg_rng = (np.random.default_rng(s) for s in np.random.SeedSequence([seed, i, j]).spawn(2))
    guard = DcfGuard(spec.dcf, CacheState(spec.cache), rng=guard_rng)
    blocks = bg_rng.integers(0, 256, (2 * spec.reps, 16), dtype=np.uint8)
    blocks[1::2] = np.frombuffer(cell_bytes(j), dtype=np.uint8)
    run = guard.process(cell_bytes(i), blocks)
    return run.cycles[1::2]


def quantize(means: np.ndarray, population: np.ndarray, levels: int) -> np.ndarray:
    """Map cell means to gray via quantile bins of the pooled cycle population."""
    edges = np.quantile(population, np.linspace(0.0, 1.0, levels + 1)[1:-1])
    level = np.searchsorted(edges, means, side="right")
    return np.rint(level * 255.0 / (levels - 1)).astype(np.uint8)


def render_heatmap(spec: HeatmapSpec, seed: int = 0) -> Heatmap:
    samples = np.empty((spec.grid_keys, spec.grid_inputs, spec.reps), dtype=np.int64)
    for i in range(spec.grid_keys):
        for j in range(spec.grid_inputs):
            samples[i, j] = _cell_samples(spec, seed, i, j)
    gray = quantize(samples.mean(axis=2), samples.ravel(), spec.levels)
    return Heatmap(spec, seed, samples, gray)


def block_cycles(cache_cfg: CacheConfig, dcf_cfg: DcfConfig, count: int, seed: int = 0,
                 warmup: int = 1) -> np.ndarray:
    """Cycles of ``count`` blocks, each under a fresh random key and input, on one warm cache."""
    key_rng, data_rng, guard_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    guard = DcfGuard(dcf_cfg, CacheState(cache_cfg), rng=guard_rng)
    if warmup:
        guard.process(key_rng.bytes(16), data_rng.integers(0, 256, (warmup, 16), dtype=np.uint8))
    out = np.empty(count, dtype=np.int64)
    for b in range(count):
        out[b] = guard.process(key_rng.bytes(16), data_rng.bytes(16)).cycles[0]
    return out


def running_mean(x: np.ndarray) -> np.ndarray:
    return np.cumsum(x) / np.arange(1, len(x) + 1)


def _max_running_mean(x: np.ndarray) -> Fraction:
    # exact value at the float argmax, so equal series give exactly equal maxima
    cs = np.cumsum(x)
    t = int(np.argmax(cs / np.arange(1, len(x) + 1)))
    return Fraction(int(cs[t]), t + 1)


@dataclass
class ConstancyReport:
    fetch_cycles: np.ndarray        # memory cycles charged per lookup
    instruction_cycles: np.ndarray  # end-to-end cycles per lookup, delays included
    block_cycles: np.ndarray
    k_i: float
    coefficient_of_variation: float
    config: dict

    @property
    def fetch_mean(self) -> np.ndarray:
        return running_mean(self.fetch_cycles)

    @property
    def instruction_mean(self) -> np.ndarray:
        return running_mean(self.instruction_cycles)

    def summary(self) -> dict:
        return {
            "k_i": self.k_i,
            "coefficient_of_variation": self.coefficient_of_variation,
            "max_fetch_mean": float(self.fetch_mean.max()),
            "max_instruction_mean": float(self.instruction_mean.max()),
            "final_fetch_mean": float(self.fetch_mean[-1]),
            "final_instruction_mean": float(self.instruction_mean[-1]),
            "lookups": int(len(self.fetch_cycles)),
            "blocks": int(len(self.block_cycles)),
            "config": self.config,
            "config_hash": _config_hash(self.config),
        }

    def write(self, out_dir, stem: str = "constancy") -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        series, summary = out / f"{stem}_series.csv", out / f"{stem}_summary.json"
        fm, im = self.fetch_mean, self.instruction_mean
        with open(series, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lookup", "fetch_cycles", "instruction_cycles", "fetch_mean", "instruction_mean"])
            for t in range(len(fm)):
                w.writerow([t, int(self.fetch_cycles[t]), int(self.instruction_cycles[t]),
                            f"{fm[t]:.6f}", f"{im[t]:.6f}"])
        summary.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return {"series": series, "summary": summary}


def constancy_report(cache_cfg: CacheConfig, dcf_cfg: DcfConfig, blocks: int = 64, seed: int = 0,
                     warmup: int = 0) -> ConstancyReport:
    """Instrument one stream encryption and compare fetch and instruction time.

    ``warmup`` blocks are encrypted (and discarded) on the same cache first;
    the default 0 records from a cold cache.
    """
    if blocks * 160 < 256:
        raise ValueError("need a run of at least 256 lookups")
    key_rng, data_rng, guard_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    key = key_rng.bytes(16)
    guard = DcfGuard(dcf_cfg, CacheState(cache_cfg), rng=guard_rng)
    if warmup:
        guard.process(key, data_rng.integers(0, 256, (warmup, 16), dtype=np.uint8))
    res = encrypt_stream(dcf_cfg, key, data_rng.bytes(16 * blocks), trace=True, guard=guard)
    fetch, instr = res.run.step_fetch, res.run.step_total
    k_i = abs(_max_running_mean(instr) - _max_running_mean(fetch))
    cyc = res.run.cycles
    cv = float(cyc.std() / cyc.mean()) if cyc.mean() else 0.0
    config = {"cache": cache_cfg.to_dict(), "dcf": dcf_cfg.to_dict(), "blocks": blocks,
              "seed": seed, "warmup": warmup}
    return ConstancyReport(fetch, instr, cyc, float(k_i), cv, config)
