"""Experiment configuration: one JSON document, validated section by section.

Unknown keys are rejected at every level.  The experiment ``seed`` seeds the
guard RNG too, so ``dcf`` sections do not carry their own ``rng_seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .analysis import HeatmapSpec
from .cache_sim import CacheConfig
from .dcf_guard import DcfConfig
from .errors import ConfigError
from .timing_attack import Method

PRESETS = ("vulnerable", "dcf-full", "fullscan")


@dataclass(frozen=True)
class AttackSettings:
    samples: int = 1 << 14
    profiling_samples: int | None = None
    method: Method = Method.CORRELATION
    positions: tuple = tuple(range(16))

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        for n in (self.samples, self.profiling_samples):
            if n is not None and (not isinstance(n, int) or n < 256):
                raise ConfigError("attack sample counts must be integers >= 256")
        if not self.positions or any(not 0 <= p < 16 for p in self.positions):
            raise ConfigError("attack positions must be a non-empty subset of 0..15")
        if len(set(self.positions)) != len(self.positions):
            raise ConfigError("attack positions must be distinct")


@dataclass(frozen=True)
class ReportSettings:
    blocks: int = 64
    warmup: int = 0

    def __post_init__(self):
        if not isinstance(self.blocks, int) or self.blocks * 160 < 256:
            raise ConfigError("report.blocks must give at least 256 lookups")
        if not isinstance(self.warmup, int) or self.warmup < 0:
            raise ConfigError("report.warmup must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    cache: CacheConfig = field(default_factory=CacheConfig)
    dcf: DcfConfig = field(default_factory=DcfConfig)
    attack: AttackSettings = field(default_factory=AttackSettings)
    heatmap: HeatmapSpec = field(default_factory=HeatmapSpec)
    report: ReportSettings = field(default_factory=ReportSettings)
    seed: int = 0
    output_dir: str = "out"

    @property
    def guard_config(self) -> DcfConfig:
        return self.dcf.with_seed(self.seed)

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=_check_seed(seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg

    def to_dict(self) -> dict:
        dcf = self.dcf.to_dict()
        dcf.pop("rng_seed")
        hm = self.heatmap.to_dict()
        for k in ("dcf", "cache"):
            hm.pop(k)
        return {
            "cache": self.cache.to_dict(),
            "dcf": dcf,
            "attack": {"samples": self.attack.samples, "profiling_samples": self.attack.profiling_samples,
                       "method": self.attack.method.value, "positions": list(self.attack.positions)},
            "heatmap": hm,
            "report": {"blocks": self.report.blocks, "warmup": self.report.warmup},
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def _check_seed(seed: Any) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return seed


def _section(cls, data: Any, name: str, exclude=()):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in fields(cls)} - set(exclude)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {name!r} section: {e}") from e


def from_dict(doc: Any) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    top = {"cache", "dcf", "attack", "heatmap", "report", "seed", "output_dir"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    cache = _section(CacheConfig, doc.get("cache"), "cache")
    dcf = _section(DcfConfig, doc.get("dcf"), "dcf", exclude=("rng_seed",))
    attack = _section(AttackSettings, doc.get("attack"), "attack")
    report = _section(ReportSettings, doc.get("report"), "report")
    hm = doc.get("heatmap") or {}
    if isinstance(hm, dict):
        hm = {**hm, "dcf": dcf, "cache": cache}
    heatmap = _section(HeatmapSpec, hm, "heatmap")
    seed = _check_seed(doc.get("seed", 0))
    out = doc.get("output_dir", "out")
    if not isinstance(out, str):
        raise ConfigError("output_dir must be a string")
    return ExperimentConfig(cache, dcf, attack, heatmap, report, seed, out)


def loads(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return from_dict(doc)


def preset_text(name: str) -> str:
    name = name.removeprefix("presets/")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("dcflab.presets").joinpath(f"{name}.json").read_text()


def load(path_or_preset: str | Path) -> ExperimentConfig:
    """Read a config file, or a bundled preset such as ``presets/vulnerable``."""
    p = Path(path_or_preset)
    if p.exists():
        return loads(p.read_text())
    name = str(path_or_preset)
    if name.removeprefix("presets/") in PRESETS:
        return loads(preset_text(name))
    raise FileNotFoundError(f"config file not found: {path_or_preset}")
