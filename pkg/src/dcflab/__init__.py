"""Simulated cache-timing lab around a table-driven AES-128.

Modules: ``aes_core`` (cipher and access modes), ``cache_sim`` (timing
oracle), ``dcf_guard`` (flush/delay countermeasures), ``timing_attack``
(first-round profile attack), ``analysis`` (heatmaps, constancy) and
``cli``.
"""

from .aes_core import AccessMode, decrypt_block, encrypt_block, key_expand
from .cache_sim import CacheConfig, CacheState
from .dcf_guard import DcfConfig, DcfGuard, encrypt_stream
from .errors import (
    AmbiguousMaximum,
    ConfigError,
    EmptyInput,
    IndexOutOfRange,
    InsufficientSamples,
    InvalidKeyLength,
    InvalidSpec,
    LabError,
)

__version__ = "0.1.0"
