import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dcflab.cache_sim import CacheConfig, CacheState
from dcflab.errors import ConfigError


def _replay(cfg: CacheConfig, ops):
    sim = CacheState(cfg)
    ref = oracles.ListLRU(cfg.line_size, cfg.num_sets, cfg.associativity, cfg.hit_cycles, cfg.miss_cycles)
    for op in ops:
        if op is None:
            sim.flush()
            ref.flush()
            continue
        addr, width = op
        res = sim.access(addr, width)
        assert list(res.hits) == ref.access(addr, width)
    assert sim.hit_count == ref.hits
    assert sim.miss_count == ref.misses
    assert sim.elapsed_cycles == ref.cycles
    return sim


def test_defaults():
    cfg = CacheConfig()
    assert (cfg.line_size, cfg.num_sets, cfg.associativity) == (64, 64, 1)
    assert (cfg.hit_cycles, cfg.miss_cycles) == (3, 100)
    assert cfg.capacity == 4096


@pytest.mark.parametrize("kw", [
    {"line_size": 48}, {"num_sets": 0}, {"num_sets": 6}, {"associativity": 0},
    {"hit_cycles": 100, "miss_cycles": 100}, {"hit_cycles": 0}, {"replacement": "FIFO"},
    {"compute_cycles": -1},
])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        CacheConfig(**kw)


def test_cold_then_hit():
    c = CacheState()
    assert c.access(0x1234).hits == (False,)
    assert c.access(0x1234).hits == (True,)
    assert c.access(0x1230, 4).hits == (True,)


def test_direct_mapped_conflict():
    c = CacheState(CacheConfig())
    a, b = 0x0, 64 * 64  # same set, different tag
    assert [c.access(x).hits[0] for x in (a, b, a)] == [False, False, False]


def test_two_way_keeps_both_then_evicts_lru():
    c = CacheState(CacheConfig(line_size=16, num_sets=4, associativity=2))
    a, b, d = 0, 64, 128  # all set 0
    assert c.access(a).hits == (False,)
    assert c.access(b).hits == (False,)
    assert c.access(a).hits == (True,)
    assert c.access(d).hits == (False,)  # evicts b
    assert c.access(a).hits == (True,)
    assert c.access(b).hits == (False,)


def test_access_spanning_two_lines_charges_both():
    c = CacheState()
    res = c.access(62, 4)
    assert res.hits == (False, False)
    assert res.cycles == 200
    assert c.access(63, 2).cycles == 6
    with pytest.raises(ValueError):
        c.access(0, 0)


def test_flush_semantics():
    c = CacheState()
    c.access(0x40)
    c.flush()
    assert c.access(0x40).hits == (False,)
    assert (c.hit_count, c.miss_count) == (0, 2)  # counters survive the flush
    empty = CacheState()
    empty.flush()
    assert empty.resident_lines() == 0 and empty.elapsed_cycles == 0


def test_hit_ratio_with_flush_after_each_access():
    c = CacheState()
    for _ in range(3):
        c.access(0x80)
        c.flush()
    assert c.hit_ratio() == 0.0


def test_charge_delay():
    c = CacheState()
    c.charge_delay(0)
    assert c.elapsed_cycles == 0
    c.charge_delay(50)
    c.charge_delay(50)
    assert c.elapsed_cycles == 100
    with pytest.raises(ValueError):
        c.charge_delay(-1)


def test_elapsed_invariant_with_interleaved_delays():
    c = CacheState(CacheConfig(line_size=32, num_sets=8, associativity=2))
    rng = np.random.default_rng(0)
    delays = 0
    for _ in range(500):
        c.access(int(rng.integers(0, 4096)), int(rng.integers(1, 9)))
        d = int(rng.integers(0, 20))
        c.charge_delay(d)
        delays += d
    cfg = c.config
    snap = c.snapshot()
    assert snap.elapsed_cycles == snap.hit_count * cfg.hit_cycles + snap.miss_count * cfg.miss_cycles + delays


def test_oracle_equivalence_4set_2way_long_run():
    cfg = CacheConfig(line_size=16, num_sets=4, associativity=2)
    rng = np.random.default_rng(1234)
    ops = [(int(a), 1) for a in rng.integers(0, 16 * 4 * 6, size=10_000)]
    _replay(cfg, ops)


geometries = st.sampled_from([
    CacheConfig(line_size=16, num_sets=4, associativity=2),
    CacheConfig(line_size=8, num_sets=2, associativity=4),
    CacheConfig(line_size=32, num_sets=8, associativity=1),
    CacheConfig(line_size=4, num_sets=1, associativity=3),
])
ops_strategy = st.lists(
    st.one_of(st.tuples(st.integers(0, 1023), st.integers(1, 12)), st.none()), max_size=200)


@settings(max_examples=80, deadline=None)
@given(geometries, ops_strategy)
def test_matches_list_lru_oracle(cfg, ops):
    sim = _replay(cfg, ops)
    for s in range(cfg.num_sets):
        assert (sim.tags[s] >= 0).sum() <= cfg.associativity


def test_reset_and_observer_adapter():
    c = CacheState()
    c.observer(0x10000, 5, 4)
    assert c.miss_count == 1
    c.reset()
    assert c.snapshot() == (0, 0, 0)
