"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
written past pytest's capture so they show up without ``-s``.
"""

import time

import numpy as np
import pytest

import oracles
from dcflab.aes_core import AccessMode, decrypt_block, encrypt_block
from dcflab.analysis import HeatmapSpec, block_cycles, constancy_report, render_heatmap
from dcflab.cache_sim import CacheConfig
from dcflab.dcf_guard import DcfConfig
from dcflab.timing_attack import Method, run_attack

SAMPLES = 1 << 14
TRIALS = 20


@pytest.fixture
def verdict(capsys):
    t0 = time.perf_counter()

    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} "
                  f"({time.perf_counter() - t0:.1f}s) {detail}")
        return ok
    return emit


def test_criterion_1_cipher_correctness(verdict):
    t0 = time.perf_counter()
    kat = encrypt_block(bytes(range(16)), bytes.fromhex("00112233445566778899aabbccddeeff"))
    kat_ok = kat == bytes.fromhex("69c4e0d86a7b0430d8cdb78070b4c55a")
    rng = np.random.default_rng(1)
    bad = 0
    for i in range(10_000):
        key, pt = rng.bytes(16), rng.bytes(16)
        ct = encrypt_block(key, pt)
        bad += decrypt_block(key, ct) != pt
        if i % 500 == 0:  # spot-check against the independent oracle
            bad += ct != oracles.encrypt(key, pt)
    elapsed = time.perf_counter() - t0
    ok = kat_ok and bad == 0 and elapsed < 30
    verdict(1, ok, f"KAT {'ok' if kat_ok else 'MISMATCH'}, {bad} round-trip failures in 10^4, {elapsed:.1f}s < 30s")
    assert ok


def test_criterion_2_mode_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    modes = list(AccessMode)
    bad = 0
    for _ in range(10_000):
        key, pt = rng.bytes(16), rng.bytes(16)
        bad += len({encrypt_block(key, pt, m) for m in modes}) != 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 120
    verdict(2, ok, f"{bad} disagreements over 10^4 pairs x {len(modes)} modes, {elapsed:.1f}s < 120s")
    assert ok


def test_criterion_3_cache_oracle(verdict):
    from dcflab.cache_sim import CacheState

    cfg = CacheConfig(line_size=16, num_sets=4, associativity=2)
    sim = CacheState(cfg)
    ref = oracles.ListLRU(cfg.line_size, cfg.num_sets, cfg.associativity, cfg.hit_cycles, cfg.miss_cycles)
    rng = np.random.default_rng(3)
    mismatches = 0
    for addr in rng.integers(0, 16 * 4 * 6, size=10_000):
        mismatches += list(sim.access(int(addr)).hits) != ref.access(int(addr), 1)
    totals_ok = (sim.hit_count, sim.miss_count, sim.elapsed_cycles) == (ref.hits, ref.misses, ref.cycles)
    ok = mismatches == 0 and totals_ok
    verdict(3, ok, f"{mismatches} hit/miss mismatches over 10^4 accesses (4-set 2-way), totals "
                   f"{'equal' if totals_ok else 'differ'}")
    assert ok


def test_criterion_4_attack_on_vulnerable_victim(verdict):
    t0 = time.perf_counter()
    victim = DcfConfig.unprotected(AccessMode.TTABLE)
    outcomes = [run_attack(CacheConfig(), victim, SAMPLES, seed, Method.CORRELATION) for seed in range(TRIALS)]
    per_trial = [o.bytes_correct for o in outcomes]
    lines = [o.line_bits_correct for o in outcomes]
    wins = sum(b >= 14 for b in per_trial)
    elapsed = time.perf_counter() - t0
    ok = wins >= 18 and elapsed < 300
    verdict(4, ok, f"{wins}/{TRIALS} trials with >=14/16 bytes (need 18); bytes per trial {per_trial}; "
                   f"line-level (high 4 bits) per trial {lines}; {elapsed:.1f}s < 300s")
    assert ok


@pytest.mark.parametrize("label,victim", [
    ("a: FULL_SCAN", DcfConfig.unprotected(AccessMode.FULL_SCAN)),
    ("b: TTABLE + DCF defaults", DcfConfig()),
])
def test_criterion_5_attack_fails_under_countermeasures(verdict, label, victim):
    per_trial = [run_attack(CacheConfig(), victim, SAMPLES, seed, Method.CORRELATION).bytes_correct
                 for seed in range(TRIALS)]
    ok = max(per_trial) <= 2
    verdict(5, ok, f"({label}) max {max(per_trial)}/16 bytes per trial (limit 2) over {TRIALS} trials; {per_trial}")
    assert ok


def test_criterion_6_constancy_and_heatmaps(verdict):
    flat = block_cycles(CacheConfig(), DcfConfig.unprotected(AccessMode.FULL_SCAN), 1000, seed=6)
    vary = block_cycles(CacheConfig(), DcfConfig.unprotected(AccessMode.TTABLE), 1000, seed=6)
    var_ok = np.var(flat) == 0 and np.var(vary) > 0

    scan_spec = HeatmapSpec(dcf=DcfConfig.unprotected(AccessMode.FULL_SCAN))
    table_spec = HeatmapSpec()
    scan = render_heatmap(scan_spec, seed=6)
    table = render_heatmap(table_spec, seed=6)
    scan_uniform = len(np.unique(scan.samples)) == 1 and len(np.unique(scan.gray)) == 1
    table_varies = bool(np.any(table.stats["stddev"] > 0)) and len(np.unique(table.gray)) > 1
    identical = all(
        (a.pgm_bytes(), a.csv_text()) == (b.pgm_bytes(), b.csv_text())
        for a, b in ((scan, render_heatmap(scan_spec, seed=6)), (table, render_heatmap(table_spec, seed=6)))
    )
    ok = var_ok and scan_uniform and table_varies and identical
    verdict(6, ok, f"variance FULL_SCAN {np.var(flat):g}, TTABLE {np.var(vary):.1f}; 32x32 heatmaps: "
                   f"FULL_SCAN uniform={scan_uniform}, TTABLE varies={table_varies}, "
                   f"reruns byte-identical={identical}")
    assert ok


def test_criterion_7_k_i_stability(verdict):
    ks = [constancy_report(CacheConfig(), DcfConfig(), seed=s).k_i for s in range(10)]
    ok = len(set(ks)) == 1
    verdict(7, ok, f"k_i over 10 seeded DCF runs: {sorted(set(ks))}")
    assert ok
