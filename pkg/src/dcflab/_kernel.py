"""Compiled replay of the observer-driven cipher over the cache model.

The pure-Python path (aes_core observer -> CacheState -> DcfGuard) is the
reference; this module reproduces it access-for-access, including the order
in which the shared numpy Generator is consumed, so both paths leave the
cache, counters, timer and RNG in identical states.  tests/test_kernel.py
holds the equivalence checks.

The helpers are closures over the state arrays rather than separate jitted
functions: passing arrays into per-access helper calls leaves reference
count traffic in the hot loop and costs an order of magnitude in speed.
"""

import numba
import numpy as np

from .cache_sim import CLOCK, DELAY, HITS, MISSES

TTABLE, SBOX, FULL_SCAN, LOGICAL = 0, 1, 2, 3

# geometry vector
G_SHIFT, G_MASK, G_SETBITS, G_WAYS, G_HIT, G_MISS, G_COMPUTE = range(7)
# guard state vector
(D_FLUSH, D_TMIN, D_TMAX, D_DELAYS, D_CHUNK, D_TIMER, D_INCHUNK, D_CHUNK_START,
 D_BLOCK_FLUSHES, D_STEP) = range(10)
GUARD_STATE_LEN = 10


@numba.njit(cache=True)
def run_blocks(blocks, rk, mode, tables, bases, widths, tags, stamps, counters, geo, st, alpha, rng,
               flush_log, out_ct, out_cycles, out_flushes, fetch, starts):
    """Encrypt ``blocks`` (N x 16) through the guard; returns elapsed cycles at exit."""
    shift = geo[G_SHIFT]
    mask = geo[G_MASK]
    setbits = geo[G_SETBITS]
    ways = geo[G_WAYS]
    hit = geo[G_HIT]
    miss = geo[G_MISS]
    compute = geo[G_COMPUTE]
    tracing = fetch.shape[0] > 0
    flushing = st[D_FLUSH] != 0

    def elapsed():
        return counters[HITS] * hit + counters[MISSES] * miss + counters[DELAY]

    def touch(line):
        s = line & mask
        tag = line >> setbits
        counters[CLOCK] += 1
        now = counters[CLOCK]
        for w in range(ways):
            if tags[s, w] == tag:
                stamps[s, w] = now
                counters[HITS] += 1
                return hit
        best = 0
        bestval = np.int64(9223372036854775807)
        for w in range(ways):
            v = stamps[s, w]
            if tags[s, w] < 0:
                v = -1
            if v < bestval:
                bestval = v
                best = w
        tags[s, best] = tag
        stamps[s, best] = now
        counters[MISSES] += 1
        return miss

    def fire():
        tags[:, :] = -1
        flush_log.append(elapsed())
        st[D_BLOCK_FLUSHES] += 1
        st[D_TIMER] = rng.integers(st[D_TMIN], st[D_TMAX] + 1)

    def charge(cost):
        # book a read and run the flush timer; True if a flush fired
        if tracing:
            fetch[st[D_STEP]] += cost
        if flushing:
            st[D_TIMER] -= cost
            if st[D_TIMER] <= 0:
                fire()
                return True
        return False

    def read(addr, width):
        cost = 0
        for line in range(addr >> shift, ((addr + width - 1) >> shift) + 1):
            cost += touch(line)
        return charge(cost)

    def step():
        if tracing:
            st[D_STEP] += 1
            starts[st[D_STEP]] = elapsed()
        counters[DELAY] += compute
        if flushing:
            st[D_TIMER] -= compute

    def scan(tab):
        # Reads that stay on the line touched immediately before (no flush in
        # between) are LRU hits on the MRU way.  A run of them is booked in one
        # go, stopping early at the read where the flush timer would expire.
        base = bases[tab]
        width = widths[tab]
        prev = -1
        pset = 0
        pway = 0
        i = 0
        while i < 256:
            addr = base + i * width
            first = addr >> shift
            last = (addr + width - 1) >> shift
            if first == last and first == prev:
                k = min(255, (((prev + 1) << shift) - width - base) // width) - i + 1
                if flushing:
                    timer = st[D_TIMER]
                    m = 1 if timer <= 0 else (timer + hit - 1) // hit
                    if m < k:
                        k = m
                counters[CLOCK] += k
                stamps[pset, pway] = counters[CLOCK]
                counters[HITS] += k
                i += k
                if tracing:
                    fetch[st[D_STEP]] += k * hit
                if flushing:
                    st[D_TIMER] -= k * hit
                    if st[D_TIMER] <= 0:
                        fire()
                        prev = -1
                continue
            i += 1
            if read(addr, width):
                prev = -1
                continue
            prev = last
            pset = last & mask
            tag = last >> setbits
            for w in range(ways):
                if tags[pset, w] == tag:
                    pway = w

    def lookup(tab, idx):
        if mode == FULL_SCAN:
            scan(tab)
        else:
            read(bases[tab] + idx * widths[tab], widths[tab])
        return tables[tab, idx]

    def xtime(a):
        a <<= 1
        if a & 0x100:
            a ^= 0x11B
        return a

    s = np.empty(4, np.int64)
    t = np.empty(4, np.int64)
    cells = np.empty(16, np.int64)
    tmp = np.empty(16, np.int64)

    n = blocks.shape[0]
    for b in range(n):
        start = elapsed()
        st[D_BLOCK_FLUSHES] = 0
        pt = blocks[b]
        out = out_ct[b]
        if mode == TTABLE or mode == FULL_SCAN:
            for j in range(4):
                s[j] = ((pt[4 * j] << 24) | (pt[4 * j + 1] << 16) | (pt[4 * j + 2] << 8) | pt[4 * j + 3]) ^ rk[j]
            for r in range(1, 10):
                for j in range(4):
                    step()
                    a = lookup(0, s[j] >> 24)
                    step()
                    a ^= lookup(1, (s[(j + 1) & 3] >> 16) & 0xFF)
                    step()
                    a ^= lookup(2, (s[(j + 2) & 3] >> 8) & 0xFF)
                    step()
                    a ^= lookup(3, s[(j + 3) & 3] & 0xFF)
                    t[j] = a ^ rk[4 * r + j]
                for j in range(4):
                    s[j] = t[j]
            for j in range(4):
                w = rk[40 + j]
                for k in range(4):
                    step()
                    v = lookup(4, (s[(j + k) & 3] >> (24 - 8 * k)) & 0xFF)
                    out[4 * j + k] = v ^ ((w >> (24 - 8 * k)) & 0xFF)
        else:
            for i in range(16):
                cells[i] = pt[i] ^ ((rk[i // 4] >> (24 - 8 * (i % 4))) & 0xFF)
            for r in range(1, 11):
                for i in range(16):
                    step()
                    if mode == LOGICAL:
                        cells[i] = tables[4, cells[i]]
                    else:
                        cells[i] = lookup(4, cells[i])
                for c in range(4):
                    for rr in range(4):
                        tmp[4 * c + rr] = cells[4 * ((c + rr) % 4) + rr]
                if r != 10:
                    for c in range(0, 16, 4):
                        a0 = tmp[c]
                        a1 = tmp[c + 1]
                        a2 = tmp[c + 2]
                        a3 = tmp[c + 3]
                        x = a0 ^ a1 ^ a2 ^ a3
                        cells[c] = a0 ^ x ^ xtime(a0 ^ a1)
                        cells[c + 1] = a1 ^ x ^ xtime(a1 ^ a2)
                        cells[c + 2] = a2 ^ x ^ xtime(a2 ^ a3)
                        cells[c + 3] = a3 ^ x ^ xtime(a3 ^ a0)
                else:
                    for i in range(16):
                        cells[i] = tmp[i]
                for i in range(16):
                    cells[i] ^= (rk[4 * r + i // 4] >> (24 - 8 * (i % 4))) & 0xFF
            for i in range(16):
                out[i] = cells[i]

        st[D_INCHUNK] += 1
        if st[D_INCHUNK] == st[D_CHUNK]:
            if st[D_DELAYS] != 0:
                u = 0.5 + rng.random()
                x = np.int64(np.rint(alpha * (elapsed() - st[D_CHUNK_START]) * u))
                counters[DELAY] += x
                if flushing:
                    st[D_TIMER] -= x
            st[D_INCHUNK] = 0
            st[D_CHUNK_START] = elapsed()
        out_cycles[b] = elapsed() - start
        out_flushes[b] = st[D_BLOCK_FLUSHES]
    return elapsed()
