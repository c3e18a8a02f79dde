"""AES-128 with swappable table-access strategies.

Every table read made by the cipher is announced to an optional observer as
``observer(base_address, index, width)`` *before* the value is used, which
lets a cache model charge cycles for it.  An optional ``on_step`` callback
fires once per byte-substitution step (160 per block in every mode) so that a
timing model can also charge the non-memory work of each step.

Modes
-----
TTABLE     four 1 KB T-tables for rounds 1-9, S-box for the final round.
SBOX       byte-wise S-box lookups plus arithmetic ShiftRows/MixColumns.
FULL_SCAN  the T-table dataflow, but every lookup reads all 256 entries.
LOGICAL    S-box evaluated without touching any table memory.

All four produce identical ciphertext.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IndexOutOfRange, InvalidKeyLength

Observer = Callable[[int, int, int], None]
StepHook = Callable[[], None]

BLOCK_SIZE = 16
ROUNDS = 10
DEFAULT_TABLE_BASE = 0x10000


class AccessMode(enum.Enum):
    TTABLE = "ttable"
    SBOX = "sbox"
    FULL_SCAN = "full_scan"
    LOGICAL = "logical"

    @classmethod
    def parse(cls, value: "AccessMode | str") -> "AccessMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            return cls[str(value).upper()]


# ---------------------------------------------------------------------------
# GF(2^8) arithmetic

def xtime(a: int) -> int:
    a <<= 1
    if a & 0x100:
        a ^= 0x11B
    return a


def gf_mul(a: int, b: int) -> int:
    """Multiply in GF(2^8) mod x^8+x^4+x^3+x+1 using a chain of xtime shifts."""
    result = 0
    while b:
        if b & 1:
            result ^= a
        a = xtime(a)
        b >>= 1
    return result


def _exhaustive_inverses() -> tuple:
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if gf_mul(a, b) == 1:
                inv[a] = b
                break
    return tuple(inv)


_GF_INV = _exhaustive_inverses()


def gf_inv(a: int) -> int:
    """Multiplicative inverse; 0 maps to 0 as in the S-box construction."""
    return _GF_INV[a & 0xFF]


def _rotl8(x: int, n: int) -> int:
    return ((x << n) | (x >> (8 - n))) & 0xFF


def affine(b: int) -> int:
    return b ^ _rotl8(b, 1) ^ _rotl8(b, 2) ^ _rotl8(b, 3) ^ _rotl8(b, 4) ^ 0x63


def inv_affine(b: int) -> int:
    return _rotl8(b, 1) ^ _rotl8(b, 3) ^ _rotl8(b, 6) ^ 0x05


def logical_sbox(x: int) -> int:
    return affine(_GF_INV[x])


def logical_inv_sbox(y: int) -> int:
    return _GF_INV[inv_affine(y)]


# ---------------------------------------------------------------------------
# Lookup tables

@dataclass(frozen=True)
class Table:
    name: str
    base: int
    width: int
    entries: tuple
    array: np.ndarray

    def __len__(self):
        return len(self.entries)

    def address(self, index: int) -> int:
        return self.base + index * self.width

    @property
    def size(self) -> int:
        return len(self.entries) * self.width


@dataclass(frozen=True)
class LookupTables:
    sbox: Table
    inv_sbox: Table
    t_tables: tuple  # (T0, T1, T2, T3)

    @property
    def all(self):
        return (*self.t_tables, self.sbox, self.inv_sbox)


def _ror32(w: int, n: int) -> int:
    return ((w >> n) | (w << (32 - n))) & 0xFFFFFFFF


def _table(name, base, width, values):
    dtype = np.uint32 if width == 4 else np.uint8
    return Table(name, base, width, tuple(values), np.array(values, dtype=dtype))


def build_tables(base: int = DEFAULT_TABLE_BASE) -> LookupTables:
    """Materialise S-boxes and T-tables and lay them out back to back.

    Order in memory: T0, T1, T2, T3 (1 KB each, 4-byte entries), then the
    S-box and inverse S-box (256 B each, 1-byte entries).
    """
    sbox = [logical_sbox(x) for x in range(256)]
    inv = [0] * 256
    for x, y in enumerate(sbox):
        inv[y] = x
    t0 = [
        (gf_mul(s, 2) << 24) | (s << 16) | (s << 8) | gf_mul(s, 3)
        for s in sbox
    ]
    ts = []
    addr = base
    for k in range(4):
        ts.append(_table(f"T{k}", addr, 4, [_ror32(w, 8 * k) for w in t0]))
        addr += 1024
    sb = _table("sbox", addr, 1, sbox)
    isb = _table("inv_sbox", addr + 256, 1, inv)
    return LookupTables(sbox=sb, inv_sbox=isb, t_tables=tuple(ts))


DEFAULT_TABLES = build_tables()
SBOX = DEFAULT_TABLES.sbox.entries
INV_SBOX = DEFAULT_TABLES.inv_sbox.entries

_IOTA = np.arange(256)


def full_scan_lookup(table: Table, index: int, observer: Optional[Observer] = None) -> int:
    """Read every entry of ``table`` in ascending order and return ``table[index]``.

    The reported address trace is the same for every index.
    """
    if not 0 <= index < len(table.entries):
        raise IndexOutOfRange(f"index {index} outside 0..{len(table.entries) - 1}")
    if observer is not None:
        base, width = table.base, table.width
        for i in range(len(table.entries)):
            observer(base, i, width)
    return int(np.where(_IOTA == index, table.array, 0).sum())


# ---------------------------------------------------------------------------
# State and round transforms

class State:
    """4x4 AES state.  Byte j of a block sits at row j % 4, column j // 4."""

    __slots__ = ("cells",)

    def __init__(self, cells: Sequence[int]):
        if len(cells) != 16:
            raise ValueError(f"state needs 16 bytes, got {len(cells)}")
        self.cells = [c & 0xFF for c in cells]

    @classmethod
    def from_block(cls, block: bytes) -> "State":
        return cls(list(block))

    def to_block(self) -> bytes:
        return bytes(self.cells)

    def __getitem__(self, rc):
        r, c = rc
        return self.cells[4 * c + r]

    def row(self, r: int) -> list:
        return [self.cells[4 * c + r] for c in range(4)]

    def column(self, c: int) -> list:
        return self.cells[4 * c:4 * c + 4]

    def __eq__(self, other):
        return isinstance(other, State) and self.cells == other.cells

    def __repr__(self):
        return f"State({self.to_block().hex()})"


def sub_bytes(s: State) -> State:
    return State([SBOX[b] for b in s.cells])


def inv_sub_bytes(s: State) -> State:
    return State([INV_SBOX[b] for b in s.cells])


def _shift(cells, direction):
    out = [0] * 16
    for c in range(4):
        for r in range(4):
            out[4 * c + r] = cells[4 * ((c + direction * r) % 4) + r]
    return out


def shift_rows(s: State) -> State:
    return State(_shift(s.cells, 1))


def inv_shift_rows(s: State) -> State:
    return State(_shift(s.cells, -1))


def _mix_forward(cells):
    out = []
    for c in range(0, 16, 4):
        a0, a1, a2, a3 = cells[c:c + 4]
        t = a0 ^ a1 ^ a2 ^ a3
        out += [a0 ^ t ^ xtime(a0 ^ a1), a1 ^ t ^ xtime(a1 ^ a2),
                a2 ^ t ^ xtime(a2 ^ a3), a3 ^ t ^ xtime(a3 ^ a0)]
    return out


def _mix_inverse(cells):
    # pre-multiply each column by (04,00,05,00), then apply the forward matrix
    pre = []
    for c in range(0, 16, 4):
        a0, a1, a2, a3 = cells[c:c + 4]
        u = xtime(xtime(a0 ^ a2))
        v = xtime(xtime(a1 ^ a3))
        pre += [a0 ^ u, a1 ^ v, a2 ^ u, a3 ^ v]
    return _mix_forward(pre)


def mix_columns(s: State) -> State:
    return State(_mix_forward(s.cells))


def inv_mix_columns(s: State) -> State:
    return State(_mix_inverse(s.cells))


def _words_to_bytes(words) -> list:
    out = []
    for w in words:
        out += [(w >> 24) & 0xFF, (w >> 16) & 0xFF, (w >> 8) & 0xFF, w & 0xFF]
    return out


def add_round_key(s: State, rk: Sequence[int]) -> State:
    if len(rk) != 4:
        raise ValueError("round key must be 4 words")
    return State([a ^ b for a, b in zip(s.cells, _words_to_bytes(rk))])


# ---------------------------------------------------------------------------
# Key schedule

_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


@dataclass(frozen=True)
class KeySchedule:
    words: tuple
    round_count: int = ROUNDS

    def round_key(self, r: int) -> tuple:
        return self.words[4 * r:4 * r + 4]


def _sub_word(w: int) -> int:
    return (
        (SBOX[w >> 24] << 24) | (SBOX[(w >> 16) & 0xFF] << 16)
        | (SBOX[(w >> 8) & 0xFF] << 8) | SBOX[w & 0xFF]
    )


def key_expand(key: bytes) -> KeySchedule:
    key = bytes(key)
    if len(key) != 16:
        raise InvalidKeyLength(f"AES-128 key must be 16 bytes, got {len(key)}")
    w = [int.from_bytes(key[4 * i:4 * i + 4], "big") for i in range(4)]
    for i in range(4, 44):
        temp = w[i - 1]
        if i % 4 == 0:
            temp = _sub_word(((temp << 8) | (temp >> 24)) & 0xFFFFFFFF) ^ (_RCON[i // 4 - 1] << 24)
        w.append(w[i - 4] ^ temp)
    return KeySchedule(tuple(w))


def _schedule(ks) -> KeySchedule:
    return ks if isinstance(ks, KeySchedule) else key_expand(ks)


# ---------------------------------------------------------------------------
# Block cipher

def _reader(table: Table, mode: AccessMode, observer):
    """Return a function index -> entry implementing ``mode`` for ``table``."""
    if mode is AccessMode.FULL_SCAN:
        return lambda i: full_scan_lookup(table, i, observer)
    entries = table.entries
    if observer is None:
        return entries.__getitem__
    base, width = table.base, table.width

    def read(i):
        observer(base, i, width)
        return entries[i]
    return read


def _check_block(block) -> bytes:
    block = bytes(block)
    if len(block) != BLOCK_SIZE:
        raise ValueError(f"block must be 16 bytes, got {len(block)}")
    return block


def _encrypt_ttable(w, pt, mode, tables, observer, on_step):
    t0, t1, t2, t3 = (_reader(t, mode, observer) for t in tables.t_tables)
    sb = _reader(tables.sbox, mode, observer)
    step = on_step or (lambda: None)
    s = [int.from_bytes(pt[4 * j:4 * j + 4], "big") ^ w[j] for j in range(4)]
    for r in range(1, ROUNDS):
        t = []
        for j in range(4):
            step()
            a = t0(s[j] >> 24)
            step()
            b = t1((s[(j + 1) & 3] >> 16) & 0xFF)
            step()
            c = t2((s[(j + 2) & 3] >> 8) & 0xFF)
            step()
            d = t3(s[(j + 3) & 3] & 0xFF)
            t.append(a ^ b ^ c ^ d ^ w[4 * r + j])
        s = t
    out = bytearray()
    for j in range(4):
        rk = w[40 + j]
        step()
        b0 = sb(s[j] >> 24)
        step()
        b1 = sb((s[(j + 1) & 3] >> 16) & 0xFF)
        step()
        b2 = sb((s[(j + 2) & 3] >> 8) & 0xFF)
        step()
        b3 = sb(s[(j + 3) & 3] & 0xFF)
        out += bytes((b0 ^ (rk >> 24), b1 ^ ((rk >> 16) & 0xFF),
                      b2 ^ ((rk >> 8) & 0xFF), b3 ^ (rk & 0xFF)))
    return bytes(out)


def _encrypt_bytewise(ks, pt, mode, tables, observer, on_step):
    if mode is AccessMode.LOGICAL:
        sub = logical_sbox
    else:
        sub = _reader(tables.sbox, mode, observer)
    st = add_round_key(State.from_block(pt), ks.round_key(0))
    for r in range(1, ROUNDS + 1):
        cells = st.cells
        for i in range(16):
            if on_step is not None:
                on_step()
            cells[i] = sub(cells[i])
        st = shift_rows(st)
        if r != ROUNDS:
            st = mix_columns(st)
        st = add_round_key(st, ks.round_key(r))
    return st.to_block()


def encrypt_block(
    ks,
    pt: bytes,
    mode: AccessMode = AccessMode.TTABLE,
    observer: Optional[Observer] = None,
    on_step: Optional[StepHook] = None,
    tables: LookupTables = DEFAULT_TABLES,
) -> bytes:
    """Encrypt one 16-byte block.  ``ks`` may be a KeySchedule or raw key."""
    ks = _schedule(ks)
    pt = _check_block(pt)
    mode = AccessMode.parse(mode)
    if mode in (AccessMode.TTABLE, AccessMode.FULL_SCAN):
        return _encrypt_ttable(ks.words, pt, mode, tables, observer, on_step)
    return _encrypt_bytewise(ks, pt, mode, tables, observer if mode is AccessMode.SBOX else None, on_step)


def decrypt_block(
    ks,
    ct: bytes,
    mode: AccessMode = AccessMode.TTABLE,
    observer: Optional[Observer] = None,
    on_step: Optional[StepHook] = None,
    tables: LookupTables = DEFAULT_TABLES,
) -> bytes:
    """Inverse cipher.  TTABLE and SBOX both read the inverse S-box by index;
    no inverse T-tables are materialised."""
    ks = _schedule(ks)
    ct = _check_block(ct)
    mode = AccessMode.parse(mode)
    if mode is AccessMode.LOGICAL:
        inv = logical_inv_sbox
    else:
        inv = _reader(tables.inv_sbox, mode, observer)
    st = add_round_key(State.from_block(ct), ks.round_key(ROUNDS))
    for r in range(ROUNDS - 1, -1, -1):
        st = inv_shift_rows(st)
        cells = st.cells
        for i in range(16):
            if on_step is not None:
                on_step()
            cells[i] = inv(cells[i])
        st = add_round_key(st, ks.round_key(r))
        if r:
            st = inv_mix_columns(st)
    return st.to_block()


def encrypt_ecb(key, data: bytes, mode: AccessMode = AccessMode.TTABLE) -> bytes:
    ks = _schedule(key)
    if len(data) % BLOCK_SIZE:
        raise ValueError("ECB input must be a multiple of 16 bytes")
    return b"".join(encrypt_block(ks, data[i:i + 16], mode) for i in range(0, len(data), 16))


def decrypt_ecb(key, data: bytes, mode: AccessMode = AccessMode.TTABLE) -> bytes:
    ks = _schedule(key)
    if len(data) % BLOCK_SIZE:
        raise ValueError("ECB input must be a multiple of 16 bytes")
    return b"".join(decrypt_block(ks, data[i:i + 16], mode) for i in range(0, len(data), 16))
