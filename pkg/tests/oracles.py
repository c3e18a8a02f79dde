"""Independent reference implementations used only by the test-suite.

Nothing here imports dcflab.  The code is deliberately naive (polynomial
long division, exponentiation for inverses, list-of-lists state) so it
shares no structure with the table-driven cipher under test.
"""

POLY = 0x11B


def clmul(a, b):
    """Carry-less product of two polynomials over GF(2), no reduction."""
    out = 0
    bit = 0
    while b >> bit:
        if (b >> bit) & 1:
            out ^= a << bit
        bit += 1
    return out


def poly_mod(p, m=POLY):
    deg_m = m.bit_length() - 1
    while p and p.bit_length() - 1 >= deg_m:
        p ^= m << (p.bit_length() - 1 - deg_m)
    return p


def field_mul(a, b):
    return poly_mod(clmul(a, b))


def field_pow(a, e):
    result = 1
    for _ in range(e):
        result = field_mul(result, a)
    return result


def field_inv(a):
    # a^254 = a^-1 in GF(2^8); maps 0 to 0
    return field_pow(a, 254) if a else 0


def affine(b):
    bits = [(b >> i) & 1 for i in range(8)]
    c = [(0x63 >> i) & 1 for i in range(8)]
    out = 0
    for i in range(8):
        v = bits[i] ^ bits[(i + 4) % 8] ^ bits[(i + 5) % 8] ^ bits[(i + 6) % 8] ^ bits[(i + 7) % 8] ^ c[i]
        out |= v << i
    return out


SBOX = [affine(field_inv(x)) for x in range(256)]
INV_SBOX = [0] * 256
for _x, _y in enumerate(SBOX):
    INV_SBOX[_y] = _x


def expand_key(key):
    assert len(key) == 16
    words = [list(key[4 * i:4 * i + 4]) for i in range(4)]
    rcon = 1
    for i in range(4, 44):
        temp = list(words[i - 1])
        if i % 4 == 0:
            temp = temp[1:] + temp[:1]
            temp = [SBOX[b] for b in temp]
            temp[0] ^= rcon
            rcon = field_mul(rcon, 2)
        words.append([words[i - 4][j] ^ temp[j] for j in range(4)])
    return words


def mix_column(col):
    m = [[2, 3, 1, 1], [1, 2, 3, 1], [1, 1, 2, 3], [3, 1, 1, 2]]
    out = []
    for r in range(4):
        acc = 0
        for c in range(4):
            acc ^= field_mul(m[r][c], col[c])
        out.append(acc)
    return out


def encrypt(key, block):
    w = expand_key(key)
    # state[r][c]
    st = [[block[r + 4 * c] for c in range(4)] for r in range(4)]

    def add(rnd):
        for c in range(4):
            for r in range(4):
                st[r][c] ^= w[4 * rnd + c][r]

    add(0)
    for rnd in range(1, 11):
        for r in range(4):
            for c in range(4):
                st[r][c] = SBOX[st[r][c]]
        for r in range(4):
            st[r] = st[r][r:] + st[r][:r]
        if rnd != 10:
            for c in range(4):
                col = mix_column([st[r][c] for r in range(4)])
                for r in range(4):
                    st[r][c] = col[r]
        add(rnd)
    return bytes(st[r][c] for c in range(4) for r in range(4))


class ListLRU:
    """Brute-force LRU cache: one Python list per set, most recent last."""

    def __init__(self, line_size, num_sets, ways, hit, miss):
        self.line_size = line_size
        self.num_sets = num_sets
        self.ways = ways
        self.hit = hit
        self.miss = miss
        self.sets = [[] for _ in range(num_sets)]
        self.hits = 0
        self.misses = 0
        self.cycles = 0

    def touch_line(self, line):
        s = self.sets[line % self.num_sets]
        if line in s:
            s.remove(line)
            s.append(line)
            self.hits += 1
            self.cycles += self.hit
            return True
        if len(s) == self.ways:
            s.pop(0)
        s.append(line)
        self.misses += 1
        self.cycles += self.miss
        return False

    def access(self, addr, width=1):
        first = addr // self.line_size
        last = (addr + width - 1) // self.line_size
        return [self.touch_line(line) for line in range(first, last + 1)]

    def flush(self):
        self.sets = [[] for _ in range(self.num_sets)]
