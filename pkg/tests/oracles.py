"""Independent reference implementations used only by the test suite.

Everything here is written from first principles (textbook elliptic-curve
arithmetic, the X9.63 hash-counter construction, FIPS-197 AES and the
SP 800-38D GCM composition) so that it shares no code path with the package
under test.  Slow and unhardened by design.
"""

from __future__ import annotations

import hashlib

# --- NIST P-224, written out independently -----------------------------------

P = 2**224 - 2**96 + 1
A = P - 3
B = 0xB4050A850C04B3ABF54132565044B0B7D7BFD8BA270B39432355FFB4
GX = 0xB70E0CBD6BB4BF7F321390B94A03C1D356C21122343280D6115C1D21
GY = 0xBD376388B5F723FB4C22DFE6CD4375A05A07476444D5819985007E34
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFF16A2E0B8F03E13DD29455C5C2A3D

INFINITY = (0, 1, 0)  # Jacobian point at infinity


def on_curve(x: int, y: int) -> bool:
    return (y * y - (x * x * x + A * x + B)) % P == 0


def jacobian_double(point):
    x, y, z = point
    if z == 0 or y == 0:
        return INFINITY
    s = (4 * x * y * y) % P
    z2 = (z * z) % P
    m = (3 * x * x + A * z2 * z2) % P
    x3 = (m * m - 2 * s) % P
    y3 = (m * (s - x3) - 8 * pow(y, 4, P)) % P
    z3 = (2 * y * z) % P
    return (x3, y3, z3)


def jacobian_add(p1, p2):
    if p1[2] == 0:
        return p2
    if p2[2] == 0:
        return p1
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    z1z1 = (z1 * z1) % P
    z2z2 = (z2 * z2) % P
    u1 = (x1 * z2z2) % P
    u2 = (x2 * z1z1) % P
    s1 = (y1 * z2 * z2z2) % P
    s2 = (y2 * z1 * z1z1) % P
    if u1 == u2:
        if s1 != s2:
            return INFINITY
        return jacobian_double(p1)
    h = (u2 - u1) % P
    r = (s2 - s1) % P
    hh = (h * h) % P
    hhh = (h * hh) % P
    v = (u1 * hh) % P
    x3 = (r * r - hhh - 2 * v) % P
    y3 = (r * (v - x3) - s1 * hhh) % P
    z3 = (z1 * z2 * h) % P
    return (x3, y3, z3)


def to_affine(point):
    x, y, z = point
    if z == 0:
        return None
    zinv = pow(z, P - 2, P)
    zinv2 = (zinv * zinv) % P
    return ((x * zinv2) % P, (y * zinv2 * zinv) % P)


def scalar_mult(k: int, point_affine) -> tuple[int, int] | None:
    """Plain double-and-add on an arbitrary affine point."""
    k %= N
    result = INFINITY
    addend = (point_affine[0], point_affine[1], 1)
    while k:
        if k & 1:
            result = jacobian_add(result, addend)
        addend = jacobian_double(addend)
        k >>= 1
    return to_affine(result)


# Fixed-base table for fast multiples of G: _TABLE[j][v] = (v << 4j) * G.
_TABLE: list[list[tuple[int, int]]] | None = None


def _build_table():
    global _TABLE
    table = []
    base = (GX, GY, 1)
    for _ in range(56):  # 224 bits / 4-bit digits
        row_jac = [None, base]
        for v in range(2, 16):
            row_jac.append(jacobian_add(row_jac[-1], base))
        table.append([None] + [to_affine(p) for p in row_jac[1:]])
        base = jacobian_double(jacobian_double(jacobian_double(jacobian_double(base))))
    _TABLE = table


def base_mult(k: int) -> tuple[int, int] | None:
    """k * G using the fixed-base window table."""
    if _TABLE is None:
        _build_table()
    k %= N
    if k == 0:
        return None
    result = INFINITY
    j = 0
    while k:
        digit = k & 0xF
        if digit:
            px, py = _TABLE[j][digit]
            result = jacobian_add(result, (px, py, 1))
        k >>= 4
        j += 1
    return to_affine(result)


def sqrt_mod_p(value: int) -> int | None:
    """Tonelli-Shanks square root modulo the P-224 field prime."""
    value %= P
    if value == 0:
        return 0
    if pow(value, (P - 1) // 2, P) != 1:
        return None
    # P - 1 = 2^96 * m with m odd
    m = P - 1
    s = 0
    while m % 2 == 0:
        m //= 2
        s += 1
    # find a quadratic non-residue
    z = 2
    while pow(z, (P - 1) // 2, P) != P - 1:
        z += 1
    c = pow(z, m, P)
    t = pow(value, m, P)
    result = pow(value, (m + 1) // 2, P)
    while t != 1:
        t2 = t
        i = 0
        while t2 != 1:
            t2 = (t2 * t2) % P
            i += 1
        b = pow(c, 1 << (s - i - 1), P)
        result = (result * b) % P
        c = (b * b) % P
        t = (t * c) % P
        s = i
    return result


def lift_x(x: int) -> tuple[int, int]:
    """Some curve point with the given X coordinate."""
    y = sqrt_mod_p((x * x * x + A * x + B) % P)
    if y is None:
        raise ValueError("x is not on the curve")
    return (x, y)


# --- ANSI X9.63 KDF with SHA-256, from the construction ----------------------


def x963_kdf(secret: bytes, shared_info: bytes, length: int) -> bytes:
    out = b""
    counter = 1
    while len(out) < length:
        out += hashlib.sha256(secret + counter.to_bytes(4, "big") + shared_info).digest()
        counter += 1
    return out[:length]


# --- rolling key chain straight from the update/diversify equations ----------


def reduce_scalar(raw: bytes) -> int:
    return int.from_bytes(raw, "big") % (N - 1) + 1


def chain_step(sk_prev: bytes) -> bytes:
    return x963_kdf(sk_prev, b"update", 32)


def advertisement_key(d0: int, sk_i: bytes) -> tuple[int, bytes, bytes]:
    """(d_i, x_bytes, key_id) for the window whose symmetric key is sk_i."""
    diversified = x963_kdf(sk_i, b"diversify", 72)
    u = reduce_scalar(diversified[:36])
    v = reduce_scalar(diversified[36:])
    d = (d0 * u + v) % N
    if d == 0:
        raise ValueError("degenerate scalar")
    point = base_mult(d)
    x_bytes = point[0].to_bytes(28, "big")
    return d, x_bytes, hashlib.sha256(x_bytes).digest()


def key_chain(d0: int, sk0: bytes, upto: int):
    """Yield (index, d_i, x_bytes, key_id) for indices 1..upto."""
    sk = sk0
    for index in range(1, upto + 1):
        sk = chain_step(sk)
        d, x_bytes, key_id = advertisement_key(d0, sk)
        yield index, d, x_bytes, key_id


# --- AES-128 from FIPS-197 ----------------------------------------------------


def _build_sbox():
    # multiplicative inverse in GF(2^8) followed by the affine transform
    def gf_mul(a, b):
        out = 0
        for _ in range(8):
            if b & 1:
                out ^= a
            high = a & 0x80
            a = (a << 1) & 0xFF
            if high:
                a ^= 0x1B
            b >>= 1
        return out

    inverse = [0] * 256
    for i in range(1, 256):
        for j in range(1, 256):
            if gf_mul(i, j) == 1:
                inverse[i] = j
                break
    sbox = []
    for i in range(256):
        b = inverse[i]
        s = 0x63
        for shift in range(5):
            rotated = ((b << shift) | (b >> (8 - shift))) & 0xFF
            s ^= rotated
        sbox.append(s)
    return sbox


_SBOX = _build_sbox()
assert _SBOX[0x00] == 0x63 and _SBOX[0x53] == 0xED, "S-box generation is broken"

_RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def _xtime(a):
    a <<= 1
    return (a ^ 0x1B) & 0xFF if a & 0x100 else a


def _expand_key(key: bytes) -> list[list[int]]:
    words = [list(key[4 * i : 4 * i + 4]) for i in range(4)]
    for i in range(4, 44):
        temp = list(words[i - 1])
        if i % 4 == 0:
            temp = temp[1:] + temp[:1]
            temp = [_SBOX[b] for b in temp]
            temp[0] ^= _RCON[i // 4 - 1]
        words.append([a ^ b for a, b in zip(words[i - 4], temp)])
    return [sum(words[4 * r : 4 * r + 4], []) for r in range(11)]


def aes128_encrypt_block(key: bytes, block: bytes) -> bytes:
    round_keys = _expand_key(key)
    state = [block[r + 4 * c] for c in range(4) for r in range(4)]  # column-major
    state = [s ^ k for s, k in zip(state, _col_major(round_keys[0]))]
    for rnd in range(1, 11):
        state = [_SBOX[s] for s in state]
        # ShiftRows on column-major layout: row r rotates left by r
        shifted = list(state)
        for r in range(1, 4):
            row = [state[r + 4 * c] for c in range(4)]
            row = row[r:] + row[:r]
            for c in range(4):
                shifted[r + 4 * c] = row[c]
        state = shifted
        if rnd != 10:
            mixed = []
            for c in range(4):
                col = state[4 * c : 4 * c + 4]
                mixed += [
                    _xtime(col[0]) ^ _xtime(col[1]) ^ col[1] ^ col[2] ^ col[3],
                    col[0] ^ _xtime(col[1]) ^ _xtime(col[2]) ^ col[2] ^ col[3],
                    col[0] ^ col[1] ^ _xtime(col[2]) ^ _xtime(col[3]) ^ col[3],
                    _xtime(col[0]) ^ col[0] ^ col[1] ^ col[2] ^ _xtime(col[3]),
                ]
            state = mixed
        state = [s ^ k for s, k in zip(state, _col_major(round_keys[rnd]))]
    return bytes(state[r + 4 * c] for c in range(4) for r in range(4))


def _col_major(round_key: list[int]) -> list[int]:
    return [round_key[r + 4 * c] for c in range(4) for r in range(4)]


# FIPS-197 appendix C.1 vector guards the whole block cipher.
assert aes128_encrypt_block(
    bytes.fromhex("000102030405060708090a0b0c0d0e0f"),
    bytes.fromhex("00112233445566778899aabbccddeeff"),
) == bytes.fromhex("69c4e0d86a7b0430d8cdb78070b4c55a"), "AES-128 oracle is broken"


# --- GCM from SP 800-38D -------------------------------------------------------

_R = 0xE1 << 120


def _gf128_mult(x: int, y: int) -> int:
    z = 0
    v = x
    for i in range(127, -1, -1):
        if (y >> i) & 1:
            z ^= v
        if v & 1:
            v = (v >> 1) ^ _R
        else:
            v >>= 1
    return z


def _ghash(h: int, aad: bytes, ciphertext: bytes) -> int:
    def blocks(data):
        for i in range(0, len(data), 16):
            yield data[i : i + 16].ljust(16, b"\x00")

    y = 0
    for block in blocks(aad):
        y = _gf128_mult(y ^ int.from_bytes(block, "big"), h)
    for block in blocks(ciphertext):
        y = _gf128_mult(y ^ int.from_bytes(block, "big"), h)
    lengths = (len(aad) * 8).to_bytes(8, "big") + (len(ciphertext) * 8).to_bytes(8, "big")
    return _gf128_mult(y ^ int.from_bytes(lengths, "big"), h)


def _inc32(block: int) -> int:
    prefix = block >> 32 << 32
    return prefix | ((block + 1) & 0xFFFFFFFF)


def aes_gcm_encrypt(key: bytes, iv: bytes, plaintext: bytes, aad: bytes = b"") -> tuple[bytes, bytes]:
    """(ciphertext, 16-byte tag); IV of any length via the GHASH path."""
    h = int.from_bytes(aes128_encrypt_block(key, b"\x00" * 16), "big")
    if len(iv) == 12:
        j0 = int.from_bytes(iv + b"\x00\x00\x00\x01", "big")
    else:
        padded = iv + b"\x00" * ((16 - len(iv) % 16) % 16)
        y = 0
        for i in range(0, len(padded), 16):
            y = _gf128_mult(y ^ int.from_bytes(padded[i : i + 16], "big"), h)
        j0 = _gf128_mult(y ^ (len(iv) * 8), h)
    counter = j0
    ciphertext = b""
    for i in range(0, len(plaintext), 16):
        counter = _inc32(counter)
        keystream = aes128_encrypt_block(key, counter.to_bytes(16, "big"))
        chunk = plaintext[i : i + 16]
        ciphertext += bytes(p ^ k for p, k in zip(chunk, keystream))
    s = _ghash(h, aad, ciphertext)
    tag = int.from_bytes(aes128_encrypt_block(key, j0.to_bytes(16, "big")), "big") ^ s
    return ciphertext, tag.to_bytes(16, "big")


# McGrew-Viega test case 2 guards GHASH + CTR composition.
_c, _t = aes_gcm_encrypt(b"\x00" * 16, b"\x00" * 12, b"\x00" * 16)
assert _c == bytes.fromhex("0388dace60b6a392f328c2b971b2fe78"), "GCM ciphertext oracle broken"
assert _t == bytes.fromhex("ab6e47d42cec13bdf53a67b21257bddf"), "GCM tag oracle broken"


# --- ECIES report assembly, step by step --------------------------------------


def draw_scalar(entropy) -> int:
    while True:
        candidate = int.from_bytes(entropy(28), "big")
        if 1 <= candidate < N:
            return candidate


def ecies_encrypt_report(
    advertised_x: bytes,
    plaintext: bytes,
    timestamp: int,
    entropy,
    confidence: int = 0,
) -> bytes:
    """Full 88-byte report using only the oracle primitives."""
    adv_point = lift_x(int.from_bytes(advertised_x, "big"))
    d_eph = draw_scalar(entropy)
    eph_point = base_mult(d_eph)
    shared_point = scalar_mult(d_eph, adv_point)
    shared_secret = shared_point[0].to_bytes(28, "big")
    derived = x963_kdf(shared_secret, advertised_x, 32)
    ciphertext, tag = aes_gcm_encrypt(derived[:16], derived[16:], plaintext)
    p_eph = b"\x04" + eph_point[0].to_bytes(28, "big") + eph_point[1].to_bytes(28, "big")
    return timestamp.to_bytes(4, "big") + bytes([confidence]) + p_eph + ciphertext + tag


def encode_location_oracle(lat: float, lon: float, accuracy: int, status: int) -> bytes:
    lat_fp = round(lat * 10**7)
    lon_fp = round(lon * 10**7)
    return (
        lat_fp.to_bytes(4, "big", signed=True)
        + lon_fp.to_bytes(4, "big", signed=True)
        + bytes([accuracy, status])
    )
