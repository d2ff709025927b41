"""AES-128 implementation with final-round activity profiling.

A from-scratch implementation (FIPS-197 conventions, flat 16-byte state,
column-major index r + 4c) so the last-round internals are observable:
the final round is SubBytes -> ShiftRows -> AddRoundKey with no
MixColumns, hence ciphertext byte = ShiftRows output byte XOR round-10
key byte.  The attack consumes exactly that structure.
"""

from __future__ import annotations

from dataclasses import dataclass

from .power import ActivityProfile, ActivitySample

SBOX = bytes((
    0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76,
    0xCA, 0x82, 0xC9, 0x7D, 0xFA, 0x59, 0x47, 0xF0, 0xAD, 0xD4, 0xA2, 0xAF, 0x9C, 0xA4, 0x72, 0xC0,
    0xB7, 0xFD, 0x93, 0x26, 0x36, 0x3F, 0xF7, 0xCC, 0x34, 0xA5, 0xE5, 0xF1, 0x71, 0xD8, 0x31, 0x15,
    0x04, 0xC7, 0x23, 0xC3, 0x18, 0x96, 0x05, 0x9A, 0x07, 0x12, 0x80, 0xE2, 0xEB, 0x27, 0xB2, 0x75,
    0x09, 0x83, 0x2C, 0x1A, 0x1B, 0x6E, 0x5A, 0xA0, 0x52, 0x3B, 0xD6, 0xB3, 0x29, 0xE3, 0x2F, 0x84,
    0x53, 0xD1, 0x00, 0xED, 0x20, 0xFC, 0xB1, 0x5B, 0x6A, 0xCB, 0xBE, 0x39, 0x4A, 0x4C, 0x58, 0xCF,
    0xD0, 0xEF, 0xAA, 0xFB, 0x43, 0x4D, 0x33, 0x85, 0x45, 0xF9, 0x02, 0x7F, 0x50, 0x3C, 0x9F, 0xA8,
    0x51, 0xA3, 0x40, 0x8F, 0x92, 0x9D, 0x38, 0xF5, 0xBC, 0xB6, 0xDA, 0x21, 0x10, 0xFF, 0xF3, 0xD2,
    0xCD, 0x0C, 0x13, 0xEC, 0x5F, 0x97, 0x44, 0x17, 0xC4, 0xA7, 0x7E, 0x3D, 0x64, 0x5D, 0x19, 0x73,
    0x60, 0x81, 0x4F, 0xDC, 0x22, 0x2A, 0x90, 0x88, 0x46, 0xEE, 0xB8, 0x14, 0xDE, 0x5E, 0x0B, 0xDB,
    0xE0, 0x32, 0x3A, 0x0A, 0x49, 0x06, 0x24, 0x5C, 0xC2, 0xD3, 0xAC, 0x62, 0x91, 0x95, 0xE4, 0x79,
    0xE7, 0xC8, 0x37, 0x6D, 0x8D, 0xD5, 0x4E, 0xA9, 0x6C, 0x56, 0xF4, 0xEA, 0x65, 0x7A, 0xAE, 0x08,
    0xBA, 0x78, 0x25, 0x2E, 0x1C, 0xA6, 0xB4, 0xC6, 0xE8, 0xDD, 0x74, 0x1F, 0x4B, 0xBD, 0x8B, 0x8A,
    0x70, 0x3E, 0xB5, 0x66, 0x48, 0x03, 0xF6, 0x0E, 0x61, 0x35, 0x57, 0xB9, 0x86, 0xC1, 0x1D, 0x9E,
    0xE1, 0xF8, 0x98, 0x11, 0x69, 0xD9, 0x8E, 0x94, 0x9B, 0x1E, 0x87, 0xE9, 0xCE, 0x55, 0x28, 0xDF,
    0x8C, 0xA1, 0x89, 0x0D, 0xBF, 0xE6, 0x42, 0x68, 0x41, 0x99, 0x2D, 0x0F, 0xB0, 0x54, 0xBB, 0x16,
))

_inv = bytearray(256)
for _i, _v in enumerate(SBOX):
    _inv[_v] = _i
INV_SBOX = bytes(_inv)
del _inv, _i, _v

RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)

# GF(2^8) multiplication tables for MixColumns and its inverse


def _xtime(a: int) -> int:
    a <<= 1
    if a & 0x100:
        a ^= 0x11B
    return a & 0xFF


def _gmul(a: int, b: int) -> int:
    p = 0
    while b:
        if b & 1:
            p ^= a
        a = _xtime(a)
        b >>= 1
    return p


_MUL = {n: bytes(_gmul(n, x) for x in range(256)) for n in (2, 3, 9, 11, 13, 14)}

def _build_shift_rows() -> tuple[int, ...]:
    # row r rotates left by r on the column-major state: out[r+4c] = in[r+4((c+r)%4)]
    table = [0] * 16
    for c in range(4):
        for r in range(4):
            table[r + 4 * c] = r + 4 * ((c + r) % 4)
    return tuple(table)


SHIFT_ROWS_SRC = _build_shift_rows()
INV_SHIFT_ROWS_SRC = tuple(SHIFT_ROWS_SRC.index(i) for i in range(16))


def _check16(name: str, value: bytes) -> bytes:
    b = bytes(value)
    if len(b) != 16:
        raise ValueError(f"{name} must be exactly 16 bytes")
    return b


@dataclass(frozen=True)
class RoundKeys:
    """The 11 expanded round keys; round key 0 is the master key."""

    keys: tuple[bytes, ...]

    def __post_init__(self):
        if len(self.keys) != 11 or any(len(k) != 16 for k in self.keys):
            raise ValueError("need 11 round keys of 16 bytes")

    def __getitem__(self, i: int) -> bytes:
        return self.keys[i]

    @property
    def round10(self) -> bytes:
        return self.keys[10]


def _sub_word(w: bytes) -> bytes:
    return bytes(SBOX[b] for b in w)


def _rot_word(w: bytes) -> bytes:
    return w[1:] + w[:1]


def expand_key(key: bytes) -> RoundKeys:
    """FIPS-197 key schedule for AES-128."""
    key = _check16("key", key)
    words = [key[4 * i : 4 * i + 4] for i in range(4)]
    for i in range(4, 44):
        temp = words[i - 1]
        if i % 4 == 0:
            temp = _sub_word(_rot_word(temp))
            temp = bytes((temp[0] ^ RCON[i // 4 - 1],)) + temp[1:]
        words.append(bytes(a ^ b for a, b in zip(words[i - 4], temp)))
    keys = tuple(b"".join(words[4 * r : 4 * r + 4]) for r in range(11))
    return RoundKeys(keys)


def invert_key_schedule(round10_key: bytes) -> bytes:
    """Run the key schedule backward from the round-10 key to the master key."""
    round10_key = _check16("round10_key", round10_key)
    words: list[bytes | None] = [None] * 44
    for i in range(4):
        words[40 + i] = round10_key[4 * i : 4 * i + 4]
    for i in range(43, 3, -1):
        temp = words[i - 1]
        if i % 4 == 0:
            temp = _sub_word(_rot_word(temp))
            temp = bytes((temp[0] ^ RCON[i // 4 - 1],)) + temp[1:]
        words[i - 4] = bytes(a ^ b for a, b in zip(words[i], temp))
    return b"".join(words[0:4])


def _add_round_key(state: bytearray, rk: bytes) -> None:
    for i in range(16):
        state[i] ^= rk[i]


def _sub_bytes(state: bytearray, box: bytes) -> None:
    for i in range(16):
        state[i] = box[state[i]]


def _shift_rows(state: bytearray) -> None:
    state[:] = bytes(state[SHIFT_ROWS_SRC[i]] for i in range(16))


def _inv_shift_rows(state: bytearray) -> None:
    state[:] = bytes(state[INV_SHIFT_ROWS_SRC[i]] for i in range(16))


def _mix_columns(state: bytearray) -> None:
    m2, m3 = _MUL[2], _MUL[3]
    for c in range(0, 16, 4):
        a0, a1, a2, a3 = state[c : c + 4]
        state[c + 0] = m2[a0] ^ m3[a1] ^ a2 ^ a3
        state[c + 1] = a0 ^ m2[a1] ^ m3[a2] ^ a3
        state[c + 2] = a0 ^ a1 ^ m2[a2] ^ m3[a3]
        state[c + 3] = m3[a0] ^ a1 ^ a2 ^ m2[a3]


def _inv_mix_columns(state: bytearray) -> None:
    m9, m11, m13, m14 = _MUL[9], _MUL[11], _MUL[13], _MUL[14]
    for c in range(0, 16, 4):
        a0, a1, a2, a3 = state[c : c + 4]
        state[c + 0] = m14[a0] ^ m11[a1] ^ m13[a2] ^ m9[a3]
        state[c + 1] = m9[a0] ^ m14[a1] ^ m11[a2] ^ m13[a3]
        state[c + 2] = m13[a0] ^ m9[a1] ^ m14[a2] ^ m11[a3]
        state[c + 3] = m11[a0] ^ m13[a1] ^ m9[a2] ^ m14[a3]


def _encrypt_state(block: bytes, rk: RoundKeys) -> tuple[bytes, bytes, bytes]:
    """Encrypt one block, returning (subbytes10, shiftrows10, ciphertext)."""
    state = bytearray(block)
    _add_round_key(state, rk[0])
    for rnd in range(1, 10):
        _sub_bytes(state, SBOX)
        _shift_rows(state)
        _mix_columns(state)
        _add_round_key(state, rk[rnd])
    _sub_bytes(state, SBOX)
    subbytes_out = bytes(state)
    _shift_rows(state)
    shiftrows_out = bytes(state)
    _add_round_key(state, rk[10])
    return subbytes_out, shiftrows_out, bytes(state)


def encrypt(block: bytes, key: bytes) -> bytes:
    block = _check16("block", block)
    return _encrypt_state(block, expand_key(key))[2]


def decrypt(block: bytes, key: bytes) -> bytes:
    block = _check16("block", block)
    rk = expand_key(key)
    state = bytearray(block)
    _add_round_key(state, rk[10])
    _inv_shift_rows(state)
    _sub_bytes(state, INV_SBOX)
    for rnd in range(9, 0, -1):
        _add_round_key(state, rk[rnd])
        _inv_mix_columns(state)
        _inv_shift_rows(state)
        _sub_bytes(state, INV_SBOX)
    _add_round_key(state, rk[0])
    return bytes(state)


@dataclass(frozen=True)
class FinalRoundProfile:
    """Last-round internals of one encryption plus its activity sample."""

    subbytes_out: bytes
    shiftrows_out: bytes
    ciphertext: bytes
    activity: ActivityProfile


def final_round_profile(key: bytes, pt: bytes) -> FinalRoundProfile:
    """Encrypt ``pt`` and record the round-10 SubBytes/ShiftRows outputs.

    The activity sample counts the Hamming weight of both the SubBytes and
    the ShiftRows outputs (the same bytes appear twice, amplifying their
    weight); there is no MixColumns in the last round so no toggles are
    attributed here.
    """
    key = _check16("key", key)
    pt = _check16("pt", pt)
    sb, sr, ct = _encrypt_state(pt, expand_key(key))
    hwt = sum(b.bit_count() for b in sb) + sum(b.bit_count() for b in sr)
    activity = ActivityProfile.from_samples([ActivitySample(hwt, 0)])
    return FinalRoundProfile(sb, sr, ct, activity)


def generate_plaintext(key: bytes, target_byte: int, guess: int, rng) -> bytes:
    """Chosen plaintext forcing ciphertext[target_byte] == guess.

    Draws a random 16-byte ciphertext, pins the target byte to the guess,
    and decrypts under ``key``.  When the guess equals the round-10 key
    byte at that position, the last-round ShiftRows output byte becomes
    0x00.
    """
    key = _check16("key", key)
    if not (0 <= target_byte <= 15):
        raise ValueError("target_byte must be in 0..=15")
    if not (0 <= guess <= 255):
        raise ValueError("guess must be a byte")
    c = bytearray(int(x) for x in rng.integers(0, 256, size=16))
    c[target_byte] = guess
    return decrypt(bytes(c), key)
