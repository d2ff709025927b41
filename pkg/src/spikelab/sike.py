"""Behavioral model of a key-encapsulation decapsulation ladder.

The real victim performs a Montgomery three-point ladder whose
intermediates collapse to zero when a crafted ciphertext targets bit t of
the secret key, the guessed bit is correct, and adjacent key bits differ.
The zeros then propagate through every later ladder round.  Only that
Hamming-weight structure matters for the power side channel, so the model
replaces the isogeny arithmetic with it directly: anomalous rounds emit
all-zero intermediate words, normal rounds emit fresh pseudo-random
64-bit words (expected weight 32 per word).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .microbench import REGISTER_COUNT, RegisterSnapshot, word_hwt
from .power import ActivityProfile

WORDS_PER_ROUND = 8


@dataclass(frozen=True)
class SikeKey:
    """Secret key as an ordered bit sequence, index 0 first."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 2:
            raise ValueError("key must have at least 2 bits")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("key bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)

    def to_hex(self) -> str:
        # MSB-first: bit 0 is the most significant bit of the hex string
        if len(self.bits) % 4:
            raise ValueError("hex form requires a multiple of 4 bits")
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return f"{value:0{len(self.bits) // 4}x}"

    @classmethod
    def from_hex(cls, hex_str: str, n_bits: int | None = None) -> "SikeKey":
        value = int(hex_str, 16)
        n = n_bits if n_bits is not None else 4 * len(hex_str.removeprefix("0x"))
        if value >= (1 << n):
            raise ValueError("hex value does not fit in the requested bit length")
        return cls(tuple((value >> (n - 1 - i)) & 1 for i in range(n)))

    @classmethod
    def random(cls, n_bits: int, rng: np.random.Generator, first_bit: int = 0) -> "SikeKey":
        """Random key; bit 0 defaults to 0 (the recovery convention)."""
        bits = [int(b) for b in rng.integers(0, 2, size=n_bits)]
        bits[0] = first_bit
        return cls(tuple(bits))


@dataclass(frozen=True)
class CraftedCiphertext:
    """Probe ciphertext targeting one key bit.

    Carries the target index, the attacker's assumed key prefix, and the
    guessed value of the target bit; a behavioral stand-in for malformed
    ciphertexts that force zero-coordinate ladder states.
    """

    target_bit: int
    assumed_prefix: tuple[int, ...]
    guessed_bit: int

    def __post_init__(self):
        if self.target_bit < 1:
            raise ValueError("target_bit must be >= 1")
        if len(self.assumed_prefix) != self.target_bit:
            raise ValueError("prefix length must equal target_bit")
        if any(b not in (0, 1) for b in self.assumed_prefix) or self.guessed_bit not in (0, 1):
            raise ValueError("bits must be 0 or 1")


def generate_ciphertext(prefix_with_guess: Sequence[int], t: int) -> CraftedCiphertext:
    """Package a crafted ciphertext for target bit ``t``.

    ``prefix_with_guess`` holds the assumed bits 0..t-1 followed by the
    guessed bit at index t (the working key of the recovery loop).
    Recovery of bit 0 is unsupported; the convention fixes bit 0 = 0.
    """
    if t < 1:
        raise ValueError("t must be >= 1 (bit 0 is fixed by convention)")
    if len(prefix_with_guess) < t + 1:
        raise ValueError("need prefix bits 0..t")
    bits = tuple(int(b) for b in prefix_with_guess[: t + 1])
    return CraftedCiphertext(t, bits[:t], bits[t])


def anomaly_triggered(true_key: SikeKey, c: CraftedCiphertext) -> bool:
    """Whether the crafted ciphertext drives the ladder into zero states.

    Requires the assumed prefix to be correct, the guessed bit to be
    correct, and the target bit to differ from its predecessor.
    """
    t = c.target_bit
    if t >= len(true_key):
        raise ValueError("target_bit beyond key length")
    return (
        c.assumed_prefix == true_key.bits[:t]
        and c.guessed_bit == true_key.bits[t]
        and true_key.bits[t] != true_key.bits[t - 1]
    )


def decapsulate_profile(
    true_key: SikeKey,
    c: CraftedCiphertext,
    rounds: int,
    iterations: int,
    rng: np.random.Generator,
) -> tuple[ActivityProfile, RegisterSnapshot]:
    """Activity of ``iterations`` decapsulations of a crafted ciphertext.

    Rounds are indexed 0..rounds-1 inside each decapsulation.  Under the
    anomaly, every round r >= target_bit + 1 emits all-zero intermediates
    (the computation is stuck propagating zeros); otherwise each round
    emits WORDS_PER_ROUND fresh random words.  The snapshot models the
    registers right after the ladder: zeros under the anomaly, random
    words otherwise.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if rounds < c.target_bit + 2:
        raise ValueError("rounds must be >= target_bit + 2 so an anomalous round exists")
    anomalous = anomaly_triggered(true_key, c)

    words = rng.integers(
        0, (1 << 64) - 1, size=(iterations, rounds, WORDS_PER_ROUND),
        dtype=np.uint64, endpoint=True,
    )
    if anomalous:
        words[:, c.target_bit + 1 :, :] = 0
    hwt = word_hwt(words).sum(axis=2).reshape(-1)
    profile = ActivityProfile(hwt, np.zeros_like(hwt))

    if anomalous:
        snapshot = RegisterSnapshot.filled(0)
    else:
        regs = rng.integers(0, (1 << 64) - 1, size=REGISTER_COUNT, dtype=np.uint64, endpoint=True)
        snapshot = RegisterSnapshot(tuple(int(r) for r in regs))
    return profile, snapshot
