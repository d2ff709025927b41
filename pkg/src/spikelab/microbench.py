"""Register-level victim programs and their switching-activity models.

Three loop variants are modeled, mirroring small assembly victims that
prime the 27 general-purpose registers (X0..X26) and then trigger a
context switch:

* ``ConstLoop``  - idle loop, then load every register with a fixed-HWT
  word right before the switch (isolates the register signature).
* ``HwtLoop``    - OR-loop over registers that all hold the same value,
  so bits are rewritten but never toggle (isolates HWT of processed data).
* ``HdLoop``     - paired left/right shifts of a fixed 24-one-bit operand,
  toggling a controlled number of bits per write (isolates HD).

Execution is purely behavioral: each loop iteration emits one activity
sample, and the final register contents form the snapshot captured at the
context switch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .power import ActivityProfile

REGISTER_COUNT = 27
HWT_WRITES_PER_ITER = 25   # OR destinations X2..X26
HD_WRITES_PER_ITER = 24    # shift destinations X2..X26 minus operand regs
HD_OPERAND = 0x00000FFFFF_F00000  # fixed shift operand, 24 one-bits
HD_OPERAND_HWT = 24

_WORD_MASK = (1 << 64) - 1

# per-byte population count, shared by the crypto models
BYTE_HWT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def hamming_weight(word: int) -> int:
    """Population count of a 64-bit word."""
    if not (0 <= word <= _WORD_MASK):
        raise ValueError("word out of 64-bit range")
    return int(word).bit_count()


def hamming_distance(a: int, b: int) -> int:
    """Number of differing bits between two 64-bit words."""
    return hamming_weight((a ^ b) & _WORD_MASK)


def encode_hwt(h: int) -> int:
    """Word realizing HWT ``h`` as the h low-order one-bits."""
    if not (0 <= h <= 64):
        raise ValueError("HWT must be in 0..=64")
    return (1 << h) - 1


def word_hwt(words: np.ndarray) -> np.ndarray:
    """Per-word population count of a uint64 array (any shape)."""
    w = np.ascontiguousarray(words, dtype=np.uint64)
    return BYTE_HWT[w.view(np.uint8)].reshape(*w.shape, 8).sum(axis=-1, dtype=np.int64)


@dataclass(frozen=True)
class RegisterSnapshot:
    """Contents of the 27 general-purpose registers at the context switch."""

    regs: tuple[int, ...]

    def __post_init__(self):
        if len(self.regs) != REGISTER_COUNT:
            raise ValueError(f"snapshot must hold exactly {REGISTER_COUNT} registers")
        for r in self.regs:
            if not (0 <= r <= _WORD_MASK):
                raise ValueError("register value out of 64-bit range")

    def total_hwt(self) -> int:
        return sum(int(r).bit_count() for r in self.regs)

    @classmethod
    def filled(cls, word: int) -> "RegisterSnapshot":
        return cls((word,) * REGISTER_COUNT)


def _check_hwt_field(name: str, value: int) -> None:
    if not (0 <= value <= 64):
        raise ValueError(f"{name} must be in 0..=64")


def _check_loop_itr(value: int) -> None:
    if value < 0:
        raise ValueError("loop_itr must be >= 0")


@dataclass(frozen=True)
class ConstLoop:
    """Idle loop; registers loaded with encode_hwt(hwt_value) at the end."""

    loop_itr: int
    hwt_value: int

    def __post_init__(self):
        _check_loop_itr(self.loop_itr)
        _check_hwt_field("hwt_value", self.hwt_value)


@dataclass(frozen=True)
class HwtLoop:
    """OR-loop processing a fixed-HWT value, no bit transitions."""

    hwt_value_loop: int
    hwt_value: int
    loop_itr: int

    def __post_init__(self):
        _check_loop_itr(self.loop_itr)
        _check_hwt_field("hwt_value_loop", self.hwt_value_loop)
        _check_hwt_field("hwt_value", self.hwt_value)


@dataclass(frozen=True)
class HdLoop:
    """Paired-shift loop toggling 4*shift_value bits per write."""

    shift_value: int
    hwt_value: int
    loop_itr: int

    def __post_init__(self):
        _check_loop_itr(self.loop_itr)
        _check_hwt_field("hwt_value", self.hwt_value)
        # shifted band must stay in-word: operand ones span 24 bits
        if self.shift_value < 1 or HD_OPERAND_HWT + 2 * self.shift_value > 64:
            raise ValueError("shift_value must be in 1..=20 (band stays in-word)")


MicrobenchSpec = Union[ConstLoop, HwtLoop, HdLoop]


def execute(spec: MicrobenchSpec) -> tuple[ActivityProfile, RegisterSnapshot]:
    """Run a victim spec; returns its activity profile and final snapshot.

    Deterministic: identical specs give identical outputs.  The snapshot
    depends only on ``hwt_value``, never on the loop parameters.
    """
    n = spec.loop_itr
    if isinstance(spec, ConstLoop):
        hwt = np.zeros(n, dtype=np.int64)
        hd = np.zeros(n, dtype=np.int64)
    elif isinstance(spec, HwtLoop):
        hwt = np.full(n, HWT_WRITES_PER_ITER * spec.hwt_value_loop, dtype=np.int64)
        hd = np.zeros(n, dtype=np.int64)
    elif isinstance(spec, HdLoop):
        hwt = np.full(n, HD_WRITES_PER_ITER * HD_OPERAND_HWT, dtype=np.int64)
        hd = np.full(n, HD_WRITES_PER_ITER * 4 * spec.shift_value, dtype=np.int64)
        if n:
            # first pass only transitions from the initial register load
            hd[0] = HD_WRITES_PER_ITER * 2 * spec.shift_value
    else:
        raise TypeError(f"unknown microbench spec: {spec!r}")

    snapshot = RegisterSnapshot.filled(encode_hwt(spec.hwt_value))
    return ActivityProfile(hwt, hd), snapshot
