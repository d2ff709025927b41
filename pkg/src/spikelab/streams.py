"""Deterministic RNG stream derivation.

Every stochastic quantity in the simulator is drawn from a generator
derived from ``(master_seed, *path)``.  Results therefore never depend on
evaluation order or on how measurement batches are scheduled: repetition
``i`` of measurement ``("sike-poc", t)`` always sees the same stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def _path_words(path) -> list[int]:
    words = []
    for part in path:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        elif isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError("stream path integers must be non-negative")
            words.append(int(part))
        else:
            raise TypeError(f"unsupported stream path element: {part!r}")
    return words


def stream(master_seed: int, *path) -> np.random.Generator:
    """Independent PCG64 generator for the given derivation path."""
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    seq = np.random.SeedSequence([int(master_seed), *_path_words(path)])
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(master_seed: int, *path) -> int:
    """Stable 63-bit sub-seed, e.g. one per sweep point."""
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    seq = np.random.SeedSequence([int(master_seed), *_path_words(path)])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)
