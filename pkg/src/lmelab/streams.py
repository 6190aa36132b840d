"""Reproducible keyed random streams.

Streams are counter-based (Philox-4x64) and keyed directly by
(seed, label tuple): the 128-bit Philox key holds the seed in one word and
the bit-packed labels in the other, so a stream is a pure function of its
labels with no state hand-off between workers, identical output on every
platform, and statistical independence across distinct keys by design of
the generator.  Chunk labels are (domain, step, chunk), fixed by the work
decomposition rather than by worker identity, which is what makes thread
counts irrelevant to output.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DOMAIN_LME",
    "DOMAIN_BRW",
    "DOMAIN_CHAIN",
    "DOMAIN_PRBM",
    "DOMAIN_PATHSUM",
    "DOMAIN_TEST",
    "derive_stream",
]

# label-space partition per module (first label of every tuple)
DOMAIN_LME = 1
DOMAIN_BRW = 2
DOMAIN_CHAIN = 3
DOMAIN_PRBM = 4
DOMAIN_PATHSUM = 5
DOMAIN_TEST = 14

# bit widths for (domain, major, minor) label packing
_W_DOMAIN, _W_MAJOR, _W_MINOR = 4, 36, 24


def _pack(labels: Sequence[int]) -> int:
    if not 1 <= len(labels) <= 3:
        raise ValueError("labels must have 1 to 3 entries (domain, major, minor)")
    domain = labels[0]
    major = labels[1] if len(labels) > 1 else 0
    minor = labels[2] if len(labels) > 2 else 0
    for name, v, width in (
        ("domain", domain, _W_DOMAIN),
        ("major", major, _W_MAJOR),
        ("minor", minor, _W_MINOR),
    ):
        if not 0 <= v < (1 << width):
            raise ValueError(f"label {name}={v} outside [0, 2^{width})")
    return (domain << (_W_MAJOR + _W_MINOR)) | (major << _W_MINOR) | minor


def derive_stream(seed: int, labels: Iterable[int]) -> np.random.Generator:
    """Generator for the (seed, labels) cell of the stream space."""
    key = np.array([int(seed) & (2**64 - 1), _pack(tuple(labels))], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
