"""Seed derivation and counter-based random streams.

Every random stream is a Philox generator keyed by ``(seed, label)``, where
``label`` is one of the documented stream names below. Streams with distinct
labels are statistically independent even when they share a seed.

    "trajectory"    scenario draws of an SKM run
    "output-index"  the random output index N_K
    "states"        random test points used by the verification suites
"""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("trajectory", "output-index", "states")

_MASK64 = (1 << 64) - 1


def mix_seed(base: int, index: int) -> int:
    """Replication seed: SplitMix64 finaliser applied to ``base + (index+1)*golden``.

    Pure integer arithmetic modulo 2**64, so the result is platform independent.
    """
    z = (int(base) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent Philox stream for ``seed`` under the given label."""
    if label not in STREAMS:
        raise ValueError(f"unknown stream label {label!r}; expected one of {STREAMS}")
    tag = zlib.crc32(label.encode("ascii"))
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=(tag,))
    return np.random.Generator(np.random.Philox(ss))
