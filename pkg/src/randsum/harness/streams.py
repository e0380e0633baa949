"""Reproducible, independent random streams keyed by (master seed, task path).

Each stream is a Philox counter-based generator seeded from a SeedSequence whose
spawn key is the task path, so any task can rebuild its stream without knowing
what other tasks did, and thread scheduling cannot change the numbers drawn.
"""
from __future__ import annotations

import numpy as np

MAX_DEPTH = 8
_U64 = (1 << 64) - 1


def derive_stream(master_seed: int, path=()) -> np.random.Generator:
    path = tuple(int(p) for p in path)
    if len(path) > MAX_DEPTH:
        raise ValueError(f"stream path depth {len(path)} exceeds {MAX_DEPTH}")
    if not 0 <= int(master_seed) <= _U64:
        raise ValueError("master_seed must be a 64-bit unsigned integer")
    if any(p < 0 for p in path):
        raise ValueError("stream path entries must be nonnegative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=path)
    return np.random.Generator(np.random.Philox(ss))


def cross_correlation(a: np.random.Generator, b: np.random.Generator, draws: int) -> float:
    """Pearson correlation of the next ``draws`` uniforms from two streams."""
    x = a.random(draws)
    y = b.random(draws)
    return float(np.corrcoef(x, y)[0, 1])
