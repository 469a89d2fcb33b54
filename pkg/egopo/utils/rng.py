"""
EG-OPO - Seeded Random Streams
Every random draw in the library comes from a named stream derived from one master seed
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

# Stable stream tags; the integer codes are part of the reproducibility contract
STREAM_TAGS: Dict[str, int] = {
    'theta': 1,
    'contexts': 2,
    'actions': 3,
    'outcomes': 4,
    'folds': 5,
    'mixture': 6,
    'evaluation': 7,
    'certify': 8,
    'policies': 9,
}


class SeededRNG:
    """
    Master seed -> independent numpy Generators.
    - (master, *keys, tag) maps to a SeedSequence spawn key
    - streams with different keys never share state
    - the same keys always reproduce the same stream
    """

    def __init__(self, seed: int, keys: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self._seed = int(seed)
        self._keys = tuple(int(k) for k in keys)

    @property
    def seed(self) -> int:
        return self._seed

    def fork(self, *keys: int) -> SeededRNG:
        """Child RNG whose streams are disjoint from the parent's"""
        return SeededRNG(self._seed, self._keys + tuple(keys))

    def stream(self, tag: str, *keys: int) -> np.random.Generator:
        """Generator for a named stream, optionally keyed (e.g. by source index)"""
        if tag not in STREAM_TAGS:
            raise ValueError(f"Unknown stream tag: {tag}")
        spawn_key = self._keys + tuple(int(k) for k in keys) + (STREAM_TAGS[tag],)
        return np.random.default_rng(np.random.SeedSequence(self._seed, spawn_key=spawn_key))

    def chunk_seeds(self, tag: str, count: int) -> list:
        """Per-chunk child seeds for chunked Monte Carlo work"""
        parent = np.random.SeedSequence(self._seed, spawn_key=self._keys + (STREAM_TAGS[tag],))
        return parent.spawn(count)


def derive_seed(*keys: int) -> int:
    """Plain 32-bit seed from a tuple of non-negative keys"""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])
