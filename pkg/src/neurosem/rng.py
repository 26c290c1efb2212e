"""Named random streams on top of a counter-based generator.

Every stochastic operation in the package (parameter init, shuffling,
dropout, sampling) draws from a stream identified by a string name. Stream
keys are derived by hashing (master_seed, name), so adding a new stream
never perturbs existing ones, and identical seeds reproduce identical runs
regardless of how unrelated code evolves.
"""

import hashlib

import numpy as np


def stream_generator(master_seed: int, name: str) -> np.random.Generator:
    """A fresh Generator for (master_seed, name), independent of call order."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class SeedHub:
    """Caches one stateful Generator per stream name.

    Repeated ``stream(name)`` calls return the same generator, so a stream
    advances across uses; sequences stay reproducible as long as the call
    order within a single stream is deterministic.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            gen = stream_generator(self.master_seed, name)
            self._streams[name] = gen
        return gen


def truncated_normal(gen: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) redrawn until every sample lies within 2 std."""
    out = gen.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = gen.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out
