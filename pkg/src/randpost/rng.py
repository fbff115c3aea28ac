"""Counter-based random streams addressed by ``(seed, stream path)``.

Every random quantity in an experiment is drawn from a :class:`SeededRng`
whose stream path names its purpose (a chain, a proposal sequence, the
inner Monte Carlo draws of an estimator, ...). Two streams with the same
seed and path produce identical sequences; different paths are independent.
"""
from __future__ import annotations

from typing import Union

import numpy as np

_U64 = 2**64


def _as_key(stream) -> tuple[int, ...]:
    if isinstance(stream, (int, np.integer)):
        stream = (int(stream),)
    key = tuple(int(s) for s in stream)
    for s in key:
        if not 0 <= s < _U64:
            raise ValueError(f"stream ids must be unsigned 64-bit integers, got {s}")
    return key


class SeededRng:
    """A Philox stream keyed by a 64-bit seed and a stream path.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed shared by all streams of one run.
    stream_id : int or tuple of int
        Stream address. Use :meth:`derive` to obtain sub-streams.
    """

    def __init__(self, seed: int, stream_id: Union[int, tuple] = 0):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.stream = _as_key(stream_id)
        ss = np.random.SeedSequence(seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.Philox(ss))

    @property
    def stream_id(self) -> int:
        return self.stream[0]

    def derive(self, *key: int) -> "SeededRng":
        """Return the independent sub-stream ``self.stream + key``."""
        return SeededRng(self.seed, self.stream + _as_key(key))

    def child_seed(self, *key: int) -> int:
        """A 64-bit integer seed deterministically derived from this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream + _as_key(key))
        lo, hi = ss.generate_state(2, dtype=np.uint32)
        return int(lo) | (int(hi) << 32)

    def standard_normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def as_generator(rng) -> np.random.Generator:
    """Accept a :class:`SeededRng`, a numpy ``Generator`` or an integer seed."""
    if isinstance(rng, SeededRng):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng)).generator
    raise TypeError(f"expected SeededRng, numpy Generator or int seed, got {type(rng)!r}")
