"""Counter-based random number streams for reproducible parallel Monte Carlo.

A stream is addressed by the pair (master_seed, stream_id).  Each pair keys an
independent Philox counter-based generator, so replicate i can be replayed
bit-identically no matter which worker ran it or in what order.  The draw
position within a stream is Philox's internal 256-bit counter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StreamKey:
    """Address of one reproducible random stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "StreamKey":
        """Substream for replicate `index`; callers allocate disjoint index ranges."""
        return StreamKey(self.master_seed, (self.stream_id + index) % 2**64)
