"""Counter-based random-number streams for reproducible parallel Monte Carlo.

Every run of every experiment draws from a Philox counter-based generator
keyed by ``(seed, stream_id)``.  Distinct stream ids give statistically
independent sequences, and a given ``(seed, stream_id)`` pair reproduces the
same draws on any machine, in any process, under any scheduling of runs.

Within a stream, draws are split into non-overlapping counter blocks
addressed by ``(lane, purpose)``: the two high words of the 256-bit Philox
counter.  Lanes separate repeated-averaging passes (so permuting pass lanes
permutes pass outputs exactly); purposes separate link-liveness draws from
noise draws from initial-state draws.  Each block supports 2**128 sequential
draws, so blocks never collide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Counter-block purposes.  Fixed for the life of the file format: changing
# them changes every simulated sample path.
LINKS = 0
NOISE = 1
INIT = 2
MISC = 3
GRAPH = 4

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Handle for one logical random stream, keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) <= _MASK64):
                raise ValueError(f"{name} must fit in an unsigned 64-bit word, got {v}")

    def generator(self, purpose: int = MISC, lane: int = 0) -> np.random.Generator:
        """Return a fresh generator positioned at the (lane, purpose) block."""
        if not (0 <= purpose <= _MASK64 and 0 <= lane <= _MASK64):
            raise ValueError("purpose and lane must fit in unsigned 64-bit words")
        key = np.array([self.seed, self.stream_id], dtype=_U64)
        counter = np.array([0, 0, purpose, lane], dtype=_U64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def substream(self, offset: int) -> "RngStream":
        """Stream with the same seed and a shifted stream id (wraps mod 2**64)."""
        return RngStream(self.seed, (self.stream_id + int(offset)) & _MASK64)
