"""Counter-addressed random substreams.

Every random draw in this package is keyed by (seed, stream, t, replication)
rather than by call order, so results never depend on evaluation order and
independent workers can reproduce any single draw in isolation.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream identifiers. Each consumer of randomness owns one so that, e.g.,
# the oracle's noise at step t never aliases the block mask at step t.
STREAM_ORACLE = 1
STREAM_BLOCK = 2
STREAM_SCHEDULE = 3
STREAM_PROBE = 4


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer; a cheap, high-quality 64-bit mixing function."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def hash_uniform(seed: int, stream: int, t: int) -> float:
    """Pure uniform in [0, 1) from (seed, stream, t); thread-safe, order-free."""
    z = splitmix64((int(seed) & _MASK64) ^ splitmix64(stream & _MASK64))
    return splitmix64(z ^ (int(t) & _MASK64)) / 2.0**64


class Substreams:
    """Reusable Philox generator addressed by (stream, t, replication).

    ``at(stream, t, rep)`` rewinds the underlying bit generator to a counter
    position derived from the ids and returns the shared ``Generator``.  Two
    calls with the same ids always yield the same draws; distinct ids yield
    independent Philox blocks.  Instances are cheap and picklable but not
    thread-safe; use one per worker.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._init()

    def _init(self):
        self._bitgen = np.random.Philox(key=[0, 0])
        self._gen = np.random.Generator(self._bitgen)
        # One reusable state dict: the bit generator's state setter copies the
        # array contents, so mutating these buffers before each assignment is
        # safe and avoids per-call allocations in hot loops.
        self._counter = np.zeros(4, dtype=np.uint64)
        self._key = np.array([self.seed, 0], dtype=np.uint64)
        state = dict(self._bitgen.state)
        state["state"] = {"counter": self._counter, "key": self._key}
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._state = state
        self._stream_keys = {}

    def at(self, stream: int, t: int = 0, rep: int = 0) -> np.random.Generator:
        key1 = self._stream_keys.get(stream)
        if key1 is None:
            # store as np.uint64 up front: assigning a Python int past 2**63
            # into a uint64 array element would round through float64
            key1 = self._stream_keys[stream] = np.uint64(splitmix64(self.seed ^ stream))
        # t, rep and stream are nonnegative and far below 2**63, so direct
        # element assignment is exact
        self._counter[0] = 0  # the generator advances word 0 while drawing
        self._counter[1] = t
        self._counter[2] = rep
        self._counter[3] = stream
        self._key[1] = key1
        self._bitgen.state = self._state
        return self._gen

    def __getstate__(self):
        return {"seed": self.seed}

    def __setstate__(self, state):
        self.seed = state["seed"]
        self._init()
