"""Reproducible random number streams.

Every sampler in the package takes an explicit :class:`RngState`; there is no
global generator.  The state is a (seed, stream) pair keying a counter-based
Philox generator, so any two distinct pairs give statistically independent
streams and an identical pair replays the identical sequence regardless of
what other streams were consumed in between.  That property is what makes
per-layer and per-purpose sampling reproducible under reordering or
parallel execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngState"]

_MASK64 = (1 << 64) - 1


def _mix(h: int, v: int) -> int:
    # splitmix64 finalizer; cheap, well-distributed stream derivation
    h = (h + v + 0x9E3779B97F4A7C15) & _MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (h ^ (h >> 31)) & _MASK64


@dataclass
class RngState:
    """Keyed random stream: identical (seed, stream) means identical draws.

    A single instance is not thread-safe; derive children with :meth:`child`
    for concurrent use.
    """

    seed: int
    stream: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & _MASK64
        self.stream = int(self.stream) & _MASK64

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def child(self, tag) -> "RngState":
        """Derive an independent stream from an integer or string tag."""
        if isinstance(tag, str):
            v = 0
            for ch in tag.encode():
                v = _mix(v, ch)
        else:
            v = int(tag) & _MASK64
        return RngState(self.seed, _mix(self.stream, v))

    def spawn(self, n: int) -> list["RngState"]:
        return [self.child(i) for i in range(n)]
