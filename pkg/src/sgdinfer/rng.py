"""Reproducible random-number streams.

All randomness in the package flows through :class:`RngStream`, a value
object naming one logical stream: the same ``(seed, stream_id, path)``
always reproduces the same draws, and distinct ids give statistically
independent streams (numpy ``SeedSequence`` keying).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible source of randomness.

    ``seed`` is the experiment-level entropy, ``stream_id`` separates
    top-level units of work (e.g. one id per replication), and ``path``
    addresses substreams within a unit.
    """

    seed: int
    stream_id: int = 0
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")

    def child(self, *indices: int) -> "RngStream":
        """Derive an independent substream addressed by ``indices``."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.PCG64(ss))
