"""Deterministic random-stream bookkeeping.

Every stochastic routine takes a RandomSource. Identical (seed, stream)
pairs yield bit-identical sample sequences; distinct streams derived from
the same seed are statistically independent (SeedSequence spawn keys).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RandomSource:
    """Seed plus a substream index path.

    ``split(k, ...)`` derives an independent child stream; per-iteration
    batches use ``split(stream_tag, iteration)`` so any iteration can be
    replayed without regenerating its predecessors.
    """

    seed: int
    stream: tuple[int, ...] = field(default=())

    def split(self, *ids: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        """Fresh Generator; repeated calls restart the same sequence."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.default_rng(ss)
