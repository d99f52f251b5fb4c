"""Reproducible random streams keyed by (master seed, stream index)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngSpec:
    """Names one deterministic random stream.

    The same (seed, stream) always yields the same generator state, and
    distinct stream indices give statistically independent streams, so
    replicas can run on any worker in any order.  Experiment drivers assign
    one stream index per replica or chain.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))
