"""Counter-style random streams keyed by (seed, stream id).

A stream is identified by the run seed plus a tuple of non-negative integers,
typically (time index, phase tag, particle index, ...). Each distinct key yields
an independent Philox generator, so results do not depend on how per-particle
work is scheduled across threads.
"""
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np


class Phase(IntEnum):
    """Phase tags separating the independent sampling statements of one step."""

    INIT = 0
    WEIGHT = 1
    RESAMPLE = 2
    FORECAST = 3
    PSEUDO_OBS = 4
    PROPOSE = 5
    ACCEPT = 6
    ACCEPT_STAGE2 = 7
    EVALUATE = 8
    MOVE = 9
    LIU_WEST = 10
    VARIANCE = 11
    EXCHANGE = 12
    PRIOR = 13
    OBSERVE = 14
    SIMULATE = 15
    REPLICATE = 16
    CHAIN = 17


@dataclass(frozen=True)
class RngStream:
    """An addressable random stream."""

    seed: int
    key: Tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        """Extend the stream id."""
        return RngStream(self.seed, self.key + tuple(int(i) for i in ids))

    def generator(self, *ids: int) -> np.random.Generator:
        """Build the generator for this stream, optionally extended by ``ids``."""
        key = self.key + tuple(int(i) for i in ids)
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))


def as_stream(rng) -> RngStream:
    """Accept an RngStream or an integer seed."""
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))
