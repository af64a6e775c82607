"""Reproducible random streams keyed by ``(master_seed, path)``.

Streams are values: a given ``RngStream`` always produces the same draws, and
children derived with :meth:`RngStream.child` are statistically independent
of their parent and of each other (numpy ``SeedSequence`` spawn keys feeding
the counter-based Philox generator).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)):
            raise TypeError("master_seed must be an integer")
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "path", tuple(int(p) & _MASK64 for p in self.path))

    @property
    def path_id(self) -> int:
        """Index of this stream among its siblings (0 for the root)."""
        return self.path[-1] if self.path else 0

    def child(self, *keys: int) -> "RngStream":
        """Substream addressed by ``keys`` below this one.

        ``stream.child(3, 1)`` is the same as ``stream.child(3).child(1)``.
        """
        return RngStream(self.master_seed, self.path + tuple(keys))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.path)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def as_generator(rng) -> np.random.Generator:
    """Accept either an ``RngStream`` or an already running generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# Purpose tags for substreams, so that e.g. transition and observation noise
# of the same path never share draws.
STATE_NOISE = 1
OBS_NOISE = 2
INDICATOR = 3
INIT = 4
RESAMPLE = 5
