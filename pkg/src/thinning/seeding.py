"""Counter-based random streams derived from ``(master_seed, stream_index)``.

Every sampler takes a :class:`SeedSpec` and builds a Philox generator from a
``SeedSequence`` keyed on the master seed and the stream path. Replicate ``i``
of an experiment uses ``seed.child(i)``, so results never depend on the order in
which worker threads pick up replicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

_U64 = 2**64


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < _U64):
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if int(self.stream_index) < 0:
            raise ValueError(f"stream_index must be nonnegative, got {self.stream_index}")
        if any(int(k) < 0 for k in self.path):
            raise ValueError("stream path entries must be nonnegative")

    def child(self, *keys: int) -> "SeedSpec":
        """Derive an independent sub-stream; ``child(i, j)`` == ``child(i).child(j)``."""
        return SeedSpec(self.master_seed, self.stream_index, self.path + tuple(int(k) for k in keys))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index), *self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def to_record(self) -> dict:
        return {"master_seed": int(self.master_seed), "stream_index": int(self.stream_index), "path": list(self.path)}


SeedLike = Union[SeedSpec, np.random.Generator, int]


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Accept a SeedSpec, a bare integer master seed, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.generator()
    if isinstance(seed, (int, np.integer)):
        return SeedSpec(int(seed)).generator()
    raise TypeError(f"cannot build a random generator from {type(seed).__name__}")


def as_seedspec(seed: SeedSpec | int) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    if isinstance(seed, (int, np.integer)):
        return SeedSpec(int(seed))
    raise TypeError("replicate-level seeding needs a SeedSpec or an integer master seed")
