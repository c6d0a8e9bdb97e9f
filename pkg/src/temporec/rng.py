"""Counter-based random streams keyed by structured labels.

Each (seed, epoch, step, name) tuple maps to an independent Philox stream, so
any draw is reproducible bit-for-bit regardless of evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(*parts) -> np.random.Generator:
    """Return a Generator keyed deterministically by the given labels."""
    label = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class StreamScope:
    """Names dropout (and similar) draws within one training step.

    ``rng("enc.txt.layer0.attn")`` yields the same stream every time the same
    (seed, epoch, step) scope asks for that name, and a disjoint stream for
    every other name.
    """

    def __init__(self, seed: int, epoch: int, step: int):
        self.seed = seed
        self.epoch = epoch
        self.step = step

    def rng(self, name: str) -> np.random.Generator:
        return derive_rng(self.seed, self.epoch, self.step, name)
