"""Deterministic derivation of per-stream RNGs from one master seed.

Sub-seeds are derived counter-free from (master seed, stream label): the
label is hashed with SHA-256 and the first four 32-bit words become the
spawn key of a numpy SeedSequence whose entropy is the master seed.  Any
two distinct labels therefore give independent streams, regardless of the
order in which they are requested, which is what makes parallel dispatch
of grid cells and ensemble members reproducible.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np


def derive_seed_sequence(master: int, label: str) -> np.random.SeedSequence:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = struct.unpack("<4I", digest[:16])
    return np.random.SeedSequence(entropy=master, spawn_key=words)


def derive_rng(master: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(master, label))


def derive_seed(master: int, label: str) -> int:
    """A plain integer sub-seed (for configs that want one number)."""
    return int(derive_seed_sequence(master, label).generate_state(1, np.uint64)[0])


class Seeder:
    """Hands out labeled RNGs and remembers which labels were used."""

    def __init__(self, master: int):
        self.master = int(master)
        self.used: dict[str, int] = {}

    def rng(self, label: str) -> np.random.Generator:
        self.used[label] = derive_seed(self.master, label)
        return derive_rng(self.master, label)

    def seed(self, label: str) -> int:
        s = derive_seed(self.master, label)
        self.used[label] = s
        return s
