"""Deterministic random-stream derivation.

Sub-streams are keyed by (master seed, purpose label, index) so that results
do not depend on scheduling or parallelism degree.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    key = (int(master_seed), zlib.crc32(label.encode("utf-8")), int(index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
