"""Small shared helpers."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Estimate(NamedTuple):
    """A numeric result with its Monte Carlo standard error (0 when exact)."""

    value: float
    stderr: float


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or a Generator and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def readonly(a, dtype=np.float64) -> np.ndarray:
    """Copy to a contiguous array and lock it against writes."""
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.flags.writeable = False
    return out
