"""Seeded, splittable random streams built on the counter-based Philox generator.

Every stochastic choice in the benchmark draws from a Generator obtained
through :func:`make_rng`, keyed by a 64-bit seed plus a stream id.  Distinct
stream ids select distinct Philox keys, so derived streams never overlap
their parent and results are independent of evaluation order.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the deterministic generator for (seed, stream).

    Identical arguments always yield an identical draw sequence; the pair is
    packed into the 128-bit Philox key, so every (seed, stream) pair selects
    an independent counter-based stream.
    """
    key = ((int(seed) & _MASK64) << 64) | (int(stream) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, stream: int) -> int:
    """Fold a stream id into a seed, for components that re-split internally."""
    return make_rng(seed, stream).integers(0, 1 << 63, dtype=np.int64).item()
