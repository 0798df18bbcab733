"""Deterministic seed splitting.

Every random stream in the package is derived from a root seed plus a tuple
of non-negative integer keys through :class:`numpy.random.SeedSequence`
(``spawn_key``).  Matrix entries come from Philox, a counter-based
generator, keyed by ``(seed, row)``; row ``j`` of the upper triangle is the
first ``n - j`` draws of that stream in column order.  Sampling is thus
independent of the order rows are generated in.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def _entropy(seed):
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed


def split_seed(base_seed, *keys):
    """Return a 64-bit child seed for ``(base_seed, *keys)``."""
    ss = np.random.SeedSequence(_entropy(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(seed, *keys):
    """Philox generator for the stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(_entropy(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
