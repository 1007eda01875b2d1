"""
Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by a SeedSequence
derived from (seed, index), so stream i draws the same numbers no matter which
thread consumes it or in what order.
"""

import numpy as np

from error import RejectedInputError

SEED_LIMIT = 2**64


def require_seed(seed: int) -> int:
    """Validates a 64-bit unsigned seed and returns it as a plain int."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise RejectedInputError(f"Seed must be an integer, got {seed!r}")

    if not 0 <= int(seed) < SEED_LIMIT:
        raise RejectedInputError(f"Seed must be a 64-bit unsigned integer, got {seed}")

    return int(seed)


def derive_stream(seed: int, index: int) -> np.random.Generator:
    """Returns stream `index` of the family rooted at `seed`."""
    if index < 0:
        raise RejectedInputError(f"Stream index must be nonnegative, got {index}")

    sequence = np.random.SeedSequence(require_seed(seed), spawn_key=(int(index),))

    return np.random.Generator(np.random.Philox(sequence))


def root_stream(seed: int) -> np.random.Generator:
    """Stream 0, for callers that need a single generator."""
    return derive_stream(seed, 0)
