"""Counter-based random number streams.

All randomness in the package flows through Philox-4x64 counter-based bit
generators; standard normals use numpy's ziggurat sampler.  A stream is
addressed by (seed, replica, stream_id): the replica index is XOR-ed into
the first key word so that replicas of the same experiment are independent
and reproducible, and stream_id occupies the second key word to namespace
unrelated uses (chain innovations, start draws, transport targets, ...).
"""

from __future__ import annotations

import numpy as np

# Recorded in run manifests; the generator choice is part of the output contract.
RNG_ALGORITHM = "philox4x64-ziggurat"

# stream_id namespaces
STREAM_CHAIN = 0
STREAM_START = 1
STREAM_PAIR = 2
STREAM_GAMMA = 3
STREAM_PROJECTION = 4
STREAM_FLOW = 5


def stream(seed: int, replica: int = 0, stream_id: int = 0) -> np.random.Generator:
    """Return the Generator for one (seed, replica, stream_id) address."""
    key0 = np.uint64(seed) ^ np.uint64(replica)
    key1 = np.uint64(stream_id)
    return np.random.Generator(np.random.Philox(key=[key0, key1]))
