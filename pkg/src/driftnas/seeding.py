"""Counter-based seed derivation.

Every random draw in the engine comes from a generator keyed on
(root seed, *counters), e.g. (root, generation, slot) in the search or
(root, arch hash, trial) in evaluation. Results therefore never depend on
execution order or on how many workers share the load.
"""

from __future__ import annotations

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        # Architecture ids are hex digests
        if part and all(c in "0123456789abcdef" for c in part):
            return int(part, 16)
        return int.from_bytes(part.encode(), "big")
    if part < 0:
        raise ValueError(f"seed counters must be non-negative, got {part}")
    return part


def derive_seed(root: int, *counters: int | str) -> np.random.SeedSequence:
    """SeedSequence for the stream identified by `counters` under `root`."""
    return np.random.SeedSequence([_key(root), *(_key(c) for c in counters)])


def derive_rng(root: int, *counters: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *counters))


def derive_int(root: int, *counters: int | str) -> int:
    """A 63-bit integer seed, for APIs that only take plain ints."""
    return int(derive_seed(root, *counters).generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> 1)
