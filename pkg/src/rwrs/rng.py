"""Counter-based splittable random streams.

Every replicate gets its own Philox generator identified by the tuple
(master_seed, *path).  Philox is counter-based: the 128-bit key holds
the master seed and the path arity, the upper three words of the
256-bit counter hold the path, and draws only ever advance the low
counter word.  Distinct ids therefore never overlap, and the draw order
inside one stream never depends on what other streams do.  That is what
makes worker-count independence possible: work unit i always uses
stream(seed, i, ...) no matter which thread runs it.
"""

from __future__ import annotations

import numpy as np

_MAX_PATH = 3
_WORD_MASK = (1 << 64) - 1


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the generator for stream id (master_seed, *path).

    Parameters
    ----------
    master_seed : int
        Run-level seed, 0 <= seed < 2**64.
    *path : int
        Up to three nonnegative stream coordinates (replicate index,
        sub-stream index, chunk index).

    The mapping (master_seed, path) -> stream is injective: the arity
    lives in the key, so (s, a) and (s, a, 0) are different streams.
    """
    if len(path) > _MAX_PATH:
        raise ValueError(f"stream path too deep: {path!r} (max {_MAX_PATH} coordinates)")
    words = [master_seed, *path]
    for w in words:
        if not isinstance(w, (int, np.integer)):
            raise TypeError(f"stream coordinates must be integers, got {w!r}")
        if w < 0 or w > _WORD_MASK:
            raise ValueError(f"stream coordinate out of range [0, 2**64): {w}")
    key = np.array([master_seed, len(path)], dtype=np.uint64)
    counter = np.zeros(4, dtype=np.uint64)
    counter[1:1 + len(path)] = np.array(path, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
