"""
Counter-based random streams.

Every stream is a Philox generator keyed by (seed, stream word). The stream
word folds an arbitrary tuple of integers (realization index, row, start
index, ...) so that any piece of any realization can be regenerated without
touching the others. Draw order inside a stream is fixed by the caller.
"""

from typing import Tuple

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_word(stream: Tuple[int, ...]) -> int:
    """Fold a tuple of non-negative integers into one 64-bit word"""
    if not stream:
        return 0
    state = np.random.SeedSequence([int(s) & _MASK64 for s in stream]).generate_state(1, np.uint64)
    return int(state[0])


def make_generator(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the stream (seed, *stream)"""
    key = (int(seed) & _MASK64) | (stream_word(tuple(stream)) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def realization_seed(seed: int, index: int) -> int:
    """Seed of the index-th realization of a run with base seed `seed`"""
    return int(np.random.SeedSequence([int(seed) & _MASK64, int(index)]).generate_state(1, np.uint64)[0])
