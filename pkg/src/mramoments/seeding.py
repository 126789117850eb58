"""Counter-based random stream derivation.

Every random draw in the package comes from a generator built as
``default_rng(SeedSequence([seed, stream, index]))``. ``stream`` names the
purpose (observations, restarts, certificate trials, ...) and ``index`` is
the position within that purpose (chunk number, restart number, ...), so
parallel work can reproduce any stream without touching the others.
"""

import numpy as np

STREAM_SIGNAL = 1
STREAM_BASIS = 2
STREAM_OBSERVATIONS = 3
STREAM_RESTARTS = 4
STREAM_TRIALS = 5
STREAM_AMBIGUITY = 6
STREAM_GROUP = 7

_MASK64 = (1 << 64) - 1


def derive_rng(seed, stream=0, index=0):
    """Return a Generator for the ``(seed, stream, index)`` triple."""
    seed = int(seed) & _MASK64
    return np.random.default_rng(np.random.SeedSequence([seed, int(stream), int(index)]))


def as_rng(rng):
    """Accept an int seed or an existing Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return derive_rng(rng)
