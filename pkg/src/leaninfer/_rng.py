"""Counter-based random number helpers.

All stochastic code in this package draws from SplitMix64 streams keyed by
explicit 64-bit seeds, so any unit of work (a walk, a training run, a fold)
can derive its own independent stream and stay reproducible regardless of
scheduling.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, nogil=True)
def splitmix64(state):
    """One SplitMix64 step: returns the mixed output for ``state + GAMMA``."""
    z = np.uint64(state) + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def next_uniform(state):
    """Advance the stream; returns (new_state, uniform in [0, 1)).

    Coerces to uint64 internally: the state round-trips through Python as a
    plain int between calls, which would otherwise dispatch signed arithmetic.
    """
    new_state = np.uint64(state) + _GAMMA
    z = new_state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return new_state, np.float64(z >> np.uint64(11)) * _U53


def derive_seed(*parts: int) -> int:
    """Mix an arbitrary tuple of integers into one 64-bit seed.

    Used to key per-walk, per-tree and per-fold streams off a global seed so
    parallel execution order cannot change results. Accepts any Python int
    (negative or beyond 64 bits); only the low 64 bits contribute.
    """
    state = np.uint64(0x8E2B_5C91_D3A4_F701)
    for p in parts:
        state = np.uint64(splitmix64(state ^ np.uint64(int(p) & 0xFFFF_FFFF_FFFF_FFFF)))
    return int(state)
