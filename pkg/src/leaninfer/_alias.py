"""Alias-method tables for O(1) sampling from discrete distributions."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def build_alias(weights):
    """Build Vose alias tables for a nonnegative weight vector.

    Returns (prob, alias) arrays; sample with :func:`alias_draw`. Zero-weight
    entries are never drawn. Total weight must be positive.
    """
    n = weights.shape[0]
    prob = np.zeros(n, dtype=np.float64)
    alias = np.zeros(n, dtype=np.int64)
    total = 0.0
    for i in range(n):
        total += weights[i]
    scaled = np.empty(n, dtype=np.float64)
    for i in range(n):
        scaled[i] = weights[i] * n / total
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        nl -= 1
        s = small[ns]
        l = large[nl]
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] - (1.0 - scaled[s])
        if scaled[l] < 1.0:
            small[ns] = l
            ns += 1
        else:
            large[nl] = l
            nl += 1
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
    while ns > 0:
        ns -= 1
        prob[small[ns]] = 1.0
    return prob, alias


@njit(cache=True, nogil=True, inline="always")
def alias_draw(prob, alias, u: float) -> int:
    """Draw an index using one uniform in [0, 1)."""
    n = prob.shape[0]
    scaled = u * n
    cell = int(scaled)
    if cell >= n:
        cell = n - 1
    if scaled - cell < prob[cell]:
        return cell
    return alias[cell]
