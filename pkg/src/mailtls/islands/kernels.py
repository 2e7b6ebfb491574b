"""Hot pair-accumulation kernels for the compatibility model.

Both kernels consume the same encoding: each node is a row of
``suite_versions``, a ``uint8`` matrix whose entry ``[i, s]`` is a bitmask
of the protocol versions under which node ``i`` accepts suite ``s``.  For
an ordered node pair (i, j) the byte ``suite_versions[i, s] &
suite_versions[j, s]`` is the set of versions where suite ``s`` is common,
so ORing it over all suites yields exactly the version set of the pair's
config intersection.

The counts are exact ``int64`` sums of ``w_i * w_j`` products, never
floats, so downstream probability math can stay rational.

A numba-compiled path is used when numba imports cleanly; setting
``MAILTLS_PURE_NUMPY=1`` forces the plain-numpy path (also the fallback
when numba is absent).  Both paths return identical arrays.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised via the env-flag matrix in CI
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        return wrap(args[0]) if args and callable(args[0]) else wrap

    prange = range

#: Version-set bucket ids fit in 5 bits (one per protocol version).
BUCKET_SPACE = 32

#: Row-block size for the numpy paths, bounding peak memory at
#: roughly block * n * 8 bytes per intermediate.
_BLOCK_ROWS = 256


def use_numba() -> bool:
    return HAVE_NUMBA and not os.environ.get("MAILTLS_PURE_NUMPY")


# ---------------------------------------------------------------------------
# Version-set bucket counts


@njit(cache=True, parallel=True)
def _bucket_counts_numba(suite_versions, weights):  # pragma: no cover
    n, n_suites = suite_versions.shape
    totals = np.zeros((n, BUCKET_SPACE), dtype=np.int64)
    for i in prange(n):
        for j in range(n):
            acc = np.uint8(0)
            for s in range(n_suites):
                acc |= suite_versions[i, s] & suite_versions[j, s]
            totals[i, acc] += weights[i] * weights[j]
    return totals.sum(axis=0)


def _bucket_counts_numpy(suite_versions, weights):
    n, n_suites = suite_versions.shape
    counts = np.zeros(BUCKET_SPACE, dtype=np.int64)
    for lo in range(0, n, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, n)
        block = np.zeros((hi - lo, n), dtype=np.uint8)
        for s in range(n_suites):
            block |= suite_versions[lo:hi, s, None] & suite_versions[None, :, s]
        pair_weights = weights[lo:hi, None] * weights[None, :]
        np.add.at(counts, block.ravel(), pair_weights.ravel())
    return counts


def bucket_counts(suite_versions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """int64[32]: summed w_i*w_j per version-set bucket over ordered pairs."""
    suite_versions = np.ascontiguousarray(suite_versions, dtype=np.uint8)
    weights = np.ascontiguousarray(weights, dtype=np.int64)
    if suite_versions.shape[0] == 0:
        return np.zeros(BUCKET_SPACE, dtype=np.int64)
    if use_numba():
        return _bucket_counts_numba(suite_versions, weights)
    return _bucket_counts_numpy(suite_versions, weights)


# ---------------------------------------------------------------------------
# Per-suite attribution


@njit(cache=True, parallel=True)
def _attribution_numba(suite_versions, weights):  # pragma: no cover
    n, n_suites = suite_versions.shape
    totals = np.zeros((n, n_suites + 1), dtype=np.int64)
    for i in prange(n):
        for j in range(n):
            hit = n_suites  # the trailing slot counts incompatible pairs
            for s in range(n_suites):
                if suite_versions[i, s] & suite_versions[j, s]:
                    hit = s
                    break
            totals[i, hit] += weights[i] * weights[j]
    return totals.sum(axis=0)


def _attribution_numpy(suite_versions, weights):
    n, n_suites = suite_versions.shape
    counts = np.zeros(n_suites + 1, dtype=np.int64)
    for lo in range(0, n, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, n)
        pair_weights = weights[lo:hi, None] * weights[None, :]
        unassigned = np.ones((hi - lo, n), dtype=bool)
        for s in range(n_suites):
            common = (
                suite_versions[lo:hi, s, None] & suite_versions[None, :, s]
            ).astype(bool)
            take = common & unassigned
            counts[s] += int(pair_weights[take].sum())
            unassigned &= ~take
            if not unassigned.any():
                break
        counts[n_suites] += int(pair_weights[unassigned].sum())
    return counts


def attribution_counts(
    suite_versions: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """int64[n_suites + 1]: pair mass attributed to the first matching suite.

    Suite columns must already be in ranking order (best first); the last
    slot collects incompatible (plaintext-only) pairs.
    """
    suite_versions = np.ascontiguousarray(suite_versions, dtype=np.uint8)
    weights = np.ascontiguousarray(weights, dtype=np.int64)
    n, n_suites = suite_versions.shape
    if n == 0:
        return np.zeros(n_suites + 1, dtype=np.int64)
    if use_numba():
        return _attribution_numba(suite_versions, weights)
    return _attribution_numpy(suite_versions, weights)
