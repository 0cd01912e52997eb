"""Exhaustive oracles for tiny markets, used to cross-check the solvers."""

import itertools

import numpy as np

from .exceptions import PreconditionError

MAX_BRUTE_FORCE_N = 10
MAX_GRID_DIMS = 2


def _brand_sequences(counts):
    """Every brand-per-consumer vector with ``counts[j]`` copies of ``j``."""
    n = int(np.sum(counts))
    remaining = list(map(int, counts))
    seq = [0] * n

    def rec(i):
        if i == n:
            yield tuple(seq)
            return
        for j, left in enumerate(remaining):
            if left:
                remaining[j] -= 1
                seq[i] = j
                yield from rec(i + 1)
                remaining[j] += 1

    yield from rec(0)


def brute_force_oracle(shocks, counts, rel_tol=1e-12):
    """Maximum total surplus over all allocations respecting ``counts``.

    Returns
    -------
    best : float
    optimal : list of tuple
        Brand-per-consumer vectors attaining ``best`` (up to ``rel_tol``).
    """
    shocks = np.asarray(shocks, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    n = shocks.shape[0]
    if n > MAX_BRUTE_FORCE_N:
        raise PreconditionError(f"brute force is limited to N <= {MAX_BRUTE_FORCE_N}, got {n}")
    if shocks.ndim != 2 or shocks.shape[1] != counts.size or counts.sum() != n or np.any(counts < 0):
        raise PreconditionError("counts must be non-negative, one per column, and sum to N")
    seqs = np.array(list(_brand_sequences(counts)), dtype=np.int64).reshape(-1, n)
    values = shocks[np.arange(n), seqs].sum(axis=1)
    best = float(values.max())
    tol = rel_tol * max(1.0, abs(best))
    optimal = [tuple(map(int, s)) for s in seqs[values >= best - tol]]
    return best, optimal


def _axis(lo, hi, step):
    k = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(k + 1)


def grid_search_identified_set(model, market, lo, hi, step):
    """All grid points ``delta`` whose argmax demand hits the jar counts exactly.

    Parameters
    ----------
    lo, hi : array_like, shape (J,)
        Box for ``delta_1..delta_J`` (``delta_0 = 0``).
    step : float or array_like
        Grid spacing, scalar or one per dimension.

    Returns
    -------
    ndarray, shape (K, J0)
        Possibly empty.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n_free = model.num_alternatives - 1
    if n_free > MAX_GRID_DIMS:
        raise PreconditionError(f"grid search supports at most {MAX_GRID_DIMS} free dimensions")
    if lo.shape != (n_free,) or hi.shape != (n_free,):
        raise PreconditionError("box needs one interval per free dimension")
    step = np.broadcast_to(np.asarray(step, dtype=float), (n_free,))
    if np.any(step <= 0) or np.any(hi < lo):
        raise PreconditionError("need positive steps and lo <= hi")
    axes = [_axis(a, b, h) for a, b, h in zip(lo, hi, step)]
    draws = market.draws
    shocks = model.shocks(draws) if model.additive else None
    hits = []
    for point in itertools.product(*axes):
        delta = np.concatenate([[0.0], point])
        util = shocks + delta if shocks is not None else model.utilities(draws, delta)
        pi = np.bincount(np.argmax(util, axis=1), minlength=model.num_alternatives)
        if np.array_equal(pi, market.counts):
            hits.append(delta)
    return np.array(hits).reshape(-1, model.num_alternatives)
