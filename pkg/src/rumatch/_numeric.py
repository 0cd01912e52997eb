"""Small numerical helpers shared by several modules."""

import numpy as np


def make_rng(seed):
    """Counter-based generator (Philox) for a 64-bit integer seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def spawn_seeds(seed, n):
    """Derive ``n`` independent 64-bit seeds from ``seed``.

    Child ``k`` depends only on ``(seed, k)``, so the order in which the
    children are consumed does not matter.
    """
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def largest_remainder(weights, total):
    """Apportion ``total`` units proportionally to ``weights``.

    Each entry is the floor or the ceiling of ``total * w``; leftover units go
    to the largest fractional parts, lowest index first on ties.
    """
    w = np.asarray(weights, dtype=float)
    exact = total * w
    counts = np.floor(exact).astype(np.int64)
    left = int(total - counts.sum())
    if left > 0:
        frac = exact - counts
        # stable sort on -frac keeps lower indices first among equal remainders
        order = np.argsort(-frac, kind="stable")
        counts[order[:left]] += 1
    return counts
