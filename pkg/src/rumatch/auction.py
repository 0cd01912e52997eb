"""Auction algorithm for additive models and the lattice-bound operators.

Consumers bid for jars of yogurt; jar ``k`` belongs to brand
``brand_of_jar[k]`` and carries a price ``p_k = -delta``.  Once bidding is
over, the identified set of the discretised market is bracketed by iterating
two monotone operators from ``-inf`` (lower bound) and ``+inf`` (upper bound)
with the optimal allocation held fixed.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NonConvergenceError, PreconditionError

# cycle gains and fixed-point changes below this many ulps of the largest shock count as zero
ROUNDING_ULPS = 64


def _rounding_tol(shocks):
    return ROUNDING_ULPS * np.finfo(float).eps * max(1.0, float(np.max(np.abs(shocks))))


@dataclass(frozen=True)
class EpsilonSchedule:
    """Bid increments ``start, start*factor, ...`` down to ``final``."""

    start: float
    factor: float
    final: float

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise PreconditionError("shrink factor must lie in (0, 1)")
        if not 0.0 < self.final <= self.start:
            raise PreconditionError("need 0 < final <= start")

    @classmethod
    def default(cls, shocks, eta_tol=1e-4):
        span = float(np.ptp(shocks)) if np.size(shocks) else 0.0
        final = eta_tol / 2.0
        return cls(start=max(span / 4.0, final), factor=0.2, final=final)

    def steps(self):
        eps = self.start
        while True:
            yield eps
            if eps <= self.final:
                return
            eps = max(eps * self.factor, self.final)


@dataclass(frozen=True)
class Allocation:
    """Consumer to jar bijection plus the brand of each jar."""

    jar_of_consumer: np.ndarray
    brand_of_jar: np.ndarray

    @property
    def brand_of_consumer(self):
        return self.brand_of_jar[self.jar_of_consumer]

    @classmethod
    def from_brands(cls, brand_of_consumer, counts):
        """Hand out the jars of each brand to its consumers in index order."""
        brand = np.asarray(brand_of_consumer, dtype=np.int64)
        brand_of_jar = jars_for_counts(counts)
        if not np.array_equal(np.bincount(brand, minlength=len(counts)), np.asarray(counts)):
            raise PreconditionError("brand assignment does not match the jar counts")
        jar = np.empty_like(brand)
        # consumers sorted by brand line up with jars, which are grouped by brand
        jar[np.argsort(brand, kind="stable")] = np.arange(brand.size)
        return cls(jar_of_consumer=jar, brand_of_jar=brand_of_jar)


def jars_for_counts(counts):
    """``brand_of_jar`` with ``m_j`` consecutive jars for brand ``j``."""
    counts = np.asarray(counts, dtype=np.int64)
    return np.repeat(np.arange(counts.size), counts)


def _check_square(shocks, counts):
    shocks = np.asarray(shocks, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    if shocks.ndim != 2 or shocks.shape[1] != counts.size:
        raise PreconditionError("shock matrix needs one column per brand")
    if np.any(counts < 1):
        raise PreconditionError("every brand needs at least one jar")
    if counts.sum() != shocks.shape[0]:
        raise PreconditionError(f"{counts.sum()} jars for {shocks.shape[0]} consumers")
    return shocks, counts


def _bids(shocks, pmin, bidders):
    """Best brand, acceptable price ceiling and bid of each bidder.

    The second-best value ``w`` only looks at brands other than the preferred
    one; the ceiling is ``eps_ij* - w``, i.e. the highest price at which the
    consumer still weakly prefers brand ``j*``.
    """
    vals = shocks[bidders] - pmin
    best = np.argmax(vals, axis=1)
    rows = np.arange(bidders.size)
    if vals.shape[1] > 1:
        vals[rows, best] = -np.inf
        w = vals.max(axis=1)
    else:
        # lone brand: no competing value, use a sentinel one span below the data
        w = np.full(bidders.size, float(np.min(shocks) - np.min(pmin)) - (np.ptp(shocks) + 1.0))
    ceiling = shocks[bidders, best] - w
    return best, ceiling


def _auction_phase(shocks, jars_by_brand, prices, eps):
    n, n_brands = shocks.shape
    owner = np.full(n, -1, dtype=np.int64)
    jar_of = np.full(n, -1, dtype=np.int64)
    unassigned = np.arange(n)
    rounds = 0
    while unassigned.size:
        rounds += 1
        pmin = np.array([prices[jars].min() for jars in jars_by_brand])
        best, ceiling = _bids(shocks, pmin, unassigned)
        bid = ceiling + eps
        evicted = []
        for j in np.unique(best):
            sel = best == j
            who = unassigned[sel]
            # highest bid first, lowest consumer index on ties
            order = np.lexsort((who, -bid[sel]))
            who, cap, offer = who[order], ceiling[sel][order], bid[sel][order]
            jars = jars_by_brand[j]
            jars = jars[np.argsort(prices[jars], kind="stable")]
            k = min(who.size, jars.size)
            ok = prices[jars[:k]] <= cap[:k]
            ok[0] = True  # the top bidder always clears the cheapest jar
            k = int(np.argmin(ok)) if not ok.all() else k
            won_jars, winners = jars[:k], who[:k]
            prev = owner[won_jars]
            evicted.append(prev[prev >= 0])
            jar_of[prev[prev >= 0]] = -1
            owner[won_jars] = winners
            jar_of[winners] = won_jars
            prices[won_jars] = offer[:k]
        unassigned = np.flatnonzero(jar_of < 0)
    return jar_of, rounds


def auction_assign(shocks, counts, schedule=None):
    """Epsilon-scaled auction for the consumer/jar assignment game.

    Parameters
    ----------
    shocks : ndarray, shape (N, J0)
        Additive shocks; the surplus of consumer ``i`` with any jar of brand
        ``j`` is ``shocks[i, j]``.
    counts : array_like, shape (J0,)
        Jars per brand, summing to ``N``.
    schedule : EpsilonSchedule, optional
        Defaults to :meth:`EpsilonSchedule.default`.

    Returns
    -------
    allocation : Allocation
    prices : ndarray, shape (N,)
        Final jar prices.  Every consumer's brand is within ``schedule.final``
        of her best brand valued at ``-min`` price.
    """
    shocks, counts = _check_square(shocks, counts)
    schedule = schedule or EpsilonSchedule.default(shocks)
    brand_of_jar = jars_for_counts(counts)
    jars_by_brand = [np.flatnonzero(brand_of_jar == j) for j in range(counts.size)]
    prices = np.zeros(shocks.shape[0])
    for eps in schedule.steps():
        # jars of one brand are interchangeable: each phase restarts them at the brand's lowest price
        for jars in jars_by_brand:
            prices[jars] = prices[jars].min()
        jar_of, _ = _auction_phase(shocks, jars_by_brand, prices, eps)
    return Allocation(jar_of_consumer=jar_of, brand_of_jar=brand_of_jar), prices


def delta_from_prices(prices, brand_of_jar):
    """``delta_j = -min`` price over jars of brand ``j``, shifted so ``delta_0 = 0``."""
    prices = np.asarray(prices, dtype=float)
    brand_of_jar = np.asarray(brand_of_jar, dtype=np.int64)
    n_brands = int(brand_of_jar.max()) + 1 if brand_of_jar.size else 0
    pmin = np.full(n_brands, np.inf)
    np.minimum.at(pmin, brand_of_jar, prices)
    if n_brands == 0 or np.any(np.isinf(pmin)):
        raise PreconditionError("every brand needs at least one jar")
    delta = -pmin
    return delta - delta[0]


def surplus(shocks, brand_of_consumer):
    brand = np.asarray(brand_of_consumer, dtype=np.int64)
    return float(np.asarray(shocks)[np.arange(brand.size), brand].sum())


def _brand_gain(shocks, brand):
    """``gain[j, k] = max_{i in j} (eps_ik - eps_ij)`` and the arg-max consumer."""
    n_brands = shocks.shape[1]
    rel = shocks - shocks[np.arange(brand.size), brand][:, None]
    gain = np.full((n_brands, n_brands), -np.inf)
    who = np.full((n_brands, n_brands), -1, dtype=np.int64)
    for j in range(n_brands):
        members = np.flatnonzero(brand == j)
        if members.size:
            arg = np.argmax(rel[members], axis=0)
            gain[j] = rel[members][arg, np.arange(n_brands)]
            who[j] = members[arg]
    np.fill_diagonal(gain, -np.inf)
    return gain, who


def _positive_cycle(gain, tol):
    """A cycle of brands with total gain above ``tol``, or None."""
    n = gain.shape[0]
    dist = np.zeros(n)
    pred = np.full(n, -1, dtype=np.int64)
    last = -1
    for _ in range(n):
        cand = dist[:, None] + gain
        src = np.argmax(cand, axis=0)
        new = cand[src, np.arange(n)]
        better = new > dist + tol
        if not better.any():
            return None
        dist[better] = new[better]
        pred[better] = src[better]
        last = int(np.flatnonzero(better)[0])
    # still relaxing after n passes: walk back n steps to land on the cycle
    node = last
    for _ in range(n):
        node = pred[node]
    cycle = [node]
    cur = pred[node]
    while cur != node:
        cycle.append(int(cur))
        cur = pred[cur]
    cycle.reverse()
    total = sum(gain[cycle[t], cycle[(t + 1) % len(cycle)]] for t in range(len(cycle)))
    return cycle if total > tol else None


def polish_allocation(shocks, allocation, max_cycles=100000):
    """Cancel surplus-improving cycles of brand swaps.

    The auction only guarantees surplus within ``N * eps`` of the optimum;
    the bound operators need an exactly optimal allocation, otherwise their
    iteration diverges along a positive cycle.  Each cancelled cycle moves
    one consumer out of every brand on the cycle, so jar counts are kept.
    """
    shocks = np.asarray(shocks, dtype=float)
    brand = allocation.brand_of_consumer.copy()
    counts = np.bincount(brand, minlength=shocks.shape[1])
    tol = _rounding_tol(shocks)
    for _ in range(max_cycles):
        gain, who = _brand_gain(shocks, brand)
        cycle = _positive_cycle(gain, tol)
        if cycle is None:
            break
        moves = [(who[cycle[t], cycle[(t + 1) % len(cycle)]], cycle[(t + 1) % len(cycle)]) for t in range(len(cycle))]
        for i, k in moves:
            brand[i] = k
    else:
        raise NonConvergenceError("cycle cancelling did not terminate", diagnostics={"cycles": max_cycles})
    return Allocation.from_brands(brand, counts)


def _group_max(values, brand, n_brands):
    out = np.full(n_brands, -np.inf)
    np.maximum.at(out, brand, values)
    return out


def _changed(new, old):
    """Largest finite change, or inf when an entry left +-inf."""
    fin = np.isfinite(new) & np.isfinite(old)
    if not np.array_equal(np.isfinite(new), np.isfinite(old)):
        return np.inf
    return float(np.max(np.abs(new[fin] - old[fin]))) if fin.any() else 0.0


def iterate_lower_bounds(shocks, allocation):
    """Yield ``delta`` after every sweep of the lower-bound operator.

    Starts from ``u = -inf``, ``delta = -inf`` (``delta_0 = 0``) and applies
    ``u_i <- max(u_i, max_j delta_j + eps_ij)`` followed by
    ``delta_j <- max(delta_j, max_{i matched to j} u_i - eps_ij)``.
    """
    shocks = np.asarray(shocks, dtype=float)
    n, n_brands = shocks.shape
    brand = allocation.brand_of_consumer
    own = shocks[np.arange(n), brand]
    u = np.full(n, -np.inf)
    delta = np.full(n_brands, -np.inf)
    delta[0] = 0.0
    cap = n * n_brands
    tol = _rounding_tol(shocks)
    for sweep in range(cap):
        u_new = np.maximum(u, np.max(shocks + delta, axis=1))
        d_new = np.maximum(delta, _group_max(u_new - own, brand, n_brands))
        d_new[0] = 0.0
        change = max(_changed(u_new, u), _changed(d_new, delta))
        u, delta = u_new, d_new
        yield delta.copy()
        if change <= tol:
            return
    raise NonConvergenceError(
        "lower-bound iteration exceeded its sweep cap; the allocation is not optimal",
        last_iterate=delta, diagnostics={"sweeps": cap})


def iterate_upper_bounds(shocks, allocation):
    """Mirror image of :func:`iterate_lower_bounds`, descending from ``+inf``."""
    shocks = np.asarray(shocks, dtype=float)
    n, n_brands = shocks.shape
    brand = allocation.brand_of_consumer
    own = shocks[np.arange(n), brand]
    u = np.full(n, np.inf)
    delta = np.full(n_brands, np.inf)
    delta[0] = 0.0
    cap = n * n_brands
    tol = _rounding_tol(shocks)
    for sweep in range(cap):
        d_new = np.minimum(delta, np.min(u[:, None] - shocks, axis=0))
        d_new[0] = 0.0
        u_new = np.minimum(u, d_new[brand] + own)
        change = max(_changed(u_new, u), _changed(d_new, delta))
        u, delta = u_new, d_new
        yield delta.copy()
        if change <= tol:
            return
    raise NonConvergenceError(
        "upper-bound iteration exceeded its sweep cap; the allocation is not optimal",
        last_iterate=delta, diagnostics={"sweeps": cap})


def _last(iterator):
    delta = None
    for delta in iterator:
        pass
    return delta


def propagate_lower_bounds(shocks, allocation):
    """Least fixed point: the lattice lower bound supported by ``allocation``."""
    return _last(iterate_lower_bounds(shocks, allocation))


def propagate_upper_bounds(shocks, allocation):
    """Greatest fixed point: the lattice upper bound supported by ``allocation``."""
    return _last(iterate_upper_bounds(shocks, allocation))


@dataclass(frozen=True)
class AuctionResult:
    delta_point: np.ndarray
    delta_lower: np.ndarray
    delta_upper: np.ndarray
    allocation: Allocation
    prices: np.ndarray
    eps_final: float
    gap_threshold: float

    @property
    def gap(self):
        return float(np.max(self.delta_upper - self.delta_lower))

    @property
    def point_identified(self):
        return self.gap <= self.gap_threshold

    def to_dict(self):
        return {
            "delta_point": self.delta_point.tolist(),
            "delta_lower": self.delta_lower.tolist(),
            "delta_upper": self.delta_upper.tolist(),
            "gap": self.gap,
            "point_identified": self.point_identified,
        }


def invert_auction(shocks, counts, schedule=None, gap_threshold=0.05):
    """Auction, cycle polishing and both bound operators in one call."""
    shocks, counts = _check_square(shocks, counts)
    schedule = schedule or EpsilonSchedule.default(shocks)
    allocation, prices = auction_assign(shocks, counts, schedule)
    point = delta_from_prices(prices, allocation.brand_of_jar)
    optimal = polish_allocation(shocks, allocation)
    lower = propagate_lower_bounds(shocks, optimal)
    upper = propagate_upper_bounds(shocks, optimal)
    return AuctionResult(point, lower, upper, optimal, prices, schedule.final, gap_threshold)
