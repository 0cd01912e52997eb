"""Finite matching markets: N sampled consumers facing N jars split into brands."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from ._numeric import largest_remainder
from .exceptions import ConfigurationError, PreconditionError
from .models import ConsumerSample, UtilityModel, check_shares, draw_sample, model_from_dict


def discretize_shares(s, n):
    """Integer jar counts ``m_j`` adjacent to ``n * s_j`` that sum to ``n``.

    Largest-remainder apportionment, lowest index first on ties.  A brand
    that would receive no jar takes one from the currently largest brand.
    """
    s = check_shares(s)
    n = int(n)
    if n < s.size:
        raise PreconditionError(f"N={n} is smaller than the number of alternatives ({s.size})")
    counts = largest_remainder(s, n)
    for j in np.flatnonzero(counts == 0):
        donor = int(np.argmax(counts))
        counts[donor] -= 1
        counts[j] += 1
    return counts


@dataclass(frozen=True)
class DiscreteMarket:
    """Jar counts per brand paired with the consumer sample they face."""

    model: UtilityModel
    counts: np.ndarray
    sample: ConsumerSample

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.shape != (self.model.num_alternatives,):
            raise PreconditionError("need one jar count per alternative")
        if np.any(counts < 1):
            raise PreconditionError("every brand needs at least one jar")
        if counts.sum() != self.sample.size:
            raise PreconditionError(f"{counts.sum()} jars for {self.sample.size} consumers")

    @property
    def size(self):
        return self.sample.size

    @property
    def shares(self):
        return self.counts / self.size

    @property
    def draws(self):
        return self.sample.draws

    @classmethod
    def from_shares(cls, model, shares, n, seed):
        if isinstance(model, dict):
            model = model_from_dict(model)
        return cls(model, discretize_shares(shares, n), draw_sample(model, n, seed))

    def to_dict(self):
        return {
            "shares": self.shares.tolist(),
            "N": int(self.size),
            "seed": int(self.sample.seed),
            "model": self.model.to_dict(),
        }


def market_from_dict(doc):
    """Rebuild a market from ``{shares, N, seed, model}``."""
    try:
        return DiscreteMarket.from_shares(doc["model"], doc["shares"], doc["N"], doc["seed"])
    except KeyError as exc:
        raise ConfigurationError(f"market document is missing {exc}") from None


def load_market(path):
    with open(path) as fh:
        return market_from_dict(json.load(fh))


def save_market(market, path):
    with open(path, "w") as fh:
        json.dump(market.to_dict(), fh, indent=2)
        fh.write("\n")


def dump_sample_csv(sample, path):
    """Write one row per consumer draw (debugging aid)."""
    draws = sample.draws
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["consumer"] + [f"draw_{k}" for k in range(draws.shape[1])])
        for i, row in enumerate(draws):
            writer.writerow([i] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of :func:`check_stability`.

    ``feasibility_slack`` is the largest ``u_i - U_{i j(i)}`` over matched
    pairs, with ``u_i`` the consumer's best attainable utility.
    ``blocking_pairs`` counts pairs ``(i, j)`` whose utility exceeds the
    matched one by more than ``tol``.
    """

    feasibility_slack: float
    blocking_pairs: int
    tol: float

    @property
    def stable(self):
        return self.blocking_pairs == 0 and self.feasibility_slack <= self.tol


def brand_assignment(allocation):
    """Brand index per consumer from an ``Allocation`` or a plain array."""
    brand = getattr(allocation, "brand_of_consumer", allocation)
    return np.asarray(brand, dtype=np.int64)


def check_stability(model, market, delta, allocation, tol=1e-9):
    """No-blocking-pair and pairwise-feasibility report for ``(delta, allocation)``."""
    brand = brand_assignment(allocation)
    n = market.size
    if brand.shape != (n,):
        raise PreconditionError("allocation must assign every consumer exactly once")
    if np.any(brand < 0) or np.any(brand >= model.num_alternatives):
        raise PreconditionError("allocation refers to an unknown brand")
    if not np.array_equal(np.bincount(brand, minlength=model.num_alternatives), market.counts):
        raise PreconditionError("allocation does not use exactly m_j jars of each brand")
    util = model.utilities(market.draws, delta)
    best = util.max(axis=1)
    matched = util[np.arange(n), brand]
    slack = float(np.max(best - matched))
    blocking = int(np.count_nonzero(util > matched[:, None] + tol))
    return StabilityReport(feasibility_slack=slack, blocking_pairs=blocking, tol=float(tol))
