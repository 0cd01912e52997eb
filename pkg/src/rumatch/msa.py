"""Market-share adjustment: deferred acceptance on brand-level utilities.

The consumer-proposing variant walks ``delta`` down from above and returns
the lattice upper bound; the lower-bound variant descends below the set and
climbs back up.  Both work with any :class:`~rumatch.models.UtilityModel`,
additive or not, since they only ever evaluate demand at a given ``delta``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .auction import EpsilonSchedule, auction_assign
from .exceptions import NonConvergenceError, PreconditionError

# rounds allowed inside a single deferred-acceptance pass before giving up
MAX_INNER_ROUNDS = 1_000_000


@dataclass(frozen=True)
class MsaParams:
    """Step sizes (utility units) and the outer-loop safety cap."""

    eta_init: float = 1.0
    eta_tol: float = 1e-4
    max_outer_iterations: int = 1000

    def __post_init__(self):
        if not 0.0 < self.eta_tol < self.eta_init:
            raise PreconditionError("need 0 < eta_tol < eta_init")
        if int(self.max_outer_iterations) < 1:
            raise PreconditionError("max_outer_iterations must be at least 1")


@dataclass
class MsaResult:
    """Output of an MSA run.

    ``step`` is the smallest adjustment actually applied to ``delta``; the
    returned vector sits within a couple of such steps of the bound.
    """

    delta: np.ndarray
    step: float
    outer_iterations: int
    rounds: int
    trace: list = field(default_factory=list, repr=False)


class _Demand:
    """Choice counts at ``delta`` with the lowest index winning ties."""

    def __init__(self, model, market, record):
        self.model = model
        self.draws = market.draws
        self.counts = market.counts
        self.rounds = 0
        self.record = record
        self.trace = []
        # additive models only need their shock matrix once
        self._shocks = model.shocks(self.draws) if model.additive else None

    def __call__(self, delta, eta, probe=False):
        self.rounds += 1
        if self.rounds > MAX_INNER_ROUNDS:
            raise NonConvergenceError(
                "MSA exceeded its round budget", last_iterate=delta.copy(),
                diagnostics={"rounds": self.rounds, "eta": eta})
        util = self._shocks + delta if self._shocks is not None else self.model.utilities(self.draws, delta)
        pi = np.bincount(np.argmax(util, axis=1), minlength=self.counts.size)
        if self.record and not probe:
            self.trace.append((self.rounds, float(eta), pi - self.counts))
        return pi


def _run_length(demand, delta, move, eta, pattern, expected):
    """How many identical steps ``delta + k * eta * move`` the loop would take.

    Along such a run every test the loop makes (brand 0 over or under
    supplied, which brands are in excess) changes at most once, because
    moving one group of brands together shifts consumers monotonically.  So
    the pattern holds at every intermediate point iff it holds at the last
    one, and the run can be located by doubling and bisection.  The result
    is the same trajectory as stepping one ``eta`` at a time.
    """
    def holds(k):
        return pattern(demand(delta + k * eta * move, eta, probe=True)) == expected

    good, bad = 0, None
    k = 1
    while k < 2**40:
        if not holds(k):
            bad = k
            break
        good, k = k, 2 * k
    if bad is None:
        return good + 1
    while bad - good > 1:
        mid = (good + bad) // 2
        if holds(mid):
            good = mid
        else:
            bad = mid
    return good + 1


def _upper_pass(demand, delta, eta, eta_tol):
    """One consumer-proposing deferred-acceptance pass.

    Returns the final ``delta``, the step after the last division and the
    last step that was actually applied.
    """
    m = demand.counts

    def pattern(pi):
        return (bool(pi[0] < m[0]), tuple(pi[1:] > m[1:]))

    applied = eta
    while eta >= eta_tol:
        pi = demand(delta, eta)
        if pi[0] < m[0]:
            move = np.zeros_like(delta)
            move[1:] = -1.0 * (pi[1:] > m[1:])
            k = _run_length(demand, delta, move, eta, pattern, pattern(pi))
            delta += k * eta * move
        else:
            delta[1:] += 2.0 * eta
            applied = eta
            eta /= 4.0
    return delta, eta, applied


def initial_upper(model, market):
    """``max_i U^{-1}_{eps_i j}(U_{eps_i 0}(0))``: every consumer weakly prefers brand j."""
    draws = market.draws
    u0 = model.utility(draws, 0, 0.0)
    delta = np.array([np.max(model.inverse(draws, j, u0)) for j in range(model.num_alternatives)])
    delta[0] = 0.0
    return delta


def msa_upper(model, market, params=None, record_trace=False):
    """Consumer-proposing MSA, approximating the lattice upper bound.

    Parameters
    ----------
    model : UtilityModel
    market : DiscreteMarket
    params : MsaParams, optional
    record_trace : bool
        Keep ``(round, eta, excess demand)`` for every demand evaluation.

    Returns
    -------
    MsaResult

    Notes
    -----
    Each outer iteration restarts at ``delta' + 2 eta'`` where ``eta'`` is the
    step left after the final division.  That step is below ``eta_tol``, so
    the restarted pass uses ``4 eta'`` (the last step it applied) to be able
    to move at all.  The loop ends once a pass lowers every ``delta_j``.
    """
    params = params or MsaParams()
    demand = _Demand(model, market, record_trace)
    n_alt = model.num_alternatives
    delta = initial_upper(model, market)
    if n_alt == 1:
        return MsaResult(np.zeros(1), params.eta_tol, 0, 0, demand.trace)
    eta_init = params.eta_init
    for outer in range(1, int(params.max_outer_iterations) + 1):
        start = delta.copy()
        delta, eta_ret, applied = _upper_pass(demand, delta.copy(), eta_init, params.eta_tol)
        if np.all(delta[1:] < start[1:]):
            return MsaResult(delta, applied, outer, demand.rounds, demand.trace)
        delta = delta + 2.0 * eta_ret
        delta[0] = 0.0
        eta_init = 4.0 * eta_ret
    raise NonConvergenceError(
        "MSA upper bound did not settle within max_outer_iterations",
        last_iterate=delta, diagnostics={"outer_iterations": params.max_outer_iterations,
                                         "rounds": demand.rounds})


def _lower_first_pass(demand, delta, eta, eta_tol):
    """Descend below the lower bound using per-brand block flags."""
    m = demand.counts
    block = np.zeros(m.size - 1, dtype=bool)

    def pattern(pi):
        return (bool(pi[0] > m[0]), tuple(pi[1:] < m[1:]))

    applied = eta
    while eta >= eta_tol:
        pi = demand(delta, eta)
        if block.all():
            delta[1:] += 2.0 * eta
            block[:] = False
            applied = eta
            eta /= 4.0
            continue
        short = pi[1:] < m[1:]
        move = np.zeros_like(delta)
        move[1:] = -1.0 * ~short
        block[short] = pi[0] > m[0]
        if block.all():
            delta += eta * move
            continue
        # with the flags settled, repeating the same step leaves them unchanged
        k = _run_length(demand, delta, move, eta, pattern, pattern(pi))
        delta += k * eta * move
    return delta, applied


def _lower_second_pass(demand, delta, eta):
    """Raise under-demanded brands by ``eta`` while brand 0 is over-demanded."""
    m = demand.counts

    def pattern(pi):
        return (bool(pi[0] > m[0]), tuple(pi[1:] < m[1:]))

    pi = demand(delta, eta)
    while pi[0] > m[0]:
        move = np.zeros_like(delta)
        move[1:] = pi[1:] < m[1:]
        k = _run_length(demand, delta, move, eta, pattern, pattern(pi))
        delta += k * eta * move
        pi = demand(delta, eta)
    return delta


def msa_lower(model, market, delta_upper, params=None, record_trace=False):
    """Lower-bound MSA started from the output of :func:`msa_upper`.

    The first loop pushes ``delta`` below the lower bound with steps
    shrinking from ``eta_init``; the second loop climbs back with the fixed
    step ``eta_tol``, restarting ``2 eta_tol`` lower until a pass raises
    every ``delta_j``.
    """
    params = params or MsaParams()
    demand = _Demand(model, market, record_trace)
    delta_upper = np.asarray(getattr(delta_upper, "delta", delta_upper), dtype=float)
    if delta_upper.shape != (model.num_alternatives,):
        raise PreconditionError("upper bound must have one entry per alternative")
    if model.num_alternatives == 1:
        return MsaResult(np.zeros(1), params.eta_tol, 0, 0, demand.trace)
    delta, _ = _lower_first_pass(demand, delta_upper.copy(), params.eta_init, params.eta_tol)
    eta = params.eta_tol
    for outer in range(1, int(params.max_outer_iterations) + 1):
        start = delta.copy()
        delta = _lower_second_pass(demand, delta.copy(), eta)
        if np.all(delta[1:] > start[1:]):
            return MsaResult(delta, eta, outer, demand.rounds, demand.trace)
        delta = delta - 2.0 * eta
        delta[0] = 0.0
    raise NonConvergenceError(
        "MSA lower bound did not settle within max_outer_iterations",
        last_iterate=delta, diagnostics={"outer_iterations": params.max_outer_iterations,
                                         "rounds": demand.rounds})


def implied_allocation(model, market, delta, eps_final=None):
    """A jar allocation that fits ``delta``: the best assignment of ``U(delta)``.

    The argmax choices at ``delta`` need not use exactly ``m_j`` jars of each
    brand; the auction on the utility matrix ``U_{eps_i j}(delta_j)`` repairs
    that with the smallest possible utility sacrifice (up to ``N eps_final``).
    """
    util = model.utilities(market.draws, np.asarray(delta, dtype=float))
    schedule = EpsilonSchedule.default(util)
    if eps_final is not None:
        schedule = EpsilonSchedule(max(schedule.start, eps_final), schedule.factor, eps_final)
    allocation, _ = auction_assign(util, market.counts, schedule)
    return allocation


def write_trace_csv(result, path):
    """``round, eta, excess_<j>`` rows from a run made with ``record_trace=True``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n_alt = len(result.trace[0][2]) if result.trace else 0
        writer.writerow(["round", "eta"] + [f"excess_{j}" for j in range(n_alt)])
        for rnd, eta, excess in result.trace:
            writer.writerow([rnd, repr(eta)] + [int(e) for e in excess])


__all__ = ["MsaParams", "MsaResult", "msa_upper", "msa_lower", "implied_allocation",
           "initial_upper", "write_trace_csv"]
