import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rumatch import (Allocation, DiscreteMarket, EpsilonSchedule, LogitModel, auction_assign, delta_from_prices,
                     grid_search_identified_set, invert_auction, propagate_lower_bounds, propagate_upper_bounds)
from rumatch.auction import iterate_lower_bounds, iterate_upper_bounds, polish_allocation, surplus
from rumatch.exceptions import NonConvergenceError, PreconditionError
from rumatch.models import ConsumerSample
from rumatch.oracles import brute_force_oracle

HAND_SHOCKS = np.array([[0.0, 2.0], [0.0, 1.0]])


def _brand_values(shocks, allocation, prices):
    """Value of every brand to every consumer, each brand at its cheapest jar."""
    pmin = np.full(shocks.shape[1], np.inf)
    np.minimum.at(pmin, allocation.brand_of_jar, prices)
    return shocks - pmin[None, :]


def _raw_market(shocks, counts):
    """Market whose logit draws are exactly ``shocks``."""
    sample = ConsumerSample(draws=np.asarray(shocks, dtype=float), seed=0)
    return DiscreteMarket(LogitModel(len(counts)), counts, sample)


@st.composite
def small_instances(draw, max_n=8, max_brands=3):
    n_brands = draw(st.integers(2, max_brands))
    n = draw(st.integers(n_brands, max_n))
    cuts = sorted(draw(st.lists(st.integers(1, n - 1), min_size=n_brands - 1, max_size=n_brands - 1,
                                unique=True)))
    counts = np.diff([0] + cuts + [n])
    shocks = draw(arrays(np.float64, (n, n_brands), elements=st.floats(-5, 5, allow_subnormal=False)))
    return shocks, counts


def test_identity_surplus():
    alloc, prices = auction_assign(np.eye(2), [1, 1], EpsilonSchedule(0.5, 0.2, 1e-6))
    assert alloc.brand_of_consumer.tolist() == [0, 1]
    assert surplus(np.eye(2), alloc.brand_of_consumer) == 2.0


def test_equal_surplus():
    shocks = np.full((5, 3), 1.5)
    res = invert_auction(shocks, [2, 2, 1])
    assert surplus(shocks, res.allocation.brand_of_consumer) == pytest.approx(5 * 1.5)
    assert res.delta_upper == pytest.approx([0, 0, 0], abs=1e-12)
    assert res.delta_lower == pytest.approx([0, 0, 0], abs=1e-12)


def test_hand_fixed_points():
    res = invert_auction(HAND_SHOCKS, [1, 1], EpsilonSchedule(0.5, 0.2, 1e-8))
    assert res.allocation.brand_of_consumer.tolist() == [1, 0]
    assert res.delta_lower == pytest.approx([0.0, -2.0], abs=1e-12)
    assert res.delta_upper == pytest.approx([0.0, -1.0], abs=1e-12)


def test_hand_fixed_points_match_grid_search():
    hits = grid_search_identified_set(LogitModel(2), _raw_market(HAND_SHOCKS, [1, 1]), [-3.0], [0.0], 0.01)
    # index tie-breaking keeps delta_1 = -1 but drops delta_1 = -2
    assert hits[:, 1].min() == pytest.approx(-1.99)
    assert hits[:, 1].max() == pytest.approx(-1.0)


def test_delta_from_prices():
    assert delta_from_prices([-1.0, -1.0, -3.0], [0, 1, 1]).tolist() == [0.0, 2.0]
    assert delta_from_prices([0.7] * 4, [0, 1, 2, 2]).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(PreconditionError):
        delta_from_prices([0.0, 0.0], [0, 2])


def test_logit_equal_shares():
    model = LogitModel(2)
    market = DiscreteMarket.from_shares(model, [0.5, 0.5], 10_000, 4)
    alloc, prices = auction_assign(model.shocks(market.draws), market.counts)
    assert delta_from_prices(prices, alloc.brand_of_jar) == pytest.approx([0.0, 0.0], abs=0.05)


def test_point_identified_logit_bounds(logit_market):
    res = invert_auction(logit_market.model.shocks(logit_market.draws), logit_market.counts)
    assert res.point_identified
    assert res.delta_upper - res.delta_lower == pytest.approx(np.zeros(3), abs=0.01)
    assert res.delta_point == pytest.approx([0.0, -0.693147, -0.693147], abs=0.05)


def test_two_segment_bounds(two_segment_shocks, two_segment_market):
    res = invert_auction(two_segment_shocks, two_segment_market.counts)
    assert res.delta_lower == pytest.approx([0.0, 2.0, 1.0], abs=0.1)
    assert res.delta_upper == pytest.approx([0.0, 2.0, 3.0], abs=0.1)
    assert res.delta_point[1] == pytest.approx(2.0, abs=0.1)
    assert not res.point_identified


def test_shape_checks():
    with pytest.raises(PreconditionError):
        auction_assign(np.zeros((3, 2)), [1, 1])
    with pytest.raises(PreconditionError):
        auction_assign(np.zeros((2, 2)), [2, 0])
    with pytest.raises(PreconditionError):
        EpsilonSchedule(1.0, 1.5, 0.1)
    with pytest.raises(PreconditionError):
        EpsilonSchedule(0.1, 0.5, 1.0)


def test_schedule_steps():
    assert list(EpsilonSchedule(1.0, 0.2, 0.01).steps()) == pytest.approx([1.0, 0.2, 0.04, 0.01])
    assert list(EpsilonSchedule(0.5, 0.5, 0.5).steps()) == [0.5]


def test_allocation_from_brands():
    alloc = Allocation.from_brands([2, 0, 1, 0], [2, 1, 1])
    assert alloc.brand_of_consumer.tolist() == [2, 0, 1, 0]
    assert sorted(alloc.jar_of_consumer.tolist()) == [0, 1, 2, 3]
    with pytest.raises(PreconditionError):
        Allocation.from_brands([0, 0, 1, 1], [2, 1, 1])


def test_suboptimal_allocation_detected():
    shocks = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 5.0], [0.0, 5.0, 0.0]])
    bad = Allocation.from_brands([0, 1, 2], [1, 1, 1])
    with pytest.raises(NonConvergenceError):
        propagate_lower_bounds(shocks, bad)
    with pytest.raises(NonConvergenceError):
        propagate_upper_bounds(shocks, bad)
    fixed = polish_allocation(shocks, bad)
    assert surplus(shocks, fixed.brand_of_consumer) == brute_force_oracle(shocks, [1, 1, 1])[0]


@settings(max_examples=300, deadline=None)
@given(small_instances(), st.sampled_from([1e-1, 1e-3, 1e-6]))
def test_epsilon_complementary_slackness(case, final):
    shocks, counts = case
    alloc, prices = auction_assign(shocks, counts, EpsilonSchedule.default(shocks, 2 * final))
    values = _brand_values(shocks, alloc, prices)
    n = shocks.shape[0]
    assigned = values[np.arange(n), alloc.brand_of_consumer]
    assert np.all(assigned >= values.max(axis=1) - final - 1e-9)
    assert np.array_equal(np.bincount(alloc.brand_of_consumer, minlength=counts.size), counts)
    assert sorted(alloc.jar_of_consumer.tolist()) == list(range(n))


@settings(max_examples=300, deadline=None)
@given(small_instances())
def test_matches_brute_force(case):
    shocks, counts = case
    res = invert_auction(shocks, counts)
    best, optimal = brute_force_oracle(shocks, counts)
    n = shocks.shape[0]
    raw, _ = auction_assign(shocks, counts)
    assert surplus(shocks, raw.brand_of_consumer) >= best - n * res.eps_final - 1e-9
    # after cycle polishing the allocation is exactly optimal
    assert surplus(shocks, res.allocation.brand_of_consumer) == pytest.approx(best, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(small_instances())
def test_bound_iterations_are_monotone(case):
    shocks, counts = case
    alloc = invert_auction(shocks, counts).allocation
    prev = None
    for delta in iterate_lower_bounds(shocks, alloc):
        if prev is not None:
            assert np.all(delta >= prev)
        prev = delta
    prev = None
    for delta in iterate_upper_bounds(shocks, alloc):
        if prev is not None:
            assert np.all(delta <= prev)
        prev = delta


@settings(max_examples=200, deadline=None)
@given(small_instances())
def test_bounds_bracket_point(case):
    shocks, counts = case
    res = invert_auction(shocks, counts)
    slack = counts.size * res.eps_final + 1e-9
    assert np.all(res.delta_lower <= res.delta_point + slack)
    assert np.all(res.delta_point <= res.delta_upper + slack)
    assert np.all(res.delta_lower <= res.delta_upper + 1e-9)


@settings(max_examples=100, deadline=None)
@given(small_instances(max_n=6))
def test_bounds_rationalise_counts(case):
    shocks, counts = case
    res = invert_auction(shocks, counts)
    alloc = res.allocation.brand_of_consumer
    for delta in (res.delta_lower, res.delta_upper):
        util = shocks + delta
        matched = util[np.arange(shocks.shape[0]), alloc]
        assert np.all(util <= matched[:, None] + 1e-9)


def test_to_dict_fields(two_segment_shocks, two_segment_market):
    doc = invert_auction(two_segment_shocks, two_segment_market.counts).to_dict()
    assert set(doc) == {"delta_point", "delta_lower", "delta_upper", "gap", "point_identified"}
    assert doc["point_identified"] is False


def test_polish_cancels_small_cycle_next_to_large_shocks():
    # a swap worth 2e-7 must be found even though one shock is a million
    shocks = np.array([[1e6, 1e6], [0.0, 1e-7], [1e-7, 0.0]])
    alloc = Allocation.from_brands([0, 0, 1], [2, 1])
    polished = polish_allocation(shocks, alloc)
    assert polished.brand_of_consumer.tolist() == [0, 1, 0]
    lower = propagate_lower_bounds(shocks, polished)
    upper = propagate_upper_bounds(shocks, polished)
    assert lower[1] <= upper[1]
