import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rumatch import (LogitModel, MultiSegmentModel, PureCharModel, UnsupportedOperationError, VerticalModel,
                     draw_sample, precompute_arum_shocks, simulate_demand, transferable_shocks)
from rumatch.exceptions import ConfigurationError, PreconditionError
from rumatch.models import ConsumerSample, logit_closed_form_invert, model_from_dict

MODELS = [
    LogitModel(3),
    PureCharModel([[0, 0], [0.5, 0.5], [1.0, -1.0]], [0.5, 0.2], [1.0, 1.0]),
    VerticalModel([1.0, 2.0, 3.5], taste_mean=1.0, taste_std=0.3),
    MultiSegmentModel([[1, 2, 3], [1, 2, 1]]),
]


def test_evaluate_additive_logit():
    assert LogitModel(2).evaluate([0.0, 0.3], 1, 1.2) == pytest.approx(1.5)


def test_evaluate_multisegment_minus_convention():
    model = MultiSegmentModel([[1.0, 2.0], [1.0, 1.0]])
    # eps_a = 0.5, first segment: 2 - 2 / 0.5
    assert model.evaluate([0.5, 0.0], 1, 2.0) == pytest.approx(-2.0)


def test_evaluate_purechar_orthogonal_taste():
    model = PureCharModel([[0, 0], [0.5, 0.5]], [0, 0], [1, 1])
    assert model.evaluate([1.0, -1.0], 1, 0.0) == 0.0


def test_evaluate_rejects_bad_index():
    with pytest.raises(IndexError):
        LogitModel(2).evaluate([0.0, 0.0], 2, 0.0)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_monotone_in_delta(model):
    rng = np.random.default_rng(1)
    draws = model.sample(rng, 1000)
    j = rng.integers(0, model.num_alternatives, 1000)
    d = rng.normal(0, 5, 1000)
    d2 = d + rng.uniform(1e-6, 3, 1000)
    for k in range(1000):
        lo = model.utility(draws[k:k + 1], int(j[k]), d[k])[0]
        hi = model.utility(draws[k:k + 1], int(j[k]), d2[k])[0]
        assert lo < hi


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
@settings(max_examples=200, deadline=None)
@given(delta=st.floats(-1e3, 1e3), seed=st.integers(0, 2**32), j_raw=st.integers(0, 100))
def test_invert_round_trip(model, delta, seed, j_raw):
    draw = model.sample(np.random.default_rng(seed), 1)[0]
    j = j_raw % model.num_alternatives
    back = model.invert(draw, j, model.evaluate(draw, j, delta))
    assert abs(back - delta) <= 1e-10 * (1 + abs(delta)) + 1e-12 * abs(model.evaluate(draw, j, 0.0))


def test_logit_demand_matches_closed_form():
    model = LogitModel(4)
    delta = np.array([0.0, 0.4, -0.3, 1.1])
    shares = simulate_demand(model, draw_sample(model, 100_000, 3), delta)
    assert np.max(np.abs(shares - model.choice_probabilities(delta))) <= 0.01
    assert shares.sum() == pytest.approx(1.0, abs=1e-15)


def test_symmetric_two_alternative_demand():
    model = LogitModel(2)
    shares = simulate_demand(model, draw_sample(model, 200_000, 9), [0.0, 0.0])
    assert shares == pytest.approx([0.5, 0.5], abs=0.005)


def test_two_segment_demand_on_identified_segment(two_segment_model):
    sample = draw_sample(two_segment_model, 200_000, 2)
    for d3 in (1.5, 2.0, 2.5):
        shares = simulate_demand(two_segment_model, sample, [0.0, 2.0, d3])
        assert shares == pytest.approx([0.25, 0.25, 0.5], abs=0.005)


def test_single_alternative_demand():
    model = LogitModel(1)
    assert simulate_demand(model, draw_sample(model, 10, 0), [0.0]).tolist() == [1.0]


def test_demand_preconditions():
    model = LogitModel(2)
    sample = draw_sample(model, 10, 0)
    with pytest.raises(PreconditionError):
        simulate_demand(model, sample, [0.5, 0.0])
    with pytest.raises(PreconditionError):
        simulate_demand(model, np.empty((0, 2)), [0.0, 0.0])


def test_ties_are_negligible_with_continuous_draws():
    model = PureCharModel([[0, 0], [1, 0.5], [0.2, 1]], [0.5, 0.2], [1, 1])
    util = model.utilities(draw_sample(model, 50_000, 4).draws, [0.0, 0.1, -0.2])
    top2 = np.sort(util, axis=1)[:, -2:]
    assert np.count_nonzero(top2[:, 0] == top2[:, 1]) / util.shape[0] <= 1e-4


@pytest.mark.parametrize("s, expected", [
    ([0.5, 0.25, 0.25], [0.0, -0.693147, -0.693147]),
    ([0.25, 0.25, 0.25, 0.25], [0.0, 0.0, 0.0, 0.0]),
    ([0.1, 0.9], [0.0, 2.197225]),
])
def test_log_odds(s, expected):
    assert logit_closed_form_invert(s) == pytest.approx(expected, abs=1e-6)


def test_log_odds_rejects_zero_share():
    with pytest.raises(PreconditionError):
        logit_closed_form_invert([0.0, 1.0])


def test_precompute_purechar_dot_products():
    model = PureCharModel([[0, 0], [1, 1]], [0, 0], [1, 1])
    sample = ConsumerSample(draws=np.array([[1.0, 2.0]]), seed=0)
    assert precompute_arum_shocks(model, sample).tolist() == [[0.0, 3.0]]


def test_precompute_logit_is_copy():
    model = LogitModel(3)
    sample = draw_sample(model, 5, 0)
    shocks = precompute_arum_shocks(model, sample)
    assert np.array_equal(shocks, sample.draws)
    shocks[0, 0] = 99.0
    assert sample.draws[0, 0] != 99.0


def test_precompute_rejects_multisegment(two_segment_model):
    sample = draw_sample(two_segment_model, 4, 0)
    with pytest.raises(UnsupportedOperationError):
        precompute_arum_shocks(two_segment_model, sample)
    # the transferable-utility path still gets the separable part
    shocks = transferable_shocks(two_segment_model, sample)
    util = two_segment_model.utilities(sample.draws, [0.0, 0.0, 0.0])
    assert np.array_equal(shocks, util)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_json_round_trip(model):
    doc = json.loads(json.dumps(model.to_dict()))
    again = model_from_dict(doc)
    assert again.to_dict() == model.to_dict()
    a = draw_sample(model, 20, 1).draws
    assert np.array_equal(model.utilities(a, np.arange(model.num_alternatives) * 0.1),
                          again.utilities(a, np.arange(model.num_alternatives) * 0.1))


@pytest.mark.parametrize("doc", [
    {"model": "probit"},
    {"num_alternatives": 3},
    {"model": "logit", "alternatives": 3},
    {"model": "multisegment", "prices": [[1, -2]]},
    {"model": "multisegment", "prices": [[1, 2], [1, 2]], "weights": [0.7, 0.7]},
    {"model": "purechar", "x": [[0, 0], [1, 1]], "taste_mean": [0], "taste_std": [1]},
])
def test_bad_model_documents(doc):
    with pytest.raises(ConfigurationError):
        model_from_dict(doc)


def test_draw_sample_is_reproducible():
    model = LogitModel(3)
    a, b = draw_sample(model, 3, 7), draw_sample(model, 3, 7)
    assert a.draws.tobytes() == b.draws.tobytes()
    assert a.draws.tobytes() != draw_sample(model, 3, 8).draws.tobytes()


def test_multisegment_draws():
    model = MultiSegmentModel([[1, 2, 3], [1, 2, 1]])
    draws = draw_sample(model, 1_000_000, 12345).draws
    assert np.all(draws[:, 0] > 0) and np.all(draws[:, 0] <= 1)
    assert abs(np.mean(draws[:, 1] == 0) - 0.5) <= 0.002
    assert abs(draws[:, 0].mean() - 0.5) <= 0.002


def test_purechar_taste_moments():
    model = PureCharModel(np.zeros((2, 3)), [0.5, 0.5, 0.2], [1, 1, 1])
    draws = draw_sample(model, 1_000_000, 77).draws
    assert np.all(np.abs(draws.mean(axis=0) - [0.5, 0.5, 0.2]) < 0.01)
    assert np.all(np.abs(draws.std(axis=0) - 1.0) < 0.01)


def test_draw_sample_rejects_empty():
    with pytest.raises(PreconditionError):
        draw_sample(LogitModel(2), 0, 0)
