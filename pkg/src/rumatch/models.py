"""Random utility models and Monte Carlo simulation of their demand map.

A model maps a consumer draw ``eps`` and a systematic utility ``delta_j`` to
the utility ``U_{eps j}(delta_j)``, which is continuous and strictly
increasing in ``delta_j``.  Draws for ``N`` consumers are stored as one
``(N, k)`` array whose row layout is model specific:

* ``logit``: the additive Gumbel shocks, one column per alternative;
* ``purechar`` / ``vertical``: the taste vector ``nu_i``;
* ``multisegment``: ``(eps_a, segment)`` with ``eps_a`` in ``(0, 1]``.

All public methods are vectorised over draws; :meth:`UtilityModel.evaluate`
and :meth:`UtilityModel.invert` are scalar conveniences.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ._numeric import largest_remainder, make_rng
from .exceptions import ConfigurationError, PreconditionError, UnsupportedOperationError

SHARE_TOL = 1e-12


class UtilityModel(ABC):
    """Interface shared by every random utility model."""

    #: registry name used in JSON documents
    name = None
    #: True when ``U = delta_j + eps_ij`` with a precomputable shock matrix
    additive = False

    @property
    @abstractmethod
    def num_alternatives(self):
        """Number of alternatives ``|J0|``, the reference alternative included."""

    @abstractmethod
    def sample(self, rng, n):
        """Draw ``n`` consumers; returns an ``(n, k)`` array."""

    @abstractmethod
    def utility(self, draws, j, delta_j):
        """Utility of alternative ``j`` at ``delta_j`` for every draw."""

    @abstractmethod
    def inverse(self, draws, j, u):
        """Solve ``U_{eps j}(delta) = u`` for ``delta``, draw by draw."""

    @abstractmethod
    def to_dict(self):
        """JSON-serialisable description, inverse of :func:`model_from_dict`."""

    def utilities(self, draws, delta):
        """``(N, J0)`` matrix of ``U_{eps_i j}(delta_j)``."""
        delta = np.asarray(delta, dtype=float)
        return np.column_stack([self.utility(draws, j, delta[j]) for j in range(self.num_alternatives)])

    def check_index(self, j):
        if not 0 <= j < self.num_alternatives:
            raise IndexError(f"alternative {j} out of range for {self.num_alternatives} alternatives")

    def evaluate(self, draw, j, delta_j):
        """Scalar ``U_{eps j}(delta_j)`` for a single consumer draw."""
        self.check_index(j)
        return float(self.utility(np.atleast_2d(np.asarray(draw, dtype=float)), j, float(delta_j))[0])

    def invert(self, draw, j, u):
        """Scalar inverse of :meth:`evaluate` in ``delta_j``."""
        self.check_index(j)
        return float(self.inverse(np.atleast_2d(np.asarray(draw, dtype=float)), j, float(u))[0])


class AdditiveModel(UtilityModel):
    """Model with ``U_{eps j}(delta) = delta + eps_j`` (an ARUM)."""

    additive = True

    @abstractmethod
    def shocks(self, draws):
        """``(N, J0)`` matrix of additive shocks ``eps_ij``."""

    def utility(self, draws, j, delta_j):
        self.check_index(j)
        return delta_j + self.shocks(draws)[:, j]

    def inverse(self, draws, j, u):
        self.check_index(j)
        return u - self.shocks(draws)[:, j]

    def utilities(self, draws, delta):
        return self.shocks(draws) + np.asarray(delta, dtype=float)


class LogitModel(AdditiveModel):
    """Additive model with i.i.d. standard Gumbel shocks."""

    name = "logit"

    def __init__(self, num_alternatives):
        if int(num_alternatives) < 1:
            raise ConfigurationError("logit model needs at least one alternative")
        self._n = int(num_alternatives)

    @property
    def num_alternatives(self):
        return self._n

    def sample(self, rng, n):
        return rng.gumbel(size=(n, self._n))

    def shocks(self, draws):
        return np.asarray(draws, dtype=float)

    def choice_probabilities(self, delta):
        """Closed-form logit demand ``exp(delta_j) / sum_k exp(delta_k)``."""
        z = np.exp(np.asarray(delta, dtype=float) - np.max(delta))
        return z / z.sum()

    def to_dict(self):
        return {"model": self.name, "num_alternatives": self._n}


class PureCharModel(AdditiveModel):
    """Pure characteristics model, ``eps_ij = nu_i . x_j``.

    Parameters
    ----------
    x : array_like, shape (J0, d)
        Characteristics of each alternative.
    taste_mean, taste_std : array_like, shape (d,)
        Tastes are independent normals with these moments.
    """

    name = "purechar"

    def __init__(self, x, taste_mean, taste_std):
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.taste_mean = np.atleast_1d(np.asarray(taste_mean, dtype=float))
        self.taste_std = np.atleast_1d(np.asarray(taste_std, dtype=float))
        d = self.x.shape[1]
        if self.taste_mean.shape != (d,) or self.taste_std.shape != (d,):
            raise ConfigurationError(f"taste moments must have length {d} (columns of x)")
        if np.any(self.taste_std < 0):
            raise ConfigurationError("taste standard deviations must be non-negative")

    @property
    def num_alternatives(self):
        return self.x.shape[0]

    def sample(self, rng, n):
        return self.taste_mean + self.taste_std * rng.standard_normal((n, self.x.shape[1]))

    def shocks(self, draws):
        return np.asarray(draws, dtype=float) @ self.x.T

    def to_dict(self):
        return {
            "model": self.name,
            "x": self.x.tolist(),
            "taste_mean": self.taste_mean.tolist(),
            "taste_std": self.taste_std.tolist(),
        }


class VerticalModel(PureCharModel):
    """Quality ladder: ``U = delta_j - nu_i * p_j`` with a normal taste ``nu``."""

    name = "vertical"

    def __init__(self, prices, taste_mean=1.0, taste_std=0.0):
        self.prices = np.asarray(prices, dtype=float).ravel()
        super().__init__(-self.prices[:, None], [float(taste_mean)], [float(taste_std)])

    def to_dict(self):
        return {
            "model": self.name,
            "prices": self.prices.tolist(),
            "taste_mean": float(self.taste_mean[0]),
            "taste_std": float(self.taste_std[0]),
        }


class MultiSegmentModel(UtilityModel):
    """Segmented price heterogeneity, ``U = delta_j - p[s, j] / eps_a``.

    Consumers belong to a price segment ``s`` and have a willingness to pay
    for quality ``eps_a`` uniform on ``(0, 1]``.  Segment sizes are drawn
    stratified: the number of consumers in each segment is the
    largest-remainder apportionment of ``N`` by the segment weights, and the
    labels are then shuffled.

    Although the utility is additive in ``delta``, the model is deliberately
    registered as non-additive so that it exercises the general (NARUM) code
    paths; :meth:`price_shocks` exposes the separable form explicitly for the
    transferable-utility solvers.
    """

    name = "multisegment"

    def __init__(self, prices, weights=None):
        self.prices = np.atleast_2d(np.asarray(prices, dtype=float))
        n_seg = self.prices.shape[0]
        if weights is None:
            weights = np.full(n_seg, 1.0 / n_seg)
        self.weights = np.asarray(weights, dtype=float).ravel()
        if self.weights.shape != (n_seg,):
            raise ConfigurationError("need one weight per price segment")
        if np.any(self.prices <= 0):
            raise ConfigurationError("segment prices must be strictly positive")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > SHARE_TOL:
            raise ConfigurationError("segment weights must be non-negative and sum to one")

    @property
    def num_alternatives(self):
        return self.prices.shape[1]

    def sample(self, rng, n):
        seg = np.repeat(np.arange(self.prices.shape[0]), largest_remainder(self.weights, n))
        seg = rng.permutation(seg)
        # 1 - U[0, 1) lies in (0, 1], so eps_a is never zero
        eps_a = 1.0 - rng.random(n)
        return np.column_stack([eps_a, seg.astype(float)])

    def _split(self, draws):
        draws = np.asarray(draws, dtype=float)
        return draws[:, 0], draws[:, 1].astype(np.int64)

    def utility(self, draws, j, delta_j):
        self.check_index(j)
        eps_a, seg = self._split(draws)
        return delta_j - self.prices[seg, j] / eps_a

    def inverse(self, draws, j, u):
        self.check_index(j)
        eps_a, seg = self._split(draws)
        return u + self.prices[seg, j] / eps_a

    def utilities(self, draws, delta):
        return self.price_shocks(draws) + np.asarray(delta, dtype=float)

    def price_shocks(self, draws):
        """Separable part ``-p[s_i, j] / eps_a_i`` as an ``(N, J0)`` matrix."""
        eps_a, seg = self._split(draws)
        return -self.prices[seg] / eps_a[:, None]

    def to_dict(self):
        return {"model": self.name, "prices": self.prices.tolist(), "weights": self.weights.tolist()}


MODEL_TYPES = {cls.name: cls for cls in (LogitModel, PureCharModel, VerticalModel, MultiSegmentModel)}


def model_from_dict(doc):
    """Build a model from its JSON description (see ``docs/models.md``)."""
    if not isinstance(doc, dict) or "model" not in doc:
        raise ConfigurationError("model document must be an object with a 'model' key")
    kind = doc["model"]
    params = {k: v for k, v in doc.items() if k != "model"}
    try:
        cls = MODEL_TYPES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown model {kind!r}; expected one of {sorted(MODEL_TYPES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {kind!r} model: {exc}") from exc


@dataclass(frozen=True)
class ConsumerSample:
    """``N`` i.i.d. consumer draws together with their provenance."""

    draws: np.ndarray
    seed: int
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise PreconditionError("a consumer sample needs at least one draw")
        self.draws.setflags(write=False)

    @property
    def size(self):
        return self.draws.shape[0]


def draw_sample(model, n, seed):
    """Draw ``n`` consumers for ``model``; identical arguments give identical bits."""
    if isinstance(model, dict):
        model = model_from_dict(model)
    if not isinstance(model, UtilityModel):
        raise ConfigurationError(f"not a utility model: {model!r}")
    if int(n) < 1:
        raise PreconditionError("sample size must be at least one")
    draws = np.asarray(model.sample(make_rng(seed), int(n)), dtype=float)
    return ConsumerSample(draws=draws, seed=int(seed), spec=model.to_dict())


def choice_counts(model, draws, delta):
    """How many consumers pick each alternative; ties go to the lowest index."""
    choice = np.argmax(model.utilities(draws, delta), axis=1)
    return np.bincount(choice, minlength=model.num_alternatives)


def simulate_demand(model, sample, delta):
    """Empirical market shares of ``argmax_j U_{eps_i j}(delta_j)``."""
    draws = sample.draws if isinstance(sample, ConsumerSample) else np.asarray(sample, dtype=float)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise PreconditionError("cannot simulate demand on an empty sample")
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (model.num_alternatives,):
        raise PreconditionError(f"delta must have {model.num_alternatives} entries")
    if delta[0] != 0.0:
        raise PreconditionError("delta must be normalised so that delta[0] == 0")
    return choice_counts(model, draws, delta) / draws.shape[0]


def check_shares(s):
    """Validate a share vector and return it as a float array."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise PreconditionError("shares must be a non-empty vector")
    if np.any(s <= 0):
        raise PreconditionError("every market share must be strictly positive")
    if abs(s.sum() - 1.0) > SHARE_TOL:
        raise PreconditionError(f"shares sum to {s.sum()!r}, not 1")
    return s


def logit_closed_form_invert(s):
    """Log-odds inversion of logit shares, ``delta_j = log(s_j / s_0)``."""
    s = check_shares(s)
    return np.log(s) - np.log(s[0])


def precompute_arum_shocks(model, sample):
    """Shock matrix ``eps_ij`` of an additive model (entry = utility at delta 0)."""
    if not model.additive:
        raise UnsupportedOperationError(f"{model.name!r} model is not registered as additive")
    draws = sample.draws if isinstance(sample, ConsumerSample) else sample
    return np.array(model.shocks(draws), dtype=float)


def transferable_shocks(model, sample):
    """Shock matrix for the transferable-utility solvers.

    Additive models give their shocks; a model that is separable without
    being registered as additive may expose ``price_shocks`` instead.
    """
    draws = sample.draws if isinstance(sample, ConsumerSample) else sample
    if model.additive:
        return np.array(model.shocks(draws), dtype=float)
    if hasattr(model, "price_shocks"):
        return np.array(model.price_shocks(draws), dtype=float)
    raise UnsupportedOperationError(f"{model.name!r} model has no separable shock matrix")
