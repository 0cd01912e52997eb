"""Replicated simulation experiments and their CSV reports.

Every experiment is a pure function of an :class:`ExperimentSpec`:
replication ``r`` draws from its own seed spawned from ``spec.seed``, so the
results do not depend on how replications are spread over worker processes.
"""

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._numeric import make_rng, spawn_seeds
from .auction import EpsilonSchedule, invert_auction
from .blp import SmoothingParams, blp_contraction
from .exceptions import ConfigurationError, NonConvergenceError, PreconditionError
from .market import DiscreteMarket
from .models import (MultiSegmentModel, PureCharModel, check_shares, draw_sample, model_from_dict,
                     transferable_shocks)
from .msa import MsaParams, msa_lower, msa_upper

EXPERIMENTS = ("table3", "table4", "table2-inner", "custom")
ALGORITHMS = ("auction", "msa", "blp")
CSV_HEADER = ["brand", "statistic", "mean", "std", "algorithm", "runtime_s"]

TABLE3_PRICES = ((1.0, 2.0, 3.0), (1.0, 2.0, 1.0))
TABLE3_SHARES = (0.25, 0.25, 0.5)

# rows are brands A..H, columns price segments 1..5, then the market share
TABLE4 = (
    ("A", (3.32, 3.36, 3.45, 3.37, 3.35), 0.07),
    ("B", (3.88, 3.60, 3.53, 3.39, 3.07), 0.06),
    ("C", (3.70, 3.30, 4.16, 4.31, 4.25), 0.20),
    ("D", (3.98, 4.12, 4.06, 3.11, 4.09), 0.39),
    ("E", (4.20, 4.34, 4.21, 4.29, 4.35), 0.16),
    ("F", (4.49, 4.82, 4.25, 3.73, 4.86), 0.08),
    ("G", (7.13, 7.92, 7.95, 7.99, 7.71), 0.01),
    ("H", (8.34, 8.37, 8.59, 8.62, 8.67), 0.05),
)
# published bound estimates (lower, upper) at N = 50,000
TABLE4_REFERENCE = {
    "lower": (0.0, -0.815, 3.410, 3.122, 3.345, 1.842, 6.798, 8.018),
    "upper": (0.0, -0.805, 3.414, 3.125, 3.349, 1.848, 6.802, 8.022),
}

# pure-characteristics design: product attributes and consumer tastes
TABLE2_X_MEAN = (0.5, 0.5, 0.5)
TABLE2_X_COV = ((1.0, -0.7, 0.3), (-0.7, 1.0, 0.3), (0.3, 0.3, 1.0))
TABLE2_TASTE_MEAN = (0.5, 0.5, 0.2)
TABLE2_TASTE_STD = (1.0, 1.0, 1.0)
TABLE2_TRUTH_OVERSAMPLE = 10
TABLE2_MIN_SHARE = 0.01
TABLE2_MAX_REDRAWS = 1000


def table4_model():
    prices = np.array([p for _, p, _ in TABLE4]).T
    return MultiSegmentModel(prices)


def table4_shares():
    """Published shares, rescaled to sum to one (as printed they add up to 1.02)."""
    s = np.array([w for _, _, w in TABLE4])
    return s / s.sum()


def table3_model():
    return MultiSegmentModel(TABLE3_PRICES)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: experiment id, sizes, seed and algorithm settings.

    ``blp_lambdas`` lists the smoothing temperatures tried by the BLP
    baseline; ``None`` picks the experiment's default.
    """

    experiment: str
    n: int
    reps: int = 50
    seed: int = 0
    algorithms: tuple = ALGORITHMS
    brands: int = 5
    model: dict = None
    shares: tuple = None
    blp_lambdas: tuple = None
    eta_init: float = 1.0
    eta_tol: float = 1e-4
    eps_final: float = None
    blp_max_iters: int = 5000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        algos = tuple(self.algorithms)
        object.__setattr__(self, "algorithms", algos)
        if not algos:
            raise ConfigurationError("algorithm list must not be empty")
        unknown = [a for a in algos if a not in ALGORITHMS]
        if unknown:
            raise ConfigurationError(f"unknown algorithms {unknown}; expected some of {ALGORITHMS}")
        if int(self.reps) < 1:
            raise ConfigurationError("need at least one replication")
        if int(self.n) < 1:
            raise ConfigurationError("N must be positive")
        if self.experiment == "custom" and (self.model is None or self.shares is None):
            raise ConfigurationError("custom experiments need 'model' and 'shares'")
        if self.blp_lambdas is not None:
            object.__setattr__(self, "blp_lambdas", tuple(float(v) for v in self.blp_lambdas))

    @property
    def lambdas(self):
        if self.blp_lambdas is not None:
            return self.blp_lambdas
        # the Table 3 contraction runs on the unsmoothed demand map; 0.01 is the closest we go
        return (0.01,) if self.experiment == "table3" else (1.0,)

    @property
    def msa_params(self):
        return MsaParams(self.eta_init, self.eta_tol)

    @property
    def schedule_final(self):
        return self.eps_final if self.eps_final is not None else self.eta_tol / 2.0

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "N" in doc:
            doc["n"] = doc.pop("N")
        if "algos" in doc:
            doc["algorithms"] = doc.pop("algos")
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigurationError(f"unknown experiment fields {sorted(extra)}")
        if "algorithms" in doc:
            doc["algorithms"] = tuple(doc["algorithms"])
        if doc.get("shares") is not None:
            doc["shares"] = tuple(doc["shares"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ResultRow:
    brand: str
    statistic: str
    mean: float
    std: float
    algorithm: str
    runtime_s: float = None


@dataclass
class ResultTable:
    """Per-brand summary statistics across replications.

    ``failures`` maps an algorithm label to the number of replications on
    which it did not converge.
    """

    experiment: str
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    reps: int = 0

    def select(self, algorithm=None, statistic=None, brand=None):
        return [r for r in self.rows
                if (algorithm is None or r.algorithm == algorithm)
                and (statistic is None or r.statistic == statistic)
                and (brand is None or r.brand == brand)]

    def means(self, algorithm, statistic):
        return np.array([r.mean for r in self.select(algorithm, statistic)])

    def stds(self, algorithm, statistic):
        return np.array([r.std for r in self.select(algorithm, statistic)])

    @property
    def total_failures(self):
        return int(sum(self.failures.values()))


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def render_csv(table, path=None, deterministic=False):
    """CSV text of ``table``; also written to ``path`` when given.

    ``deterministic`` leaves ``runtime_s`` empty so that reruns and
    different worker counts give the same bytes.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in table.rows:
        runtime = None if deterministic else row.runtime_s
        writer.writerow([row.brand, row.statistic, _fmt(row.mean), _fmt(row.std), row.algorithm, _fmt(runtime)])
    text = buf.getvalue()
    if path is not None:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc}") from exc
    return text


def _blp_label(lam, spec):
    return "blp" if len(spec.lambdas) == 1 else f"blp(lam={lam!r})"


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _run_algorithms(spec, model, market, shocks, truth=None):
    """Run every requested algorithm on one market.

    Returns ``{label: (stats or None, seconds)}`` where ``stats`` maps a
    statistic name to a per-brand vector and ``None`` marks non-convergence.
    """
    out = {}
    for algo in spec.algorithms:
        if algo == "auction":
            sched = EpsilonSchedule.default(shocks, spec.eta_tol)
            sched = EpsilonSchedule(max(sched.start, spec.schedule_final), sched.factor, spec.schedule_final)
            res, secs = _timed(invert_auction, shocks, market.counts, sched)
            out["auction"] = ({"point": res.delta_point, "lower": res.delta_lower,
                               "upper": res.delta_upper, "gap": res.delta_upper - res.delta_lower}, secs)
        elif algo == "msa":
            try:
                t0 = time.perf_counter()
                up = msa_upper(model, market, spec.msa_params)
                lo = msa_lower(model, market, up.delta, spec.msa_params)
                secs = time.perf_counter() - t0
                out["msa"] = ({"upper": up.delta, "lower": lo.delta, "gap": up.delta - lo.delta}, secs)
            except NonConvergenceError:
                out["msa"] = (None, 0.0)
        else:
            for lam in spec.lambdas:
                params = SmoothingParams(lam, max_iters=spec.blp_max_iters)
                t0 = time.perf_counter()
                try:
                    res = blp_contraction(shocks, market.shares, params)
                    out[_blp_label(lam, spec)] = ({"estimate": res.delta}, time.perf_counter() - t0)
                except NonConvergenceError:
                    out[_blp_label(lam, spec)] = (None, time.perf_counter() - t0)
    if truth is not None:
        for label, (stats, secs) in out.items():
            if stats is not None:
                est = stats.get("point", stats.get("upper", stats.get("estimate")))
                stats["estimate"] = est
                stats["rmse"] = np.array([float(np.sqrt(np.mean((est[1:] - truth[1:]) ** 2)))])
    return out


def _table2_design(spec, rng):
    """Draw product attributes and true utilities until every brand sells.

    Products inside the convex hull of the others can have no buyers in a
    pure characteristics model; such designs are redrawn (every brand needs
    at least ``TABLE2_MIN_SHARE`` of the reference market).
    """
    n_alt = int(spec.brands)
    ref_size = TABLE2_TRUTH_OVERSAMPLE * spec.n
    for _ in range(TABLE2_MAX_REDRAWS):
        x = np.zeros((n_alt, 3))
        x[1:] = rng.multivariate_normal(TABLE2_X_MEAN, TABLE2_X_COV, size=n_alt - 1)
        delta_true = np.concatenate([[0.0], rng.standard_normal(n_alt - 1)])
        model = PureCharModel(x, TABLE2_TASTE_MEAN, TABLE2_TASTE_STD)
        ref_sample = draw_sample(model, ref_size, int(rng.integers(0, 2**63)))
        ref_shocks = model.shocks(ref_sample.draws)
        counts = np.bincount(np.argmax(ref_shocks + delta_true, axis=1), minlength=n_alt)
        if counts.min() >= TABLE2_MIN_SHARE * ref_size:
            return model, ref_shocks, counts
    raise ConfigurationError(f"no design with all shares >= {TABLE2_MIN_SHARE} in {TABLE2_MAX_REDRAWS} draws")


def _table2_replication(spec, seed):
    rng = make_rng(seed)
    model, ref_shocks, ref_counts = _table2_design(spec, rng)
    # the reference market is generated at the true utilities, so inverting it returns them
    truth = invert_auction(ref_shocks, ref_counts).delta_point
    market = DiscreteMarket.from_shares(model, ref_counts / ref_counts.sum(), spec.n, int(rng.integers(0, 2**63)))
    return _run_algorithms(spec, model, market, model.shocks(market.draws), truth=truth)


def _market_replication(spec, seed, model, shares):
    market = DiscreteMarket.from_shares(model, shares, spec.n, seed)
    needs_shocks = {"auction", "blp"} & set(spec.algorithms)
    shocks = transferable_shocks(model, market.sample) if needs_shocks else None
    return _run_algorithms(spec, model, market, shocks)


def _experiment_setup(spec):
    if spec.experiment == "table3":
        return table3_model(), np.array(TABLE3_SHARES), [str(j) for j in range(3)]
    if spec.experiment == "table4":
        return table4_model(), table4_shares(), [name for name, _, _ in TABLE4]
    if spec.experiment == "custom":
        model = model_from_dict(spec.model)
        shares = check_shares(spec.shares)
        if shares.size != model.num_alternatives:
            raise ConfigurationError("custom shares need one entry per alternative")
        return model, shares, [str(j) for j in range(model.num_alternatives)]
    return None, None, [str(j) for j in range(int(spec.brands))]


def run_replication(spec, rep):
    """Results of replication ``rep`` alone (seeded independently of the others)."""
    seed = spawn_seeds(spec.seed, spec.reps)[rep]
    if spec.experiment == "table2-inner":
        return _table2_replication(spec, seed)
    model, shares, _ = _experiment_setup(spec)
    return _market_replication(spec, seed, model, shares)


def _replication_task(args):
    spec, rep = args
    return run_replication(spec, rep)


STAT_ORDER = ("point", "estimate", "upper", "lower", "gap", "rmse")


def _summarise(spec, results, brands):
    table = ResultTable(experiment=spec.experiment, reps=spec.reps)
    labels = []
    for res in results:
        for label in res:
            if label not in labels:
                labels.append(label)
    for label in labels:
        runs = [res[label] for res in results]
        ok = [stats for stats, _ in runs if stats is not None]
        table.failures[label] = len(runs) - len(ok)
        runtime = float(np.mean([secs for _, secs in runs]))
        stat_names = [s for s in STAT_ORDER if ok and s in ok[0]] or ["estimate"]
        for stat in stat_names:
            if stat == "rmse":
                values = np.array([s["rmse"] for s in ok]).reshape(-1, 1)
                names = ["all"]
            else:
                values = np.array([s[stat] for s in ok]).reshape(-1, len(brands))
                names = brands
            for k, name in enumerate(names):
                col = values[:, k]
                if col.size == 0:
                    mean = std = float("nan")
                else:
                    mean = float(np.mean(col))
                    std = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
                table.rows.append(ResultRow(name, stat, mean, std, label, runtime))
        if spec.experiment in ("table4",) and ok and "gap" in ok[0]:
            gaps = np.array([s["gap"] for s in ok]).mean(axis=0)
            table.rows.append(ResultRow("all", "max_mean_gap", float(gaps.max()), 0.0, label, runtime))
        table.rows.append(ResultRow("all", "nonconverged_share", (len(runs) - len(ok)) / len(runs), 0.0,
                                    label, runtime))
    return table


def run_experiment(spec, workers=1):
    """Run all replications of ``spec`` and fold them in replication order."""
    if int(workers) < 1:
        raise ConfigurationError("workers must be at least 1")
    _, _, brands = _experiment_setup(spec)
    tasks = [(spec, r) for r in range(spec.reps)]
    if workers == 1 or spec.reps == 1:
        results = [_replication_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(_replication_task, tasks))
    return _summarise(spec, results, brands)


def run_table3(n=1000, reps=50, seed=0, workers=1, **options):
    if n < 100:
        raise PreconditionError("Table 3 experiment needs N >= 100")
    return run_experiment(ExperimentSpec("table3", n, reps, seed, **options), workers)


def run_table4(n=5000, reps=50, seed=0, workers=1, **options):
    if n < 1000:
        raise PreconditionError("Table 4 experiment needs N >= 1000")
    options.setdefault("algorithms", ("auction",))
    return run_experiment(ExperimentSpec("table4", n, reps, seed, **options), workers)


def run_table2_inner(draws=1000, brands=5, reps=50, seed=0, workers=1, **options):
    if draws < 100:
        raise PreconditionError("Table 2 experiment needs at least 100 draws")
    return run_experiment(ExperimentSpec("table2-inner", draws, reps, seed, brands=brands, **options), workers)


def run_custom(spec, workers=1):
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict({"experiment": "custom", **spec})
    return run_experiment(replace(spec, experiment="custom"), workers)
