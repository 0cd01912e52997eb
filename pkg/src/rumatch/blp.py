"""BLP contraction on a logit-smoothed simulator of market shares."""

from dataclasses import dataclass

import numpy as np

from .exceptions import NonConvergenceError, PreconditionError
from .models import check_shares


@dataclass(frozen=True)
class SmoothingParams:
    """Softmax temperature ``lam`` plus stopping rule of the contraction."""

    lam: float = 1.0
    tol: float = 1e-12
    max_iters: int = 5000

    def __post_init__(self):
        if not self.lam > 0:
            raise PreconditionError("smoothing temperature must be positive")
        if not self.tol > 0:
            raise PreconditionError("tolerance must be positive")
        if int(self.max_iters) < 1:
            raise PreconditionError("max_iters must be at least 1")


def smoothed_demand(shocks, delta, lam=1.0):
    """Average over consumers of ``softmax((delta + eps_i) / lam)``."""
    if not lam > 0:
        raise PreconditionError("smoothing temperature must be positive")
    v = (np.asarray(shocks, dtype=float) + np.asarray(delta, dtype=float)) / lam
    v -= v.max(axis=1, keepdims=True)
    np.exp(v, out=v)
    v /= v.sum(axis=1, keepdims=True)
    return v.mean(axis=0)


@dataclass
class BlpResult:
    delta: np.ndarray
    iterations: int
    residual: float


def blp_contraction(shocks, target, params=None):
    """Fixed point of ``delta <- delta + lam (log s - log sigma_lam(delta))``.

    Starts at ``delta = 0`` and keeps ``delta_0 = 0`` by updating only the
    inside goods.  Stops once the sup-norm of an update is at most ``tol``.

    Raises
    ------
    NonConvergenceError
        After ``max_iters`` updates, with the last iterate attached.
    """
    params = params or SmoothingParams()
    shocks = np.asarray(shocks, dtype=float)
    log_s = np.log(check_shares(target))
    if shocks.ndim != 2 or shocks.shape[1] != log_s.size:
        raise PreconditionError("shock matrix needs one column per share")
    delta = np.zeros(log_s.size)
    step = np.inf
    for it in range(1, int(params.max_iters) + 1):
        with np.errstate(divide="ignore"):
            resid = log_s - np.log(smoothed_demand(shocks, delta, params.lam))
        update = params.lam * resid[1:]
        step = float(np.max(np.abs(update))) if update.size else 0.0
        if not np.isfinite(step):
            break
        delta[1:] += update
        if step <= params.tol:
            return BlpResult(delta, it, step)
    raise NonConvergenceError(
        "BLP contraction did not converge", last_iterate=delta,
        diagnostics={"iterations": params.max_iters, "last_step": step})
