"""Primal/dual objectives, certified duality gaps, and the two inner solvers.

The duality gap ``P_z(beta) - D_z(theta)`` of any dual-feasible ``theta``
upper-bounds the primal suboptimality (weak duality), which is what every
downstream certificate relies on.  Gap-bearing quantities are therefore
recomputed from scratch here rather than trusted from solver increments.

Row reductions inside the public objectives run in a canonical row order
(lexicographic in (label, features)), so objective and gap values are exactly
invariant under permutations of the training pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    ConfigError,
    ConvergenceError,
    DualInfeasibleError,
    NumericRangeError,
    UnsupportedProblemError,
)
from .losses import Loss, QuadraticLoss
from .regularizers import L1Penalty, Regularizer, RidgePenalty

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None


@dataclass(frozen=True)
class Dataset:
    """Feature matrix and labels, with an optional candidate test point.

    ``x_new`` is the feature vector of the point being conformalized and
    ``z`` the candidate label attached to it; when both are present the
    stacked problem has n+1 rows with label vector ``(y_1, ..., y_n, z)``.
    """

    X: np.ndarray
    y: np.ndarray
    x_new: np.ndarray | None = None
    z: float | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ConfigError("X must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ConfigError("y must be 1-d with one label per row of X")
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise ConfigError("need at least 2 rows and 1 feature")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.x_new is not None:
            xn = np.asarray(self.x_new, dtype=float)
            if xn.shape != (X.shape[1],):
                raise ConfigError("x_new must have one entry per feature")
            object.__setattr__(self, "x_new", xn)
        if self.z is not None:
            if self.x_new is None:
                raise ConfigError("a candidate label z requires x_new")
            object.__setattr__(self, "z", float(self.z))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def augmented(self):
        return self.z is not None

    @property
    def m(self):
        """Number of stacked rows (n, or n+1 when augmented)."""
        return self.n + 1 if self.augmented else self.n

    @cached_property
    def design(self):
        if self.augmented:
            return np.vstack([self.X, self.x_new])
        return self.X

    @cached_property
    def labels(self):
        if self.augmented:
            return np.append(self.y, self.z)
        return self.y

    @cached_property
    def _canon(self):
        """Canonical row order plus reindexed copies, used for exact reductions."""
        keys = tuple(self.X[:, j] for j in range(self.p - 1, -1, -1)) + (self.y,)
        order = np.lexsort(keys)
        return order, np.ascontiguousarray(self.X[order]), self.y[order]

    def with_candidate(self, x_new, z) -> "Dataset":
        d = Dataset(self.X, self.y, x_new=x_new, z=z)
        if "_canon" in self.__dict__:  # share the canonical copies
            d.__dict__["_canon"] = self.__dict__["_canon"]
        return d

    def without_candidate(self) -> "Dataset":
        d = Dataset(self.X, self.y)
        if "_canon" in self.__dict__:
            d.__dict__["_canon"] = self.__dict__["_canon"]
        return d


@dataclass(frozen=True)
class PrimalDualPair:
    """A primal vector, a dual-feasible vector, and their certified gap at z."""

    beta: np.ndarray
    theta: np.ndarray
    gap: float
    z: float | None = None
    iterations: int = 0


@dataclass
class SolverConfig:
    tolerance: float = 1e-6
    max_iterations: int = 200_000
    gap_check_period: int = 5
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError("solver tolerance must be positive")
        if self.gap_check_period < 1:
            raise ConfigError("gap_check_period must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")


def primal_objective(data: Dataset, beta, lam, loss: Loss, reg: Regularizer) -> float:
    """P_z(beta): summed losses over the (augmented) rows plus lam * Omega(beta)."""
    if lam <= 0:
        raise ConfigError("lam must be positive")
    beta = np.asarray(beta, dtype=float)
    _, Xc, yc = data._canon
    total = float(np.sum(loss.value(yc, Xc @ beta)))
    if data.augmented:
        total += float(loss.value(data.z, float(data.x_new @ beta)))
    return total + lam * reg.value(beta)


def dual_objective(data: Dataset, theta, lam, loss: Loss, reg: Regularizer):
    """D_z(theta), or ``None`` when theta is outside the dual domain."""
    if lam <= 0:
        raise ConfigError("lam must be positive")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.m,):
        raise ConfigError(f"theta must have length {data.m}")
    order, Xc, yc = data._canon
    th = theta[:data.n][order]
    terms = loss.conjugate(yc, -lam * th)
    v = Xc.T @ th
    aug = 0.0
    if data.augmented:
        last = loss.conjugate(data.z, -lam * float(theta[-1]))
        if math.isinf(last):
            return None
        aug = last
        v = v + theta[-1] * data.x_new
    if np.any(np.isinf(terms)):
        return None
    om = reg.conjugate(v)
    if math.isinf(om):
        return None
    return -float(np.sum(terms)) - aug - lam * om


def dual_feasible(data: Dataset, beta, lam, loss: Loss, reg: Regularizer) -> np.ndarray:
    """Rescaled negative loss gradient, guaranteed to lie in the dual domain."""
    if lam <= 0:
        raise ConfigError("lam must be positive")
    beta = np.asarray(beta, dtype=float)
    g = np.asarray(loss.grad(data.labels, data.design @ beta), dtype=float)
    support = reg.polar_support(_feature_corr(data, g))
    if support is None:  # strongly convex penalty: no rescaling needed
        return -g / lam
    # the 1e-12 margin keeps every float recomputation of the support <= 1
    theta = -g / max(lam, support * (1.0 + 1e-12))
    for _ in range(3):
        s = reg.polar_support(_feature_corr(data, theta))
        if s <= 1.0:
            break
        theta = theta * ((1.0 - 1e-12) / s)
    return theta


def _feature_corr(data: Dataset, w):
    """X^T w reduced in canonical row order (augmented row added last)."""
    order, Xc, _ = data._canon
    v = Xc.T @ np.asarray(w, dtype=float)[:data.n][order]
    if data.augmented:
        v = v + w[-1] * data.x_new
    return v


def duality_gap(data: Dataset, beta, theta, lam, loss: Loss, reg: Regularizer) -> float:
    """P_z(beta) - D_z(theta); raises if theta is dual-infeasible."""
    d = dual_objective(data, theta, lam, loss, reg)
    if d is None:
        raise DualInfeasibleError("theta lies outside the dual domain")
    return primal_objective(data, beta, lam, loss, reg) - d


def gap_variation(data: Dataset, beta, theta, z, z0, lam, loss: Loss) -> float:
    """Exact change of the duality gap when the candidate label moves z0 -> z.

    Equals ``[ell(z, u) - ell(z0, u)] + [ell*(z, w) - ell*(z0, w)]`` with
    ``u = x_new . beta`` and ``w = -lam * theta[-1]``; only the loss terms of
    the moving row enter, nothing else changes.
    """
    if data.x_new is None:
        raise ConfigError("gap_variation needs a dataset with a test point x_new")
    u = float(np.asarray(data.x_new, dtype=float) @ np.asarray(beta, dtype=float))
    w = -lam * float(np.asarray(theta, dtype=float)[-1])
    cz = loss.conjugate(float(z), w)
    cz0 = loss.conjugate(float(z0), w)
    if math.isinf(cz) or math.isinf(cz0):
        raise DualInfeasibleError("conjugate argument outside the dual domain")
    return (loss.value(float(z), u) - loss.value(float(z0), u)) + (cz - cz0)


def extend_dual(theta) -> np.ndarray:
    """Extend a dual vector for n rows to n+1 rows by a zero last coordinate."""
    return np.append(np.asarray(theta, dtype=float), 0.0)


def dual_distance_bound(gap, nu, lam) -> float:
    """Upper bound sqrt(2 nu gap / lam^2) on the distance to the dual optimum."""
    if nu <= 0 or lam <= 0:
        raise ConfigError("nu and lam must be positive")
    return math.sqrt(2.0 * nu * max(float(gap), 0.0)) / lam


# ---------------------------------------------------------------------------
# solvers


def solve_to_tol(data: Dataset, lam, loss: Loss, reg: Regularizer,
                 config: SolverConfig | None = None) -> PrimalDualPair:
    """Drive the primal problem to a certified duality gap <= config.tolerance.

    Coordinate descent handles the l1 penalty with quadratic loss; gradient
    descent with backtracking handles any differentiable loss under the ridge
    penalty.  Deterministic given the config and warm start.
    """
    if lam <= 0:
        raise ConfigError("lam must be positive")
    if config is None:
        config = SolverConfig()
    if isinstance(reg, L1Penalty):
        if not isinstance(loss, QuadraticLoss):
            raise UnsupportedProblemError(
                "the l1 penalty is only solved with the quadratic loss"
            )
        return _solve_lasso_cd(data, lam, loss, reg, config)
    if isinstance(reg, RidgePenalty):
        return _solve_ridge_gd(data, lam, loss, reg, config)
    raise UnsupportedProblemError(f"no solver for regularizer {reg.name!r}")


def _certify(data, beta, lam, loss, reg, iters):
    theta = dual_feasible(data, beta, lam, loss, reg)
    gap = duality_gap(data, beta, theta, lam, loss, reg)
    return PrimalDualPair(beta.copy(), theta, gap, data.z, iterations=iters)


def _py_cd_sweeps(X, r, beta, colsq, thr, sweeps):
    n, p = X.shape
    for _ in range(sweeps):
        for j in range(p):
            cj = colsq[j]
            if cj == 0.0:
                continue
            bj = beta[j]
            rho = X[:, j] @ r + cj * bj
            mag = abs(rho) - thr
            nb = (mag / cj) * (1.0 if rho > 0 else -1.0) if mag > 0 else 0.0
            d = nb - bj
            if d != 0.0:
                r -= d * X[:, j]
                beta[j] = nb


if _njit is not None:
    _cd_sweeps = _njit(cache=False)(_py_cd_sweeps)
else:  # pragma: no cover
    _cd_sweeps = _py_cd_sweeps


def _solve_lasso_cd(data, lam, loss, reg, config):
    X = np.asfortranarray(data.design)
    Y = data.labels
    p = X.shape[1]
    beta = (np.array(config.warm_start, dtype=float)
            if config.warm_start is not None else np.zeros(p))
    if beta.shape != (p,):
        raise ConfigError("warm start has the wrong length")
    colsq = np.einsum("ij,ij->j", X, X)
    r = Y - X @ beta
    thr = 0.5 * lam  # soft-threshold level for sum (y - x.b)^2 + lam |b|_1
    best = math.inf
    iters = 0
    while True:
        pair = _certify(data, beta, lam, loss, reg, iters)
        best = min(best, pair.gap)
        if pair.gap <= config.tolerance:
            return pair
        if iters >= config.max_iterations:
            raise ConvergenceError(
                f"coordinate descent stalled at gap {best:.3g}", best_gap=best, z=data.z
            )
        sweeps = min(config.gap_check_period, config.max_iterations - iters)
        _cd_sweeps(X, r, beta, colsq, thr, sweeps)
        iters += sweeps
        r = Y - X @ beta  # refresh; incremental updates drift over many sweeps


def _solve_ridge_gd(data, lam, loss, reg, config):
    X = data.design
    Y = data.labels
    p = X.shape[1]
    beta = (np.array(config.warm_start, dtype=float)
            if config.warm_start is not None else np.zeros(p))
    if beta.shape != (p,):
        raise ConfigError("warm start has the wrong length")

    quad = isinstance(loss, QuadraticLoss)
    if quad:
        G = X.T @ X
        b = X.T @ Y
        ysq = float(Y @ Y)

        def fval(bt):
            return ysq - 2.0 * float(b @ bt) + float(bt @ (G @ bt)) + 0.5 * lam * float(bt @ bt)

        def fgrad(bt):
            return 2.0 * (G @ bt - b) + lam * bt
    else:

        def fval(bt):
            return float(np.sum(loss.value(Y, X @ bt))) + 0.5 * lam * float(bt @ bt)

        def fgrad(bt):
            return X.T @ np.asarray(loss.grad(Y, X @ bt), dtype=float) + lam * bt

    def safe_fval(bt):
        try:
            return fval(bt)
        except NumericRangeError:
            return math.inf

    eta = 1.0
    best = math.inf
    iters = 0
    check_in = 0
    while True:
        if check_in <= 0:
            pair = _certify(data, beta, lam, loss, reg, iters)
            best = min(best, pair.gap)
            if pair.gap <= config.tolerance:
                return pair
            check_in = config.gap_check_period
        if iters >= config.max_iterations:
            raise ConvergenceError(
                f"gradient descent stalled at gap {best:.3g}", best_gap=best, z=data.z
            )
        f0 = safe_fval(beta)
        g = fgrad(beta)
        gsq = float(g @ g)
        if gsq == 0.0:
            check_in = 0
            iters += 1
            continue
        eta = min(eta * 1.5, 1e8)
        for _ in range(200):
            trial = beta - eta * g
            if safe_fval(trial) <= f0 - 1e-4 * eta * gsq:
                break
            eta *= 0.5
        else:
            raise ConvergenceError(
                f"line search failed at gap {best:.3g}", best_gap=best, z=data.z
            )
        beta = trial
        iters += 1
        check_in -= 1
