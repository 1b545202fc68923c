"""Conformal prediction sets from certified solution paths.

Membership of a candidate label z is decided by the rank of its conformity
score among all n+1 scores: with the inclusive rank
``#{i : R_i <= R_{n+1}}``, the typicalness ``pi = 1 - rank/(n+1)`` must exceed
alpha.  Equivalently, at least ``m* = floor((n+1) alpha) + 1`` training scores
must lie strictly above the augmented score, which turns each grid segment
into an analytic band around the segment's prediction: the augmented score is
the only quantity varying inside a segment.

Sets are returned as closed interval unions restricted to the swept range;
closing the half-open pieces at breakpoints changes measure zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UnsupportedProblemError
from .homotopy import HomotopyPath
from .intervals import IntervalUnion
from .losses import Loss, QuadraticLoss
from .optim import (
    Dataset,
    PrimalDualPair,
    SolverConfig,
    solve_to_tol,
)
from .regularizers import RidgePenalty


# --- conformity measures ------------------------------------------------------


class AbsoluteResidual:
    """psi(y, u) = |y - u|."""

    name = "absolute_residual"

    def training_scores(self, loss, y, preds):
        return np.abs(np.asarray(y) - np.asarray(preds))

    def augmented_score(self, loss, z, u):
        return abs(float(z) - float(u))

    def band(self, loss, r):
        """d-interval (d = z - u) where the augmented score is at most r."""
        r = float(r)
        return -r, r


class GradientBased:
    """Coordinate-wise absolute loss gradient as the conformity score."""

    name = "gradient"

    def training_scores(self, loss, y, preds):
        return np.abs(np.asarray(loss.grad(y, preds), dtype=float))

    def augmented_score(self, loss, z, u):
        return abs(float(loss.grad(float(z), float(u))))

    def band(self, loss, r):
        return loss.grad_band(r)


def make_measure(name):
    if name in ("absolute_residual", "absolute-residual"):
        return AbsoluteResidual()
    if name in ("gradient", "gradient_based", "gradient-based"):
        return GradientBased()
    raise ConfigError(f"unknown conformity measure {name!r}")


# --- ranks, typicalness, quantiles -------------------------------------------


def _snap_floor(x):
    f = math.floor(x)
    return f + 1 if x - f > 1 - 1e-9 else f


def _snap_ceil(x):
    c = math.ceil(x)
    return c - 1 if c - x > 1 - 1e-9 else c


def _min_scores_above(n, alpha):
    """m*: training scores that must lie strictly above the augmented score."""
    return _snap_floor((n + 1) * alpha) + 1


@dataclass(frozen=True)
class TypicalnessReport:
    scores: np.ndarray
    rank: int
    pi: float
    z: float | None = None


def conformity_scores(pair: PrimalDualPair, data: Dataset, z, measure, loss: Loss):
    """All n+1 scores for candidate label z under the pair's solution."""
    if data.x_new is None:
        raise ConfigError("conformity scores need a dataset with a test point")
    preds = data.X @ pair.beta
    u = float(data.x_new @ pair.beta)
    base = measure.training_scores(loss, data.y, preds)
    return np.append(base, measure.augmented_score(loss, z, u))


def typicalness(scores, z=None) -> TypicalnessReport:
    """Inclusive rank of the last score and the resulting typicalness."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size < 2:
        raise ConfigError("need at least two scores")
    rank = int(np.sum(scores <= scores[-1]))
    pi = 1.0 - rank / scores.size
    return TypicalnessReport(scores=scores, rank=rank, pi=pi, z=z)


def quantile(scores, alpha) -> float:
    """The ceil(m (1 - alpha))-th order statistic of an m-term sequence."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ConfigError("empty sequence")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    k = _snap_ceil(scores.size * (1.0 - alpha))
    k = max(k, 1)
    return float(np.partition(scores, k - 1)[k - 1])


# --- set assembly from a path -------------------------------------------------


def _segment_training_scores(path, k, measure):
    pair = path.pairs[k]
    preds = path.data.X @ pair.beta
    return measure.training_scores(path.loss, path.data.y, preds)


def _score_threshold(scores, idx):
    """idx-th smallest score, the exclusive band edge for membership."""
    return float(np.partition(scores, idx - 1)[idx - 1])


def assemble_absolute_residual_set(path: HomotopyPath, alpha) -> IntervalUnion:
    """The conformal set for the absolute-residual score, segment by segment.

    Inside a segment the n training residuals are fixed while the augmented
    residual is |z - u|, so membership is the closed band around the
    prediction u with radius equal to the relevant order statistic.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    n = path.data.n
    idx = n + 1 - _min_scores_above(n, alpha)
    if idx <= 0:
        return IntervalUnion()
    measure = AbsoluteResidual()
    parts = []
    for k, (lo, hi) in enumerate(path.segments):
        if lo > hi:
            continue
        scores = _segment_training_scores(path, k, measure)
        q = _score_threshold(scores, idx)
        u = path.preds[k]
        a, b = max(lo, u - q), min(hi, u + q)
        if a <= b:
            parts.append((a, b))
    return IntervalUnion(parts)


def assemble_generic_set(path: HomotopyPath, alpha, measure) -> IntervalUnion:
    """Breakpoint scan for any score whose augmented part is unimodal in z.

    Per segment, each training score r_i pins the interval S_i of candidates
    where r_i still (weakly) exceeds the augmented score.  Between
    consecutive breakpoints the count of covering S_i is constant, so kept
    pieces are read off by comparing that count with m*; breakpoints kept on
    their own become degenerate intervals.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    n = path.data.n
    m_star = _min_scores_above(n, alpha)
    parts = []
    for k, (lo, hi) in enumerate(path.segments):
        if lo > hi:
            continue
        scores = _segment_training_scores(path, k, measure)
        u = path.preds[k]
        s_lo = np.empty(n)
        s_hi = np.empty(n)
        for i, r in enumerate(scores):
            dlo, dhi = measure.band(path.loss, r)
            s_lo[i], s_hi[i] = u + dlo, u + dhi
        keep = (s_hi >= lo) & (s_lo <= hi)
        s_lo, s_hi = np.maximum(s_lo[keep], lo), np.minimum(s_hi[keep], hi)
        cuts = np.unique(np.concatenate(([lo, hi], s_lo, s_hi)))
        for b0, b1 in zip(cuts[:-1], cuts[1:]):
            covered = int(np.sum((s_lo <= b0) & (s_hi >= b1)))
            if covered >= m_star:
                parts.append((b0, b1))
        for b in cuts:
            rb = measure.augmented_score(path.loss, b, u)
            if int(np.sum(scores >= rb)) >= m_star:
                parts.append((b, b))
    return IntervalUnion(parts)


def wrap_sets(path: HomotopyPath, alpha, nu=None, eps=None):
    """Inner and outer interval unions sandwiching the exact conformal set.

    Under a smooth loss with the gradient score and a strongly convex
    penalty, every score computed from an eps-certified solution is within
    sqrt(2 nu eps) of its exact counterpart, so widening (narrowing) the
    score threshold by twice that amount yields a superset (subset) of the
    set an exact solver would produce.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if not path.reg.strongly_convex:
        raise UnsupportedProblemError(
            "wrapping requires a strongly convex penalty: the rescaled dual "
            "vector must coincide with the raw gradient mapping"
        )
    if nu is None:
        if path.loss.local_curvature:
            raise ConfigError("pass the range-restricted curvature bound nu explicitly")
        nu = path.loss.regularity().nu
    eps = path.eps if eps is None else float(eps)
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    shift = 2.0 * math.sqrt(2.0 * nu * eps)
    measure = GradientBased()
    n = path.data.n
    idx = n + 1 - _min_scores_above(n, alpha)
    lower_parts = []
    upper_parts = []
    for k, (lo, hi) in enumerate(path.segments):
        if lo > hi:
            continue
        scores = _segment_training_scores(path, k, measure)
        u = path.preds[k]
        if idx <= 0:
            continue
        q = _score_threshold(scores, idx)
        q_minus, q_plus = q - shift, q + shift
        if q_minus >= 0:
            dlo, dhi = measure.band(path.loss, q_minus)
            a, b = max(lo, u + dlo), min(hi, u + dhi)
            if a <= b:
                lower_parts.append((a, b))
        dlo, dhi = measure.band(path.loss, q_plus)
        a, b = max(lo, u + dlo), min(hi, u + dhi)
        if a <= b:
            upper_parts.append((a, b))
    return IntervalUnion(lower_parts), IntervalUnion(upper_parts)


# --- reference constructions --------------------------------------------------


def exact_ridge_set(data: Dataset, x_new, lam, alpha) -> IntervalUnion:
    """Exact conformal set for ridge + quadratic loss via closed-form refits.

    The augmented solution is affine in z, hence every residual is |a + b z|
    and ranks change only at finitely many crossings; scanning them gives
    the set without any grid.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if lam <= 0:
        raise ConfigError("lam must be positive")
    x_new = np.asarray(x_new, dtype=float)
    X = np.vstack([data.X, x_new])
    n = data.n
    A = X.T @ X + 0.5 * lam * np.eye(data.p)
    try:
        sol = np.linalg.solve(A, np.column_stack([data.X.T @ data.y, x_new]))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - lam > 0 prevents it
        raise ConfigError("singular normal equations") from exc
    c, d = sol[:, 0], sol[:, 1]
    pc, qc = X @ c, X @ d
    a = np.append(data.y, 0.0) - pc
    b = -qc
    b[-1] += 1.0  # augmented residual |z - pred(z)| keeps its own z term

    m_star = _min_scores_above(n, alpha)
    cuts = set()
    for i in range(n):
        for da, db in ((a[i] - a[-1], b[i] - b[-1]), (a[i] + a[-1], b[i] + b[-1])):
            if db != 0.0:
                cuts.add(-da / db)
    cuts = sorted(cuts)
    if not cuts:
        probes = [0.0]
    else:
        span = max(cuts[-1] - cuts[0], 1.0)
        probes = [cuts[0] - 0.5 * span]
        probes += [0.5 * (b0 + b1) for b0, b1 in zip(cuts[:-1], cuts[1:])]
        probes.append(cuts[-1] + 0.5 * span)

    def above_strict(z):
        res = np.abs(a + b * z)
        return int(np.sum(res[:n] > res[-1]))

    def above_incl(z):
        res = np.abs(a + b * z)
        return int(np.sum(res[:n] >= res[-1]))

    edges = [-math.inf] + cuts + [math.inf]
    parts = []
    for (e0, e1), mid in zip(zip(edges[:-1], edges[1:]), probes):
        if above_strict(mid) >= m_star:
            parts.append((e0, e1))
    for z in cuts:
        if above_incl(z) >= m_star:
            parts.append((z, z))
    return IntervalUnion(parts)


def split_conformal(data: Dataset, x_new, alpha, split_fraction, lam, loss, reg,
                    config: SolverConfig | None = None, rng=None):
    """Split baseline: fit one fold, calibrate residuals on the other.

    Returns ``(lo, hi)``, or ``None`` when the calibration fold is too small
    for the requested level (the honest answer is then the whole line).
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if not 0.0 < split_fraction < 1.0:
        raise ConfigError("split_fraction must lie in (0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    n = data.n
    n_train = int(round(split_fraction * n))
    if n_train < 2 or n - n_train < 1:
        raise ConfigError("both folds must be nonempty (training fold needs >= 2 rows)")
    perm = rng.permutation(n)
    tr, cal = perm[:n_train], perm[n_train:]
    dtr = Dataset(data.X[tr], data.y[tr])
    cfg = config or SolverConfig(tolerance=1e-8)
    pair = solve_to_tol(dtr, lam, loss, reg, cfg)
    resid = np.sort(np.abs(data.y[cal] - data.X[cal] @ pair.beta))
    m = resid.size
    k = _snap_ceil((m + 1) * (1.0 - alpha))
    if k > m:
        return None
    radius = float(resid[k - 1])
    u = float(np.asarray(x_new, dtype=float) @ pair.beta)
    return (u - radius, u + radius)


def oracle_set(data: Dataset, x_new, y_true, alpha, lam, loss, reg,
               config: SolverConfig | None = None):
    """Reference interval fitted with the held-out label itself (evaluation only)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    daug = data.with_candidate(np.asarray(x_new, dtype=float), float(y_true))
    cfg = config or SolverConfig(tolerance=1e-8)
    pair = solve_to_tol(daug, lam, loss, reg, cfg)
    scores = conformity_scores(pair, daug, y_true, AbsoluteResidual(), loss)
    radius = quantile(scores, alpha)
    u = float(np.asarray(x_new, dtype=float) @ pair.beta)
    return (u - radius, u + radius)
