"""Self-contained invariant suite behind the CLI's validate command.

Each invariant is a named check returning (ok, detail); the suite is
deterministic given the seed.  ``fault`` injects a deliberate violation
(currently: doubling the grid step without the edge safeguard) so the suite
itself can be shown to catch broken paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal import (
    AbsoluteResidual,
    GradientBased,
    assemble_absolute_residual_set,
    assemble_generic_set,
    conformity_scores,
    exact_ridge_set,
    typicalness,
    wrap_sets,
)
from .homotopy import build_path, covering_point, recomputed_gap_at, step_size
from .losses import LinexLoss, LogCoshLoss, PowerLoss, QuadraticLoss
from .optim import (
    Dataset,
    SolverConfig,
    dual_distance_bound,
    dual_feasible,
    duality_gap,
    gap_variation,
    solve_to_tol,
)
from .regularizers import L1Penalty, RidgePenalty

FAULT_MODES = ("none", "inflate-step")


@dataclass
class InvariantResult:
    name: str
    passed: bool
    detail: str = ""


def _instance(rng, n=20, p=4):
    X = rng.normal(size=(n, p)) / math.sqrt(n)
    beta = np.zeros(p)
    beta[: p // 2] = 1.0
    y = X @ beta + 0.4 * rng.normal(size=n)
    x_new = rng.normal(size=p) / math.sqrt(n)
    return Dataset(X, y), x_new


def _check_conjugate_oracles(seed):
    rng = np.random.default_rng(seed)
    losses = [QuadraticLoss(), PowerLoss(1.5), LogCoshLoss(0.8), LinexLoss(0.9)]
    worst = 0.0
    for loss in losses:
        for _ in range(20):
            y = float(rng.normal())
            v = float(rng.uniform(-0.9, 0.9))
            if isinstance(loss, LinexLoss):
                v = min(v, 0.9 * loss.gamma)
            u = np.linspace(y - 50, y + 50, 200_001)
            brute = float(np.max(u * v - loss.value(y, u)))
            closed = loss.conjugate(y, v)
            worst = max(worst, abs(closed - brute))
    return worst <= 1e-4, f"max deviation {worst:.2e}"


def _check_regularizer_conjugates(seed):
    rng = np.random.default_rng(seed)
    ridge, l1 = RidgePenalty(), L1Penalty()
    grid = np.linspace(-12.0, 12.0, 200_001)
    worst = 0.0
    for _ in range(50):
        v = rng.normal(size=4)
        # both penalties are separable, so the sup splits per coordinate
        brute = sum(float(np.max(grid * vj - 0.5 * grid * grid)) for vj in v)
        worst = max(worst, abs(ridge.conjugate(v) - brute))
        inside = v / (np.max(np.abs(v)) * 1.01)
        outside = v * (1.5 / np.max(np.abs(v)))
        if l1.conjugate(inside) != 0.0 or not math.isinf(l1.conjugate(outside)):
            return False, "l1 indicator misclassified"
    return worst <= 1e-4, f"ridge conjugate deviation {worst:.2e}"


def _check_gap_variation_identity(seed):
    rng = np.random.default_rng(seed)
    quad = QuadraticLoss()
    ridge = RidgePenalty()
    for _ in range(200):
        data, x_new = _instance(rng)
        d = data.with_candidate(x_new, float(rng.normal()))
        beta = rng.normal(size=d.p)
        lam = rng.uniform(0.3, 1.5)
        theta = rng.normal(size=d.m) * 0.5
        z = d.z + rng.uniform(0.2, 1.5)
        lhs = gap_variation(d, beta, theta, z, d.z, lam, quad)
        rhs = (duality_gap(d.with_candidate(x_new, z), beta, theta, lam, quad, ridge)
               - duality_gap(d, beta, theta, lam, quad, ridge))
        if abs(lhs - rhs) / max(1.0, abs(lhs)) > 1e-10:
            return False, f"mismatch {lhs} vs {rhs}"
    return True, "200 fuzzed tuples"


def _check_weak_duality(seed):
    rng = np.random.default_rng(seed)
    quad = QuadraticLoss()
    for reg in (RidgePenalty(), L1Penalty()):
        for _ in range(100):
            data, x_new = _instance(rng)
            d = data.with_candidate(x_new, float(rng.normal()))
            beta = rng.normal(size=d.p)
            lam = rng.uniform(0.2, 1.5)
            theta = dual_feasible(d, beta, lam, quad, reg)
            if duality_gap(d, beta, theta, lam, quad, reg) < 0:
                return False, f"negative gap under {reg.name}"
    return True, "200 fuzzed pairs"


def _check_dual_distance_bound(seed):
    rng = np.random.default_rng(seed)
    ridge = RidgePenalty()
    for loss in (QuadraticLoss(), LogCoshLoss(0.9)):
        nu = loss.regularity().nu
        for _ in range(10):
            data, x_new = _instance(rng, n=15)
            d = data.with_candidate(x_new, float(rng.normal()))
            lam = rng.uniform(0.5, 1.5)
            ref = solve_to_tol(d, lam, loss, ridge, SolverConfig(tolerance=1e-12))
            rough = solve_to_tol(d, lam, loss, ridge, SolverConfig(tolerance=1e-4))
            dist = float(np.linalg.norm(rough.theta - ref.theta))
            if dist > dual_distance_bound(rough.gap, nu, lam) + 1e-5:
                return False, f"distance {dist:.3g} above bound"
    return True, "quadratic and logcosh under ridge"


def _build_validation_path(seed, step_scale=1.0):
    rng = np.random.default_rng(seed)
    data, x_new = _instance(rng, n=25, p=5)
    y_min, y_max = float(np.min(data.y)), float(np.max(data.y))
    path = build_path(data, x_new, y_min, y_max, 1e-2, 0.5, QuadraticLoss(),
                      RidgePenalty(), step_scale=step_scale)
    return path


def _check_path_validity(seed, step_scale=1.0):
    path = _build_validation_path(seed, step_scale=step_scale)
    zs = np.linspace(path.y_min, path.y_max, 500)
    worst = max(recomputed_gap_at(path, z) for z in zs)
    return worst <= path.eps, f"max recomputed gap {worst:.3g} vs eps {path.eps:g}"


def _check_path_complexity(seed):
    path = _build_validation_path(seed)
    s = step_size(path.loss.regularity(), path.eps, path.eps0)
    bound = math.ceil((path.y_max - path.y_min) / s) + 2
    return len(path) <= bound, f"T={len(path)} bound={bound}"


def _check_assembly_consistency(seed):
    path = _build_validation_path(seed)
    alpha = 0.15
    measure = AbsoluteResidual()
    union = assemble_generic_set(path, alpha, measure)
    bps = list(path.boundaries)
    for lo, hi in union:
        bps += [lo, hi]
    bps = np.asarray(bps)
    zs = np.linspace(path.y_min, path.y_max, 701)
    zs = zs[np.min(np.abs(zs[:, None] - bps[None, :]), axis=1) > 1e-9]
    for z in zs:
        k = covering_point(path, z)
        daug = path.data.with_candidate(path.x_new, float(z))
        pi = typicalness(conformity_scores(path.pairs[k], daug, z, measure, path.loss)).pi
        if union.contains(z) != (pi > alpha):
            return False, f"membership mismatch at z={z:.6g}"
    banded = assemble_absolute_residual_set(path, alpha)
    if banded != union:
        return False, "banded and generic assemblies differ"
    return True, f"{zs.size} probes"


def _check_set_nesting(seed):
    rng = np.random.default_rng(seed)
    data, x_new = _instance(rng, n=25, p=5)
    y_min, y_max = float(np.min(data.y)), float(np.max(data.y))
    for eps in (1e-2, 1e-4):
        path = build_path(data, x_new, y_min, y_max, eps, 0.5, QuadraticLoss(),
                          RidgePenalty())
        lower, upper = wrap_sets(path, 0.12)
        exact = exact_ridge_set(data, x_new, 0.5, 0.12).clip(y_min, y_max)
        if not lower.issubset(exact, tol=1e-9):
            return False, f"lower set escapes the exact set at eps={eps:g}"
        if not exact.issubset(upper, tol=1e-9):
            return False, f"exact set escapes the upper set at eps={eps:g}"
    return True, "eps sweep {1e-2, 1e-4}"


def _check_rank_rules(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        n = int(rng.integers(3, 40))
        alpha = float(rng.uniform(0.01, 0.99))
        # the band index and the quantile index describe the same cut
        from .conformal import _min_scores_above, _snap_ceil
        if n + 1 - _min_scores_above(n, alpha) != _snap_ceil((n + 1) * (1 - alpha)) - 1:
            return False, f"index identity fails at n={n}, alpha={alpha}"
        scores = rng.normal(size=n + 1) ** 2
        rep = typicalness(scores)
        if not 1 <= rep.rank <= n + 1:
            return False, "rank out of bounds"
        if not 0.0 <= rep.pi <= n / (n + 1) + 1e-15:
            return False, "pi out of bounds"
    return True, "200 random score vectors"


def run_invariants(seed=0, fault="none"):
    if fault not in FAULT_MODES:
        raise ValueError(f"unknown fault mode {fault!r}")
    step_scale = 2.0 if fault == "inflate-step" else 1.0
    checks = [
        ("loss-conjugate-oracle", lambda: _check_conjugate_oracles(seed)),
        ("regularizer-conjugate-oracle", lambda: _check_regularizer_conjugates(seed + 1)),
        ("gap-variation-identity", lambda: _check_gap_variation_identity(seed + 2)),
        ("weak-duality", lambda: _check_weak_duality(seed + 3)),
        ("dual-distance-bound", lambda: _check_dual_distance_bound(seed + 4)),
        ("path-validity", lambda: _check_path_validity(seed + 5, step_scale=step_scale)),
        ("path-complexity", lambda: _check_path_complexity(seed + 5)),
        ("assembly-consistency", lambda: _check_assembly_consistency(seed + 6)),
        ("set-nesting", lambda: _check_set_nesting(seed + 7)),
        ("rank-and-quantile-rules", lambda: _check_rank_rules(seed + 8)),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001 - a crash is a failed invariant
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(InvariantResult(name, ok, detail))
    return results
