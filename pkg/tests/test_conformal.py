import math

import numpy as np
import pytest

from confpath.conformal import (
    AbsoluteResidual,
    GradientBased,
    assemble_absolute_residual_set,
    assemble_generic_set,
    conformity_scores,
    exact_ridge_set,
    make_measure,
    oracle_set,
    quantile,
    split_conformal,
    typicalness,
    wrap_sets,
)
from confpath.errors import ConfigError, UnsupportedProblemError
from confpath.homotopy import HomotopyPath, build_path, covering_point
from confpath.intervals import IntervalUnion
from confpath.losses import LogCoshLoss, QuadraticLoss
from confpath.optim import Dataset, PrimalDualPair, SolverConfig, dual_feasible, solve_to_tol
from confpath.regularizers import L1Penalty, RidgePenalty

QUAD = QuadraticLoss()
RIDGE = RidgePenalty()
L1 = L1Penalty()


def make_data(rng, n=30, p=5, noise=0.5):
    X = rng.normal(size=(n, p)) / math.sqrt(n)
    beta = np.zeros(p)
    beta[: max(1, p // 2)] = 1.0
    y = X @ beta + noise * rng.normal(size=n)
    x_new = rng.normal(size=p) / math.sqrt(n)
    return Dataset(X, y), x_new


def quick_path(rng, loss=QUAD, reg=RIDGE, lam=0.4, eps=2e-2, **kw):
    data, x_new = make_data(rng)
    y_min, y_max = float(np.min(data.y)), float(np.max(data.y))
    return build_path(data, x_new, y_min, y_max, eps, lam, loss, reg, **kw)


def pi_at(path, z, measure):
    """Independent membership oracle: typicalness via the covering solution."""
    k = covering_point(path, z)
    daug = path.data.with_candidate(path.x_new, z)
    scores = conformity_scores(path.pairs[k], daug, z, measure, path.loss)
    return typicalness(scores).pi


def union_breakpoints(path, union):
    pts = list(path.boundaries)
    for lo, hi in union:
        pts += [lo, hi]
    return np.array(pts)


# --- scores / ranks / quantiles ----------------------------------------------


def test_scores_zero_on_perfect_fit():
    X = np.eye(4)
    beta = np.array([1.0, 2.0, 3.0, 4.0])
    data = Dataset(X, X @ beta, x_new=np.ones(4), z=None)
    pair = PrimalDualPair(beta, np.zeros(5), 0.0)
    d = Dataset(X, X @ beta, x_new=np.ones(4), z=float(np.ones(4) @ beta))
    s = conformity_scores(pair, d, d.z, AbsoluteResidual(), QUAD)
    np.testing.assert_array_equal(s, np.zeros(5))


def test_gradient_scores_double_absolute_for_quadratic():
    rng = np.random.default_rng(0)
    data, x_new = make_data(rng)
    beta = rng.normal(size=data.p)
    pair = PrimalDualPair(beta, np.zeros(data.n + 1), 0.0)
    d = data.with_candidate(x_new, 1.3)
    s_abs = conformity_scores(pair, d, 1.3, AbsoluteResidual(), QUAD)
    s_grad = conformity_scores(pair, d, 1.3, GradientBased(), QUAD)
    np.testing.assert_allclose(s_grad, 2.0 * s_abs, rtol=1e-12)


def test_scores_match_independent_loop():
    rng = np.random.default_rng(1)
    data, x_new = make_data(rng)
    beta = rng.normal(size=data.p)
    pair = PrimalDualPair(beta, np.zeros(data.n + 1), 0.0)
    z = 0.7
    d = data.with_candidate(x_new, z)
    s = conformity_scores(pair, d, z, AbsoluteResidual(), QUAD)
    expected = [abs(data.y[i] - float(data.X[i] @ beta)) for i in range(data.n)]
    expected.append(abs(z - float(x_new @ beta)))
    np.testing.assert_allclose(s, expected, atol=1e-12)


def test_typicalness_examples():
    r = typicalness(np.array([0.5, 0.9, 0.7, 0.1]))
    assert r.rank == 1
    assert r.pi == pytest.approx(3 / 4)
    r = typicalness(np.full(6, 2.0))
    assert r.rank == 6 and r.pi == 0.0
    r = typicalness(np.array([0.1, 0.2, 0.3, 0.25]))
    assert r.rank == 3 and r.pi == pytest.approx(0.25)


def test_typicalness_permutation_invariant():
    rng = np.random.default_rng(2)
    s = rng.normal(size=21) ** 2
    base = typicalness(s).rank
    for _ in range(20):
        perm = np.append(rng.permutation(20), 20)
        assert typicalness(s[perm]).rank == base


def test_quantile_examples():
    assert quantile(np.arange(1.0, 11.0), 0.1) == 9.0
    assert quantile(np.array([5.0, 1.0, 4.0, 2.0, 3.0]), 0.5) == 3.0
    assert quantile(np.full(7, 3.3), 0.42) == 3.3
    with pytest.raises(ConfigError):
        quantile(np.arange(4.0), 0.0)
    with pytest.raises(ConfigError):
        quantile(np.arange(4.0), 1.0)


# --- assembly ----------------------------------------------------------------


def manual_path(data, x_new, beta, lam, y_min, y_max, loss=QUAD, reg=RIDGE, eps=1e-2):
    daug = data.with_candidate(x_new, float(x_new @ beta))
    theta = dual_feasible(daug, beta, lam, loss, reg)
    pair = PrimalDualPair(np.asarray(beta, float), theta, 0.0, daug.z)
    z0 = float(x_new @ beta)
    return HomotopyPath(
        zs=np.array([z0]), pairs=(pair,), radii=np.array([np.inf]),
        preds=np.array([z0]), y_min=y_min, y_max=y_max, eps=eps, eps0=eps / 10,
        step=np.inf, mode="halved", data=data, x_new=x_new, lam=lam,
        loss=loss, reg=reg,
    )


def test_single_point_band_covering_range():
    X = np.array([[1.0], [2.0], [-1.0], [0.5], [1.5]])
    y = np.array([0.1, 0.2, -0.1, 0.05, 0.15])
    data = Dataset(X, y)
    path = manual_path(data, np.array([1.0]), np.zeros(1), 1.0, -0.01, 0.01)
    got = assemble_absolute_residual_set(path, 0.2)
    assert got == IntervalUnion([(-0.01, 0.01)])


def test_zero_band_degenerate_interval():
    X = np.array([[1.0], [2.0], [-1.0], [0.5]])
    beta = np.array([0.7])
    data = Dataset(X, X @ beta)  # residuals are exactly zero at beta
    x_new = np.array([1.0])
    path = manual_path(data, x_new, beta, 1.0, 0.0, 2.0)
    got = assemble_absolute_residual_set(path, 0.3)
    assert got == IntervalUnion([(0.7, 0.7)])
    gen = assemble_generic_set(path, 0.3, AbsoluteResidual())
    assert gen == got


def test_high_alpha_empty_union():
    rng = np.random.default_rng(3)
    path = quick_path(rng)
    assert assemble_absolute_residual_set(path, 0.999).is_empty


@pytest.mark.parametrize("seed", [4, 5, 6])
@pytest.mark.parametrize("case", ["ridge", "l1"])
def test_generic_equals_banded_absolute(seed, case):
    rng = np.random.default_rng(seed)
    loss, reg, lam = (QUAD, RIDGE, 0.4) if case == "ridge" else (QUAD, L1, 0.05)
    path = quick_path(rng, loss, reg, lam)
    for alpha in (0.1, 0.25, 0.5):
        banded = assemble_absolute_residual_set(path, alpha)
        generic = assemble_generic_set(path, alpha, AbsoluteResidual())
        assert generic == banded, (seed, case, alpha)


@pytest.mark.parametrize("measure_name", ["absolute_residual", "gradient"])
@pytest.mark.parametrize("loss", [QUAD, LogCoshLoss(0.8)], ids=repr)
def test_assembly_matches_dense_typicalness(measure_name, loss):
    rng = np.random.default_rng(7)
    path = quick_path(rng, loss=loss, lam=0.4)
    measure = make_measure(measure_name)
    alpha = 0.15
    union = assemble_generic_set(path, alpha, measure)
    bps = union_breakpoints(path, union)
    zs = np.linspace(path.y_min, path.y_max, 2001)
    zs = zs[np.min(np.abs(zs[:, None] - bps[None, :]), axis=1) > 1e-9]
    for z in zs:
        in_union = union.contains(z)
        in_pi = pi_at(path, z, measure) > alpha
        assert in_union == in_pi, z


# --- exact ridge set ----------------------------------------------------------


def brute_ridge_membership(data, x_new, lam, alpha, zs):
    """Dense oracle: refit per candidate, rank the residuals, test typicalness."""
    X = np.vstack([data.X, x_new])
    A = X.T @ X + 0.5 * lam * np.eye(data.p)
    out = []
    n = data.n
    for z in zs:
        beta = np.linalg.solve(A, X.T @ np.append(data.y, z))
        res = np.abs(np.append(data.y, z) - X @ beta)
        pi = np.sum(res[:n] > res[-1]) / (n + 1)
        out.append(pi > alpha)
    return np.array(out)


def test_exact_ridge_against_dense_refits():
    rng = np.random.default_rng(8)
    data, x_new = make_data(rng, n=24, p=4)
    lam, alpha = 0.6, 0.15
    got = exact_ridge_set(data, x_new, lam, alpha)
    assert not got.is_empty
    zs = np.linspace(np.min(data.y) - 1, np.max(data.y) + 1, 10_001)
    bps = np.array([e for pair in got for e in pair])
    keep = np.min(np.abs(zs[:, None] - bps[None, :]), axis=1) > 1e-9
    member = brute_ridge_membership(data, x_new, lam, alpha, zs[keep])
    for z, m in zip(zs[keep], member):
        assert got.contains(z) == m, z


def test_exact_ridge_duplicated_rows_contains_common_label():
    x = np.array([1.0, -0.5])
    X = np.tile(x, (6, 1))
    y = np.full(6, 2.0)
    data = Dataset(X, y)
    got = exact_ridge_set(data, x, 1.0, 0.2)
    assert got.contains(2.0)


def test_exact_ridge_huge_lambda_symmetric():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(10, 3))
    vals = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    y = np.concatenate([vals, -vals])
    data = Dataset(X, y)
    got = exact_ridge_set(data, rng.normal(size=3), 1e9, 0.2)
    lo, hi = got.pairs[0][0], got.pairs[-1][1]
    assert lo == pytest.approx(-hi, abs=1e-5)
    assert got.contains(0.0)


def test_homotopy_endpoints_near_exact_ridge():
    rng = np.random.default_rng(10)
    data, x_new = make_data(rng, n=40, p=6)
    lam, alpha, eps = 0.6, 0.1, 1e-4
    path = build_path(data, x_new, float(np.min(data.y)), float(np.max(data.y)),
                      eps, lam, QUAD, RIDGE)
    approx = assemble_absolute_residual_set(path, alpha)
    exact = exact_ridge_set(data, x_new, lam, alpha).clip(path.y_min, path.y_max)
    spacing = 2 * path.step
    assert len(approx) == len(exact)
    for (a0, a1), (e0, e1) in zip(approx, exact):
        assert abs(a0 - e0) <= spacing
        assert abs(a1 - e1) <= spacing


# --- wrapping ----------------------------------------------------------------


def test_wrap_requires_strongly_convex():
    rng = np.random.default_rng(11)
    path = quick_path(rng, QUAD, L1, lam=0.05)
    with pytest.raises(UnsupportedProblemError):
        wrap_sets(path, 0.1)


def test_wrap_zero_eps_collapses_to_base():
    rng = np.random.default_rng(12)
    path = quick_path(rng)
    lower, upper = wrap_sets(path, 0.15, eps=0.0)
    base = assemble_generic_set(path, 0.15, GradientBased())
    assert lower == base
    assert upper == base


def test_wrap_nesting_on_ridge_quadratic():
    for seed in range(13, 18):
        rng = np.random.default_rng(seed)
        data, x_new = make_data(rng, n=30, p=5)
        lam, alpha = 0.5, 0.12
        for eps in (1e-2, 1e-4):
            path = build_path(data, x_new, float(np.min(data.y)), float(np.max(data.y)),
                              eps, lam, QUAD, RIDGE)
            lower, upper = wrap_sets(path, alpha)
            assert lower.issubset(upper, tol=1e-12)
            exact = exact_ridge_set(data, x_new, lam, alpha).clip(path.y_min, path.y_max)
            assert lower.issubset(exact, tol=1e-9), seed
            assert exact.issubset(upper, tol=1e-9), seed


# --- baselines ----------------------------------------------------------------


class _IdentityRng:
    def permutation(self, n):
        return np.arange(n)


def test_split_conformal_hand_example():
    # calibration residuals are exactly 1,2,3,4 once the huge lam forces beta ~ 0
    X = np.zeros((8, 2))
    X[:4, 0] = 1.0
    y = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0])
    data = Dataset(X, y)
    got = split_conformal(data, np.zeros(2), 0.2, 0.5, 1e9, QUAD, RIDGE,
                          rng=_IdentityRng())
    lo, hi = got
    assert 0.5 * (hi - lo) == pytest.approx(4.0, abs=1e-6)


def test_split_conformal_zero_noise_collapses():
    rng = np.random.default_rng(14)
    data, x_new = make_data(rng, n=60, noise=0.0)
    got = split_conformal(data, x_new, 0.1, 0.6, 1e-7, QUAD, RIDGE, rng=rng)
    lo, hi = got
    assert hi - lo < 1e-2


def test_split_conformal_insufficient_calibration():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(3, 2))
    y = rng.normal(size=3)
    data = Dataset(X, y)
    got = split_conformal(data, np.zeros(2), 0.1, 0.67, 1.0, QUAD, RIDGE, rng=rng)
    assert got is None


def test_oracle_set_zero_noise():
    rng = np.random.default_rng(16)
    data, x_new = make_data(rng, n=40, noise=0.0)
    y_true = float(x_new @ np.concatenate([np.ones(2), np.zeros(3)]))
    lo, hi = oracle_set(data, x_new, y_true, 0.1, 1e-8, QUAD, RIDGE)
    assert lo <= y_true <= hi
    assert hi - lo < 1e-2


def test_oracle_membership_matches_exact_ridge():
    rng = np.random.default_rng(17)
    data, x_new = make_data(rng, n=30)
    lam, alpha = 0.7, 0.15
    exact = exact_ridge_set(data, x_new, lam, alpha)
    rngy = np.random.default_rng(18)
    hits = 0
    for _ in range(20):
        y_true = float(rngy.uniform(np.min(data.y), np.max(data.y)))
        lo, hi = oracle_set(data, x_new, y_true, alpha, lam, QUAD, RIDGE)
        in_oracle = lo <= y_true <= hi
        in_exact = exact.contains(y_true, tol=1e-9)
        if abs(y_true - lo) < 1e-6 or abs(y_true - hi) < 1e-6:
            continue  # knife-edge draws are uninformative
        assert in_oracle == in_exact
        hits += 1
    assert hits >= 15
