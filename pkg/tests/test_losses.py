import math

import numpy as np
import pytest

from confpath.errors import ConfigError, NumericRangeError
from confpath.losses import (
    LinexLoss,
    LogCoshLoss,
    PowerLoss,
    QuadraticLoss,
    make_loss,
)

ALL_LOSSES = [
    QuadraticLoss(),
    PowerLoss(1.3),
    PowerLoss(1.7),
    PowerLoss(2.0),
    LogCoshLoss(0.5),
    LogCoshLoss(2.0),
    LinexLoss(1.0),
    LinexLoss(-0.7),
]

SYMMETRIC = [l for l in ALL_LOSSES if l.symmetric]


def brute_conjugate(loss, y, v, width=60.0, num=400_001):
    """Independent oracle: dense-grid maximization of u*v - ell(y, u)."""
    u = np.linspace(y - width, y + width, num)
    try:
        vals = u * v - loss.value(y, u)
    except NumericRangeError:
        mask_u = np.abs(u - y) <= 600.0 / abs(getattr(loss, "gamma", 1.0))
        u = u[mask_u]
        vals = u * v - loss.value(y, u)
    return float(np.max(vals))


def brute_diverges(loss, y, v):
    """True when the sup grows as the grid widens (v outside the domain)."""
    small = brute_conjugate(loss, y, v, width=20.0, num=50_001)
    big = brute_conjugate(loss, y, v, width=80.0, num=200_001)
    return big > small + 1.0


def in_domain_points(loss):
    if isinstance(loss, PowerLoss):
        # keep the conjugate maximizer inside the brute-force grid for small q
        return [-2.5, -0.4, 0.0, 1.2, 3.0]
    if isinstance(loss, QuadraticLoss):
        return [-3.0, -0.4, 0.0, 1.2, 5.0]
    if isinstance(loss, LogCoshLoss):
        return [-1.0, -0.6, 0.0, 0.35, 0.999, 1.0]
    g = loss.gamma
    if g > 0:
        return [g, 0.6 * g, 0.0, -1.5, -6.0]
    return [g, 0.6 * g, 0.0, 1.5, 6.0]


def test_quadratic_eval_examples():
    q = QuadraticLoss()
    assert q.value(1.0, 1.0) == 0.0
    assert q.value(3.0, 1.0) == 4.0


def test_linex_eval_closed_form():
    lx = LinexLoss(1.0)
    # difference y - u = 1 gives exp(1) - 1 - 1
    assert lx.value(2.0, 1.0) == pytest.approx(0.718281828459045, abs=1e-12)


def test_quadratic_grad_examples():
    q = QuadraticLoss()
    assert q.grad(2.0, 2.0) == 0.0
    assert q.grad(2.0, 5.0) == 6.0


def test_logcosh_grad_saturates():
    lc = LogCoshLoss(1.0)
    assert lc.grad(0.0, 40.0) == pytest.approx(1.0, abs=1e-12)


def test_conjugate_at_zero_vanishes():
    for loss in ALL_LOSSES:
        assert loss.conjugate(1.7, 0.0) == pytest.approx(0.0, abs=1e-12), loss


def test_quadratic_conjugate_value():
    assert QuadraticLoss().conjugate(0.0, 2.0) == pytest.approx(1.0, abs=1e-12)


def test_logcosh_out_of_domain_marker():
    lc = LogCoshLoss(1.0)
    assert math.isinf(lc.conjugate(0.0, 1.5))
    assert brute_diverges(lc, 0.0, 1.5)


def test_linex_out_of_domain_marker():
    lx = LinexLoss(1.0)
    assert math.isinf(lx.conjugate(0.0, 1.5))  # v > gamma
    assert brute_diverges(lx, 0.0, 1.5)
    assert not math.isinf(lx.conjugate(0.0, -4.0))


@pytest.mark.parametrize("loss", ALL_LOSSES, ids=repr)
def test_conjugate_matches_brute_force(loss):
    for y in (-1.0, 0.0, 2.5):
        for v in in_domain_points(loss):
            closed = loss.conjugate(y, v)
            assert not math.isinf(closed), (loss, v)
            assert closed == pytest.approx(brute_conjugate(loss, y, v), abs=1e-4)


@pytest.mark.parametrize("loss", SYMMETRIC, ids=repr)
def test_symmetry_and_nonnegativity(loss):
    rng = np.random.default_rng(0)
    a = rng.normal(size=200) * 3
    b = rng.normal(size=200) * 3
    va, vb = loss.value(a, b), loss.value(b, a)
    assert np.all(va >= 0)
    np.testing.assert_array_equal(va, vb)
    assert np.all(loss.value(a, a) == 0.0)


def test_zero_iff_equal():
    rng = np.random.default_rng(1)
    for loss in ALL_LOSSES:
        d = rng.normal(size=100)
        d = d[np.abs(d) > 1e-3]
        assert np.all(loss.value(d, 0.0) > 0)
        assert loss.value(0.7, 0.7) == 0.0


@pytest.mark.parametrize("loss", ALL_LOSSES, ids=repr)
def test_fenchel_young(loss):
    rng = np.random.default_rng(2)
    for _ in range(200):
        y, u = rng.normal(size=2) * 2
        v = rng.choice(in_domain_points(loss)) * rng.uniform(0.2, 1.0)
        lhs = u * v
        rhs = loss.value(y, u) + loss.conjugate(y, v)
        assert lhs <= rhs + 1e-9


@pytest.mark.parametrize("loss", ALL_LOSSES, ids=repr)
def test_grad_matches_finite_differences(loss):
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(100):
        y, u = rng.normal(size=2) * 2
        if abs(y - u) < 1e-3:
            u += 0.01
        fd = (loss.value(y, u + h) - loss.value(y, u - h)) / (2 * h)
        assert loss.grad(y, u) == pytest.approx(fd, abs=1e-5, rel=1e-6)


def test_power_kink_gradient_is_zero():
    pw = PowerLoss(1.5)
    assert pw.grad(0.3, 0.3) == 0.0


@pytest.mark.parametrize(
    "loss", [QuadraticLoss(), LogCoshLoss(0.5), LogCoshLoss(2.0)], ids=repr
)
def test_smoothness_upper_bound(loss):
    nu = loss.regularity().nu
    rng = np.random.default_rng(4)
    for _ in range(300):
        y, u, t = rng.normal(size=3) * 2
        lhs = loss.value(y, u + t)
        rhs = loss.value(y, u) + loss.grad(y, u) * t + 0.5 * nu * t * t
        assert lhs <= rhs + 1e-9


def test_linex_range_restricted_smoothness():
    lx = LinexLoss(0.8)
    delta = 3.0
    nu = lx.regularity(delta_max=delta).nu
    assert nu == pytest.approx(0.64 * math.exp(0.8 * 3.0))
    rng = np.random.default_rng(5)
    for _ in range(300):
        y = rng.normal() * 2
        u = y + rng.uniform(-delta, delta)
        t = rng.uniform(-delta, delta) - (y - u)  # keep u+t within the range of y
        if abs(y - (u + t)) > delta:
            continue
        lhs = lx.value(y, u + t)
        rhs = lx.value(y, u) + lx.grad(y, u) * t + 0.5 * nu * t * t
        assert lhs <= rhs + 1e-9


def test_quadratic_strong_convexity_lower_bound():
    q = QuadraticLoss()
    mu = q.regularity().mu
    assert mu == 2.0
    rng = np.random.default_rng(6)
    for _ in range(300):
        y, u, t = rng.normal(size=3) * 2
        lhs = q.value(y, u + t)
        rhs = q.value(y, u) + q.grad(y, u) * t + 0.5 * mu * t * t
        assert lhs >= rhs - 1e-9


def test_regularity_constants():
    assert QuadraticLoss().regularity().nu == 2.0
    assert LogCoshLoss(0.5).regularity().nu == pytest.approx(2.0)
    r = PowerLoss(1.5).regularity()
    assert r.kind == "uniformly_smooth"
    # the modulus upper-bounds the centered loss increment and inverts cleanly
    for t in (0.01, 0.3, 2.0):
        assert PowerLoss(1.5).value(t, 0.0) <= r.modulus(t) + 1e-12
        assert r.modulus(r.modulus_inverse(t)) == pytest.approx(t, rel=1e-12)
    assert PowerLoss(2.0).regularity().kind == "smooth"


def test_linex_regularity_requires_range():
    with pytest.raises(ConfigError):
        LinexLoss(1.0).regularity()


def test_linex_overflow_guard():
    lx = LinexLoss(2.0)
    with pytest.raises(NumericRangeError):
        lx.value(1000.0, 0.0)
    with pytest.raises(NumericRangeError):
        lx.grad(1000.0, 0.0)


@pytest.mark.parametrize("loss", ALL_LOSSES, ids=repr)
def test_grad_band_inverts_gradient_magnitude(loss):
    for r in (0.0, 0.05, 0.4, 1.0, 3.0):
        lo, hi = loss.grad_band(r)
        assert lo <= 0.0 <= hi
        for d, edge in ((lo, True), (hi, True)):
            if math.isinf(d):
                continue
            # |grad| at the band edge equals r; strictly inside it is smaller
            assert abs(loss.grad(d, 0.0)) == pytest.approx(r, abs=1e-9)
        for frac in (0.25, 0.75):
            if math.isinf(lo) or math.isinf(hi):
                continue
            d = lo + frac * (hi - lo)
            assert abs(loss.grad(d, 0.0)) <= r + 1e-9


def test_make_loss_factory():
    assert isinstance(make_loss("quadratic"), QuadraticLoss)
    assert make_loss("power", 1.5).q == 1.5
    assert make_loss("logcosh", 0.5).gamma == 0.5
    assert make_loss("linex", -1.0).gamma == -1.0
    with pytest.raises(ConfigError):
        make_loss("huber", 1.0)
    with pytest.raises(ConfigError):
        make_loss("power")
    with pytest.raises(ConfigError):
        make_loss("quadratic", 3.0)
    with pytest.raises(ConfigError):
        make_loss("power", 2.5)
    with pytest.raises(ConfigError):
        make_loss("logcosh", -1.0)
    with pytest.raises(ConfigError):
        make_loss("linex", 0.0)
