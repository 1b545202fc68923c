"""Convex regression losses: values, prediction gradients, convex conjugates.

Every loss here is a function of the label/prediction difference,
``ell(y, u) = h(y - u)`` with ``h`` convex, nonnegative and ``h(0) = 0``.
The conjugate is taken in the prediction argument,

    ell*(y, v) = sup_u  u * v - ell(y, u) = y * v + h*(-v),

so ``ell*(y, 0) = 0`` for every variant.  Out-of-domain conjugate arguments
produce ``inf`` as an explicit marker; callers check for it before any
arithmetic (see :mod:`confpath.optim`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericRangeError

_EXP_LIMIT = 700.0  # nearly the float64 exp overflow threshold
_LOG2 = math.log(2.0)


def _ret(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _xlogx(t):
    """t * log(t) extended by continuity with value 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = t[pos] * np.log(t[pos])
    return out


@dataclass(frozen=True)
class Regularity:
    """Regularity class of a loss, as consumed by the step-size rules.

    ``kind`` is one of ``smooth`` (curvature bound ``nu``), ``lipschitz``
    (slope bound ``nu``), ``uniformly_smooth`` (modulus ``modulus`` with
    generalized inverse ``modulus_inverse``) or ``none``.  ``mu`` is a
    strong-convexity constant; 0 means none is known.
    """

    kind: str
    nu: float | None = None
    mu: float = 0.0
    modulus: Callable[[float], float] | None = None
    modulus_inverse: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind not in ("smooth", "lipschitz", "uniformly_smooth", "none"):
            raise ConfigError(f"unknown regularity kind {self.kind!r}")
        if self.kind in ("smooth", "lipschitz") and (self.nu is None or self.nu <= 0):
            raise ConfigError("smooth/lipschitz regularity needs nu > 0")
        if self.kind == "uniformly_smooth" and (
            self.modulus is None or self.modulus_inverse is None
        ):
            raise ConfigError("uniformly_smooth regularity needs a modulus and inverse")


class Loss:
    """Base class; subclasses implement the difference form h."""

    name = ""
    symmetric = True
    # set on losses whose curvature bound is only valid on a stated range
    local_curvature = False

    def value(self, y, u):
        raise NotImplementedError

    def grad(self, y, u):
        """Derivative with respect to the prediction u."""
        raise NotImplementedError

    def conjugate(self, y, v):
        raise NotImplementedError

    def grad_band(self, r):
        """Interval of d = y - u where |grad(y, u)| <= r.

        Returns ``(lo, hi)`` with ``lo <= 0 <= hi``; infinite endpoints mean
        the gradient magnitude never reaches ``r`` on that side.
        """
        raise NotImplementedError

    def regularity(self, delta_max=None) -> Regularity:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class QuadraticLoss(Loss):
    """ell(y, u) = (y - u)^2."""

    name = "quadratic"

    def value(self, y, u):
        d = np.subtract(y, u, dtype=float)
        return _ret(d * d)

    def grad(self, y, u):
        return _ret(2.0 * np.subtract(u, y, dtype=float))

    def conjugate(self, y, v):
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        return _ret(y * v + 0.25 * v * v)

    def grad_band(self, r):
        r = float(r)
        return -0.5 * r, 0.5 * r

    def regularity(self, delta_max=None):
        return Regularity("smooth", nu=2.0, mu=2.0)


class PowerLoss(Loss):
    """ell(y, u) = |y - u|^q with exponent 1 < q <= 2.

    For q < 2 the curvature blows up at the minimizer, so the loss is only
    uniformly smooth; the modulus below uses the Hoelder continuity of the
    derivative (constant 2^(2-q), exact at q = 2).
    """

    name = "power"

    def __init__(self, q):
        q = float(q)
        if not 1.0 < q <= 2.0:
            raise ConfigError(f"power exponent must lie in (1, 2], got {q}")
        self.q = q
        self.dual_exponent = q / (q - 1.0)

    def __repr__(self):
        return f"PowerLoss(q={self.q})"

    def value(self, y, u):
        d = np.abs(np.subtract(y, u, dtype=float))
        return _ret(d**self.q)

    def grad(self, y, u):
        d = np.subtract(u, y, dtype=float)
        return _ret(self.q * np.abs(d) ** (self.q - 1.0) * np.sign(d))

    def conjugate(self, y, v):
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        rho = self.dual_exponent
        return _ret(y * v + np.abs(v) ** rho / (rho * self.q ** (rho - 1.0)))

    def grad_band(self, r):
        m = (float(r) / self.q) ** (1.0 / (self.q - 1.0))
        return -m, m

    def regularity(self, delta_max=None):
        if self.q == 2.0:
            return Regularity("smooth", nu=2.0, mu=2.0)
        c = 2.0 ** (2.0 - self.q)
        q = self.q
        return Regularity(
            "uniformly_smooth",
            modulus=lambda t: c * abs(t) ** q,
            modulus_inverse=lambda e: (e / c) ** (1.0 / q),
        )


class LogCoshLoss(Loss):
    """ell(y, u) = gamma * log(cosh((y - u) / gamma)) with scale gamma > 0.

    A smooth surrogate for |y - u| (slope saturates at 1); curvature is
    bounded by 1/gamma.
    """

    name = "logcosh"

    def __init__(self, gamma):
        gamma = float(gamma)
        if gamma <= 0:
            raise ConfigError(f"logcosh scale must be positive, got {gamma}")
        self.gamma = gamma

    def __repr__(self):
        return f"LogCoshLoss(gamma={self.gamma})"

    def value(self, y, u):
        a = np.abs(np.subtract(y, u, dtype=float)) / self.gamma
        # log(cosh(a)) = a + log1p(exp(-2a)) - log(2), stable for large a
        return _ret(self.gamma * (a + np.log1p(np.exp(-2.0 * a)) - _LOG2))

    def grad(self, y, u):
        return _ret(np.tanh(np.subtract(u, y, dtype=float) / self.gamma))

    def conjugate(self, y, v):
        scalar = np.ndim(y) == 0 and np.ndim(v) == 0
        y, v = np.broadcast_arrays(
            np.atleast_1d(np.asarray(y, dtype=float)),
            np.atleast_1d(np.asarray(v, dtype=float)),
        )
        a = np.abs(v)
        out = np.full(v.shape, np.inf)
        ok = a <= 1.0
        # v*artanh(v) + log(1 - v^2)/2 rewritten for stability near |v| = 1
        h_star = 0.5 * (_xlogx(1.0 + a[ok]) + _xlogx(1.0 - a[ok]))
        out[ok] = y[ok] * v[ok] + self.gamma * h_star
        return float(out[0]) if scalar else out

    def grad_band(self, r):
        r = float(r)
        if r >= 1.0:
            return -math.inf, math.inf
        m = self.gamma * math.atanh(r)
        return -m, m

    def regularity(self, delta_max=None):
        return Regularity("smooth", nu=1.0 / self.gamma)


class LinexLoss(Loss):
    """ell(y, u) = exp(gamma (y - u)) - gamma (y - u) - 1 with gamma != 0.

    Asymmetric: overshooting and undershooting are penalized differently.
    There is no global curvature bound, so ``regularity`` requires the
    maximal |y - u| the caller will traverse and returns a bound valid on
    that range only.
    """

    name = "linex"
    symmetric = False
    local_curvature = True

    def __init__(self, gamma):
        gamma = float(gamma)
        if gamma == 0:
            raise ConfigError("linex asymmetry gamma must be nonzero")
        self.gamma = gamma

    def __repr__(self):
        return f"LinexLoss(gamma={self.gamma})"

    def _expo(self, y, u):
        e = self.gamma * np.subtract(y, u, dtype=float)
        if np.any(e > _EXP_LIMIT):
            raise NumericRangeError(
                f"linex exponent {float(np.max(e)):.3g} exceeds the floating-point range"
            )
        return e

    def value(self, y, u):
        e = self._expo(y, u)
        return _ret(np.exp(e) - e - 1.0)

    def grad(self, y, u):
        e = self._expo(y, u)
        return _ret(self.gamma * (1.0 - np.exp(e)))

    def conjugate(self, y, v):
        scalar = np.ndim(y) == 0 and np.ndim(v) == 0
        y, v = np.broadcast_arrays(
            np.atleast_1d(np.asarray(y, dtype=float)),
            np.atleast_1d(np.asarray(v, dtype=float)),
        )
        s = 1.0 - v / self.gamma
        out = np.full(v.shape, np.inf)
        ok = s >= 0.0
        sk = s[ok]
        out[ok] = y[ok] * v[ok] + _xlogx(sk) - sk + 1.0
        return float(out[0]) if scalar else out

    def grad_band(self, r):
        r = float(r)
        g = abs(self.gamma)
        # |grad| <= r  <=>  exp(gamma d) in [1 - r/g, 1 + r/g]
        near = math.log1p(r / g) / self.gamma
        far = math.log1p(-r / g) / self.gamma if r < g else None
        if self.gamma > 0:
            return (far if far is not None else -math.inf), near
        return near, (far if far is not None else math.inf)

    def regularity(self, delta_max=None):
        if delta_max is None:
            raise ConfigError(
                "linex has no global curvature bound; pass the working-range "
                "delta_max to obtain a range-restricted one"
            )
        nu = self.gamma**2 * math.exp(abs(self.gamma) * float(delta_max))
        return Regularity("smooth", nu=nu)


_LOSSES = {
    "quadratic": QuadraticLoss,
    "power": PowerLoss,
    "logcosh": LogCoshLoss,
    "linex": LinexLoss,
}


def make_loss(name, param=None) -> Loss:
    """Instantiate a loss by name; ``param`` is q for power, gamma otherwise."""
    try:
        cls = _LOSSES[name]
    except KeyError:
        raise ConfigError(f"unknown loss {name!r}; choose from {sorted(_LOSSES)}") from None
    if cls is QuadraticLoss:
        if param is not None:
            raise ConfigError("quadratic loss takes no parameter")
        return cls()
    if param is None:
        raise ConfigError(f"loss {name!r} requires a parameter")
    return cls(param)
