"""Regularizers, their conjugates, and the dual-rescaling support value.

The ridge penalty carries the 1/2 factor inside, so its conjugate is again
``0.5 * ||.||^2`` with no stray constants.  ``polar_support`` returns the
quantity that rescales the negative loss gradient into the dual domain: the
dual norm for norm penalties, and ``None`` for strongly convex penalties,
whose dual vector needs no rescaling.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


class Regularizer:
    name = ""
    strongly_convex = False

    def value(self, beta):
        raise NotImplementedError

    def conjugate(self, v):
        """Conjugate value; ``inf`` marks an out-of-domain argument."""
        raise NotImplementedError

    def polar_support(self, v):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class RidgePenalty(Regularizer):
    """Omega(beta) = 0.5 * ||beta||_2^2; 1-strongly convex, self-conjugate."""

    name = "ridge"
    strongly_convex = True

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return 0.5 * float(beta @ beta)

    def conjugate(self, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * float(v @ v)

    def polar_support(self, v):
        return None


class L1Penalty(Regularizer):
    """Omega(beta) = ||beta||_1; conjugate is the unit sup-norm ball indicator."""

    name = "l1"
    strongly_convex = False

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(np.sum(np.abs(beta)))

    def conjugate(self, v):
        return 0.0 if self.polar_support(v) <= 1.0 else np.inf

    def polar_support(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.max(np.abs(v))) if v.size else 0.0


_REGULARIZERS = {"ridge": RidgePenalty, "l1": L1Penalty}


def make_regularizer(name) -> Regularizer:
    try:
        return _REGULARIZERS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown regularizer {name!r}; choose from {sorted(_REGULARIZERS)}"
        ) from None
