"""Certified candidate-label grids for a fixed test point.

``build_path`` sweeps candidate labels over ``[y_min, y_max]`` on a grid whose
spacing comes from the loss regularity, attaching to each grid label a primal
solution with duality gap at most ``eps0`` there.  Moving the candidate label
changes the gap by an exactly computable amount (see ``gap_variation``), so
each stored pair certifies gap <= eps on a whole interval around its label;
together the intervals cover the range.

Every stored point is verified by evaluating the exact gap variation at the
edges of the interval it certifies, and the solution is refined whenever the
budget is not met, so the coverage guarantee never rests on the worst-case
step bound alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, ConvergenceError, OutOfRangeError, UnsupportedProblemError
from .losses import Loss, Regularity
from .optim import (
    Dataset,
    PrimalDualPair,
    SolverConfig,
    duality_gap,
    gap_variation,
    solve_to_tol,
)
from .regularizers import Regularizer

# shave the nominal step so float dust at a segment edge cannot tip the
# certified gap over eps
_STEP_SHAVE = 1e-5
# margin enforced by the edge safeguard, and the refinement budget
_SLACK_FLOOR = 1e-11
_MAX_REFINES = 50


def step_size(reg: Regularity, eps, eps0) -> float:
    """Step below which the gap variation stays within eps - eps0.

    smooth: sqrt(2 (eps - eps0) / nu);  lipschitz: (eps - eps0) / nu;
    uniformly smooth: modulus_inverse(eps - eps0).
    """
    eps = float(eps)
    eps0 = float(eps0)
    if eps <= 0 or eps0 < 0 or eps0 >= eps:
        raise ConfigError("need 0 <= eps0 < eps")
    budget = eps - eps0
    if reg.kind == "smooth":
        return math.sqrt(2.0 * budget / reg.nu)
    if reg.kind == "lipschitz":
        return budget / reg.nu
    if reg.kind == "uniformly_smooth":
        return float(reg.modulus_inverse(budget))
    raise UnsupportedProblemError("loss has no usable regularity class")


@dataclass(frozen=True)
class HomotopyPath:
    """Grid labels with their certified solutions over [y_min, y_max]."""

    zs: np.ndarray
    pairs: tuple[PrimalDualPair, ...]
    radii: np.ndarray
    preds: np.ndarray
    y_min: float
    y_max: float
    eps: float
    eps0: float
    step: float  # nominal step (minimum certified radius for adaptive grids)
    mode: str
    data: Dataset  # training rows only
    x_new: np.ndarray
    lam: float
    loss: Loss
    reg: Regularizer

    def __len__(self):
        return len(self.pairs)

    @property
    def gaps(self):
        return np.array([p.gap for p in self.pairs])

    @cached_property
    def boundaries(self):
        """Hand-off labels between consecutive grid points."""
        zs, r = self.zs, self.radii
        out = np.empty(len(zs) - 1)
        for k in range(len(zs) - 1):
            mid = 0.5 * (zs[k] + r[k] + zs[k + 1] - r[k + 1])
            lo = max(zs[k], zs[k + 1] - r[k + 1])
            hi = min(zs[k + 1], zs[k] + r[k])
            out[k] = min(max(mid, lo), hi)
        return out

    @cached_property
    def segments(self):
        """Per grid point, the subrange it certifies (may be empty)."""
        cuts = np.concatenate(([-np.inf], self.boundaries, [np.inf]))
        return [
            (max(self.y_min, cuts[k]), min(self.y_max, cuts[k + 1]))
            for k in range(len(self.zs))
        ]

    def records(self):
        """(z, gap, prediction) per grid point, for the trace surface."""
        for z, pair, u in zip(self.zs, self.pairs, self.preds):
            yield float(z), float(pair.gap), float(u)


def covering_point(path: HomotopyPath, z) -> int:
    """Index of the grid point whose certificate covers z (ties go lower)."""
    z = float(z)
    if z < path.y_min or z > path.y_max:
        raise OutOfRangeError(f"z={z:g} outside [{path.y_min:g}, {path.y_max:g}]")
    k = int(np.searchsorted(path.boundaries, z, side="left"))
    return k


def build_path(
    data: Dataset,
    x_new,
    y_min,
    y_max,
    eps,
    lam,
    loss: Loss,
    reg: Regularizer,
    eps0=None,
    config: SolverConfig | None = None,
    mode="halved",
    step_scale=1.0,
) -> HomotopyPath:
    """Run the label sweep and return the certified path.

    ``mode`` is "halved" (spacing twice the certified radius, the cheaper
    default) or "one-sided" (spacing equal to the radius).  ``step_scale``
    exists for fault-injection testing only: values other than 1 inflate the
    grid step and disable the edge safeguard, producing an invalid path on
    purpose.
    """
    y_min, y_max, eps = float(y_min), float(y_max), float(eps)
    if y_min > y_max:
        raise ConfigError("empty label range")
    if eps <= 0:
        raise ConfigError("eps must be positive")
    eps0 = eps / 10.0 if eps0 is None else float(eps0)
    if not 0 < eps0 < eps:
        raise ConfigError("need 0 < eps0 < eps")
    if mode not in ("halved", "one-sided"):
        raise ConfigError(f"unknown coverage mode {mode!r}")
    if config is None:
        config = SolverConfig(tolerance=eps0)
    x_new = np.asarray(x_new, dtype=float)
    data = data.without_candidate()

    base = solve_to_tol(
        data, lam, loss, reg,
        SolverConfig(tolerance=eps0, max_iterations=config.max_iterations,
                     gap_check_period=config.gap_check_period,
                     warm_start=config.warm_start),
    )
    z0 = float(x_new @ base.beta)

    if loss.local_curvature:
        points = _march_adaptive(
            data, x_new, y_min, y_max, eps, eps0, lam, loss, reg, config,
            base, z0, step_scale,
        )
        step = min(r for _, _, r in points)
    else:
        s_nom = step_size(loss.regularity(), eps, eps0)
        step = s_nom * (1.0 - _STEP_SHAVE) * float(step_scale)
        points = _march_lattice(
            data, x_new, y_min, y_max, eps, eps0, lam, loss, reg, config,
            base, z0, step, mode, step_scale,
        )

    points.sort(key=lambda t: t[0])
    zs = np.array([z for z, _, _ in points])
    if np.any(np.diff(zs) <= 0):
        raise ConvergenceError("grid labels failed to increase strictly")
    return HomotopyPath(
        zs=zs,
        pairs=tuple(p for _, p, _ in points),
        radii=np.array([r for _, _, r in points]),
        preds=np.array([float(x_new @ p.beta) for _, p, _ in points]),
        y_min=y_min,
        y_max=y_max,
        eps=eps,
        eps0=eps0,
        step=step,
        mode=mode,
        data=data,
        x_new=x_new,
        lam=lam,
        loss=loss,
        reg=reg,
    )


def _certify_point(daug, z, radius, eps, eps0, lam, loss, reg, config, warm, checked):
    """Solve at label z and verify the certificate out to z +- radius."""
    tol = eps0
    warm_beta = warm
    pair = None
    for _ in range(_MAX_REFINES):
        pair = solve_to_tol(
            daug, lam, loss, reg,
            SolverConfig(tolerance=tol, max_iterations=config.max_iterations,
                         gap_check_period=config.gap_check_period, warm_start=warm_beta),
        )
        if not checked:
            return pair
        slack = max(1e-4 * eps, _SLACK_FLOOR)
        worst = max(
            gap_variation(daug, pair.beta, pair.theta, z - radius, z, lam, loss),
            gap_variation(daug, pair.beta, pair.theta, z + radius, z, lam, loss),
        )
        if pair.gap + worst <= eps - slack:
            return pair
        warm_beta = pair.beta
        tol *= 0.25
    raise ConvergenceError(
        f"cannot certify radius {radius:g} around z={z:g}",
        best_gap=pair.gap if pair else None, z=z,
    )


def _march_lattice(data, x_new, y_min, y_max, eps, eps0, lam, loss, reg, config,
                   base, z0, step, mode, step_scale):
    spacing = 2.0 * step if mode == "halved" else step
    radius = step
    checked = step_scale == 1.0

    j_lo = math.floor((y_min + radius - z0) / spacing)
    j_hi = math.ceil((y_max - radius - z0) / spacing)
    if j_lo > j_hi:
        # the whole range fits inside one certified interval
        j_mid = round((0.5 * (y_min + y_max) - z0) / spacing)
        j_lo = j_hi = min(max(j_mid, j_hi), j_lo)

    def solve_at(j, warm):
        z = z0 + spacing * j
        daug = data.with_candidate(x_new, z)
        pair = _certify_point(daug, z, radius, eps, eps0, lam, loss, reg, config,
                              warm, checked)
        return z, pair, radius

    points = []
    if j_lo <= 0 <= j_hi:
        points.append(solve_at(0, base.beta))
        warm = base.beta
        for j in range(-1, j_lo - 1, -1):
            points.append(solve_at(j, warm))
            warm = points[-1][1].beta
        warm = base.beta
        for j in range(1, j_hi + 1):
            points.append(solve_at(j, warm))
            warm = points[-1][1].beta
    else:
        js = range(j_lo, j_hi + 1) if j_lo > 0 else range(j_hi, j_lo - 1, -1)
        warm = base.beta
        for j in js:
            points.append(solve_at(j, warm))
            warm = points[-1][1].beta
    return points


def _march_adaptive(data, x_new, y_min, y_max, eps, eps0, lam, loss, reg, config,
                    base, z0, step_scale):
    """Adaptive marching for losses with a range-restricted curvature bound.

    The certified radius at a point depends on how far the candidate label
    sits from the point's own prediction, so radii are recomputed per point
    (twice, so the bound covers the radius it yields) and the march advances
    by the sum of adjacent radii, shrinking the hop whenever the freshly
    solved point cannot certify back to the previous frontier.
    """
    checked = step_scale == 1.0

    def radius_at(z, beta):
        delta0 = abs(z - float(x_new @ beta))
        r = step_size(loss.regularity(delta_max=delta0), eps, eps0)
        r = step_size(loss.regularity(delta_max=delta0 + r), eps, eps0)
        return r * (1.0 - _STEP_SHAVE) * float(step_scale)

    def solve_at(z, warm):
        daug = data.with_candidate(x_new, z)
        tol = eps0
        warm_beta = warm
        for _ in range(_MAX_REFINES):
            pair = solve_to_tol(
                daug, lam, loss, reg,
                SolverConfig(tolerance=tol, max_iterations=config.max_iterations,
                             gap_check_period=config.gap_check_period,
                             warm_start=warm_beta),
            )
            r = radius_at(z, pair.beta)
            if not checked:
                return pair, r
            slack = max(1e-4 * eps, _SLACK_FLOOR)
            worst = max(
                gap_variation(daug, pair.beta, pair.theta, z - r, z, lam, loss),
                gap_variation(daug, pair.beta, pair.theta, z + r, z, lam, loss),
            )
            if pair.gap + worst <= eps - slack:
                return pair, r
            warm_beta = pair.beta
            tol *= 0.25
        raise ConvergenceError(f"cannot certify a radius around z={z:g}", z=z)

    pair0, r0 = solve_at(z0, base.beta)
    points = []

    def keep(z, pair, r):
        if z + r >= y_min and z - r <= y_max:
            points.append((z, pair, r))

    keep(z0, pair0, r0)

    for direction in (-1.0, +1.0):
        z_prev, r_prev = z0, r0
        beta_prev = pair0.beta
        frontier = z_prev + direction * r_prev
        target_edge = y_min if direction < 0 else y_max
        while (frontier > target_edge if direction < 0 else frontier < target_edge):
            guess = r_prev
            z_next = z_prev + direction * (r_prev + guess)
            pair = r = None
            for _ in range(40):
                pair, r = solve_at(z_next, beta_prev)
                if direction * (z_next - direction * r - frontier) <= 1e-12 * (1 + abs(frontier)):
                    break  # the new certificate reaches back to the frontier
                z_next = z_prev + direction * (r_prev + 0.95 * r)
            else:
                z_next = z_prev + direction * r_prev  # touching certificates
                pair, r = solve_at(z_next, beta_prev)
            keep(z_next, pair, r)
            z_prev, r_prev, beta_prev = z_next, r, pair.beta
            frontier = z_prev + direction * r_prev
    return points


def recomputed_gap_at(path: HomotopyPath, z, k=None) -> float:
    """Gap of the covering pair, recomputed from scratch at candidate label z."""
    if k is None:
        k = covering_point(path, z)
    pair = path.pairs[k]
    daug = path.data.with_candidate(path.x_new, float(z))
    return duality_gap(daug, pair.beta, pair.theta, path.lam, path.loss, path.reg)
