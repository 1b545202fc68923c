"""Synthetic generators, CSV ingestion, and the coverage/length/time harness."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conformal import (
    assemble_absolute_residual_set,
    assemble_generic_set,
    exact_ridge_set,
    make_measure,
    oracle_set,
    split_conformal,
)
from .errors import ConfigError, CsvFormatError
from .homotopy import build_path
from .losses import Loss, QuadraticLoss
from .optim import Dataset, SolverConfig, solve_to_tol
from .regularizers import Regularizer, RidgePenalty


# --- data sources -------------------------------------------------------------


@dataclass(frozen=True)
class LinearSpec:
    n: int = 100
    p: int = 50
    noise: float = 1.0
    informative: int | None = None  # default: min(10, p)
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ConfigError("linear generator needs n >= 10")
        if self.informative is None:
            object.__setattr__(self, "informative", min(10, self.p))
        if not 1 <= self.informative <= self.p:
            raise ConfigError("informative count must lie in [1, p]")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")


@dataclass(frozen=True)
class Friedman1Spec:
    n: int = 100
    p: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ConfigError("friedman1 generator needs n >= 10")
        if self.p < 5:
            raise ConfigError("friedman1 needs p >= 5")


def gen_linear(spec: LinearSpec) -> Dataset:
    """Gaussian design with unit coefficients on the first `informative` features."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    beta = np.zeros(spec.p)
    beta[: spec.informative] = 1.0
    y = X @ beta
    if spec.noise > 0:
        y = y + spec.noise * rng.standard_normal(spec.n)
    return Dataset(X, y)


def friedman1_signal(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def gen_friedman1(spec: Friedman1Spec) -> Dataset:
    """Uniform features on [0, 1]; only the first five drive the label."""
    rng = np.random.default_rng(spec.seed)
    X = rng.uniform(0.0, 1.0, size=(spec.n, spec.p))
    y = friedman1_signal(X) + 0.5 * rng.standard_normal(spec.n)
    return Dataset(X, y)


def standardize(data: Dataset) -> Dataset:
    """Unit-norm feature columns and z-scored labels."""
    norms = np.linalg.norm(data.X, axis=0)
    norms[norms == 0] = 1.0
    std = float(np.std(data.y))
    y = (data.y - float(np.mean(data.y))) / (std if std > 0 else 1.0)
    return Dataset(data.X / norms, y)


def load_csv(path, label) -> Dataset:
    """Rectangular numeric CSV with a header row; `label` names the target column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if label not in header:
            raise CsvFormatError(
                f"{path}: no column named {label!r}; available: {', '.join(header)}"
            )
        li = header.index(label)
        rows = []
        for idx, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {idx} has {len(row)} cells, expected {len(header)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise CsvFormatError(f"{path}: row {idx} has a non-numeric cell") from None
    if len(rows) < 10:
        raise CsvFormatError(f"{path}: need at least 10 data rows, found {len(rows)}")
    arr = np.asarray(rows, dtype=float)
    y = arr[:, li]
    X = np.delete(arr, li, axis=1)
    return Dataset(X, y)


def save_dataset_csv(data: Dataset, path, label="y"):
    header = [f"x{j}" for j in range(data.p)]
    header.append(label)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))])


# --- regularization selection ---------------------------------------------------


def lambda_max(data: Dataset, loss: Loss) -> float:
    """Scale anchor: sup-norm of the feature/gradient correlation at beta = 0."""
    g = np.asarray(loss.grad(data.y, np.zeros(data.n)), dtype=float)
    v = float(np.max(np.abs(data.X.T @ g)))
    return v if v > 0 else 1.0


def cross_validate_lambda(data: Dataset, loss: Loss, reg: Regularizer,
                          k=5, n_grid=20, seed=0, tol=1e-6) -> float:
    """k-fold selection over a geometric grid spanning four decades below lambda_max."""
    lams = lambda_max(data, loss) * np.geomspace(1.0, 1e-4, n_grid)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    folds = np.array_split(perm, k)
    scores = np.zeros(n_grid)
    for fold in folds:
        mask = np.ones(data.n, dtype=bool)
        mask[fold] = False
        dtr = Dataset(data.X[mask], data.y[mask])
        warm = None
        for j, lam in enumerate(lams):
            pair = solve_to_tol(dtr, lam, loss, reg,
                                SolverConfig(tolerance=tol, warm_start=warm))
            warm = pair.beta
            preds = data.X[fold] @ pair.beta
            scores[j] += float(np.sum(loss.value(data.y[fold], preds)))
    return float(lams[int(np.argmin(scores))])


# --- the harness ----------------------------------------------------------------


@dataclass
class ExperimentResult:
    method: str
    alpha: float
    epsilon: float | None
    coverage: float
    mean_length: float | None
    unbounded_count: int
    mean_time_s: float
    repetitions: int
    failures: int = 0


def _expand_methods(methods, eps_list):
    out = []
    for m in methods:
        if m == "homotopy":
            if not eps_list:
                raise ConfigError("homotopy method needs at least one epsilon")
            out.extend(("homotopy", float(e)) for e in eps_list)
        elif m in ("oracle", "split", "ridge-exact"):
            out.append((m, None))
        else:
            raise ConfigError(f"unknown benchmark method {m!r}")
    return out


def _run_one_rep(data, holdout, specs, alpha, lam, loss, reg, measure_name,
                 mode, split_fraction, rep_seed):
    mask = np.ones(data.n, dtype=bool)
    mask[holdout] = False
    dtr = Dataset(data.X[mask], data.y[mask])
    x_new = data.X[holdout]
    y_true = float(data.y[holdout])
    y_lo, y_hi = float(np.min(dtr.y)), float(np.max(dtr.y))
    measure = make_measure(measure_name)
    records = []
    for name, eps in specs:
        t0 = time.perf_counter()
        try:
            if name == "oracle":
                lo, hi = oracle_set(dtr, x_new, y_true, alpha, lam, loss, reg)
                member, length = lo <= y_true <= hi, hi - lo
            elif name == "split":
                got = split_conformal(dtr, x_new, alpha, split_fraction, lam, loss, reg,
                                      rng=np.random.default_rng(rep_seed))
                if got is None:
                    member, length = True, None
                else:
                    lo, hi = got
                    member, length = lo <= y_true <= hi, hi - lo
            elif name == "ridge-exact":
                got = exact_ridge_set(dtr, x_new, lam, alpha)
                member = got.contains(y_true)
                length = got.total_length
                if math.isinf(length):
                    length = None
            else:
                path = build_path(dtr, x_new, y_lo, y_hi, eps, lam, loss, reg, mode=mode)
                if measure_name == "absolute_residual":
                    got = assemble_absolute_residual_set(path, alpha)
                else:
                    got = assemble_generic_set(path, alpha, measure)
                member, length = got.contains(y_true), got.total_length
            records.append((name, eps, member, length, time.perf_counter() - t0, None))
        except Exception as exc:  # noqa: BLE001 - failures are recorded per rep
            records.append((name, eps, None, None, time.perf_counter() - t0, str(exc)))
    return records


def run_benchmark(data: Dataset, methods, alpha, eps_list=(), repetitions=100,
                  lam=None, seed=0, split_fraction=0.7, loss: Loss | None = None,
                  reg: Regularizer | None = None, measure="absolute_residual",
                  mode="halved", jobs=1):
    """Hold out one row per repetition and score every method on the same split."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    loss = loss or QuadraticLoss()
    reg = reg or RidgePenalty()
    specs = _expand_methods(methods, eps_list)
    if any(name == "ridge-exact" for name, _ in specs):
        if not (isinstance(loss, QuadraticLoss) and isinstance(reg, RidgePenalty)):
            raise ConfigError("ridge-exact applies to the quadratic loss with ridge only")
    if lam is None:
        lam = cross_validate_lambda(data, loss, reg, seed=seed)
    rng = np.random.default_rng([seed, 1])
    holdouts = rng.integers(0, data.n, size=repetitions)
    args = [
        (data, int(h), specs, alpha, lam, loss, reg, measure, mode, split_fraction,
         [seed, 2, r])
        for r, h in enumerate(holdouts)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_run_one_rep_star, args, chunksize=1))
    else:
        per_rep = [_run_one_rep_star(a) for a in args]

    results = []
    for idx, (name, eps) in enumerate(specs):
        rows = [rep[idx] for rep in per_rep]
        ok = [r for r in rows if r[5] is None]
        failures = len(rows) - len(ok)
        members = [r[2] for r in ok]
        lengths = [r[3] for r in ok if r[3] is not None]
        unbounded = sum(1 for r in ok if r[3] is None)
        times = [r[4] for r in ok]
        results.append(ExperimentResult(
            method=name,
            alpha=float(alpha),
            epsilon=eps,
            coverage=(sum(members) / len(ok)) if ok else 0.0,
            mean_length=(float(np.mean(lengths)) if lengths else None),
            unbounded_count=unbounded,
            mean_time_s=(float(np.mean(times)) if times else 0.0),
            repetitions=len(ok),
            failures=failures,
        ))
    return results


def _run_one_rep_star(a):
    return _run_one_rep(*a)


RESULT_COLUMNS = ("method", "alpha", "epsilon", "coverage", "mean_length",
                  "unbounded_count", "mean_time_s", "repetitions")


def results_to_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow([
                r.method,
                repr(r.alpha),
                "" if r.epsilon is None else repr(r.epsilon),
                repr(r.coverage),
                "" if r.mean_length is None else repr(r.mean_length),
                r.unbounded_count,
                repr(r.mean_time_s),
                r.repetitions,
            ])


def read_results_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise CsvFormatError(f"{path}: unexpected result columns {header}")
        for row in reader:
            out.append(ExperimentResult(
                method=row[0],
                alpha=float(row[1]),
                epsilon=None if row[2] == "" else float(row[2]),
                coverage=float(row[3]),
                mean_length=None if row[4] == "" else float(row[4]),
                unbounded_count=int(row[5]),
                mean_time_s=float(row[6]),
                repetitions=int(row[7]),
            ))
    return out
