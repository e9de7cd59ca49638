"""Datasets: synthetic task generators, CSV ingestion, normalization, splits.

The three toy tasks draw the covariate from an equal-weight mixture of three
Gaussians and add zero-mean Gaussian noise to an exactly known target
function, so error decompositions against the true target are possible:

* ``piecewise_constant``: f*(x) = 1 for x <= 1, 1.5 for 1 < x < 2, 2 for x >= 2;
  means (0.5, 1.5, 2.5), mixture std 0.2.
* ``piecewise_gaussian``: one Gaussian bump exp(-0.1 (x - mu_k)^2) per piece,
  same pieces, means, and std.
* ``sine``: f*(x) = sin(x); means (pi/2, 3pi/2, 3pi), mixture std 1.

Noise defaults to variance 0.05 (the N(mean, variance) reading); pass a
different ``noise_var`` to change it, 0 for noiseless draws.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import DataError, InputError

TASK_IDS = ("piecewise_constant", "piecewise_gaussian", "sine")

_BUMP_SCALE = 0.1  # width parameter of the piecewise-Gaussian bumps


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = ""
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise DataError(
                f"X has {self.X.shape[0]} rows but y has {self.y.size} entries"
            )
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise DataError("dataset contains NaN or Inf entries")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def _f_piecewise_constant(x: np.ndarray) -> np.ndarray:
    return np.where(x <= 1, 1.0, np.where(x < 2, 1.5, 2.0))


def _f_piecewise_gaussian(x: np.ndarray) -> np.ndarray:
    centers = np.where(x <= 1, 0.5, np.where(x < 2, 1.5, 2.5))
    return np.exp(-_BUMP_SCALE * np.square(x - centers))


_TASKS: dict[str, dict] = {
    "piecewise_constant": {
        "means": (0.5, 1.5, 2.5), "std": 0.2, "f": _f_piecewise_constant,
        "in_rkhs": False,
    },
    "piecewise_gaussian": {
        "means": (0.5, 1.5, 2.5), "std": 0.2, "f": _f_piecewise_gaussian,
        "in_rkhs": False,
    },
    "sine": {
        "means": (math.pi / 2, 3 * math.pi / 2, 3 * math.pi), "std": 1.0,
        "f": lambda x: np.sin(x), "in_rkhs": False,
    },
}


@dataclass(frozen=True)
class SyntheticTask:
    """A generator with an exactly known target function.

    ``f_star`` evaluates the noiseless target on n x 1 (or length-n) input;
    ``sample`` draws a fresh dataset, deterministic per seed.
    """

    task_id: str
    mixture_means: tuple[float, ...]
    mixture_std: float
    noise_var: float
    target: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    target_in_rkhs: bool = False

    def f_star(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        x = X.ravel() if X.ndim > 1 else X
        return self.target(x)

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.integers(len(self.mixture_means), size=n)
        means = np.asarray(self.mixture_means)[comp]
        return (means + self.mixture_std * rng.standard_normal(n))[:, None]

    def sample(self, n: int, seed: int, noise_var: float | None = None) -> Dataset:
        if n < 1:
            raise InputError("need n >= 1")
        rng = np.random.default_rng(seed)
        X = self.sample_x(n, rng)
        y = self.f_star(X)
        var = self.noise_var if noise_var is None else noise_var
        if var > 0:
            y = y + math.sqrt(var) * rng.standard_normal(n)
        return Dataset(X=X, y=y, name=f"{self.task_id}[n={n},seed={seed}]")


def make_task(task_id: str, noise_var: float = 0.05) -> SyntheticTask:
    if task_id not in _TASKS:
        raise InputError(f"unknown task_id {task_id!r}; expected one of {TASK_IDS}")
    info = _TASKS[task_id]
    return SyntheticTask(
        task_id=task_id,
        mixture_means=tuple(info["means"]),
        mixture_std=info["std"],
        noise_var=noise_var,
        target=info["f"],
        target_in_rkhs=info["in_rkhs"],
    )


def gen_toy(task_id: str, n: int, seed: int,
            noise_var: float = 0.05) -> tuple[Dataset, SyntheticTask]:
    """Draw one toy dataset and return it with its task (for f* access)."""
    task = make_task(task_id, noise_var=noise_var)
    return task.sample(n, seed), task


@dataclass(frozen=True)
class RkhsLinearTask:
    """A target that is itself a kernel-space element of the linear kernel.

    f*(x) = sum_j alpha_j <s_j, x> over fixed random support points; used by
    the learning-rate study where the target must lie in the hypothesis
    space.  Covariates are standard normal in ``dim`` dimensions.
    """

    dim: int
    weights: np.ndarray
    noise_var: float = 0.05
    task_id: str = "rkhs_linear"
    target_in_rkhs: bool = True

    def f_star(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights

    def sample(self, n: int, seed: int, noise_var: float | None = None) -> Dataset:
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, self.dim))
        y = self.f_star(X)
        var = self.noise_var if noise_var is None else noise_var
        if var > 0:
            y = y + math.sqrt(var) * rng.standard_normal(n)
        return Dataset(X=X, y=y, name=f"rkhs_linear[d={self.dim},n={n},seed={seed}]")


def make_rkhs_linear_task(dim: int, n_support: int = 30, seed: int = 0,
                          noise_var: float = 0.05) -> RkhsLinearTask:
    rng = np.random.default_rng(seed)
    support = rng.standard_normal((n_support, dim))
    coef = rng.standard_normal(n_support)
    return RkhsLinearTask(dim=dim, weights=support.T @ coef, noise_var=noise_var)


def load_csv(path, target_column: str, delimiter: str = ",") -> Dataset:
    """Strict CSV loader: header row, all-numeric cells, named target column.

    Any unparseable cell fails the load with the offending row numbers
    (1-based, counting the header as row 1); silent coercion would corrupt
    benchmark comparisons.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"{path}: no column named {target_column!r}")
        t_idx = header.index(target_column)
        rows, bad_rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad_rows.append(lineno)
                continue
            if len(rows[-1]) != len(header):
                bad_rows.append(lineno)
                rows.pop()
    if bad_rows:
        raise DataError(f"{path}: unparseable or ragged rows {bad_rows}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    M = np.asarray(rows, dtype=float)
    feat_idx = [j for j in range(len(header)) if j != t_idx]
    return Dataset(
        X=M[:, feat_idx],
        y=M[:, t_idx],
        name=path.stem,
        feature_names=[header[j] for j in feat_idx],
    )


def save_csv(ds: Dataset, path, delimiter: str = ",",
             target_column: str = "target") -> None:
    """Write a dataset back to CSV (features then target, full precision)."""
    names = ds.feature_names or [f"x{j}" for j in range(ds.dim)]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(list(names) + [target_column])
        for i in range(ds.n):
            writer.writerow([repr(v) for v in ds.X[i]] + [repr(ds.y[i])])


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-feature center/scale fitted on training data, replayable on test."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds: Dataset) -> Dataset:
        if ds.dim != self.mean.size:
            raise InputError(
                f"record has {self.mean.size} features, dataset has {ds.dim}"
            )
        scale = np.where(self.std > 0, self.std, 1.0)
        return Dataset(
            X=(ds.X - self.mean) / scale,
            y=ds.y.copy(),
            name=ds.name,
            feature_names=ds.feature_names,
        )


def normalize(ds: Dataset) -> tuple[Dataset, NormalizationRecord]:
    """Center each feature and scale to unit sample std (n-1 denominator).

    Responses are left untouched.  Constant columns become all zeros and
    trigger a warning.
    """
    if ds.n < 2:
        raise InputError("normalize requires at least 2 rows")
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0, ddof=1)
    constant = std == 0
    if constant.any():
        warnings.warn(
            f"constant feature column(s) {np.flatnonzero(constant).tolist()} "
            "left at zero",
            stacklevel=2,
        )
    record = NormalizationRecord(mean=mean, std=std)
    return record.apply(ds), record


def split(ds: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniform random train/test split; test size = round(n * fraction)."""
    if not 0 < test_fraction < 1:
        raise InputError("test_fraction must lie in (0, 1)")
    n_test = int(round(ds.n * test_fraction))
    n_test = min(max(n_test, 1), ds.n - 1)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    mk = lambda idx, tag: Dataset(
        X=ds.X[idx], y=ds.y[idx], name=f"{ds.name}[{tag}]",
        feature_names=ds.feature_names,
    )
    return mk(train_idx, "train"), mk(test_idx, "test")
