"""The four estimators compared in the experiments.

* Whole-KRR: one kernel ridge fit on all n points,
  ``alpha = (G + n*lambda*I)^-1 y``.
* DC-KRR: one local KRR per partition, each solved with its own sample size
  in the ridge term (``G_i + n_i*lambda*I``) but a shared global penalty;
  prediction routes each point to its partition's local model.
* Random-KRR: KRR on each of m uniformly random groups; prediction averages
  the m group predictions everywhere.
* VP-KRR is DC-KRR over a Voronoi partition; nothing here is specific to the
  partitioner beyond the assignment rule it provides.

Models store their support rows by value, so a serialized model predicts
without any live dataset handle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InputError
from .kernels import KernelSpec, cross, gram
from .linalg import SpdSolveConfig, solve_spd
from .partition import PartitionModel, assign_many, random_split

# Rows per prediction chunk; bounds the t x n cross-kernel scratch.
_PREDICT_CHUNK = 2048


@dataclass
class LocalKrrModel:
    support_X: np.ndarray
    alpha: np.ndarray
    lam: float
    spec: KernelSpec
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.support_X.shape[0]


@dataclass
class DcModel:
    partition: PartitionModel
    locals_: list[LocalKrrModel | None]
    fallback: float

    @property
    def m(self) -> int:
        return self.partition.m


@dataclass
class AvgModel:
    groups: list[LocalKrrModel]

    @property
    def m(self) -> int:
        return len(self.groups)


def fit_krr(spec: KernelSpec, X, y, lam: float,
            solve_cfg: SpdSolveConfig | None = None) -> LocalKrrModel:
    """Closed-form kernel ridge fit: alpha = (G + n*lam*I)^-1 y."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n < 1:
        raise InputError("fit_krr requires at least one sample")
    if y.size != n:
        raise InputError(f"y length {y.size} does not match n={n}")
    if lam <= 0:
        raise InputError("lambda must be positive")
    A = gram(spec, X)
    A[np.diag_indices_from(A)] += n * lam
    sol = solve_spd(A, y, solve_cfg)
    return LocalKrrModel(
        support_X=X.copy(), alpha=sol.x, lam=lam, spec=spec, jitter=sol.jitter
    )


def predict_krr(model: LocalKrrModel, X_test) -> np.ndarray:
    """Representer-form prediction: sum_j alpha_j K(x_j, x)."""
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim == 1:
        X_test = X_test[:, None]
    t = X_test.shape[0]
    out = np.empty(t)
    for start in range(0, t, _PREDICT_CHUNK):
        stop = min(start + _PREDICT_CHUNK, t)
        out[start:stop] = cross(model.spec, model.support_X, X_test[start:stop]) @ model.alpha
    return out


def fit_whole(spec: KernelSpec, X, y, lam: float) -> LocalKrrModel:
    """KRR on the entire training set."""
    return fit_krr(spec, X, y, lam)


def resolve_lambda_rule(lambda_rule, n_total: int, m: int) -> list[float]:
    """Expand a lambda rule into one penalty per partition.

    Accepts a fixed positive float, the string ``"one_over_total_n"``
    (lambda = 1/n with n the total training size), or an explicit
    per-partition sequence of length m.
    """
    if lambda_rule == "one_over_total_n":
        return [1.0 / n_total] * m
    if isinstance(lambda_rule, (int, float)):
        if lambda_rule <= 0:
            raise InputError("lambda must be positive")
        return [float(lambda_rule)] * m
    lams = [float(v) for v in lambda_rule]
    if len(lams) != m:
        raise InputError(f"per-partition lambda list has {len(lams)} entries, need {m}")
    if any(v <= 0 for v in lams):
        raise InputError("lambda must be positive")
    return lams


def fit_dc(spec: KernelSpec, X, y, partition: PartitionModel,
           lambda_rule="one_over_total_n") -> DcModel:
    """Fit one local KRR per nonempty partition.

    The penalty resolves once per partition via :func:`resolve_lambda_rule`;
    each local system still uses its own n_i in the ridge term.  Empty
    partitions carry no model and predict the global training mean.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    a = np.asarray(partition.train_assignments)
    if a.size != n:
        # Centroid-style models can be re-bound to new training rows.
        a = assign_many(partition, X)
    lams = resolve_lambda_rule(lambda_rule, n, partition.m)
    locals_: list[LocalKrrModel | None] = []
    any_fit = False
    for i in range(partition.m):
        mask = a == i
        if not mask.any():
            locals_.append(None)
            continue
        locals_.append(fit_krr(spec, X[mask], y[mask], lams[i]))
        any_fit = True
    if not any_fit:
        raise InputError("all partitions empty")
    return DcModel(partition=partition, locals_=locals_, fallback=float(y.mean()))


def predict_dc(model: DcModel, X_test) -> np.ndarray:
    """Route each test point to its partition's local model."""
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim == 1:
        X_test = X_test[:, None]
    idx = assign_many(model.partition, X_test)  # rejects random-kind models
    out = np.full(X_test.shape[0], model.fallback)
    for i in range(model.m):
        mask = idx == i
        if not mask.any():
            continue
        local = model.locals_[i]
        if local is not None:
            out[mask] = predict_krr(local, X_test[mask])
    return out


def fit_random_avg(spec: KernelSpec, X, y, m: int, lam: float,
                   seed: int = 0) -> AvgModel:
    """KRR per uniformly random group; see :func:`predict_avg`."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    split = random_split(n, m, seed)
    groups = []
    for g in range(m):
        mask = split.train_assignments == g
        groups.append(fit_krr(spec, X[mask], y[mask], lam))
    return AvgModel(groups=groups)


def predict_avg(model: AvgModel, X_test) -> np.ndarray:
    """Arithmetic mean of the group predictions at every test point."""
    preds = [predict_krr(g, X_test) for g in model.groups]
    return np.mean(preds, axis=0)


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size != truth.size or pred.size < 1:
        raise InputError(f"length mismatch: {pred.size} vs {truth.size}")
    return float(np.sqrt(np.mean(np.square(pred - truth))))


# Serialization ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return np.format_float_scientific(v, precision=16, unique=False)


def _local_to_obj(model: LocalKrrModel) -> dict:
    return {
        "support_X": [[_fmt(v) for v in row] for row in model.support_X],
        "alpha": [_fmt(v) for v in model.alpha],
        "lambda": _fmt(model.lam),
        "kernel": model.spec.to_dict(),
    }


def _local_from_obj(obj: dict) -> LocalKrrModel:
    return LocalKrrModel(
        support_X=np.asarray(obj["support_X"], dtype=float),
        alpha=np.asarray(obj["alpha"], dtype=float),
        lam=float(obj["lambda"]),
        spec=KernelSpec.from_dict(obj["kernel"]),
    )


def model_to_json(model) -> str:
    """Serialize any fitted model with 17-significant-digit floats."""
    if isinstance(model, LocalKrrModel):
        return json.dumps({"kind": "krr", **_local_to_obj(model)})
    if isinstance(model, DcModel):
        return json.dumps({
            "kind": "dc",
            "fallback": _fmt(model.fallback),
            "partition": json.loads(model.partition.to_json()),
            "locals": [
                None if l is None else _local_to_obj(l) for l in model.locals_
            ],
        })
    if isinstance(model, AvgModel):
        return json.dumps({
            "kind": "avg",
            "groups": [_local_to_obj(g) for g in model.groups],
        })
    raise InputError(f"cannot serialize {type(model).__name__}")


def model_from_json(text: str):
    obj = json.loads(text)
    kind = obj.get("kind")
    if kind == "krr":
        return _local_from_obj(obj)
    if kind == "dc":
        return DcModel(
            partition=PartitionModel.from_json(json.dumps(obj["partition"])),
            locals_=[
                None if l is None else _local_from_obj(l) for l in obj["locals"]
            ],
            fallback=float(obj["fallback"]),
        )
    if kind == "avg":
        return AvgModel(groups=[_local_from_obj(g) for g in obj["groups"]])
    raise InputError(f"unknown serialized model kind {kind!r}")
