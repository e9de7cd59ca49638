"""Kernel functions and Gram / cross-kernel matrix construction.

Three kernel families are supported:

* ``gaussian``:    K(x, y) = exp(-gamma * ||x - y||^2)
* ``polynomial``:  K(x, y) = (offset + x . y)^degree
* ``linear``:      K(x, y) = x . y

All pairwise matrices are computed by one shared broadcast routine, so a
single entry of ``gram``/``cross`` is bit-identical to the corresponding
``kernel_value`` call.  Gram matrices are made exactly symmetric by mirroring
the upper triangle, and the Gaussian diagonal is pinned to 1.0, so downstream
Cholesky factorizations never see asymmetric round-off.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

_FAMILIES = ("gaussian", "polynomial", "linear")

# Cap on scratch elements per block when evaluating pairwise kernels;
# keeps peak memory around ~64 MB of float64 regardless of problem size.
_BLOCK_ELEMS = 8_000_000


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to use and its hyperparameters.

    ``rank_hint`` records the finite rank of the induced feature space when
    it is known: ``d`` for linear in dimension ``d``, ``C(d + p, p)`` for a
    degree-``p`` polynomial.  It is informational; no code path requires it.
    """

    family: str
    gamma: float | None = None
    degree: int | None = None
    offset: float = 1.0
    rank_hint: int | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}")
        if self.family == "gaussian":
            if self.gamma is None or self.gamma <= 0:
                raise InputError("gaussian kernel requires gamma > 0")
        if self.family == "polynomial":
            if self.degree is None or self.degree < 1:
                raise InputError("polynomial kernel requires degree >= 1")
        if self.rank_hint is not None and self.rank_hint < 1:
            raise InputError("rank_hint must be a positive integer")

    def finite_rank(self, dim: int) -> int | None:
        """Rank of the feature space in input dimension ``dim``, if finite."""
        if self.rank_hint is not None:
            return self.rank_hint
        if self.family == "linear":
            return dim
        if self.family == "polynomial":
            return math.comb(dim + self.degree, self.degree)
        return None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family == "gaussian":
            out["gamma"] = self.gamma
        elif self.family == "polynomial":
            out["degree"] = self.degree
            out["offset"] = self.offset
        if self.rank_hint is not None:
            out["rank_hint"] = self.rank_hint
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "KernelSpec":
        known = {"family", "gamma", "degree", "offset", "rank_hint"}
        extra = set(obj) - known
        if extra:
            raise InputError(f"unknown kernel spec fields: {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        return cls.from_dict(json.loads(text))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"expected a 2-d array of rows, got ndim={X.ndim}")
    return X


def _pairwise_block(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # A: a x d, B: b x d -> a x b.  Broadcast form (no norm-expansion trick)
    # so every entry reproduces the scalar evaluation exactly.
    if spec.family == "gaussian":
        diff = A[:, None, :] - B[None, :, :]
        sq = np.square(diff).sum(axis=-1)
        return np.exp(-spec.gamma * sq)
    inner = (A[:, None, :] * B[None, :, :]).sum(axis=-1)
    if spec.family == "linear":
        return inner
    return (spec.offset + inner) ** spec.degree


def _pairwise(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    a, d = A.shape
    b = B.shape[0]
    block = max(1, _BLOCK_ELEMS // max(1, b * d))
    if block >= a:
        return _pairwise_block(spec, A, B)
    out = np.empty((a, b))
    for start in range(0, a, block):
        stop = min(start + block, a)
        out[start:stop] = _pairwise_block(spec, A[start:stop], B)
    return out


def kernel_value(spec: KernelSpec, x, y) -> float:
    """Evaluate K(x, y) for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(_pairwise_block(spec, x[None, :], y[None, :])[0, 0])


def gram(spec: KernelSpec, X) -> np.ndarray:
    """n x n kernel matrix of all training pairs, exactly symmetric."""
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 1:
        raise InputError("gram requires at least one row")
    G = _pairwise(spec, X, X)
    # Mirror the upper triangle; keep the Gaussian diagonal exact.
    iu = np.triu_indices(n, k=1)
    G[(iu[1], iu[0])] = G[iu]
    if spec.family == "gaussian":
        np.fill_diagonal(G, 1.0)
    return G


def cross(spec: KernelSpec, X_train, X_test) -> np.ndarray:
    """t x n matrix with entry [i, j] = K(X_test[i], X_train[j])."""
    X_train = _as_matrix(X_train)
    X_test = _as_matrix(X_test)
    if X_train.shape[1] != X_test.shape[1]:
        raise InputError(
            f"dimension mismatch: train d={X_train.shape[1]}, test d={X_test.shape[1]}"
        )
    return _pairwise(spec, X_test, X_train)
