"""Disjoint partitions of the input space with out-of-sample assignment.

Five partition kinds:

* ``kmeans``        Lloyd's algorithm with k-means++ seeding; assignment by
                    nearest centroid.
* ``kernel_kmeans`` Lloyd's algorithm in the RKHS via the kernel trick, run
                    on a uniform subsample for large data; assignment by
                    minimal RKHS distance to stored cluster members.
* ``random``        a uniform split into near-equal groups.  Exists only for
                    the random-averaging baseline: it has no out-of-sample
                    assignment rule and :func:`assign` refuses to guess one.
* ``voronoi``       greedy radius-r cover in index order; assignment by
                    nearest center.
* ``single``        the trivial one-partition model.

Every fitted model carries ``train_assignments`` so the training split is a
true disjoint cover of the training indices.  Ties in any nearest-center rule
break toward the lowest index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, UnsupportedAssignmentError
from .kernels import KernelSpec, gram, cross

_KINDS = ("kmeans", "kernel_kmeans", "random", "voronoi", "single")


@dataclass
class PartitionModel:
    kind: str
    m: int
    dim: int
    train_assignments: np.ndarray
    centroids: np.ndarray | None = None          # kmeans, voronoi
    spec: KernelSpec | None = None               # kernel_kmeans
    sample_X: np.ndarray | None = None           # kernel_kmeans: rows used
    member_index_sets: list[np.ndarray] | None = None  # indices into sample_X
    split_seed: int | None = None                # random
    sse_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown partition kind {self.kind!r}")
        if self.m < 1:
            raise InputError("m must be positive")
        a = np.asarray(self.train_assignments)
        if a.size and (a.min() < 0 or a.max() >= self.m):
            raise InputError("train assignments out of range")

    def to_json(self) -> str:
        obj = {
            "kind": self.kind,
            "m": self.m,
            "dim": self.dim,
            "train_assignments": np.asarray(self.train_assignments).tolist(),
        }
        if self.centroids is not None:
            obj["centroids"] = self.centroids.tolist()
        if self.spec is not None:
            obj["kernel"] = self.spec.to_dict()
        if self.sample_X is not None:
            obj["sample_X"] = self.sample_X.tolist()
        if self.member_index_sets is not None:
            obj["member_index_sets"] = [s.tolist() for s in self.member_index_sets]
        if self.split_seed is not None:
            obj["split_seed"] = self.split_seed
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "PartitionModel":
        obj = json.loads(text)
        return cls(
            kind=obj["kind"],
            m=obj["m"],
            dim=obj["dim"],
            train_assignments=np.asarray(obj["train_assignments"], dtype=int),
            centroids=(
                np.asarray(obj["centroids"], dtype=float)
                if "centroids" in obj else None
            ),
            spec=(
                KernelSpec.from_dict(obj["kernel"]) if "kernel" in obj else None
            ),
            sample_X=(
                np.asarray(obj["sample_X"], dtype=float)
                if "sample_X" in obj else None
            ),
            member_index_sets=(
                [np.asarray(s, dtype=int) for s in obj["member_index_sets"]]
                if "member_index_sets" in obj else None
            ),
            split_seed=obj.get("split_seed"),
        )


@dataclass(frozen=True)
class PartitionStats:
    counts: np.ndarray
    mass_estimates: np.ndarray


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _sq_dists_to_centers(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # n x m squared Euclidean distances, broadcast form.
    return np.square(X[:, None, :] - C[None, :, :]).sum(axis=-1)


def _kmeanspp_indices(sqdist_fn, n: int, m: int, rng: np.random.Generator) -> list[int]:
    """k-means++ style seeding over point indices.

    ``sqdist_fn(j)`` returns squared distances from point j to all points.
    The draw sequence consumes the RNG identically for every distance
    backend, so Euclidean and RKHS variants pick the same indices when their
    distances agree.
    """
    first = int(rng.integers(n))
    chosen = [first]
    closest = sqdist_fn(first)
    for _ in range(1, m):
        total = float(closest.sum())
        if total <= 0:
            # All remaining points coincide with a center; take the lowest
            # index not yet chosen.
            free = [j for j in range(n) if j not in set(chosen)]
            nxt = free[0]
        else:
            r = rng.random() * total
            nxt = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            nxt = min(nxt, n - 1)
        chosen.append(nxt)
        closest = np.minimum(closest, sqdist_fn(nxt))
    return chosen


def kmeans_fit(
    X,
    m: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-8,
    init_indices: list[int] | None = None,
) -> PartitionModel:
    """Lloyd's k-means with k-means++ seeding.

    Stops when the max centroid shift drops below ``tol`` or after
    ``max_iter`` rounds.  Empty clusters are re-seeded to the point farthest
    from its currently assigned centroid.  ``init_indices`` overrides the
    seeding with explicit starting centers (used by equivalence tests).
    """
    X = _as_matrix(X)
    n, d = X.shape
    if not 1 <= m <= n:
        raise InputError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    if init_indices is None:
        init_indices = _kmeanspp_indices(
            lambda j: np.square(X - X[j]).sum(axis=1), n, m, rng
        )
    centers = X[np.asarray(init_indices, dtype=int)].copy()

    sse_trace: list[float] = []
    assign_idx = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        D = _sq_dists_to_centers(X, centers)
        assign_idx = np.argmin(D, axis=1)
        sse = float(D[np.arange(n), assign_idx].sum())
        sse_trace.append(sse)
        new_centers = centers.copy()
        for c in range(m):
            mask = assign_idx == c
            if mask.any():
                new_centers[c] = X[mask].mean(axis=0)
        # Re-seed empties at the worst-fit point, one per empty cluster.
        empties = [c for c in range(m) if not (assign_idx == c).any()]
        if empties:
            cur = np.square(X - new_centers[assign_idx]).sum(axis=1)
            order = np.argsort(cur)[::-1]
            taken = 0
            for c in empties:
                new_centers[c] = X[order[taken]]
                taken += 1
        shift = float(np.sqrt(np.square(new_centers - centers).sum(axis=1)).max())
        centers = new_centers
        if shift < tol and not empties:
            break
    D = _sq_dists_to_centers(X, centers)
    assign_idx = np.argmin(D, axis=1)
    sse_trace.append(float(D[np.arange(n), assign_idx].sum()))
    return PartitionModel(
        kind="kmeans",
        m=m,
        dim=d,
        train_assignments=assign_idx,
        centroids=centers,
        sse_trace=sse_trace,
    )


def _rkhs_sq_dists(
    spec: KernelSpec,
    X: np.ndarray,
    sample_X: np.ndarray,
    members: list[np.ndarray],
    K_self: np.ndarray | None = None,
    K_cross_full: np.ndarray | None = None,
    K_sample: np.ndarray | None = None,
) -> np.ndarray:
    """n x m squared RKHS distances to cluster means over ``sample_X``.

    ||phi(x) - mu_c||^2 = K(x,x) - (2/|c|) sum_j K(x, x_j)
                          + (1/|c|^2) sum_{j,l} K(x_j, x_l)
    """
    if K_self is None:
        if spec.family == "gaussian":
            K_self = np.ones(X.shape[0])
        elif spec.family == "linear":
            K_self = np.square(X).sum(axis=1)
        else:
            K_self = (spec.offset + np.square(X).sum(axis=1)) ** spec.degree
    if K_cross_full is None:
        K_cross_full = cross(spec, sample_X, X)  # n x s
    if K_sample is None:
        K_sample = gram(spec, sample_X)
    m = len(members)
    out = np.empty((X.shape[0], m))
    for c, idx in enumerate(members):
        if idx.size == 0:
            out[:, c] = np.inf
            continue
        mean_cross = K_cross_full[:, idx].sum(axis=1) / idx.size
        mean_self = K_sample[np.ix_(idx, idx)].sum() / (idx.size**2)
        out[:, c] = K_self - 2.0 * mean_cross + mean_self
    return out


def kernel_kmeans_fit(
    spec: KernelSpec,
    X,
    m: int,
    seed: int = 0,
    max_iter: int = 100,
    subsample_cap: int = 10_000,
    init_indices: list[int] | None = None,
) -> PartitionModel:
    """Kernel k-means on a uniform subsample, kernel-trick assignment.

    The RKHS objective sum_c sum_{j in c} ||phi(x_j) - mu_c||^2 is
    non-increasing across Lloyd rounds (tracked in ``sse_trace``).  Points
    outside the subsample, and any future point, are assigned by minimal
    RKHS distance to the stored cluster members.
    """
    X = _as_matrix(X)
    n, d = X.shape
    s = min(n, subsample_cap)
    if not 1 <= m <= s:
        raise InputError(f"need 1 <= m <= effective sample {s}, got m={m}")
    rng = np.random.default_rng(seed)
    if s < n:
        sample_rows = np.sort(rng.choice(n, size=s, replace=False))
    else:
        sample_rows = np.arange(n)
    S = X[sample_rows]
    K = gram(spec, S)
    diag = np.diag(K).copy()

    if init_indices is None:
        init_indices = _kmeanspp_indices(
            lambda j: diag - 2.0 * K[j] + diag[j], s, m, rng
        )
    # Initial assignment: nearest seeding center in the RKHS.
    seed_idx = np.asarray(init_indices, dtype=int)
    D0 = diag[:, None] - 2.0 * K[:, seed_idx] + diag[seed_idx][None, :]
    labels = np.argmin(D0, axis=1)

    sse_trace: list[float] = []
    for _ in range(max_iter):
        members = [np.flatnonzero(labels == c) for c in range(m)]
        # Distances of all sample points to current cluster means.
        D = np.empty((s, m))
        for c, idx in enumerate(members):
            if idx.size == 0:
                D[:, c] = np.inf
                continue
            mean_cross = K[:, idx].sum(axis=1) / idx.size
            mean_self = K[np.ix_(idx, idx)].sum() / (idx.size**2)
            D[:, c] = diag - 2.0 * mean_cross + mean_self
        sse_trace.append(float(D[np.arange(s), labels].sum()))
        new_labels = np.argmin(D, axis=1)
        # Re-seed empty clusters at the worst-fit sample point.
        empties = [c for c in range(m) if not (new_labels == c).any()]
        if empties:
            cur = D[np.arange(s), new_labels]
            order = np.argsort(cur)[::-1]
            for k, c in enumerate(empties):
                new_labels[order[k]] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    members = [np.flatnonzero(labels == c) for c in range(m)]
    model = PartitionModel(
        kind="kernel_kmeans",
        m=m,
        dim=d,
        train_assignments=np.zeros(n, dtype=int),
        spec=spec,
        sample_X=S,
        member_index_sets=members,
        sse_trace=sse_trace,
    )
    # Assign the full training set (subsampled points keep their labels).
    full = np.argmin(
        _rkhs_sq_dists(spec, X, S, members, K_cross_full=cross(spec, S, X), K_sample=K),
        axis=1,
    )
    full[sample_rows] = labels
    model.train_assignments = full
    return model


def random_split(n: int, m: int, seed: int = 0) -> PartitionModel:
    """Uniform random split into m near-equal groups (sizes differ by <= 1)."""
    if not 1 <= m <= n:
        raise InputError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=int)
    for g, chunk in enumerate(np.array_split(perm, m)):
        assignments[chunk] = g
    return PartitionModel(
        kind="random",
        m=m,
        dim=0,
        train_assignments=assignments,
        split_seed=seed,
    )


def voronoi_fit(X, alpha: float) -> PartitionModel:
    """Greedy radius cover: r = alpha * max pairwise distance.

    Points are scanned in index order; any point farther than r from every
    existing center opens a new center.  The number of partitions emerges
    from the data.  For n > 5000 the max distance is taken over an
    evenly-strided 5000-point subsample.
    """
    X = _as_matrix(X)
    n, d = X.shape
    if n < 1:
        raise InputError("voronoi_fit requires at least one point")
    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    if n > 5000:
        rows = X[np.linspace(0, n - 1, 5000).astype(int)]
    else:
        rows = X
    max_d = 0.0
    for j in range(rows.shape[0]):
        dj = np.sqrt(np.square(rows[j + 1:] - rows[j]).sum(axis=1))
        if dj.size:
            max_d = max(max_d, float(dj.max()))
    r = alpha * max_d

    centers = [X[0]]
    for j in range(1, n):
        dists = np.sqrt(np.square(np.asarray(centers) - X[j]).sum(axis=1))
        if float(dists.min()) > r:
            centers.append(X[j])
    C = np.asarray(centers)
    assignments = np.argmin(_sq_dists_to_centers(X, C), axis=1)
    return PartitionModel(
        kind="voronoi",
        m=C.shape[0],
        dim=d,
        train_assignments=assignments,
        centroids=C,
    )


def single_partition(n: int, dim: int) -> PartitionModel:
    """The trivial m=1 partition (assign is constant 0)."""
    return PartitionModel(
        kind="single", m=1, dim=dim, train_assignments=np.zeros(n, dtype=int)
    )


def from_centroids(centroids, train_X=None) -> PartitionModel:
    """Partition induced by fixed centers (nearest-center assignment).

    Useful when the generating components of a synthetic task are known and
    the partition should match them rather than be re-estimated.
    """
    C = _as_matrix(centroids)
    if train_X is not None:
        X = _as_matrix(train_X)
        assignments = np.argmin(_sq_dists_to_centers(X, C), axis=1)
    else:
        assignments = np.zeros(0, dtype=int)
    return PartitionModel(
        kind="kmeans",
        m=C.shape[0],
        dim=C.shape[1],
        train_assignments=assignments,
        centroids=C,
    )


def assign(model: PartitionModel, x) -> int:
    """Partition index for a single point (ties break to the lowest index)."""
    return int(assign_many(model, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def assign_many(model: PartitionModel, X) -> np.ndarray:
    """Vectorized :func:`assign` over rows of X."""
    X = _as_matrix(X)
    if model.kind == "single":
        return np.zeros(X.shape[0], dtype=int)
    if model.kind == "random":
        raise UnsupportedAssignmentError(
            "random splits have no out-of-sample assignment rule"
        )
    if model.dim and X.shape[1] != model.dim:
        raise InputError(
            f"dimension mismatch: model dim {model.dim}, point dim {X.shape[1]}"
        )
    if model.kind in ("kmeans", "voronoi"):
        return np.argmin(_sq_dists_to_centers(X, model.centroids), axis=1)
    # kernel_kmeans
    D = _rkhs_sq_dists(model.spec, X, model.sample_X, model.member_index_sets)
    return np.argmin(D, axis=1)


def stats(model: PartitionModel, n: int) -> PartitionStats:
    """Per-partition counts and empirical masses n_i / n."""
    a = np.asarray(model.train_assignments)
    if a.size != n:
        raise InputError(f"model was fitted on {a.size} points, not {n}")
    counts = np.bincount(a, minlength=model.m)
    return PartitionStats(counts=counts, mass_estimates=counts / n)
