"""Dense SPD solves and symmetric eigendecomposition.

Every ridge system in this package has the form (G + c*I) with G positive
semidefinite and c > 0, so Cholesky is the right factorization and an
escalating diagonal jitter is the right fallback when round-off pushes a
marginal system just past singular.  The jitter actually used is reported so
experiments stay auditable.

Backed by LAPACK (``dpotrf``/``dpotrs``, ``numpy.linalg.eigh``); the
contracts below are what the rest of the package relies on, and the test
suite checks them against independent oracles (Gauss-Jordan inversion,
characteristic-polynomial roots).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack

from .exceptions import InputError, NumericError, SingularMatrixError

# Rungs below jitter_max in the escalation ladder (growth^-_LADDER_SPAN floor).
_LADDER_SPAN = 10


@dataclass(frozen=True)
class SpdSolveConfig:
    """Jitter escalation policy for :func:`solve_spd`.

    ``jitter_max`` of ``None`` resolves to ``1e-6 * mean(diag(A))`` at solve
    time.  The ladder starts at ``jitter_initial`` (default 0, i.e. try the
    unmodified system first) and grows geometrically by ``jitter_growth``
    until ``jitter_max``.
    """

    jitter_initial: float = 0.0
    jitter_max: float | None = None
    jitter_growth: float = 10.0

    def __post_init__(self):
        if self.jitter_initial < 0:
            raise InputError("jitter_initial must be nonnegative")
        if self.jitter_growth <= 1:
            raise InputError("jitter_growth must exceed 1")
        if self.jitter_max is not None and self.jitter_initial > self.jitter_max:
            raise InputError("jitter_initial must not exceed jitter_max")


class SpdSolution(NamedTuple):
    x: np.ndarray
    jitter: float


def _jitter_ladder(cfg: SpdSolveConfig, mean_diag: float) -> list[float]:
    jmax = cfg.jitter_max
    if jmax is None:
        jmax = 1e-6 * mean_diag
    if cfg.jitter_initial > jmax:
        raise InputError("jitter_initial exceeds resolved jitter_max")
    rungs = [cfg.jitter_initial]
    if jmax > 0:
        step = jmax * cfg.jitter_growth ** (-_LADDER_SPAN)
        while step < jmax:
            if step > cfg.jitter_initial:
                rungs.append(step)
            step *= cfg.jitter_growth
        if rungs[-1] != jmax:
            rungs.append(jmax)
    return rungs


def solve_spd(A, B, cfg: SpdSolveConfig | None = None) -> SpdSolution:
    """Solve (A + delta*I) X = B for the smallest workable jitter delta.

    A must be symmetric (n x n); B is a vector or n x k matrix.  Returns the
    solution together with the delta used.  Raises
    :class:`SingularMatrixError` if even ``jitter_max`` does not make the
    factorization succeed.
    """
    cfg = cfg or SpdSolveConfig()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"A must be square, got shape {A.shape}")
    B_in = np.asarray(B, dtype=float)
    vector_rhs = B_in.ndim == 1
    B2 = B_in[:, None] if vector_rhs else B_in
    if B2.ndim != 2 or B2.shape[0] != A.shape[0]:
        raise InputError(f"B rows {B2.shape} do not match A order {A.shape[0]}")

    mean_diag = float(np.mean(np.diag(A))) if A.shape[0] else 0.0
    last_pivot = 0
    for delta in _jitter_ladder(cfg, mean_diag):
        # Fortran order so dpotrf factors in place without a second copy.
        M = np.array(A, order="F", copy=True)
        if delta:
            M[np.diag_indices_from(M)] += delta
        c, info = lapack.dpotrf(M, lower=1, overwrite_a=1)
        if info < 0:
            raise NumericError(f"dpotrf: illegal argument {-info}")
        if info > 0:
            last_pivot = int(info)
            continue
        x, info = lapack.dpotrs(c, B2, lower=1)
        if info != 0:
            raise NumericError(f"dpotrs failed with info={info}")
        return SpdSolution(x[:, 0] if vector_rhs else x, delta)
    raise SingularMatrixError(
        f"SPD factorization failed at jitter_max (pivot {last_pivot})",
        pivot=last_pivot,
    )


def eig_sym(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric A.

    Column ``V[:, j]`` pairs with ``w[j]``.  Round-off can leave slightly
    negative eigenvalues on PSD input; callers that need nonnegative spectra
    clamp via :func:`clamp_spectrum`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"A must be square, got shape {A.shape}")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # iteration cap exceeded
        raise NumericError(f"symmetric eigendecomposition failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def clamp_spectrum(eigs) -> np.ndarray:
    """Zero out negative round-off entries of a nominally PSD spectrum."""
    return np.maximum(np.asarray(eigs, dtype=float), 0.0)
