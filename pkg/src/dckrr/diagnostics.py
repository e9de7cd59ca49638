"""Spectral diagnostics and Monte-Carlo error decomposition.

Spectral side: the effective dimensionality S(lambda) = sum_j ev_j/(ev_j +
lambda) of the kernel covariance, its per-partition analogue evaluated at
lambda * p_i, the partition goodness measure

    g(lambda) = sum_i S_i(lambda * p_i) / S(lambda),

and the closed-form covariance-error bound built from truncated spectral
sums.  Eigenvalues come from the kernel matrix divided by the sample count
(eigenvalues of K/n converge to the covariance spectrum), computed on a
subsample for large data, and are clamped at zero before entering any sum.

Monte-Carlo side: the four-term error decomposition

    Approx_i  = E[(f*(x)      - f_bar_i(x))^2  1{x in C_i}]
    Reg_i     = E[(f_bar_i(x) - f_lam_i(x))^2  1{x in C_i}]
    Bias_i    = E[(f_lam_i(x) - fmean_i(x))^2  1{x in C_i}]
    Var_i     = E[(fmean_i(x) - fhat_i(x))^2   1{x in C_i}]

where f_bar_i / f_lam_i are population-optimal per-partition fits at
penalties lambda_bar / lambda, fmean_i is the average of the empirical fit
over training draws, and fhat_i is one empirical fit.  Population fits are
not computable in closed form; they are stood in for by KRR fits on a much
larger sample (default 20x the training size), with the remaining error
reported as part of the MC noise.  Every estimate is paired with the
standard error of its sample mean.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import SyntheticTask
from .estimators import LocalKrrModel, fit_dc, fit_krr, predict_dc, predict_krr
from .exceptions import InputError
from .kernels import KernelSpec, gram
from .linalg import clamp_spectrum, eig_sym, solve_spd
from .partition import PartitionModel, assign_many, stats

DEFAULT_EIG_SUBSAMPLE = 2000


def spectral_sum(eigs, lam: float) -> float:
    """S(lambda) = sum_j ev_j / (ev_j + lambda) over a nonnegative spectrum."""
    if lam <= 0:
        raise InputError("lambda must be positive")
    ev = clamp_spectrum(eigs)
    if ev.size == 0:
        return 0.0
    return float(np.sum(ev / (ev + lam)))


def truncated_sums(eigs, d: int, lam: float) -> tuple[float, float]:
    """Head/tail split of the spectral sum at index d (head = first d terms).

    Returns (U, L) with U + L = spectral_sum(eigs, lam).
    """
    if d < 1:
        raise InputError("truncation index d must be >= 1")
    ev = clamp_spectrum(eigs)
    terms = ev / (ev + lam) if ev.size else np.zeros(0)
    return float(terms[:d].sum()), float(terms[d:].sum())


@dataclass
class SpectralReport:
    lam: float
    global_eigs: np.ndarray
    per_partition_eigs: list[np.ndarray]
    s_global: float
    s_partition: list[float]
    g: float
    masses: np.ndarray
    counts: np.ndarray
    empty_partitions: list[int]
    n_rows_used: int
    partitioner: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "lambda": self.lam,
            "global_eigs": self.global_eigs.tolist(),
            "per_partition_eigs": [e.tolist() for e in self.per_partition_eigs],
            "s_global": self.s_global,
            "s_partition": self.s_partition,
            "g": self.g,
            "masses": self.masses.tolist(),
            "counts": self.counts.tolist(),
            "empty_partitions": self.empty_partitions,
            "n_rows_used": self.n_rows_used,
            "partitioner": self.partitioner,
        })


def _subsample(X: np.ndarray, cap: int, seed: int) -> np.ndarray:
    n = X.shape[0]
    if n <= cap:
        return X
    rng = np.random.default_rng(seed)
    return X[np.sort(rng.choice(n, size=cap, replace=False))]


def _kn_eigs(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    w, _ = eig_sym(gram(spec, X) / X.shape[0])
    return clamp_spectrum(w)


def effective_dimensions(
    spec: KernelSpec,
    X,
    partition: PartitionModel,
    lam: float,
    subsample_cap: int = DEFAULT_EIG_SUBSAMPLE,
    seed: int = 0,
) -> SpectralReport:
    """Estimate S(lambda), per-partition S_i(lambda * p_i), and g(lambda).

    Global eigenvalues come from K/n on at most ``subsample_cap`` rows;
    partition i uses its own rows (subsampled the same way) and K_i/n_i.
    Masses p_i are the empirical n_i/n over the full training set.  Empty
    partitions contribute S_i = 0 and are flagged.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    part_stats = stats(partition, n)
    masses = part_stats.mass_estimates

    global_rows = _subsample(X, subsample_cap, seed)
    global_eigs = _kn_eigs(spec, global_rows)
    s_global = spectral_sum(global_eigs, lam)

    a = np.asarray(partition.train_assignments)
    per_eigs: list[np.ndarray] = []
    s_part: list[float] = []
    empties: list[int] = []
    for i in range(partition.m):
        rows = X[a == i]
        if rows.shape[0] == 0:
            empties.append(i)
            per_eigs.append(np.zeros(0))
            s_part.append(0.0)
            continue
        eigs_i = _kn_eigs(spec, _subsample(rows, subsample_cap, seed + i))
        per_eigs.append(eigs_i)
        s_part.append(spectral_sum(eigs_i, lam * masses[i]))

    return SpectralReport(
        lam=lam,
        global_eigs=global_eigs,
        per_partition_eigs=per_eigs,
        s_global=s_global,
        s_partition=s_part,
        g=float(sum(s_part) / s_global),
        masses=masses,
        counts=part_stats.counts,
        empty_partitions=empties,
        n_rows_used=global_rows.shape[0],
        partitioner=partition.kind,
    )


@dataclass(frozen=True)
class BoundParams:
    """Inputs to the covariance-error bound.

    ``a1`` (moment constant) and ``k`` (moment order, >= 2) are accepted as
    user-supplied constants, never estimated from data.  ``lambda_pi`` is
    the penalty already scaled by the partition mass.
    """

    d: int
    k: float
    a1: float
    lambda_pi: float
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise InputError("truncation index d must be >= 1")
        if self.k < 2:
            raise InputError("moment order k must be >= 2")
        if self.a1 <= 0 or self.lambda_pi <= 0 or self.n < 1:
            raise InputError("a1, lambda_pi must be positive and n >= 1")


def coverr_bound(params: BoundParams, eigs) -> float:
    """Closed-form bound on the whitened sample-covariance error.

        a1*L + a1*sqrt(L*U) + a1*sqrt(e*ln d)*U/sqrt(n)
        + 4e*ln d*(a1*U + ev_1/(ev_1 + lam))/n^(1 - 1/k)
        + ev_{d+1}/(ev_{d+1} + lam)

    with (U, L) the head/tail spectral sums truncated at d, evaluated at
    lam = lambda_pi.  d = 1 makes both log terms vanish (ln 1 = 0).  The
    tail eigenvalue ev_{d+1} is taken as 0 when d reaches the spectrum
    length.
    """
    ev = clamp_spectrum(eigs)
    d, lam = params.d, params.lambda_pi
    if d > ev.size:
        raise InputError(f"d={d} exceeds spectrum length {ev.size}")
    U, L = truncated_sums(ev, d, lam)
    ev1 = ev[0] if ev.size else 0.0
    ev_next = ev[d] if d < ev.size else 0.0
    log_d = math.log(d)
    a1, k, n = params.a1, params.k, params.n
    return (
        a1 * L
        + a1 * math.sqrt(L * U)
        + a1 * math.sqrt(math.e * log_d) * U / math.sqrt(n)
        + 4 * math.e * log_d * (a1 * U + ev1 / (ev1 + lam)) / n ** (1 - 1 / k)
        + ev_next / (ev_next + lam)
    )


# Monte-Carlo error decomposition ---------------------------------------------

@dataclass(frozen=True)
class McConfig:
    """Sample sizes and seeding for the Monte-Carlo estimates.

    ``n_pop`` of None resolves to 20 * n_train.  Seeds are derived
    deterministically: population draw at ``seed``, evaluation draw at
    ``seed + 1``, training repeat r at ``seed + 2 + r``.
    """

    n_train: int
    n_pop: int | None = None
    n_test: int = 4000
    n_repeats: int = 20
    seed: int = 0

    def resolved_n_pop(self) -> int:
        return self.n_pop if self.n_pop is not None else 20 * self.n_train


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, float("nan")
    return mean, float(values.std(ddof=1) / math.sqrt(n))


def fit_population_surrogate(spec: KernelSpec, X, y, lam_bar: float) -> LocalKrrModel:
    """KRR stand-in for a population-optimal fit; lam_bar = 0 is allowed.

    At zero penalty the system is the bare kernel matrix; the SPD solver's
    jitter ladder supplies the minimal diagonal shift that makes the
    factorization succeed, which acts as a vanishing effective penalty.
    """
    if lam_bar > 0:
        return fit_krr(spec, X, y, lam_bar)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    sol = solve_spd(gram(spec, X), y)
    return LocalKrrModel(
        support_X=X.copy(), alpha=sol.x, lam=0.0, spec=spec, jitter=sol.jitter
    )


def _routed_predictions(
    surrogates: list[LocalKrrModel | None],
    X_test: np.ndarray,
    assignments: np.ndarray,
) -> np.ndarray:
    out = np.full(X_test.shape[0], np.nan)
    for i, model in enumerate(surrogates):
        mask = assignments == i
        if model is not None and mask.any():
            out[mask] = predict_krr(model, X_test[mask])
    return out


@dataclass
class DecompositionReport:
    """Per-partition Definition-style error terms with MC standard errors.

    ``lemma_bound`` is the decomposition check value
    2*(Approx + 2*Reg + 2*Bias + 2*Var) per partition;
    ``bound_minus_err`` / ``bound_minus_err_se`` give the sample mean and SE
    of the per-point difference between that bound and the empirical error,
    for significance checks.
    """

    lam: float
    lam_bar: float
    masses: np.ndarray
    approx: np.ndarray
    reg: np.ndarray
    bias: np.ndarray
    var: np.ndarray
    err: np.ndarray
    lemma_bound: np.ndarray
    approx_se: np.ndarray
    reg_se: np.ndarray
    bias_se: np.ndarray
    var_se: np.ndarray
    err_se: np.ndarray
    lemma_bound_se: np.ndarray
    bound_minus_err: np.ndarray
    bound_minus_err_se: np.ndarray
    skipped_partitions: list[int]
    config: dict = field(default_factory=dict)

    def totals(self) -> dict:
        ok = [i for i in range(self.approx.size) if i not in self.skipped_partitions]
        return {
            name: float(getattr(self, name)[ok].sum())
            for name in ("approx", "reg", "bias", "var", "err", "lemma_bound")
        }

    def to_json(self) -> str:
        per = []
        for i in range(self.approx.size):
            per.append({
                "partition": i,
                "skipped": i in self.skipped_partitions,
                "mass": float(self.masses[i]),
                **{
                    name: {
                        "estimate": float(getattr(self, name)[i]),
                        "se": float(getattr(self, name + "_se")[i]),
                    }
                    for name in ("approx", "reg", "bias", "var", "err", "lemma_bound")
                },
                "bound_minus_err": {
                    "estimate": float(self.bound_minus_err[i]),
                    "se": float(self.bound_minus_err_se[i]),
                },
            })
        return json.dumps({
            "lambda": self.lam,
            "lambda_bar": self.lam_bar,
            "partitions": per,
            "totals": self.totals(),
            "config": self.config,
            "note": (
                "population fits are KRR surrogates on the larger sample; "
                "surrogate error is part of the reported MC noise"
            ),
        })


def _masked_stats(per_sample: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    # E[z 1{mask}] over the full evaluation draw, with the SE of that mean.
    z = np.where(mask, per_sample, 0.0)
    return _mean_and_se(z)


def decompose_error_mc(
    task: SyntheticTask,
    spec: KernelSpec,
    partition: PartitionModel,
    lam: float,
    lam_bar: float,
    cfg: McConfig,
) -> DecompositionReport:
    """Monte-Carlo estimate of the four-term decomposition on a known target.

    Population surrogates are fitted on noiseless draws restricted to each
    partition (the noiseless response has the same minimizer and lower MC
    variance); the mean empirical fit is the pointwise average over
    ``n_repeats`` independent training draws; all expectations are estimated
    on one fresh evaluation draw.
    """
    if not 0 <= lam_bar <= lam:
        raise InputError("need 0 <= lambda_bar <= lambda")
    n_pop = cfg.resolved_n_pop()
    m = partition.m

    pop = task.sample(n_pop, cfg.seed, noise_var=0.0)
    a_pop = assign_many(partition, pop.X)

    sur_bar: list[LocalKrrModel | None] = []
    sur_lam: list[LocalKrrModel | None] = []
    skipped: list[int] = []
    for i in range(m):
        rows = a_pop == i
        if not rows.any():
            warnings.warn(f"partition {i} received no population samples; skipped")
            skipped.append(i)
            sur_bar.append(None)
            sur_lam.append(None)
            continue
        Xi, yi = pop.X[rows], pop.y[rows]
        sur_bar.append(fit_population_surrogate(spec, Xi, yi, lam_bar))
        sur_lam.append(
            sur_bar[-1] if lam_bar == lam else fit_population_surrogate(spec, Xi, yi, lam)
        )

    test = task.sample(cfg.n_test, cfg.seed + 1, noise_var=0.0)
    a_test = assign_many(partition, test.X)
    f_star = test.y

    pred_bar = _routed_predictions(sur_bar, test.X, a_test)
    pred_lam = _routed_predictions(sur_lam, test.X, a_test)

    hat_preds = np.empty((cfg.n_repeats, cfg.n_test))
    for r in range(cfg.n_repeats):
        train = task.sample(cfg.n_train, cfg.seed + 2 + r)
        dc = fit_dc(spec, train.X, train.y, partition, lambda_rule=lam)
        hat_preds[r] = predict_dc(dc, test.X)
    mean_hat = hat_preds.mean(axis=0)

    approx_t = np.square(f_star - pred_bar)
    reg_t = np.square(pred_bar - pred_lam)
    bias_t = np.square(pred_lam - mean_hat)
    var_t = np.square(mean_hat[None, :] - hat_preds).mean(axis=0)
    err_t = np.square(f_star[None, :] - hat_preds).mean(axis=0)
    lemma_t = 2.0 * (approx_t + 2.0 * reg_t + 2.0 * bias_t + 2.0 * var_t)

    names = ("approx", "reg", "bias", "var", "err", "lemma_bound")
    samples = (approx_t, reg_t, bias_t, var_t, err_t, lemma_t)
    est = {n: np.zeros(m) for n in names}
    ses = {n: np.zeros(m) for n in names}
    dmean = np.zeros(m)
    dse = np.zeros(m)
    for i in range(m):
        mask = a_test == i
        if i in skipped:
            for n in names:
                est[n][i] = ses[n][i] = float("nan")
            dmean[i] = dse[i] = float("nan")
            continue
        for n, z in zip(names, samples):
            mu, se = _masked_stats(np.maximum(z, 0.0), mask)
            est[n][i], ses[n][i] = mu, se
        dmean[i], dse[i] = _masked_stats(lemma_t - err_t, mask)

    return DecompositionReport(
        lam=lam,
        lam_bar=lam_bar,
        masses=stats(partition, partition.train_assignments.size).mass_estimates
        if partition.train_assignments.size
        else np.bincount(a_test, minlength=m) / cfg.n_test,
        approx=est["approx"], reg=est["reg"], bias=est["bias"], var=est["var"],
        err=est["err"], lemma_bound=est["lemma_bound"],
        approx_se=ses["approx"], reg_se=ses["reg"], bias_se=ses["bias"],
        var_se=ses["var"], err_se=ses["err"], lemma_bound_se=ses["lemma_bound"],
        bound_minus_err=dmean, bound_minus_err_se=dse,
        skipped_partitions=skipped,
        config={
            "n_train": cfg.n_train, "n_pop": n_pop, "n_test": cfg.n_test,
            "n_repeats": cfg.n_repeats, "seed": cfg.seed,
            "lambda": lam, "lambda_bar": lam_bar, "kernel": spec.to_dict(),
            "task": task.task_id, "partitioner": partition.kind, "m": m,
        },
    )


@dataclass
class ApproxDominanceReport:
    """Summed per-partition approximation error vs. the global one.

    ``diff`` is the per-point (global - local) squared-error difference, so
    a positive mean says the piecewise population fit approximates the
    target better than the single global fit.
    """

    lam_bar: float
    approx_local: np.ndarray
    approx_local_se: np.ndarray
    approx_global: np.ndarray
    approx_global_se: np.ndarray
    total_local: float
    total_global: float
    diff_mean: float
    diff_se: float
    skipped_partitions: list[int]
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "lambda_bar": self.lam_bar,
            "per_partition": [
                {
                    "partition": i,
                    "skipped": i in self.skipped_partitions,
                    "approx_local": {
                        "estimate": float(self.approx_local[i]),
                        "se": float(self.approx_local_se[i]),
                    },
                    "approx_global": {
                        "estimate": float(self.approx_global[i]),
                        "se": float(self.approx_global_se[i]),
                    },
                }
                for i in range(self.approx_local.size)
            ],
            "total_local": self.total_local,
            "total_global": self.total_global,
            "diff_mean": self.diff_mean,
            "diff_se": self.diff_se,
            "config": self.config,
        })


def approx_dominance_check(
    task: SyntheticTask,
    spec: KernelSpec,
    partition: PartitionModel,
    lam_bar: float,
    cfg: McConfig,
) -> ApproxDominanceReport:
    """Compare summed per-partition approximation error to the global one.

    Fits the global population surrogate (one KRR on the full population
    draw at penalty lam_bar) and per-partition surrogates at the same
    penalty, then estimates both squared-error totals on a fresh draw.
    Test points in partitions without population samples are excluded from
    both sides.
    """
    n_pop = cfg.resolved_n_pop()
    m = partition.m

    pop = task.sample(n_pop, cfg.seed, noise_var=0.0)
    a_pop = assign_many(partition, pop.X)
    global_fit = fit_population_surrogate(spec, pop.X, pop.y, lam_bar)

    locals_: list[LocalKrrModel | None] = []
    skipped: list[int] = []
    for i in range(m):
        rows = a_pop == i
        if not rows.any():
            warnings.warn(f"partition {i} received no population samples; skipped")
            skipped.append(i)
            locals_.append(None)
            continue
        locals_.append(
            fit_population_surrogate(spec, pop.X[rows], pop.y[rows], lam_bar)
        )

    test = task.sample(cfg.n_test, cfg.seed + 1, noise_var=0.0)
    a_test = assign_many(partition, test.X)
    f_star = test.y
    usable = ~np.isin(a_test, skipped)

    global_sq = np.square(f_star - predict_krr(global_fit, test.X))
    local_sq = np.square(f_star - _routed_predictions(locals_, test.X, a_test))

    al = np.zeros(m); al_se = np.zeros(m)
    ag = np.zeros(m); ag_se = np.zeros(m)
    for i in range(m):
        if i in skipped:
            al[i] = al_se[i] = ag[i] = ag_se[i] = float("nan")
            continue
        mask = a_test == i
        al[i], al_se[i] = _masked_stats(local_sq, mask)
        ag[i], ag_se[i] = _masked_stats(global_sq, mask)

    diff = np.where(usable, global_sq - local_sq, 0.0)
    diff_mean, diff_se = _mean_and_se(diff)

    return ApproxDominanceReport(
        lam_bar=lam_bar,
        approx_local=al, approx_local_se=al_se,
        approx_global=ag, approx_global_se=ag_se,
        total_local=float(np.where(usable, local_sq, 0.0).mean()),
        total_global=float(np.where(usable, global_sq, 0.0).mean()),
        diff_mean=diff_mean,
        diff_se=diff_se,
        skipped_partitions=skipped,
        config={
            "n_pop": n_pop, "n_test": cfg.n_test, "seed": cfg.seed,
            "lambda_bar": lam_bar, "kernel": spec.to_dict(),
            "task": task.task_id, "partitioner": partition.kind, "m": m,
        },
    )
