"""K-fold cross-validation over observed entries for choosing the Tucker rank.

Each fold is held out in turn and treated as missing; the fit on the remaining
entries predicts it. The held-out predictions assemble a *predicted tensor*
whose mean absolute deviation from the observed data is the CV error. The
absolute (rather than squared) error keeps outlying entries from dominating.
Only observed entries enter the average.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .l2e import FitConfig, MaskedTensor, fit, predict
from .tensor import from_vec, vec


@dataclass(frozen=True)
class CvPlan:
    """Random partition of the observed entries into ``K`` folds.

    ``folds`` has the data's shape and holds the fold id (``0..K-1``) of each
    observed entry and ``-1`` at unobserved ones.
    """

    K: int
    seed: int
    folds: np.ndarray

    def holdout(self, k: int) -> np.ndarray:
        return self.folds == k

    def sizes(self) -> np.ndarray:
        return np.bincount(self.folds[self.folds >= 0], minlength=self.K)


@dataclass
class CvResult:
    scores: list = field(default_factory=list)       # (rank, cv_error)
    fold_errors: list = field(default_factory=list)  # (rank, fold, mae, n_entries, status)

    @property
    def best_rank(self):
        finite = [(e, i) for i, (_, e) in enumerate(self.scores) if np.isfinite(e)]
        if not finite:
            return None
        return self.scores[min(finite)[1]][0]

    def error_of(self, rank) -> float:
        return dict(self.scores)[tuple(rank)]


def make_plan(data: MaskedTensor, K: int = 10, seed: int = 0) -> CvPlan:
    n_obs = data.n_observed
    if K < 2:
        raise ValueError("need at least 2 folds")
    if n_obs < K:
        raise ValueError(f"only {n_obs} observed entries for {K} folds")
    observed = np.flatnonzero(vec(data.mask))
    perm = np.random.default_rng(seed).permutation(observed.size)
    ids = np.full(data.mask.size, -1)
    ids[observed[perm]] = np.arange(observed.size) % K
    return CvPlan(K, seed, from_vec(ids, data.shape).astype(int))


def _fit_fold(data: MaskedTensor, plan: CvPlan, k: int, config: FitConfig):
    held = plan.holdout(k)
    train_mask = data.mask & ~held
    # the fit cannot see held-out values: they are blanked, not just masked
    train = MaskedTensor(np.where(train_mask, data.values, np.nan), train_mask)
    try:
        model = fit(train, config)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return None, f"failed: {exc}"
    return predict(model)[held], model.result.status


def cross_validate(data: MaskedTensor, ranks, plan: CvPlan, config: FitConfig,
                   n_jobs: int = 1) -> CvResult:
    """Cross-validation error for every candidate rank.

    ``config.rank`` is ignored; each candidate in ``ranks`` replaces it. Fold
    fits that raise are reported with a warning and their entries left out of
    the average. ``n_jobs > 1`` distributes the (rank, fold) fits with joblib.
    """
    ranks = [tuple(int(r) for r in rank) for rank in ranks]
    if plan.folds.shape != data.shape:
        raise ValueError("plan does not match the data shape")
    jobs = [(rank, k) for rank in ranks for k in range(plan.K)]

    def run(rank, k):
        return _fit_fold(data, plan, k, replace(config, rank=rank))

    if n_jobs == 1:
        outputs = [run(rank, k) for rank, k in jobs]
    else:
        from joblib import Parallel, delayed
        outputs = Parallel(n_jobs=n_jobs)(delayed(run)(rank, k) for rank, k in jobs)

    result = CvResult()
    by_job = dict(zip(jobs, outputs))
    for rank in ranks:
        predicted = np.full(data.shape, np.nan)
        for k in range(plan.K):
            held = plan.holdout(k)
            pred, status = by_job[rank, k]
            if pred is None:
                warnings.warn(f"rank {rank} fold {k}: fit {status}; fold excluded")
                result.fold_errors.append((rank, k, np.nan, int(held.sum()), status))
                continue
            predicted[held] = pred
            mae = float(np.mean(np.abs(pred - data.values[held])))
            result.fold_errors.append((rank, k, mae, int(held.sum()), status))
        resid = np.abs(predicted - data.values)[data.mask]
        resid = resid[np.isfinite(resid)]
        result.scores.append((rank, float(resid.mean()) if resid.size else np.nan))
    return result
