"""Least-squares Tucker baselines: truncated SVD, HOSVD and HOOI (Tucker-ALS).

These seed the robust fit and double as the non-robust reference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tensor import TuckerTensor, multi_mode_product, tucker_to_full, unfold


def _fix_signs(U, V=None):
    # largest-magnitude entry of every left singular vector made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    if V is not None:
        V = V * signs
    return U, V


def truncated_svd(M, k: int):
    """Leading ``k`` singular triplets of ``M``.

    Returns ``(U, s, V)`` with ``U`` of shape ``(rows, k)`` and ``V`` of shape
    ``(cols, k)`` so that ``U @ diag(s) @ V.T`` is the best rank-``k``
    approximation. Signs are normalized so the largest-magnitude entry of
    each column of ``U`` is positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a matrix")
    if not 1 <= k <= min(M.shape):
        raise ValueError(f"k={k} out of range for a {M.shape[0]}x{M.shape[1]} matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesdd")
    U, V = _fix_signs(U[:, :k], Vt[:k].T)
    return U, s[:k], V


def _leading_left_vectors(M, k):
    if k <= min(M.shape):
        return truncated_svd(M, k)[0]
    # more vectors than the unfolding's rank can supply: complete the basis
    U = scipy.linalg.svd(M, full_matrices=True, lapack_driver="gesdd")[0][:, :k]
    return _fix_signs(U)[0]


def _check_rank(shape, rank):
    rank = tuple(int(r) for r in rank)
    if len(rank) != len(shape):
        raise ValueError(f"rank {rank} has wrong length for a tensor of shape {shape}")
    for n, (r, I) in enumerate(zip(rank, shape)):
        if not 1 <= r <= I:
            raise ValueError(f"rank {r} out of range for mode {n + 1} of size {I}")
    return rank


def hosvd(X, rank) -> TuckerTensor:
    """Truncated higher-order SVD.

    Each factor holds the leading left singular vectors of the corresponding
    unfolding; the core is ``X`` projected onto them.
    """
    X = np.asarray(X, dtype=float)
    rank = _check_rank(X.shape, rank)
    if not np.all(np.isfinite(X)):
        raise ValueError("tensor has non-finite entries")
    factors = [_leading_left_vectors(unfold(X, n), r) for n, r in enumerate(rank)]
    core = multi_mode_product(X, factors, transpose=True)
    return TuckerTensor(core, factors)


@dataclass(frozen=True)
class HooiConfig:
    rank: tuple
    max_iters: int = 50
    fit_tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.fit_tolerance < 0:
            raise ValueError("fit_tolerance must be nonnegative")


def hooi(X, config: HooiConfig, init: TuckerTensor | None = None,
         return_errors: bool = False):
    """Higher-order orthogonal iteration.

    Alternates over modes, replacing each factor by the leading left singular
    vectors of ``X`` projected on all other factors. Stops when the relative
    fit ``1 - ||X - Xhat|| / ||X||`` changes by less than
    ``config.fit_tolerance`` or after ``config.max_iters`` sweeps.

    With ``return_errors=True`` also returns the Frobenius reconstruction
    error after each sweep (index 0 is the error of the initialization).
    """
    X = np.asarray(X, dtype=float)
    rank = _check_rank(X.shape, config.rank)
    if not np.all(np.isfinite(X)):
        raise ValueError("tensor has non-finite entries")
    if init is None:
        init = hosvd(X, rank)
    elif init.rank != rank or init.shape != X.shape:
        raise ValueError("initial Tucker tensor does not match data shape and rank")

    factors = [np.linalg.qr(A)[0] if not _orthonormal(A) else A for A in init.factors]
    normX = np.linalg.norm(X)
    core = multi_mode_product(X, factors, transpose=True)
    errors = [_error(X, core, factors)]
    fit = 1.0 - errors[0] / normX if normX > 0 else 1.0

    for _ in range(config.max_iters):
        for n, r in enumerate(rank):
            Y = multi_mode_product(X, factors, transpose=True, skip=n)
            factors[n] = _leading_left_vectors(unfold(Y, n), r)
        core = multi_mode_product(X, factors, transpose=True)
        errors.append(_error(X, core, factors))
        new_fit = 1.0 - errors[-1] / normX if normX > 0 else 1.0
        done = abs(new_fit - fit) < config.fit_tolerance
        fit = new_fit
        if done:
            break

    result = TuckerTensor(core, factors)
    if return_errors:
        return result, np.array(errors)
    return result


def _orthonormal(A, tol=1e-10):
    return np.linalg.norm(A.T @ A - np.eye(A.shape[1])) < tol


def _error(X, core, factors):
    return float(np.linalg.norm(X - tucker_to_full(TuckerTensor(core, factors))))
