"""Dense tensors, unfoldings and multilinear products.

Tensors are plain :class:`numpy.ndarray` objects. The *linear layout* used
everywhere (vectorization, file I/O, parameter packing) is first-index-fastest,
so ``vec(X)`` stacks the columns of the mode-0 unfolding. Mode indices are
0-based in the API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


def vec(X: np.ndarray) -> np.ndarray:
    """Vectorize with the first index varying fastest."""
    return np.asarray(X).reshape(-1, order="F")


def from_vec(data, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`vec`."""
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"all dimensions must be >= 1, got {dims}")
    data = np.asarray(data, dtype=float)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{data.size} values do not fill a tensor of dims {dims}")
    return data.reshape(dims, order="F")


def _check_mode(ndim: int, n: int) -> None:
    if not 0 <= n < ndim:
        raise ValueError(f"mode {n} out of range for an order-{ndim} tensor")


def unfold(X: np.ndarray, n: int) -> np.ndarray:
    """Mode-``n`` matricization.

    Element ``(i_0, ..., i_{N-1})`` lands in row ``i_n`` and column
    ``sum_{k != n} i_k J_k`` where ``J_k`` is the product of the dimensions
    of the remaining modes preceding ``k``.
    """
    X = np.asarray(X)
    _check_mode(X.ndim, n)
    return np.moveaxis(X, n, 0).reshape(X.shape[n], -1, order="F")


def fold(M: np.ndarray, dims: Sequence[int], n: int) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild a tensor of shape ``dims``."""
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), n)
    M = np.asarray(M)
    rest = dims[:n] + dims[n + 1:]
    if M.ndim != 2 or M.shape != (dims[n], int(np.prod(rest))):
        raise ValueError(
            f"matrix of shape {M.shape} cannot be folded into dims {dims} along mode {n}"
        )
    return np.moveaxis(M.reshape((dims[n],) + rest, order="F"), 0, n)


def mode_product(X: np.ndarray, A: np.ndarray, n: int) -> np.ndarray:
    """The n-mode product ``X x_n A``; ``A`` has ``X.shape[n]`` columns."""
    X = np.asarray(X)
    A = np.asarray(A)
    _check_mode(X.ndim, n)
    if A.ndim != 2 or A.shape[1] != X.shape[n]:
        raise ValueError(
            f"matrix of shape {A.shape} does not match mode {n} of size {X.shape[n]}"
        )
    return np.moveaxis(np.tensordot(A, X, axes=(1, n)), 0, n)


def multi_mode_product(X, matrices, modes=None, transpose=False, skip=None):
    """Apply ``X x_{m} M_m`` for several modes.

    Parameters
    ----------
    matrices : sequence of ndarray
        One matrix per entry of ``modes`` (all modes by default).
    transpose : bool
        Multiply by ``M.T`` instead of ``M``.
    skip : int, optional
        A mode to leave untouched.
    """
    if modes is None:
        modes = range(len(matrices))
    out = np.asarray(X)
    for m, M in zip(modes, matrices):
        if m == skip:
            continue
        out = mode_product(out, M.T if transpose else M, m)
    return out


def hadamard(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return X * Y


def elementwise(X: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    out = np.asarray(f(np.asarray(X)))
    if out.shape != np.shape(X):
        raise ValueError("f must act elementwise")
    return out


def affine(X, a: float, b: float = 0.0) -> np.ndarray:
    return a * np.asarray(X) + b


def tsum(X) -> float:
    return float(np.sum(X, dtype=np.longdouble))


def frobenius_norm(X) -> float:
    X = np.asarray(X, dtype=np.longdouble)
    return float(np.sqrt(np.sum(X * X)))


def l1_norm(X) -> float:
    return float(np.sum(np.abs(np.asarray(X, dtype=np.longdouble))))


@dataclass(frozen=True)
class TuckerTensor:
    """Core tensor plus one factor matrix per mode, ``[[G; A_0, ..., A_{N-1}]]``.

    Factor columns need not be orthonormal.
    """

    core: np.ndarray
    factors: list = field(default_factory=list)

    def __post_init__(self):
        core = np.asarray(self.core, dtype=float)
        factors = [np.asarray(A, dtype=float) for A in self.factors]
        if core.ndim != len(factors):
            raise ValueError(
                f"core of order {core.ndim} needs {core.ndim} factors, got {len(factors)}"
            )
        for n, A in enumerate(factors):
            if A.ndim != 2 or A.shape[1] != core.shape[n]:
                raise ValueError(
                    f"factor {n} has shape {A.shape}, expected (*, {core.shape[n]})"
                )
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> tuple:
        return tuple(self.core.shape)

    @property
    def shape(self) -> tuple:
        return tuple(A.shape[0] for A in self.factors)

    def full(self) -> np.ndarray:
        return tucker_to_full(self)


@dataclass(frozen=True)
class KruskalTensor:
    """Weighted sum of rank-one tensors, ``[[gamma; A_0, ..., A_{N-1}]]``."""

    weights: np.ndarray
    factors: list = field(default_factory=list)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        factors = [np.asarray(A, dtype=float) for A in self.factors]
        if not factors:
            raise ValueError("at least one factor matrix is required")
        for n, A in enumerate(factors):
            if A.ndim != 2 or A.shape[1] != weights.size:
                raise ValueError(
                    f"factor {n} has shape {A.shape}, expected (*, {weights.size})"
                )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def shape(self) -> tuple:
        return tuple(A.shape[0] for A in self.factors)

    def full(self) -> np.ndarray:
        return kruskal_to_full(self)

    def to_tucker(self) -> TuckerTensor:
        """Equivalent Tucker form with a superdiagonal core."""
        r, N = self.rank, len(self.factors)
        core = np.zeros((r,) * N)
        core[(np.arange(r),) * N] = self.weights
        return TuckerTensor(core, self.factors)


def tucker_to_full(T: TuckerTensor) -> np.ndarray:
    return multi_mode_product(T.core, T.factors)


def kruskal_to_full(K: KruskalTensor) -> np.ndarray:
    """Sum of weighted outer products of the factor columns."""
    N = len(K.factors)
    letters = "abcdefghijklmnopqrstuvwxy"[:N]
    spec = "z," + ",".join(f"{c}z" for c in letters) + "->" + letters
    return np.einsum(spec, K.weights, *K.factors, optimize=True)
