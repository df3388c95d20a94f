"""Tucker-L2E: robust Tucker decomposition under the L2 criterion.

The fitted model is a Gaussian with mean tensor ``L = [[G; A_0, ..., A_{N-1}]]``
and precision ``tau = exp(eta)``. Minimizing the L2 distance between that
model and the empirical distribution of the residuals gives the criterion

    h(L, tau) = n_obs * tau / (2 sqrt(pi))
                - sqrt(2/pi) * tau * sum_obs exp(-tau^2 (X - L)^2 / 2)

which is bounded below whenever ``tau`` is capped, and which downweights
entries whose residual is large compared with ``1/tau``. A small ridge term
``lam/2 ||L||_F^2`` keeps the problem coercive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baseline import HooiConfig, hooi, hosvd
from .optim import BoxBounds, SolveResult, SolverConfig, minimize
from .tensor import TuckerTensor, multi_mode_product, tucker_to_full, unfold, vec

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
INV_2_SQRT_PI = 1.0 / (2.0 * math.sqrt(math.pi))
#: value of h / (n_obs * tau) at zero residual; negative
ZERO_RESIDUAL_SLOPE = INV_2_SQRT_PI - SQRT_2_OVER_PI

DEFAULT_ETA_MAX = math.log(50.0)
DEFAULT_ETA0 = math.log(0.01)
DEFAULT_LAMBDA = 1e-8
#: iteration budget for a fit; longer runs at overestimated ranks start fitting outliers
DEFAULT_FIT_ITERS = 100


def default_solver() -> SolverConfig:
    return SolverConfig(max_iters=DEFAULT_FIT_ITERS)


@dataclass(frozen=True)
class MaskedTensor:
    """Data tensor with a boolean observation mask.

    Values at unobserved positions are never read by the objective; they may
    hold anything, including ``nan``.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask)
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} differs from data shape {values.shape}")
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise ValueError("mask entries must be 0 or 1")
            mask = mask.astype(bool)
        if not mask.any():
            raise ValueError("at least one entry must be observed")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, X) -> "MaskedTensor":
        X = np.asarray(X, dtype=float)
        return cls(X, np.ones(X.shape, dtype=bool))

    @classmethod
    def from_nan(cls, X) -> "MaskedTensor":
        """Treat ``nan`` entries as missing."""
        X = np.asarray(X, dtype=float)
        return cls(X, ~np.isnan(X))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def observed(self) -> np.ndarray:
        return self.values[self.mask]

    def with_mask(self, mask) -> "MaskedTensor":
        return MaskedTensor(self.values, mask)


@dataclass(frozen=True)
class FitConfig:
    rank: tuple
    eta_max: float = DEFAULT_ETA_MAX
    lam: float = DEFAULT_LAMBDA
    eta0: float = DEFAULT_ETA0
    init: str = "hosvd"
    solver: SolverConfig = field(default_factory=default_solver)

    def __post_init__(self):
        object.__setattr__(self, "rank", tuple(int(r) for r in self.rank))
        if self.lam < 0:
            raise ValueError("ridge weight must be nonnegative")
        if self.init not in ("hosvd", "hooi"):
            raise ValueError(f"unknown init method {self.init!r}")
        if self.eta0 > self.eta_max:
            raise ValueError("eta0 exceeds eta_max")


@dataclass
class L2EModel:
    """A fitted (or candidate) Tucker-L2E model.

    ``factors`` reconstructs on the original data scale. ``eta`` is the log
    precision on the *rescaled* data (observed entries with MAD 0.1), and
    ``scale`` is the MAD ``s`` of the original observed entries, so the
    precision on the original scale is ``exp(eta) / (10 * scale)``.
    """

    factors: TuckerTensor
    eta: float
    scale: float = 1.0
    result: SolveResult | None = field(default=None, repr=False, compare=False)

    @property
    def tau(self) -> float:
        return math.exp(self.eta)

    @property
    def rank(self) -> tuple:
        return self.factors.rank

    @property
    def shape(self) -> tuple:
        return self.factors.shape


def univariate_l2e(xs, mu: float, tau: float) -> float:
    """L2 criterion for a univariate normal with mean ``mu`` and precision ``tau``."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if xs.size == 0:
        raise ValueError("empty sample")
    if tau <= 0:
        raise ValueError("precision must be positive")
    r = xs - mu
    return tau * INV_2_SQRT_PI - tau / xs.size * SQRT_2_OVER_PI * float(
        np.sum(np.exp(-0.5 * tau**2 * r * r))
    )


def _residual(data: MaskedTensor, L):
    return np.where(data.mask, data.values - L, 0.0)


def l2e_objective(data: MaskedTensor, L, eta: float, lam: float = 0.0) -> float:
    """Masked L2 criterion plus ridge penalty, evaluated at a full tensor ``L``."""
    L = np.asarray(L, dtype=float)
    if L.shape != data.shape:
        raise ValueError(f"L has shape {L.shape}, data has {data.shape}")
    if lam < 0:
        raise ValueError("ridge weight must be nonnegative")
    tau = math.exp(eta)
    R = _residual(data, L)
    E = np.exp(-0.5 * tau**2 * R * R)
    s = float(np.sum(E, where=data.mask))
    return (data.n_observed * tau * INV_2_SQRT_PI - SQRT_2_OVER_PI * tau * s
            + 0.5 * lam * float(np.sum(L * L)))


def _value_and_grad(data: MaskedTensor, core, factors, eta, lam):
    L = multi_mode_product(core, factors)
    tau = math.exp(eta)
    R = _residual(data, L)
    R2 = R * R
    E = np.where(data.mask, np.exp(-0.5 * tau**2 * R2), 0.0)
    sE = float(E.sum())
    nW = data.n_observed
    f = nW * tau * INV_2_SQRT_PI - SQRT_2_OVER_PI * tau * sE + 0.5 * lam * float(np.sum(L * L))

    B = -SQRT_2_OVER_PI * tau**3 * E * R
    if lam:
        B = B + lam * L
    dA = []
    dG = None
    for n, A in enumerate(factors):
        # B projected on every factor but the n-th
        P = multi_mode_product(B, factors, transpose=True, skip=n)
        dA.append(unfold(P, n) @ unfold(core, n).T)
        if n == len(factors) - 1:
            dG = multi_mode_product(P, [A], modes=[n], transpose=True)
    d_eta = tau * (nW * INV_2_SQRT_PI + SQRT_2_OVER_PI * float(np.sum(E * (tau**2 * R2 - 1.0))))
    return f, dG, dA, d_eta


def l2e_gradient(data: MaskedTensor, model: L2EModel, lam: float = 0.0):
    """Analytic gradient of the objective with respect to core, factors and eta.

    Returns ``(dG, dA, d_eta)``: an array shaped like the core, a list of
    arrays shaped like the factors, and a float. ``model.factors`` is taken
    to be on the same scale as ``data``.
    """
    T = model.factors
    if T.shape != data.shape:
        raise ValueError(f"model shape {T.shape} differs from data shape {data.shape}")
    _, dG, dA, d_eta = _value_and_grad(data, T.core, T.factors, model.eta, lam)
    return dG, dA, d_eta


def packed_length(shape, rank) -> int:
    return int(np.prod(rank)) + sum(I * r for I, r in zip(shape, rank)) + 1


def pack(model: L2EModel) -> np.ndarray:
    """Flatten to ``[vec(G), vec(A_0), ..., vec(A_{N-1}), eta]``."""
    T = model.factors
    return np.concatenate([vec(T.core)] + [vec(A) for A in T.factors] + [[model.eta]])


def unpack(theta, shape, rank, scale: float = 1.0) -> L2EModel:
    """Inverse of :func:`pack` for a tensor of ``shape`` and Tucker ``rank``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    shape, rank = tuple(shape), tuple(rank)
    if theta.size != packed_length(shape, rank):
        raise ValueError(
            f"parameter vector has length {theta.size}, expected {packed_length(shape, rank)}"
        )
    core, factors, _ = _split(theta, shape, rank)
    return L2EModel(TuckerTensor(core, factors), float(theta[-1]), scale)


def _split(theta, shape, rank):
    k = int(np.prod(rank))
    core = theta[:k].reshape(rank, order="F")
    factors = []
    for I, r in zip(shape, rank):
        factors.append(theta[k:k + I * r].reshape((I, r), order="F"))
        k += I * r
    return core, factors, theta[k]


class TuckerL2EObjective:
    """Objective oracle over packed parameters, for use with :func:`minimize`."""

    def __init__(self, data: MaskedTensor, rank, lam: float = DEFAULT_LAMBDA):
        self.data = data
        self.shape = data.shape
        self.rank = tuple(rank)
        self.lam = lam
        self.size = packed_length(self.shape, self.rank)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.size:
            raise ValueError(f"expected {self.size} parameters, got {theta.size}")
        core, factors, eta = _split(theta, self.shape, self.rank)
        f, dG, dA, d_eta = _value_and_grad(self.data, core, factors, float(eta), self.lam)
        g = np.concatenate([vec(dG)] + [vec(D) for D in dA] + [[d_eta]])
        return f, g

    def bounds(self, eta_max: float) -> BoxBounds:
        upper = np.full(self.size, np.inf)
        upper[-1] = eta_max
        return BoxBounds(np.full(self.size, -np.inf), upper)

    def lower_bound(self, eta_max: float) -> float:
        """Infimum guarantee: no feasible point scores below this (for ``lam >= 0``)."""
        return self.data.n_observed * math.exp(eta_max) * ZERO_RESIDUAL_SLOPE


def mean_absolute_deviation(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.mean(np.abs(x - x.mean())))


def _check_rank(shape, rank):
    if len(rank) != len(shape):
        raise ValueError(f"rank {rank} has wrong length for a tensor of shape {shape}")
    for n, (r, I) in enumerate(zip(rank, shape)):
        if not 1 <= r <= I:
            raise ValueError(f"rank {r} out of range for mode {n + 1} of size {I}")


def fit(data: MaskedTensor, config: FitConfig, callback=None) -> L2EModel:
    """Fit a Tucker-L2E model.

    Observed entries are rescaled to MAD 0.1; missing entries are imputed with
    the observed mean only to compute the HOSVD/HOOI starting point. The
    bound-constrained quasi-Newton solver then minimizes the masked criterion
    from ``eta = config.eta0`` with ``eta <= config.eta_max``, and the core is
    scaled back so the returned factors reconstruct on the original scale.

    ``callback(theta, f)`` is forwarded to the solver (it sees the rescaled
    problem).
    """
    rank = config.rank
    _check_rank(data.shape, rank)
    s = mean_absolute_deviation(data.observed())
    if not s > 0:
        raise ValueError("observed entries are all identical (zero MAD); nothing to fit")

    scaled = MaskedTensor(np.where(data.mask, data.values / (10.0 * s), 0.0), data.mask)
    imputed = np.where(data.mask, scaled.values, scaled.observed().mean())
    if config.init == "hooi":
        T0 = hooi(imputed, HooiConfig(rank))
    else:
        T0 = hosvd(imputed, rank)

    objective = TuckerL2EObjective(scaled, rank, config.lam)
    theta0 = pack(L2EModel(T0, config.eta0))
    res = minimize(objective, theta0, objective.bounds(config.eta_max), config.solver, callback)

    model = unpack(res.x_star, data.shape, rank, scale=s)
    T = model.factors
    model.factors = TuckerTensor(10.0 * s * T.core, T.factors)
    model.eta = min(model.eta, config.eta_max)
    model.result = res
    return model


def predict(model: L2EModel) -> np.ndarray:
    """Low-rank estimate on the original data scale."""
    return tucker_to_full(model.factors)
