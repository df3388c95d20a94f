"""Synthetic low-rank tensors, corruption, recovery metrics and experiment drivers.

Data model: ``X = L + S + E`` observed on a random subset, where ``L`` is CP
or Tucker low rank, ``S`` holds sparse ``Unif[-M, M]`` outliers with
``M = mult * std(vec(L))`` and ``E`` is optional dense Gaussian noise scaled
to a fixed Frobenius ratio ``||E|| / ||L||``.

Outliers are *added* to the clean entries. Outlier and missing positions are
drawn independently, so an outlier may also be missing.
"""
from __future__ import annotations

import csv
import io
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .l2e import FitConfig, MaskedTensor, fit, predict
from .tensor import KruskalTensor, TuckerTensor, from_vec, kruskal_to_full, tucker_to_full, vec

MODELS = ("cp", "tucker")

CSV_COLUMNS = (
    "model", "dims", "true_rank", "fit_rank", "delta", "rho", "dense_noise",
    "replicate", "seed", "relative_error", "eta_star", "wall_ms", "status",
)


@dataclass(frozen=True)
class CorruptionSpec:
    outlier_fraction: float = 0.0
    outlier_magnitude_mult: float = 5.0
    dense_noise: bool = False
    noise_ratio: float = 0.1
    missing_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier fraction must lie in [0, 1]")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing fraction must lie in [0, 1)")
        if self.outlier_magnitude_mult < 0 or self.noise_ratio < 0:
            raise ValueError("magnitudes must be nonnegative")


@dataclass
class GroundTruth:
    """Clean tensor and corruption bookkeeping (linear indices, first index fastest)."""

    L: np.ndarray
    model: str | None = None
    rank: object = None
    outliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    outlier_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    missing: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    noise: np.ndarray | None = None

    @property
    def S(self) -> np.ndarray:
        s = np.zeros(self.L.size)
        s[self.outliers] = self.outlier_values
        return from_vec(s, self.L.shape)


def count_of(fraction: float, total: int) -> int:
    """Round-half-up conversion of a fraction to an entry count."""
    return int(np.floor(fraction * total + 0.5))


def generate_low_rank(model: str, dims, rank, seed=0):
    """Random low-rank tensor.

    ``cp``: unit weights and i.i.d. N(0, 1) factor entries; ``rank`` is an int.
    ``tucker``: i.i.d. N(0, 1) core and factors with orthonormal columns (QR of
    a Gaussian matrix, signs fixed so ``R`` has a positive diagonal); ``rank``
    is a tuple, or an int meaning the same rank in every mode.

    Returns ``(L, GroundTruth)``.
    """
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    if model == "cp":
        r = int(rank if np.isscalar(rank) else rank[0])
        if r < 1:
            raise ValueError("CP rank must be positive")
        K = KruskalTensor(np.ones(r), [rng.standard_normal((I, r)) for I in dims])
        L = kruskal_to_full(K)
        rank = r
    elif model == "tucker":
        rank = (int(rank),) * len(dims) if np.isscalar(rank) else tuple(int(r) for r in rank)
        if len(rank) != len(dims):
            raise ValueError("rank length differs from the number of modes")
        for n, (r, I) in enumerate(zip(rank, dims)):
            if not 1 <= r <= I:
                raise ValueError(f"rank {r} out of range for mode {n + 1} of size {I}")
        core = rng.standard_normal(rank)
        factors = []
        for I, r in zip(dims, rank):
            Q, R = np.linalg.qr(rng.standard_normal((I, r)))
            signs = np.sign(np.diag(R))
            signs[signs == 0] = 1.0
            factors.append(Q * signs)
        L = tucker_to_full(TuckerTensor(core, factors))
    else:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    return L, GroundTruth(L, model, rank)


def corrupt(truth, spec: CorruptionSpec):
    """Apply outliers, optional dense noise and missingness.

    ``truth`` is a clean tensor or a :class:`GroundTruth`. Returns
    ``(MaskedTensor, GroundTruth)``; missing entries hold ``nan``.
    """
    if not isinstance(truth, GroundTruth):
        truth = GroundTruth(np.asarray(truth, dtype=float))
    L = truth.L
    P = L.size
    n_out = count_of(spec.outlier_fraction, P)
    n_miss = count_of(spec.missing_fraction, P)
    if n_miss >= P:
        raise ValueError("no observed entries would remain")
    rng = np.random.default_rng(spec.seed)

    x = vec(L).copy()
    M = spec.outlier_magnitude_mult * float(np.std(L, ddof=1)) if P > 1 else 0.0
    outliers = np.sort(rng.choice(P, n_out, replace=False))
    values = rng.uniform(-M, M, n_out)
    x[outliers] += values

    noise = None
    if spec.dense_noise:
        E = rng.standard_normal(P)
        E *= spec.noise_ratio * np.linalg.norm(L) / np.linalg.norm(E)
        x += E
        noise = from_vec(E, L.shape)

    missing = np.sort(rng.choice(P, n_miss, replace=False))
    mask = np.ones(P, dtype=bool)
    mask[missing] = False
    x[missing] = np.nan

    gt = replace(truth, outliers=outliers, outlier_values=values, missing=missing, noise=noise)
    return MaskedTensor(from_vec(x, L.shape), from_vec(mask, L.shape).astype(bool)), gt


def relative_error(L_hat, L) -> float:
    L = np.asarray(L, dtype=float)
    L_hat = np.asarray(L_hat, dtype=float)
    if L_hat.shape != L.shape:
        raise ValueError(f"shape mismatch: {L_hat.shape} vs {L.shape}")
    denom = np.linalg.norm(L)
    if denom == 0:
        raise ValueError("ground truth is zero")
    return float(np.linalg.norm(L_hat - L) / denom)


@dataclass(frozen=True)
class Condition:
    """One grid cell: how the data are generated and which rank is fitted."""

    model: str
    dims: tuple
    true_rank: object
    fit_rank: tuple
    delta: float
    rho: float = 0.0
    dense_noise: bool = False

    def data_key(self) -> str:
        return f"{self.model}|{_fmt_tuple(self.dims)}|{_fmt_rank(self.true_rank)}|" \
               f"{self.delta!r}|{self.rho!r}|{int(self.dense_noise)}"


def _fmt_tuple(t) -> str:
    return "x".join(str(int(v)) for v in t)


def _fmt_rank(r) -> str:
    return str(int(r)) if np.isscalar(r) else ",".join(str(int(v)) for v in r)


def replicate_seed(master_seed: int, condition: Condition, replicate: int) -> int:
    """Data seed for one replicate; depends on the data-generating fields only."""
    key = zlib.crc32(condition.data_key().encode())
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(key, int(replicate)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def replicate_data(condition: Condition, replicate: int, master_seed: int = 0,
                   mult: float = 5.0, noise_ratio: float = 0.1):
    """Corrupted data and clean tensor ``(MaskedTensor, L)`` for one replicate.

    Conditions that differ only in the fitted rank share the same data.
    """
    seed = replicate_seed(master_seed, condition, replicate)
    gen_seed, corrupt_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint32)
    L, truth = generate_low_rank(condition.model, condition.dims, condition.true_rank,
                                 int(gen_seed))
    spec = CorruptionSpec(condition.delta, mult, condition.dense_noise, noise_ratio,
                          condition.rho, int(corrupt_seed))
    data, _ = corrupt(truth, spec)
    return data, L


def run_replicate(condition: Condition, replicate: int, master_seed: int = 0,
                  mult: float = 5.0, noise_ratio: float = 0.1,
                  fit_config: FitConfig | None = None) -> dict:
    seed = replicate_seed(master_seed, condition, replicate)
    row = {
        "model": condition.model,
        "dims": _fmt_tuple(condition.dims),
        "true_rank": _fmt_rank(condition.true_rank),
        "fit_rank": _fmt_rank(condition.fit_rank),
        "delta": condition.delta,
        "rho": condition.rho,
        "dense_noise": int(condition.dense_noise),
        "replicate": replicate,
        "seed": seed,
    }
    data, L = replicate_data(condition, replicate, master_seed, mult, noise_ratio)
    cfg = replace(fit_config or FitConfig(condition.fit_rank), rank=condition.fit_rank)
    t0 = time.perf_counter()
    try:
        model = fit(data, cfg)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        row.update(relative_error=np.nan, eta_star=np.nan,
                   wall_ms=1e3 * (time.perf_counter() - t0), status=f"error: {exc}")
        return row
    row.update(
        relative_error=relative_error(predict(model), L),
        eta_star=model.eta,
        wall_ms=1e3 * (time.perf_counter() - t0),
        status=model.result.status,
    )
    return row


def run_grid(conditions, replicates: int = 10, seed: int = 0, mult: float = 5.0,
             noise_ratio: float = 0.1, fit_config: FitConfig | None = None,
             n_jobs: int = 1) -> list:
    """One row per (condition, replicate), in canonical order.

    Relative errors above 1 are reported as is.
    """
    jobs = [(c, r) for c in conditions for r in range(replicates)]

    def run(c, r):
        return run_replicate(c, r, seed, mult, noise_ratio, fit_config)

    if n_jobs == 1:
        return [run(c, r) for c, r in jobs]
    from joblib import Parallel, delayed
    return list(Parallel(n_jobs=n_jobs)(delayed(run)(c, r) for c, r in jobs))


def _cube(rank, N):
    return (int(rank),) * N if np.isscalar(rank) else tuple(int(r) for r in rank)


def run_rank_sweep(model: str, dims, ranks, delta: float = 0.1, rho: float = 0.2,
                   dense_noise: bool = False, **kwargs) -> list:
    """Recovery versus rank, fitting at the true rank.

    For ``cp`` an int rank ``r`` is fitted with Tucker rank ``(r, ..., r)``.
    """
    dims = tuple(dims)
    conds = [Condition(model, dims, r, _cube(r, len(dims)), delta, rho, dense_noise)
             for r in ranks]
    return run_grid(conds, **kwargs)


def run_phase_grid(model: str, dims, ranks, deltas, rho: float = 0.0,
                   dense_noise: bool = False, **kwargs) -> list:
    """Rank by outlier-fraction grid at the true rank (phase-transition study)."""
    dims = tuple(dims)
    conds = [Condition(model, dims, r, _cube(r, len(dims)), d, rho, dense_noise)
             for r in ranks for d in deltas]
    return run_grid(conds, **kwargs)


def run_misspec_sweep(model: str, dims, true_rank, fit_ranks, delta: float = 0.25,
                      rho: float = 0.0, dense_noise: bool = False, **kwargs) -> list:
    """Fit under- and over-specified ranks to the same corrupted data."""
    dims = tuple(dims)
    conds = [Condition(model, dims, true_rank, _cube(r, len(dims)), delta, rho, dense_noise)
             for r in fit_ranks]
    return run_grid(conds, **kwargs)


def write_csv(rows, fh=None) -> str | None:
    """Write sweep rows with the :data:`CSV_COLUMNS` header.

    Writes to ``fh`` if given, otherwise returns the CSV text.
    """
    out = fh if fh is not None else io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return None if fh is not None else out.getvalue()
