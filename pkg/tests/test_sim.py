import csv
import io

import numpy as np
import pytest

from tuckerl2e.sim import (CSV_COLUMNS, Condition, CorruptionSpec, count_of, corrupt,
                           generate_low_rank, relative_error, replicate_seed, run_grid,
                           run_misspec_sweep, write_csv)
from tuckerl2e.tensor import unfold, vec


def numerical_rank(M):
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > 1e-10 * s[0]))


def test_tucker_full_rank_matricizations():
    L, truth = generate_low_rank("tucker", (4, 5, 6), (4, 5, 6), seed=0)
    assert [numerical_rank(unfold(L, n)) for n in range(3)] == [4, 5, 6]
    assert truth.rank == (4, 5, 6)


def test_tucker_factors_orthonormal_rank():
    L, _ = generate_low_rank("tucker", (8, 9, 10), 3, seed=1)
    assert [numerical_rank(unfold(L, n)) for n in range(3)] == [3, 3, 3]


@pytest.mark.parametrize("r", [1, 2, 4])
def test_cp_matricization_ranks_bounded(r):
    L, truth = generate_low_rank("cp", (7, 8, 9), r, seed=r)
    assert all(numerical_rank(unfold(L, n)) <= r for n in range(3))
    assert truth.rank == r


def test_generation_deterministic():
    a, _ = generate_low_rank("tucker", (5, 5, 5), 2, seed=11)
    b, _ = generate_low_rank("tucker", (5, 5, 5), 2, seed=11)
    c, _ = generate_low_rank("tucker", (5, 5, 5), 2, seed=12)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_generation_errors():
    with pytest.raises(ValueError):
        generate_low_rank("tucker", (3, 3), (4, 1), 0)
    with pytest.raises(ValueError):
        generate_low_rank("svd", (3, 3), 1, 0)


def test_no_corruption_is_identity():
    L, truth = generate_low_rank("cp", (4, 4, 4), 2, seed=0)
    data, gt = corrupt(truth, CorruptionSpec())
    assert np.array_equal(data.values, L) and data.mask.all()
    assert gt.outliers.size == 0 and gt.missing.size == 0


def test_dense_noise_ratio_exact():
    L, truth = generate_low_rank("tucker", (6, 7, 8), 2, seed=3)
    data, gt = corrupt(truth, CorruptionSpec(0.1, dense_noise=True, noise_ratio=0.1, seed=4))
    E = data.values - L - gt.S
    assert abs(np.linalg.norm(E) / np.linalg.norm(L) - 0.1) < 1e-12


def test_outlier_count_and_bookkeeping():
    L, truth = generate_low_rank("cp", (10, 10, 10), 3, seed=5)
    data, gt = corrupt(truth, CorruptionSpec(0.25, 5.0, missing_fraction=0.2, seed=6))
    assert gt.outliers.size == 250 and gt.missing.size == 200
    assert data.n_observed == 800
    # sample standard deviation, two-pass
    v = vec(L)
    M = 5.0 * np.sqrt(np.sum((v - v.mean()) ** 2) / (v.size - 1))
    assert np.all(np.abs(gt.outlier_values) <= M)
    # observed non-outlier entries untouched
    clean = np.ones(L.size, bool)
    clean[gt.outliers] = False
    obs = vec(data.mask)
    assert np.array_equal(vec(data.values)[clean & obs], v[clean & obs])
    assert np.all(np.isnan(vec(data.values)[~obs]))
    np.testing.assert_allclose(vec(data.values)[obs], (v + vec(gt.S))[obs])


def test_count_rounding():
    assert count_of(0.25, 1000) == 250
    assert count_of(0.5, 3) == 2
    assert count_of(0.1, 27000) == 2700


def test_corruption_errors():
    with pytest.raises(ValueError):
        CorruptionSpec(outlier_fraction=1.5)
    with pytest.raises(ValueError):
        CorruptionSpec(missing_fraction=1.0)
    with pytest.raises(ValueError):
        corrupt(np.ones(3), CorruptionSpec(missing_fraction=0.9))


def test_relative_error():
    L = np.arange(1.0, 7.0).reshape(2, 3)
    assert relative_error(L, L) == 0.0
    assert relative_error(np.zeros_like(L), L) == 1.0
    assert relative_error(2 * L, L) == 1.0
    with pytest.raises(ValueError):
        relative_error(L, np.zeros_like(L))
    with pytest.raises(ValueError):
        relative_error(L, L.T)


def test_replicate_seeds_depend_on_data_fields_only():
    c1 = Condition("cp", (5, 5, 5), 2, (2, 2, 2), 0.1)
    c2 = Condition("cp", (5, 5, 5), 2, (3, 3, 3), 0.1)
    c3 = Condition("cp", (5, 5, 5), 2, (2, 2, 2), 0.2)
    assert replicate_seed(0, c1, 0) == replicate_seed(0, c2, 0)
    assert len({replicate_seed(0, c1, 0), replicate_seed(0, c1, 1), replicate_seed(0, c3, 0),
                replicate_seed(1, c1, 0)}) == 4


def test_single_condition_grid_and_csv():
    rows = run_grid([Condition("tucker", (6, 6, 6), (2, 2, 2), (2, 2, 2), 0.1, 0.1)],
                    replicates=1, seed=3)
    assert len(rows) == 1 and rows[0]["relative_error"] < 0.05
    text = write_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert tuple(parsed[0].keys()) == CSV_COLUMNS and len(parsed) == 1
    assert float(parsed[0]["relative_error"]) == rows[0]["relative_error"]


def test_grid_deterministic_and_parallel_order():
    conds = [Condition("cp", (6, 6, 6), 2, (r, r, r), 0.1) for r in (1, 2)]
    a = run_grid(conds, replicates=2, seed=9)
    b = run_grid(conds, replicates=2, seed=9, n_jobs=2)
    keys = ("fit_rank", "replicate", "seed", "relative_error", "eta_star", "status")
    assert [tuple(r[k] for k in keys) for r in a] == [tuple(r[k] for k in keys) for r in b]
    # same data for both fit ranks within a replicate
    assert a[0]["seed"] == a[2]["seed"]


def test_failed_fit_recorded_not_raised():
    rows = run_grid([Condition("cp", (3, 3, 3), 1, (4, 1, 1), 0.0)], replicates=1)
    assert rows[0]["status"].startswith("error") and np.isnan(rows[0]["relative_error"])


def test_misspec_sweep_shape():
    rows = run_misspec_sweep("cp", (6, 6, 6), 2, [1, 2, 3], replicates=2)
    assert len(rows) == 6
    assert [r["fit_rank"] for r in rows[::2]] == ["1,1,1", "2,2,2", "3,3,3"]
