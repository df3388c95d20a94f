"""Least squares versus the L2 criterion on a corrupted low-rank tensor.

Run with ``python demos/robust_recovery.py``. Takes a few seconds.
"""
import numpy as np

from tuckerl2e import (CorruptionSpec, FitConfig, HooiConfig, corrupt, fit, generate_low_rank,
                       hooi, predict, relative_error)

# a 30 x 30 x 30 tensor with Tucker rank (3, 3, 3)
L, truth = generate_low_rank("tucker", (30, 30, 30), 3, seed=1)
print("clean tensor:", L.shape, "std", round(float(L.std()), 4))

# 10% of entries get an additive outlier of 5 standard deviations,
# then 20% of entries are hidden
data, truth = corrupt(truth, CorruptionSpec(outlier_fraction=0.1, missing_fraction=0.2, seed=2))
print("observed entries:", data.n_observed, "of", data.mask.size)
print("outliers:", truth.outliers.size)

# least squares needs a complete tensor: fill the holes with the observed mean
filled = np.where(data.mask, data.values, data.observed().mean())
ls = hooi(filled, HooiConfig((3, 3, 3)))
print("HOOI relative error:       ", round(relative_error(ls.full(), L), 4))

# the robust fit only ever looks at observed entries
model = fit(data, FitConfig((3, 3, 3)))
print("Tucker-L2E relative error: ", round(relative_error(predict(model), L), 6))

# the fitted precision is reported on the rescaled data (MAD 0.1)
print("fitted tau:", round(float(np.exp(model.eta)), 2))

# large residuals on observed entries land only on outliers (small outliers hide in the bulk)
resid = np.abs(np.where(data.mask, data.values - predict(model), 0.0))
flagged = set(np.flatnonzero((resid > L.std()).reshape(-1, order="F")))
visible = set(truth.outliers) - set(truth.missing)
print("entries flagged:", len(flagged), "of which true outliers:", len(flagged & visible),
      "of", len(visible), "visible outliers")
