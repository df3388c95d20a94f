"""Choosing the Tucker rank by cross-validation.

Data: a CP-rank 3 tensor of size 20^3 with 25% outliers. Candidate ranks
(r, r, r) for r = 1..6 are scored by the mean absolute error on held-out
entries. Runs in about five seconds.
"""
from tuckerl2e import Condition, FitConfig, cross_validate, make_plan, replicate_data
from tuckerl2e import fit, predict, relative_error

cond = Condition("cp", (20, 20, 20), 3, (3, 3, 3), delta=0.25)
data, L = replicate_data(cond, replicate=0)

# every fit sees the same folds; only observed entries are held out
plan = make_plan(data, K=10, seed=0)
result = cross_validate(data, [(r, r, r) for r in range(1, 7)], plan, FitConfig((3, 3, 3)))

for rank, err in result.scores:
    print(rank, "cv error", round(err, 5))
print("selected rank:", result.best_rank)

# overshooting the rank costs little: compare the full-data fits
for r in (3, 6):
    model = fit(data, FitConfig((r, r, r)))
    print(f"rank {r} relative error", round(relative_error(predict(model), L), 4))
