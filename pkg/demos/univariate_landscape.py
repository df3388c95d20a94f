"""How the precision controls what the L2 criterion treats as data.

A sample of 100 points: three quarters at 0, the rest uniform on [0, 10].
For every precision ``tau`` we minimize ``h(mu, tau)`` over a grid of
locations and watch where the minimizer goes.
"""
import numpy as np

from tuckerl2e import univariate_l2e

rng = np.random.default_rng(0)
xs = np.where(rng.random(100) < 0.75, 0.0, rng.uniform(0, 10, 100))
print("sample mean:", round(float(xs.mean()), 4))

grid = np.linspace(-1, 11, 2401)
for tau in (0.01, 0.05, 0.2, 0.5, 1.0, 2.0):
    h = np.array([univariate_l2e(xs, mu, tau) for mu in grid])
    print(f"tau {tau:5.2f}  argmin mu {grid[h.argmin()]:7.3f}  min h {h.min():9.5f}")

# small tau: the criterion is nearly quadratic in mu, so its minimizer is the mean.
# large tau: only the tight cluster at 0 matters and the uniform points are ignored.
