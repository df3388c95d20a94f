"""Limited-memory quasi-Newton minimization under box constraints (L-BFGS-B).

The curvature model is kept in compact form ``B = theta*I - W M W^T`` with
``W = [Y, theta*S]``. Each iteration

1. finds the generalized Cauchy point along the projected steepest-descent
   path by walking its breakpoints,
2. minimizes the quadratic model over the variables left free there,
3. line-searches from the current point toward that minimizer under the
   strong Wolfe conditions.

The objective is supplied as an *oracle*: a callable ``x -> (f, g)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILURE = "line_search_failure"

#: relative rise in f accepted when the slope certifies descent (rounding noise)
ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, n: int) -> "BoxBounds":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class SolverConfig:
    memory: int = 10
    max_iters: int = 1000
    grad_tolerance: float = 1e-8
    f_tolerance: float = 1e-12
    max_line_search_steps: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    curvature_eps: float = 1e-10

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if min(self.grad_tolerance, self.f_tolerance) < 0:
            raise ValueError("tolerances must be nonnegative")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class SolveResult:
    x_star: np.ndarray
    f_star: float
    g_star: np.ndarray
    projected_grad_norm: float
    iterations: int
    status: str
    n_evals: int = 0
    f_history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def projected_gradient(x, g, bounds: BoxBounds):
    return bounds.project(x - g) - x


def finite_difference_gradient(oracle, x, h: float = 1e-6):
    """Central-difference gradient ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    ``oracle`` may return either ``f`` or ``(f, g)``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = _value(oracle(xp)), _value(oracle(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective near coordinate {i}")
        grad[i] = (fp - fm) / (2 * h)
    return grad


def _value(out):
    return float(out[0]) if isinstance(out, tuple) else float(out)


class _Memory:
    """Curvature pairs and the compact-form matrices derived from them."""

    def __init__(self, n, m):
        self.n, self.m = n, m
        self.S, self.Y = [], []
        self.theta = 1.0
        self._refresh()

    def __len__(self):
        return len(self.S)

    def clear(self):
        self.S, self.Y = [], []
        self.theta = 1.0
        self._refresh()

    def push(self, s, y):
        if len(self.S) == self.m:
            self.S.pop(0)
            self.Y.pop(0)
        self.S.append(s)
        self.Y.append(y)
        self.theta = float(y @ y) / float(s @ y)
        self._refresh()

    def _refresh(self):
        k = len(self.S)
        if k == 0:
            self.W = np.zeros((self.n, 0))
            self.M = np.zeros((0, 0))
            return
        S = np.column_stack(self.S)
        Y = np.column_stack(self.Y)
        SY = S.T @ Y
        D = np.diag(np.diag(SY))
        L = np.tril(SY, -1)
        K = np.block([[-D, L.T], [L, self.theta * (S.T @ S)]])
        self.W = np.hstack([Y, self.theta * S])
        self.M = np.linalg.inv(K)


def _cauchy_point(x, g, lower, upper, mem: _Memory):
    """Generalized Cauchy point and the vector ``c = W^T (xcp - x)``."""
    n = x.size
    theta, W, M = mem.theta, mem.W, mem.M
    t = np.full(n, np.inf)
    neg, pos = g < 0, g > 0
    t[neg] = (x[neg] - upper[neg]) / g[neg]
    t[pos] = (x[pos] - lower[pos]) / g[pos]
    d = np.where(t > 0, -g, 0.0)

    xcp = x.copy()
    p = W.T @ d
    c = np.zeros(W.shape[1])
    fp = -float(d @ d)
    if fp >= 0:
        return xcp, c
    fpp = -theta * fp - float(p @ (M @ p))
    dt_min = -fp / fpp if fpp > 0 else np.inf

    order = [i for i in np.argsort(t) if 0 < t[i] < np.inf]
    fixed = np.zeros(n, dtype=bool)
    t_old = 0.0
    for b in order:
        dt = t[b] - t_old
        if dt_min < dt:
            break
        xcp[b] = upper[b] if d[b] > 0 else lower[b]
        zb = xcp[b] - x[b]
        c = c + dt * p
        gb, wb = g[b], W[b]
        Mc, Mp, Mw = M @ c, M @ p, M @ wb
        fp = fp + dt * fpp + gb * gb + theta * gb * zb - gb * float(wb @ Mc)
        fpp = fpp - theta * gb * gb - 2.0 * gb * float(wb @ Mp) - gb * gb * float(wb @ Mw)
        p = p + gb * wb
        d[b] = 0.0
        fixed[b] = True
        t_old = t[b]
        if fp >= 0:
            dt_min = 0.0
            break
        dt_min = -fp / fpp if fpp > 0 else np.inf
    else:
        if not np.isfinite(dt_min):
            # model unbounded below along the remaining path; stop at the last breakpoint
            dt_min = 0.0

    dt_min = max(dt_min, 0.0)
    t_old += dt_min
    free = ~fixed
    xcp[free] = x[free] + t_old * d[free]
    xcp = np.clip(xcp, lower, upper)
    c = c + dt_min * p
    return xcp, c


def _subspace_min(x, g, lower, upper, xcp, c, mem: _Memory):
    """Minimize the quadratic model over variables free at the Cauchy point."""
    free = (xcp > lower) & (xcp < upper)
    if not np.any(free):
        return xcp
    theta, W, M = mem.theta, mem.W, mem.M
    r = g + theta * (xcp - x)
    if W.shape[1]:
        r = r - W @ (M @ c)
    rz = r[free]
    if W.shape[1]:
        WZ = W[free]
        v = M @ (WZ.T @ rz)
        N = np.eye(W.shape[1]) - (M @ (WZ.T @ WZ)) / theta
        v = np.linalg.solve(N, v)
        dz = -rz / theta - (WZ @ v) / theta**2
    else:
        dz = -rz / theta

    xbar = xcp.copy()
    xbar[free] += dz
    projected = np.clip(xbar, lower, upper)
    if float((projected - x) @ g) < 0:
        return projected
    # fall back to the longest feasible step along the subspace direction
    alpha = 1.0
    zl, zu = lower[free] - xcp[free], upper[free] - xcp[free]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dz > 0, zu / dz, np.where(dz < 0, zl / dz, np.inf))
    alpha = min(1.0, float(np.min(ratios)))
    xbar = xcp.copy()
    xbar[free] += alpha * dz
    xbar = np.clip(xbar, lower, upper)
    if float((xbar - x) @ g) < 0:
        return xbar
    return xcp


def _max_step(x, d, lower, upper):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(d > 0, (upper - x) / d, np.where(d < 0, (lower - x) / d, np.inf))
    return float(np.min(r)) if r.size else np.inf


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb)."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


class _LineSearch:
    """Strong-Wolfe search on ``phi(a) = f(x + a d)`` (bracketing + cubic zoom)."""

    def __init__(self, evaluate, x, d, f0, g0, lower, upper, cfg: SolverConfig):
        self.evaluate = evaluate
        self.x, self.d = x, d
        self.lower, self.upper = lower, upper
        self.f0 = f0
        self.dphi0 = float(g0 @ d)
        self.cfg = cfg
        self.evals = 0
        self.best = None  # (a, f, g, xa) with sufficient decrease

    def phi(self, a):
        self.evals += 1
        xa = np.clip(self.x + a * self.d, self.lower, self.upper)
        f, g = self.evaluate(xa)
        dphi = float(g @ self.d) if np.isfinite(f) else np.nan
        return f, g, dphi, xa

    def armijo(self, a, f, dphi):
        if not np.isfinite(f):
            return False
        if f <= self.f0 + self.cfg.c1 * a * self.dphi0:
            return True
        # approximate-Wolfe test: trusts the slope once f differences drown in rounding
        # the slope bound implies a decrease exactly on quadratics, so a rise
        # of rounding size in the computed value is tolerated
        return (f <= self.f0 + ROUNDING_SLACK * abs(self.f0)
                and dphi <= (2 * self.cfg.c1 - 1) * self.dphi0)

    def rounding(self, f, f_ref):
        # f differences this small carry no information; slopes decide instead
        return abs(f - f_ref) <= 1e-10 * abs(self.f0)

    def curvature(self, dphi):
        return abs(dphi) <= -self.cfg.c2 * self.dphi0

    def _note(self, a, f, g, dphi, xa):
        if self.armijo(a, f, dphi) and (self.best is None or f < self.best[1]):
            self.best = (a, f, g, xa)

    def run(self, a_init, a_max):
        cfg = self.cfg
        a_prev, f_prev, dphi_prev = 0.0, self.f0, self.dphi0
        a = min(a_init, a_max)
        first = True
        while self.evals < cfg.max_line_search_steps:
            f, g, dphi, xa = self.phi(a)
            if not np.isfinite(f):
                a = a_prev + 0.1 * (a - a_prev)
                continue
            self._note(a, f, g, dphi, xa)
            if self.rounding(f, self.f0) and dphi < 0 and not (
                    self.armijo(a, f, dphi) and self.curvature(dphi)):
                pass  # still descending by slope; keep extrapolating
            elif not self.armijo(a, f, dphi) or (not first and f > f_prev):
                return self.zoom(a_prev, f_prev, dphi_prev, a, f, dphi)
            elif self.curvature(dphi):
                return a, f, g, xa
            if dphi >= 0:
                return self.zoom(a, f, dphi, a_prev, f_prev, dphi_prev)
            if a >= a_max:
                return (a, f, g, xa) if self.armijo(a, f, dphi) else self.best
            grow = 1.1
            if self.rounding(f, f_prev) and dphi_prev < dphi < 0:
                trial = a - dphi * (a - a_prev) / (dphi - dphi_prev)  # secant on the slope
                grow = 0.1
            else:
                trial = _cubic_min(a_prev, f_prev, dphi_prev, a, f, dphi)
            lo, hi = a + grow * (a - a_prev), min(a + 4.0 * (a - a_prev), a_max)
            if hi <= lo:
                nxt = hi
            elif trial is None or not np.isfinite(trial):
                nxt = hi
            else:
                nxt = min(max(trial, lo), hi)
            a_prev, f_prev, dphi_prev = a, f, dphi
            a = nxt
            first = False
        return self.best

    @staticmethod
    def _quadratic(a_lo, f_lo, d_lo, a_hi, f_hi):
        if not np.isfinite(f_hi):
            return None
        h = a_hi - a_lo
        curv = f_hi - f_lo - d_lo * h
        if curv <= 0:
            return None
        return a_lo - d_lo * h * h / (2.0 * curv)

    def zoom(self, a_lo, f_lo, d_lo, a_hi, f_hi, d_hi):
        while self.evals < self.cfg.max_line_search_steps:
            width = a_hi - a_lo
            trial = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                trial = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            left, right = sorted((a_lo + 0.1 * width, a_hi - 0.1 * width))
            if self.rounding(f_hi, f_lo) and d_lo * d_hi < 0:
                trial = a_lo - d_lo * width / (d_hi - d_lo)  # secant on the slope
            if trial is None or not np.isfinite(trial):
                trial = self._quadratic(a_lo, f_lo, d_lo, a_hi, f_hi)
            if trial is None or not np.isfinite(trial):
                trial = a_lo + 0.5 * width
            a = min(max(trial, left), right)
            f, g, dphi, xa = self.phi(a)
            if not np.isfinite(f):
                a_hi, f_hi, d_hi = a, np.inf, np.nan
                continue
            self._note(a, f, g, dphi, xa)
            if self.armijo(a, f, dphi) and self.curvature(dphi):
                return a, f, g, xa
            if self.rounding(f, f_lo):
                # values tie within rounding: the slope says which side of the minimizer a is on
                if dphi * (a_hi - a_lo) < 0:
                    a_lo, f_lo, d_lo = a, f, dphi
                else:
                    a_hi, f_hi, d_hi = a, f, dphi
            elif not self.armijo(a, f, dphi) or f > f_lo:
                a_hi, f_hi, d_hi = a, f, dphi
            else:
                if self.curvature(dphi):
                    return a, f, g, xa
                if dphi * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, d_lo = a, f, dphi
            if abs(a_hi - a_lo) <= 1e-16 * max(1.0, abs(a_lo)):
                break
        return self.best


def minimize(oracle, x0, bounds: BoxBounds | None = None,
             config: SolverConfig | None = None, callback=None) -> SolveResult:
    """Minimize ``oracle`` from ``x0`` subject to ``bounds``.

    Parameters
    ----------
    oracle : callable
        Maps a parameter vector to ``(value, gradient)``.
    x0 : array_like
        Starting point; clamped into the box if outside it.
    bounds : BoxBounds, optional
        Defaults to no bounds.
    config : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(x, f)`` after every accepted step.

    Returns
    -------
    SolveResult
        ``status`` is ``"converged"`` (projected-gradient or relative
        objective-change test met), ``"max_iters"`` or
        ``"line_search_failure"``. ``x_star`` is always feasible.

    Raises
    ------
    FloatingPointError
        If the oracle is not finite at the starting point.
    """
    cfg = config or SolverConfig()
    x = np.array(x0, dtype=float).reshape(-1)
    n = x.size
    bounds = bounds or BoxBounds.unbounded(n)
    if bounds.lower.size != n:
        raise ValueError("bounds do not match the parameter length")
    lower, upper = bounds.lower, bounds.upper
    x = bounds.project(x)

    n_evals = 0

    def evaluate(z):
        nonlocal n_evals
        n_evals += 1
        f, g = oracle(z)
        return float(f), np.asarray(g, dtype=float).reshape(-1)

    f, g = evaluate(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective or gradient is not finite at the starting point")
    if g.size != n:
        raise ValueError(f"gradient has length {g.size}, expected {n}")

    mem = _Memory(n, cfg.memory)
    history = [f]
    status = MAX_ITERS
    pg_norm = float(np.max(np.abs(projected_gradient(x, g, bounds)), initial=0.0))
    it = 0
    if pg_norm <= cfg.grad_tolerance:
        status = CONVERGED

    fresh = True  # memory is empty: the next step is a scaled steepest-descent step
    while status != CONVERGED and it < cfg.max_iters:
        step = _iterate(evaluate, x, f, g, lower, upper, mem, cfg, fresh)
        if step is None and not fresh:
            log.debug("line search failed at iteration %d; resetting memory", it)
            mem.clear()
            fresh = True
            step = _iterate(evaluate, x, f, g, lower, upper, mem, cfg, fresh)
        if step is None:
            status = LINE_SEARCH_FAILURE
            break
        x_new, f_new, g_new = step
        it += 1
        s, y = x_new - x, g_new - g
        if not np.all(np.isfinite(g_new)):
            raise FloatingPointError("gradient is not finite at an accepted point")
        sy = float(s @ y)
        if sy > cfg.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
            mem.push(s, y)
        f_old = f
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if callback is not None:
            callback(x, f)
        pg_norm = float(np.max(np.abs(projected_gradient(x, g, bounds)), initial=0.0))
        stalled = (cfg.f_tolerance > 0
                   and f_old - f <= cfg.f_tolerance * max(abs(f_old), abs(f), 1.0))
        if pg_norm <= cfg.grad_tolerance or (stalled and fresh):
            status = CONVERGED
        elif stalled:
            # a stall under a stale curvature model gets one steepest-descent retry
            log.debug("stalled at iteration %d; resetting memory", it)
            mem.clear()
        fresh = len(mem) == 0

    return SolveResult(x, f, g, pg_norm, it, status, n_evals, history)


def _iterate(evaluate, x, f, g, lower, upper, mem, cfg, fresh):
    xcp, c = _cauchy_point(x, g, lower, upper, mem)
    xbar = _subspace_min(x, g, lower, upper, xcp, c, mem) if len(mem) else xcp
    d = xbar - x
    if not float(g @ d) < 0:
        return None
    a_max = _max_step(x, d, lower, upper)
    a_max = min(a_max, 1e10)
    if fresh:
        a_init = min(1.0 / max(np.linalg.norm(d), 1e-300), a_max)
    else:
        a_init = 1.0
    ls = _LineSearch(evaluate, x, d, f, g, lower, upper, cfg)
    out = ls.run(a_init, a_max)
    if out is None:
        return None
    _, f_new, g_new, x_new = out
    if not f_new <= f + ROUNDING_SLACK * abs(f):
        return None
    return x_new, f_new, g_new
