"""Limited-memory quasi-Newton maximization of smooth concave objectives."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class ObjectiveNaNError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    grad_tol: float = 1e-8
    max_iter: int = 500
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_linesearch: int = 40

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("line-search constants must satisfy 0 < c1 < c2 < 1")
        if self.memory < 1 or self.max_iter < 0:
            raise ValueError("memory must be >= 1 and max_iter >= 0")


@dataclass
class OptimizeReport:
    iterations: int
    objective: float
    grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)
    message: str = ""


def _evaluate(fun, x):
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ObjectiveNaNError("objective or gradient is not finite")
    return f, g


def _cubic_min(a, fa, da, b, fb, db):
    """Maximizer of the cubic interpolating (value, slope) at ``a`` and ``b``."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _wolfe_ok(fa, da, f0, d0, a, cfg):
    if abs(da) > cfg.c2 * abs(d0):
        return False
    if fa >= f0 + cfg.c1 * a * d0:
        return True
    # approximate Wolfe: the increase is lost in rounding but the slope shows progress
    noise = 1e-12 * (1.0 + abs(f0))
    return abs(fa - f0) <= noise and da <= (1.0 - 2.0 * cfg.c1) * d0


def _zoom(phi, lo, hi, f0, d0, cfg):
    """Shrink the bracket ``[lo, hi]`` until a strong Wolfe point is found."""
    a_lo, f_lo, d_lo = lo
    a_hi, f_hi, d_hi = hi
    for _ in range(cfg.max_linesearch):
        width = a_hi - a_lo
        a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        left, right = sorted((a_lo + 0.1 * width, a_hi - 0.1 * width))
        if a is None or not left <= a <= right:
            a = 0.5 * (a_lo + a_hi)
        fa, da, x, g = phi(a)
        if _wolfe_ok(fa, da, f0, d0, a, cfg):
            return a, fa, x, g
        if fa < f0 + cfg.c1 * a * d0 or fa <= f_lo:
            a_hi, f_hi, d_hi = a, fa, da
        else:
            if da * (a_hi - a_lo) <= 0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo = a, fa, da
        if abs(a_hi - a_lo) <= 1e-14 * max(1.0, abs(a_lo)):
            break
    return None


def _line_search(fun, x, f, g, p, cfg):
    """Strong Wolfe line search for ascent along direction ``p``."""
    d0 = float(g @ p)
    cache = {}

    def phi(a):
        if a not in cache:
            xa = x + a * p
            fa, ga = _evaluate(fun, xa)
            cache[a] = (fa, float(ga @ p), xa, ga)
        return cache[a]

    a_prev, f_prev, d_prev = 0.0, f, d0
    a = 1.0
    res = None
    for i in range(cfg.max_linesearch):
        fa, da, xa, ga = phi(a)
        if _wolfe_ok(fa, da, f, d0, a, cfg):
            return a, fa, xa, ga
        if fa < f + cfg.c1 * a * d0 or (i > 0 and fa <= f_prev):
            res = _zoom(phi, (a_prev, f_prev, d_prev), (a, fa, da), f, d0, cfg)
            break
        if da <= 0:
            res = _zoom(phi, (a, fa, da), (a_prev, f_prev, d_prev), f, d0, cfg)
            break
        a_prev, f_prev, d_prev = a, fa, da
        a *= 2.0
    if res is not None:
        return res
    # fall back to the best strictly improving point seen, if any
    ok = [(fa, a) for a, (fa, _, _, _) in cache.items() if fa > f]
    if ok:
        _, a = max(ok)
        fa, _, xa, ga = cache[a]
        return a, fa, xa, ga
    return None


def maximize(fun, x0, cfg=None):
    """Maximize a smooth concave function with L-BFGS and a strong Wolfe line search.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (value, gradient)`` on flat float vectors.
    x0 : array_like
        Starting point (warm starts are welcome).
    cfg : OptimizerConfig, optional

    Returns
    -------
    x : ndarray
        Best iterate.
    report : OptimizeReport
        ``converged`` is True once ``||grad|| <= grad_tol * (1 + |f|)``.
        The test is relative, so on an objective unbounded above it fires
        once ``|f|`` is large enough.  A failed line search stops early with
        ``converged=False``.

    Raises
    ------
    ObjectiveNaNError
        If the objective or its gradient is not finite.
    """
    cfg = cfg or OptimizerConfig()
    x = np.array(x0, dtype=float).ravel()
    f, g = _evaluate(fun, x)
    trace = [f]
    S, Y = deque(maxlen=cfg.memory), deque(maxlen=cfg.memory)
    message = "max_iter reached"
    converged = False
    it = 0
    for it in range(cfg.max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.grad_tol * (1.0 + abs(f)):
            converged, message = True, "gradient tolerance reached"
            break
        if it == cfg.max_iter:
            break
        # two-loop recursion on the convex problem -f
        q = -g
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q = q - a * y
        if S:
            q = q * (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        else:
            q = q / max(gnorm, 1.0)
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = (y @ q) / (y @ s)
            q = q + (a - b) * s
        p = -q
        if g @ p <= 0:
            S.clear()
            Y.clear()
            p = g / max(gnorm, 1.0)
        step = _line_search(fun, x, f, g, p, cfg)
        if step is None:
            message = "line search failed"
            break
        _, f_new, x_new, g_new = step
        s, y = x_new - x, g - g_new
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, g = x_new, f_new, g_new
        trace.append(f)
    return x, OptimizeReport(
        iterations=it,
        objective=f,
        grad_norm=float(np.linalg.norm(g)),
        converged=converged,
        trace=trace,
        message=message,
    )
