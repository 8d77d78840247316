"""Globally adaptive, vectorized Gauss-Legendre quadrature.

Each interval carries a 15-point rule on the whole interval and on both
halves; the error estimate is the difference.  All intervals flagged for
refinement in a round are evaluated in a single call of the integrand, so
integrands only need to accept 1-D arrays.  Integrands may be complex.

``adaptive_quad_batch`` refines many independent integrals at once; the
integrand then receives the nodes together with the index of the problem each
node belongs to.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

_ORDER = 15
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(_ORDER)
_TINY = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class QuadResult:
    value: complex | float
    error: float
    intervals: int


def _evaluate(func, a, b, pid):
    m = 0.5 * (a + b)
    # one integrand call for the whole interval and both halves
    lo = np.concatenate([a, a, m])
    hi = np.concatenate([b, m, b])
    half = 0.5 * (hi - lo)
    x = 0.5 * (lo + hi)[:, None] + half[:, None] * _NODES[None, :]
    k = np.repeat(np.tile(pid, 3), _ORDER)
    fx = np.asarray(func(x.ravel(), k)).reshape(x.shape)
    vals = half * (fx @ _WEIGHTS)
    n = a.size
    whole, left, right = vals[:n], vals[n:2 * n], vals[2 * n:]
    return left + right, np.abs(whole - (left + right))


def _group_sum(pid, values, n):
    if np.iscomplexobj(values):
        return np.bincount(pid, values.real, n) + 1j * np.bincount(pid, values.imag, n)
    return np.bincount(pid, values, n)


def adaptive_quad_batch(func, a, b, *, breakpoints=None, abs_tol=1e-10, rel_tol: float = 1e-10,
                        max_intervals: int = 4000) -> list[QuadResult]:
    """Integrate ``func(x, k)`` over [a[k], b[k]] for every problem k.

    ``abs_tol`` may be a scalar or one value per problem; ``breakpoints`` is an
    optional list with one sequence of interior points per problem.  Raises
    NumericalError when any problem exceeds ``max_intervals``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = a.size
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("adaptive quadrature needs finite intervals; map infinite ranges first")
    abs_tol = np.broadcast_to(np.asarray(abs_tol, dtype=float), (n,))
    sign = np.where(b < a, -1.0, 1.0)
    lo_end, hi_end = np.minimum(a, b), np.maximum(a, b)
    los, his, pids = [], [], []
    for k in range(n):
        if lo_end[k] == hi_end[k]:
            continue
        bp = breakpoints[k] if breakpoints is not None else ()
        pts = sorted({lo_end[k], hi_end[k], *[float(p) for p in bp if lo_end[k] < p < hi_end[k]]})
        los.extend(pts[:-1])
        his.extend(pts[1:])
        pids.extend([k] * (len(pts) - 1))
    lo, hi = np.array(los, dtype=float), np.array(his, dtype=float)
    pid = np.array(pids, dtype=np.int64)
    val, err = _evaluate(func, lo, hi, pid)
    done_val = np.zeros(n, dtype=val.dtype)
    done_err = np.zeros(n)
    while True:
        total = done_val + _group_sum(pid, val, n)
        total_err = done_err + np.bincount(pid, err, n)
        target = np.maximum(abs_tol, rel_tol * np.abs(total))
        active = total_err > target
        if not np.any(active):
            break
        counts = np.bincount(pid, minlength=n)
        if np.any(counts[active] > max_intervals):
            k = int(np.flatnonzero(active & (counts > max_intervals))[0])
            raise NumericalError("adaptive quadrature did not converge", achieved_error=float(total_err[k]),
                                 target=float(target[k]), intervals=int(counts[k]))
        # per problem, split the fewest intervals whose removal leaves at most half the target
        cand = np.flatnonzero(active[pid])
        order = cand[np.lexsort((-err[cand], pid[cand]))]
        g = pid[order]
        csum = np.cumsum(err[order])
        start = np.r_[True, g[1:] != g[:-1]]
        group_first = np.maximum.accumulate(np.where(start, np.arange(order.size), 0))
        before = csum - err[order] - np.where(group_first > 0, csum[group_first - 1], 0.0)
        tail = (total_err - done_err)[g] - before
        split = order[(tail > 0.5 * target[g]) | start]
        width = hi[split] - lo[split]
        tiny = width <= _TINY * np.maximum(np.abs(lo[split]), np.abs(hi[split]))
        if np.all(tiny):
            k = int(pid[split[0]])
            raise NumericalError("adaptive quadrature stalled at round-off level",
                                 achieved_error=float(total_err[k]), target=float(target[k]),
                                 intervals=int(counts[k]))
        # intervals too narrow to split are frozen into the running totals
        frozen = split[tiny]
        done_val += _group_sum(pid[frozen], val[frozen], n)
        done_err += np.bincount(pid[frozen], err[frozen], n)
        split = split[~tiny]
        keep = np.ones(lo.size, dtype=bool)
        keep[split] = False
        keep[frozen] = False
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        new_pid = np.concatenate([pid[split], pid[split]])
        nv, ne = _evaluate(func, new_lo, new_hi, new_pid)
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        pid = np.concatenate([pid[keep], new_pid])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])
    counts = np.bincount(pid, minlength=n)
    return [QuadResult(_real_if_close(sign[k] * total[k]), float(total_err[k]), int(counts[k]))
            for k in range(n)]


def adaptive_quad(func, a: float, b: float, *, breakpoints=(), abs_tol: float = 1e-10,
                  rel_tol: float = 1e-10, max_intervals: int = 4000) -> QuadResult:
    """Integrate ``func`` over the finite interval [a, b].

    Raises NumericalError reporting the achieved error estimate when the
    interval budget is exhausted before ``abs_tol`` or ``rel_tol`` is met.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("adaptive_quad needs a finite interval; map infinite ranges first")
    if a == b:
        return QuadResult(0.0, 0.0, 0)
    return adaptive_quad_batch(lambda x, k: func(x), [a], [b], breakpoints=[breakpoints],
                               abs_tol=abs_tol, rel_tol=rel_tol, max_intervals=max_intervals)[0]


def _real_if_close(v):
    if np.iscomplexobj(v):
        return complex(v)
    return float(v)


def _angle(x, center, width):
    return float(np.arctan((x - center) / width)) if np.isfinite(x) else float(np.sign(x)) * 0.5 * np.pi


def quad_mapped_batch(func, a, b, center, width=1.0, *, breakpoints=None, **kw) -> list[QuadResult]:
    """Batched ``quad_mapped``: ``func(x, k)`` over [a[k], b[k]] with per-problem centres."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    center = np.broadcast_to(np.asarray(center, dtype=float), a.shape)
    width = np.broadcast_to(np.asarray(width, dtype=float), a.shape)

    def mapped(theta, k):
        t = np.tan(theta)
        return func(center[k] + width[k] * t, k) * (width[k] * (1.0 + t * t))

    ta = [_angle(a[k], center[k], width[k]) for k in range(a.size)]
    tb = [_angle(b[k], center[k], width[k]) for k in range(a.size)]
    bp = None
    if breakpoints is not None:
        bp = [[_angle(p, center[k], width[k]) for p in breakpoints[k]
               if min(a[k], b[k]) < p < max(a[k], b[k])] for k in range(a.size)]
    return adaptive_quad_batch(mapped, ta, tb, breakpoints=bp, **kw)


def quad_mapped(func, a: float, b: float, center: float = 0.0, width: float = 1.0, *,
                breakpoints=(), **kw) -> QuadResult:
    """Integrate over [a, b] (either end may be infinite) via ``x = center + width * tan(theta)``.

    Choosing ``center`` at the feature of interest keeps it resolvable however
    far it sits from the origin.
    """
    ta, tb = _angle(a, center, width), _angle(b, center, width)
    if ta == tb:
        return QuadResult(0.0, 0.0, 0)

    def mapped(theta):
        t = np.tan(theta)
        return func(center + width * t) * (width * (1.0 + t * t))

    bp = [_angle(p, center, width) for p in breakpoints if min(a, b) < p < max(a, b)]
    return adaptive_quad(mapped, ta, tb, breakpoints=bp, **kw)


def quad_real_line(func, center: float = 0.0, width: float = 1.0, *, breakpoints=(), **kw) -> QuadResult:
    """Integrate over the whole real line."""
    return quad_mapped(func, -np.inf, np.inf, center, width, breakpoints=breakpoints, **kw)


def quad_half_line(func, start: float = 0.0, width: float = 1.0, *, breakpoints=(), **kw) -> QuadResult:
    """Integrate over [start, inf)."""
    return quad_mapped(func, start, np.inf, start, width, breakpoints=breakpoints, **kw)
