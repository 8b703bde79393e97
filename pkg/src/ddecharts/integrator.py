"""Adaptive Dormand-Prince 5(4) integration for batches of scalar complex ODEs.

Each batch row is an independent initial-value problem dy/dp = f(p, y) that
starts at the same parameter value and is sampled, through a cubic-Hermite
continuous extension of the accepted steps, at a shared grid of output
nodes.  Rows carry their own adaptive step size, so one stiff or singular
row never slows or aborts the others; executing them as numpy-vectorized
lanes is purely an implementation detail and each row's arithmetic is
identical to running it alone.

A row terminates early when its gap function crosses below zero (the
rank-deficiency guard |dD/dlambda| - eps in the continuation use) or when
its state stops being finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Dormand-Prince 5(4) tableau.  The fifth-order solution is propagated and
# the first-same-as-last stage doubles as the error estimator's seventh node.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = (
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ORDER_EXP = -0.2  # error controller exponent, 1/(4+1)

# A stall (step size collapsing without a gap crossing) counts as a
# singular termination only when the gap is already nearly closed;
# otherwise the path is escaping (state or slope blowing up).
_STALL_SINGULAR_MARGIN = 1e-3

DONE = 0
SINGULAR = 1
NONFINITE = 2

#: system(p, y, rows) -> (dy/dp, gap).  ``rows`` carries the absolute batch
#: row index of each entry, so callbacks with per-row coefficients can
#: gather them after the integrator compacts away finished rows.
SystemFn = Callable[
    [np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]
]

#: project(p, y, rows) -> y adjusted back onto the invariant manifold.
ProjectFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class BatchResult:
    """Outcome of one batch integration toward a shared node grid."""

    values: np.ndarray        # (n_nodes, n_rows) complex; nan where uncovered
    covered: np.ndarray       # (n_nodes, n_rows) bool
    reason: np.ndarray        # (n_rows,) int8: DONE / SINGULAR / NONFINITE
    end_param: np.ndarray     # (n_rows,) parameter value where each row ended
    n_steps: int = 0
    n_rejected: int = 0

    def fully_covered(self) -> np.ndarray:
        return self.covered.all(axis=0)


def _hermite(theta, y0, y1, f0, f1, h_signed):
    """Cubic Hermite interpolant on one accepted step, theta in [0, 1]."""
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h01 = 1 - h00
    h10 = t3 - 2 * t2 + theta
    h11 = t3 - t2
    return h00 * y0 + h01 * y1 + h_signed * (h10 * f0 + h11 * f1)


def _initial_step(system: SystemFn, p0, y0, f0, s, rtol, atol, dist, rows):
    """Hairer-style starting step size, vectorized over rows."""
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        sc = atol + rtol * np.abs(y0)
        d0 = np.abs(y0) / sc
        d1 = np.abs(f0) / sc
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6,
                      0.01 * d0 / np.maximum(d1, 1e-300))
        h0 = np.minimum(h0, dist)
        y1 = y0 + s * h0 * f0
        f1, _ = system(np.full(y0.shape, p0) + s * h0, y1, rows)
        d2 = np.abs(f1 - f0) / sc / h0
        md = np.maximum(d1, d2)
        h1 = np.where(
            np.isfinite(md) & (md > 1e-15),
            (0.01 / np.maximum(md, 1e-300)) ** 0.2,
            np.maximum(1e-6, h0 * 1e-3),
        )
        h = np.minimum(100 * h0, np.minimum(h1, dist))
    return np.maximum(np.where(np.isfinite(h), h, 1e-6), 1e-300)


def _locate_gap_crossing(system, p_old, hs, y0, y1, f0, f1, row) -> float:
    """Bisect the step's Hermite extension for the gap sign change."""
    lo, hi = 0.0, 1.0
    rows = np.array([row])
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        ym = _hermite(mid, y0, y1, f0, f1, hs)
        _, gm = system(np.array([p_old + mid * hs]), np.array([ym]), rows)
        if gm[0] < 0.0:
            hi = mid
        else:
            lo = mid
    return p_old + 0.5 * (lo + hi) * hs


def integrate_batch(
    system: SystemFn,
    y0: np.ndarray,
    p0: float,
    nodes: np.ndarray,
    rtol: float,
    atol: float,
    max_step: float | None = None,
    max_steps_between_nodes: int = 1000,
    project: ProjectFn | None = None,
) -> BatchResult:
    """Integrate every row from ``p0`` through the shared ``nodes`` grid.

    ``nodes`` must be strictly monotone and lie strictly beyond ``p0`` in
    the direction of its last entry.  Output values at the nodes come from
    the continuous extension of whichever accepted step covers them; the
    final node is always hit exactly by a step landing on it.

    ``project``, when given, maps each trial endpoint back onto the
    problem's invariant manifold before the endpoint slope is evaluated.
    The projection displacement is far below the error-control scale, so
    step acceptance is unaffected, but drift transverse to the manifold
    no longer accumulates over long runs.

    A row that accepts ``max_steps_between_nodes`` steps without reaching
    its next output node is going nowhere (typically a root escaping
    logarithmically toward a puncture of its path) and is terminated the
    same way as a stalled step size.
    """
    y0 = np.ascontiguousarray(y0, dtype=complex)
    nodes = np.asarray(nodes, dtype=float)
    b = y0.size
    j = nodes.size
    if j == 0:
        return BatchResult(
            values=np.zeros((0, b), complex),
            covered=np.zeros((0, b), bool),
            reason=np.full(b, DONE, np.int8),
            end_param=np.full(b, float(p0)),
        )
    s = 1.0 if nodes[-1] > p0 else -1.0
    if not np.all(s * np.diff(nodes) > 0) or not s * (nodes[0] - p0) > 0:
        raise ValueError("nodes must be strictly monotone and beyond the start")
    p_end = float(nodes[-1])
    dist_total = abs(p_end - p0)
    hmax = dist_total if max_step is None else min(max_step, dist_total)

    values = np.full((j, b), np.nan + 0j)
    covered = np.zeros((j, b), bool)
    reason = np.full(b, DONE, np.int8)
    end_param = np.full(b, float(p0))

    all_rows = np.arange(b)
    p = np.full(b, float(p0))
    y = y0.copy()
    f, g = system(p, y, all_rows)
    f = np.asarray(f, complex)
    g = np.asarray(g, float)
    ptr = np.zeros(b, dtype=np.intp)
    alive = np.ones(b, bool)

    bad0 = ~np.isfinite(f) | ~np.isfinite(y)
    if bad0.any():
        alive[bad0] = False
        reason[bad0] = NONFINITE
    ev0 = alive & (g < 0.0)
    if ev0.any():
        alive[ev0] = False
        reason[ev0] = SINGULAR
    if not alive.any():
        return BatchResult(values, covered, reason, end_param)

    h = np.full(b, np.nan)
    a0 = np.flatnonzero(alive)
    h[a0] = _initial_step(system, p0, y[a0], f[a0], s, rtol, atol, hmax, a0)

    n_steps = 0
    n_rejected = 0
    root2 = np.sqrt(2.0)
    since_emit = np.zeros(b, dtype=np.intp)

    def emit(rows, p_old_c, hs_c, y_old_c, y_new_c, f_old_c, f_new_c,
             p_reached_c):
        """Write node values covered by the accepted steps of ``rows``.

        ``rows`` holds absolute row indices; the remaining arrays are
        aligned with it.  A step rarely covers more than one node, so the
        loop usually runs once or twice, fully vectorized.
        """
        cur_rows = rows
        cur_pos = np.arange(rows.size)
        while cur_rows.size:
            ptrs = ptr[cur_rows]
            ok = ptrs < j
            cur_rows = cur_rows[ok]
            cur_pos = cur_pos[ok]
            if cur_rows.size == 0:
                break
            ptrs = ptrs[ok]
            within = s * (nodes[ptrs] - p_reached_c[cur_pos]) <= 0.0
            cur_rows = cur_rows[within]
            cur_pos = cur_pos[within]
            if cur_rows.size == 0:
                break
            ptrs = ptrs[within]
            theta = (nodes[ptrs] - p_old_c[cur_pos]) / hs_c[cur_pos]
            vals = _hermite(theta, y_old_c[cur_pos], y_new_c[cur_pos],
                            f_old_c[cur_pos], f_new_c[cur_pos], hs_c[cur_pos])
            if project is not None:
                # the interpolant is one order below the stepper; polishing
                # the emitted value back onto the manifold restores it
                vals = project(nodes[ptrs], vals, cur_rows)
            values[ptrs, cur_rows] = vals
            covered[ptrs, cur_rows] = True
            ptr[cur_rows] += 1

    while alive.any():
        a = np.flatnonzero(alive)
        pa = p[a]
        ya = y[a]
        fa = f[a]
        remaining = s * (p_end - pa)
        ha = np.minimum(h[a], remaining)
        if max_step is not None:
            ha = np.minimum(ha, max_step)
        last = ha >= remaining
        hs = s * ha

        with np.errstate(invalid="ignore", over="ignore"):
            k1 = fa
            k2, _ = system(pa + _C[1] * hs, ya + hs * (_A[0][0] * k1), a)
            k3, _ = system(pa + _C[2] * hs,
                           ya + hs * (_A[1][0] * k1 + _A[1][1] * k2), a)
            k4, _ = system(
                pa + _C[3] * hs,
                ya + hs * (_A[2][0] * k1 + _A[2][1] * k2 + _A[2][2] * k3),
                a,
            )
            k5, _ = system(
                pa + _C[4] * hs,
                ya + hs * (_A[3][0] * k1 + _A[3][1] * k2 + _A[3][2] * k3
                           + _A[3][3] * k4),
                a,
            )
            k6, _ = system(
                pa + _C[5] * hs,
                ya + hs * (_A[4][0] * k1 + _A[4][1] * k2 + _A[4][2] * k3
                           + _A[4][3] * k4 + _A[4][4] * k5),
                a,
            )
            ynew = ya + hs * (_B5[0] * k1 + _B5[2] * k3 + _B5[3] * k4
                              + _B5[4] * k5 + _B5[5] * k6)
            pnew = np.where(last, p_end, pa + hs)
            if project is not None:
                ynew = project(pnew, ynew, a)
            fnew, gnew = system(pnew, ynew, a)
            err = hs * (_E[0] * k1 + _E[2] * k3 + _E[3] * k4 + _E[4] * k5
                        + _E[5] * k6 + _E[6] * fnew)
            sc = atol + rtol * np.maximum(np.abs(ya), np.abs(ynew))
            enorm = np.abs(err) / (root2 * sc)
        finite = np.isfinite(enorm) & np.isfinite(ynew) & np.isfinite(fnew)
        enorm = np.where(finite, enorm, np.inf)
        accept = enorm <= 1.0
        n_steps += 1
        n_rejected += int(np.sum(~accept))

        # Rejections shrink the step; a step that can shrink no further is a
        # stall, which in this problem family means the path ran into a
        # rank-deficient point faster than the gap check could see it.
        if (~accept).any():
            ra = ~accept
            with np.errstate(over="ignore"):
                fac = np.maximum(_MIN_FACTOR, _SAFETY * enorm[ra] ** _ORDER_EXP)
            rows = a[ra]
            h[rows] = ha[ra] * fac
            floor = 1e-14 * np.maximum(1.0, np.abs(p[rows]))
            stalled = h[rows] < floor
            if stalled.any():
                dead = rows[stalled]
                alive[dead] = False
                reason[dead] = np.where(
                    g[dead] < _STALL_SINGULAR_MARGIN, SINGULAR, NONFINITE
                )
                end_param[dead] = p[dead]

        if accept.any():
            ai = np.flatnonzero(accept)   # into the a-compacted step arrays
            rows = a[ai]                  # absolute row indices
            ev = gnew[ai] < 0.0
            pr = pnew[ai].copy()

            for pos in np.flatnonzero(ev):
                i = ai[pos]
                r = rows[pos]
                p_ev = _locate_gap_crossing(
                    system, pa[i], hs[i], ya[i], ynew[i], fa[i], fnew[i], r
                )
                pr[pos] = p_ev
                alive[r] = False
                reason[r] = SINGULAR
                end_param[r] = p_ev

            ptr_before = ptr[rows].copy()
            emit(rows, pa[ai], hs[ai], ya[ai], ynew[ai], fa[ai], fnew[ai], pr)
            emitted = ptr[rows] > ptr_before
            since_emit[rows] = np.where(emitted, 0, since_emit[rows] + 1)

            keep = alive[rows]
            if keep.any():
                live = rows[keep]
                src = ai[keep]
                p[live] = pnew[src]
                y[live] = ynew[src]
                f[live] = fnew[src]
                g[live] = gnew[src]
                with np.errstate(divide="ignore"):
                    fac = np.where(
                        enorm[src] == 0.0,
                        _MAX_FACTOR,
                        np.minimum(_MAX_FACTOR, _SAFETY * enorm[src] ** _ORDER_EXP),
                    )
                h[live] = ha[src] * fac
                done = live[ptr[live] >= j]
                if done.size:
                    alive[done] = False
                    end_param[done] = p[done]
                spinning = live[since_emit[live] > max_steps_between_nodes]
                if spinning.size:
                    alive[spinning] = False
                    reason[spinning] = np.where(
                        g[spinning] < _STALL_SINGULAR_MARGIN,
                        SINGULAR, NONFINITE,
                    )
                    end_param[spinning] = p[spinning]

    return BatchResult(values, covered, reason, end_param, n_steps, n_rejected)
