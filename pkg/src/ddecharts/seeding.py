"""Rightmost characteristic roots at a fixed parameter point.

The delay-differential operator is discretized by Chebyshev collocation of
its solution-operator generator on the delay interval [-tau_max, 0]: a
spectral differentiation matrix on Chebyshev-Gauss-Lobatto nodes whose
boundary row is replaced by the characteristic relation.  Eigenvalues of
the resulting dense matrix approximate the rightmost characteristic roots;
Newton iteration on D(lambda) then polishes each candidate to a residual
guarantee, which also makes the returned roots independent of the
discretization order.

Higher-order problems are reduced to first-order companion form, so the
eigenproblem has size (order x (n_modes + 1)).  When the problem has no
delayed content at a point (all delays zero, or every delayed coefficient
resolving to zero), candidates come from the polynomial companion matrix
instead and fewer than the requested number of roots may exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, DegenerateProblem, SingularJacobian
from .quasipoly import (
    DEFAULT_EPS_JACOBIAN,
    BoundPoint,
    ParameterPoint,
    QuasiPolynomial,
)


@dataclass(frozen=True)
class SeedConfig:
    """How many roots to return and how hard to polish them."""

    n_roots: int = 25
    n_modes: int = 200
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    dedup_tol: float = 1e-8

    def __post_init__(self):
        if self.n_roots < 0:
            raise ValueError("n_roots must be nonnegative")
        if self.n_modes < self.n_roots:
            raise ValueError("n_modes must be at least n_roots")
        if min(self.newton_tol, self.dedup_tol) <= 0 or self.newton_max_iter <= 0:
            raise ValueError("tolerances and iteration caps must be positive")


@dataclass
class RootSet:
    """Roots at one parameter point, sorted by descending real part.

    Ties sort by descending imaginary part, so a conjugate pair is adjacent
    with the positive-imaginary member first.  ``seed_roots`` guarantees
    every residual is at or below the Newton tolerance, nonreal roots come
    with their conjugates, and no two roots sit within the dedup radius.
    """

    roots: np.ndarray
    residuals: np.ndarray
    point: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.roots)

    @property
    def max_re(self) -> float:
        return float(np.max(self.roots.real)) if len(self.roots) else np.nan


def chebyshev_lobatto(n: int):
    """Gauss-Lobatto nodes on [-1, 1] and the differentiation matrix.

    Nodes are x_i = cos(i pi / n), descending from 1 to -1.  The diagonal
    uses the negative row-sum trick for accuracy.
    """
    if n < 1:
        raise ValueError("need at least one subinterval")
    i = np.arange(n + 1)
    x = np.cos(np.pi * i / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c = c * (-1.0) ** i
    dx = x[:, None] - x[None, :] + np.eye(n + 1)
    d = np.outer(c, 1.0 / c) / dx
    d -= np.diag(d.sum(axis=1))
    return x, d


def _barycentric_row(x: np.ndarray, s: float) -> np.ndarray:
    """Lagrange interpolation coefficients at ``s`` for Lobatto nodes ``x``."""
    n = x.size - 1
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    diff = s - x
    exact = np.isclose(diff, 0.0, atol=1e-15)
    if exact.any():
        row = np.zeros(n + 1)
        row[np.argmax(exact)] = 1.0
        return row
    q = w / diff
    return q / q.sum()


def _resolved_parts(qp: QuasiPolynomial, bp: BoundPoint):
    """Split resolved terms into a polynomial part and genuine delays.

    ``poly`` sums every term whose delay resolves to zero; ``delayed``
    lists (tau, coeffs) for terms with positive delay and at least one
    nonzero coefficient.  A vanished leading coefficient means the
    problem is not of retarded type at this point.
    """
    order = qp.order
    m = bp.coeffs.shape[1]
    poly = np.zeros(m)
    delayed = []
    for i in range(len(qp.terms)):
        tau = bp.delays[i]
        coeffs = bp.coeffs[i]
        if tau == 0.0:
            poly += coeffs
        elif np.any(coeffs != 0.0):
            delayed.append((tau, coeffs))
    if poly[order] == 0.0:
        raise DegenerateProblem("leading coefficient vanishes at this point")
    return poly, delayed


def build_collocation_matrix(
    qp: QuasiPolynomial, point: ParameterPoint, n_modes: int
) -> np.ndarray:
    """Dense eigenproblem whose spectrum approximates the rightmost roots.

    Raises :class:`DegenerateProblem` when the problem has no delayed
    content at this point; ``seed_roots`` then falls back to polynomial
    companion-matrix roots.
    """
    bp = qp.bind(point)
    poly, delayed = _resolved_parts(qp, bp)
    if not delayed:
        raise DegenerateProblem("no delayed content at this point")
    order = qp.order
    tau_max = max(tau for tau, _ in delayed)

    x, dcheb = chebyshev_lobatto(n_modes)
    dtheta = dcheb * (2.0 / tau_max)  # nodes map to theta = (x-1) tau_max/2

    m = order
    n1 = n_modes + 1
    gen = np.kron(dtheta, np.eye(m))

    # Companion blocks: the state is (x, x', ..., x^(m-1)); the top
    # derivative comes from the characteristic relation normalized by the
    # undelayed leading coefficient.
    a0 = np.zeros((m, m))
    if m > 1:
        a0[:-1, 1:] = np.eye(m - 1)
    a0[-1, :] = -poly[:m] / poly[m]

    gen[:m, :] = 0.0
    gen[:m, :m] = a0
    for tau, coeffs in delayed:
        ak_last = -coeffs[:m] / poly[m]
        row = _barycentric_row(x, 1.0 - 2.0 * tau / tau_max)
        nz = np.flatnonzero(row)
        for i in nz:
            gen[m - 1, i * m:(i + 1) * m] += row[i] * ak_last
    return gen


def _polynomial_candidates(poly: np.ndarray) -> np.ndarray:
    deg = np.flatnonzero(poly)
    if deg.size == 0:
        raise DegenerateProblem("characteristic function is identically zero")
    top = deg.max()
    if top == 0:
        return np.zeros(0, complex)
    return np.roots(poly[top::-1]).astype(complex)


def _refine_batch(bp: BoundPoint, lam0: np.ndarray, tol: float, max_iter: int,
                  eps_jacobian: float = DEFAULT_EPS_JACOBIAN):
    """Newton-polish every candidate; returns (roots, converged, residuals)."""
    lam = np.asarray(lam0, dtype=complex).copy()
    ok = np.zeros(lam.shape, bool)
    dead = ~np.isfinite(lam)
    res = np.full(lam.shape, np.inf)
    for it in range(max_iter + 1):
        active = ~ok & ~dead
        if not active.any():
            break
        with np.errstate(invalid="ignore", over="ignore"):
            d, dlam = bp.value_and_dlambda(lam)
            r = np.abs(d)
        res = np.where(active, r, res)
        newly = active & (r <= tol)
        ok |= newly
        active &= ~newly
        if it == max_iter:
            break
        bad = active & (~np.isfinite(r) | ~np.isfinite(dlam)
                        | (np.abs(dlam) < eps_jacobian))
        dead |= bad
        active &= ~bad
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            step = np.where(active, d / np.where(dlam == 0, 1.0, dlam), 0.0)
        lam = lam - step
        dead |= ~np.isfinite(lam)
    return lam, ok, res


def newton_refine(
    qp: QuasiPolynomial,
    point: ParameterPoint,
    lambda0: complex,
    cfg: SeedConfig,
) -> complex:
    """Polish one root estimate on D(lambda) by Newton iteration.

    Returns a value whose residual |D| is at or below ``cfg.newton_tol``;
    an estimate already below tolerance is returned unchanged.  Raises
    :class:`ConvergenceFailure` after ``cfg.newton_max_iter`` steps (or if
    an iterate stops being finite) and :class:`SingularJacobian` when
    |dD/dlambda| collapses mid-iteration.
    """
    bp = qp.bind(point)
    lam = complex(lambda0)
    for it in range(cfg.newton_max_iter + 1):
        if not (np.isfinite(lam.real) and np.isfinite(lam.imag)):
            raise ConvergenceFailure(
                f"iterate became non-finite after {it} steps from {lambda0}"
            )
        with np.errstate(invalid="ignore", over="ignore"):
            d, dlam = bp.value_and_dlambda(lam)
        d = complex(d)
        dlam = complex(dlam)
        if not np.isfinite(abs(d)):
            raise ConvergenceFailure(
                f"residual overflow after {it} steps from {lambda0}"
            )
        if abs(d) <= cfg.newton_tol:
            return lam
        if it == cfg.newton_max_iter:
            raise ConvergenceFailure(
                f"|D| = {abs(d):.3e} > {cfg.newton_tol:.1e} after "
                f"{cfg.newton_max_iter} iterations from {lambda0}"
            )
        if abs(dlam) < DEFAULT_EPS_JACOBIAN:
            raise SingularJacobian(
                f"|dD/dlambda| = {abs(dlam):.3e} during refinement"
            )
        lam = lam - d / dlam
    raise ConvergenceFailure("unreachable")  # pragma: no cover


def _dedup(lam: np.ndarray, res: np.ndarray, tol: float):
    """Keep one representative per cluster, best residual first."""
    order = np.argsort(res, kind="stable")
    kept_l: list[complex] = []
    kept_r: list[float] = []
    for i in order:
        z = lam[i]
        if all(abs(z - w) >= tol for w in kept_l):
            kept_l.append(complex(z))
            kept_r.append(float(res[i]))
    return np.array(kept_l, complex), np.array(kept_r, float)


def _real_polish(bp: BoundPoint, x: float, tol: float, max_iter: int = 8):
    """Newton on the real axis (D is real there for real coefficients)."""
    for _ in range(max_iter):
        d, dlam = bp.value_and_dlambda(complex(x, 0.0))
        if abs(d) <= tol:
            return x, abs(complex(d))
        if abs(dlam) < DEFAULT_EPS_JACOBIAN or not np.isfinite(abs(d)):
            return None
        x = x - (complex(d) / complex(dlam)).real
    d = bp.value(complex(x, 0.0))
    if abs(d) <= tol:
        return x, abs(complex(d))
    return None


def _conjugate_closure(bp: BoundPoint, lam: np.ndarray, res: np.ndarray,
                       tol: float, newton_tol: float):
    """Snap near-real roots onto the axis and force exact conjugate pairs."""
    out_l: list[complex] = []
    out_r: list[float] = []
    used = np.zeros(lam.size, bool)
    for i in range(lam.size):
        if used[i]:
            continue
        z = complex(lam[i])
        used[i] = True
        if abs(z.imag) <= tol:
            snapped = _real_polish(bp, z.real, newton_tol)
            if snapped is not None:
                out_l.append(complex(snapped[0], 0.0))
                out_r.append(snapped[1])
                continue
        partner = None
        for k in range(i + 1, lam.size):
            if not used[k] and abs(np.conj(z) - lam[k]) < tol:
                partner = k
                break
        if partner is not None:
            used[partner] = True
            if res[partner] < res[i]:
                z = complex(np.conj(lam[partner]))
        best = z if z.imag > 0 else complex(np.conj(z))
        out_l.extend([best, complex(np.conj(best))])
        out_r.extend([float(np.abs(bp.value(best))),
                      float(np.abs(bp.value(complex(np.conj(best)))))])
    return np.array(out_l, complex), np.array(out_r, float)


def _sorted_cut(lam: np.ndarray, res: np.ndarray, n: int, pair_tol: float):
    """Sort by (descending Re, descending Im) and cut to n roots.

    The cut widens by one when it would otherwise split a conjugate pair,
    so the pairing guarantee survives truncation.
    """
    order = np.lexsort((-lam.imag, -lam.real))
    lam = lam[order]
    res = res[order]
    if lam.size > n > 0:
        a = lam[n - 1]
        b = lam[n]
        if a.imag > 0 and abs(np.conj(a) - b) < pair_tol:
            n += 1
    return lam[:n], res[:n]


def seed_roots(
    qp: QuasiPolynomial, point: ParameterPoint, cfg: SeedConfig
) -> RootSet:
    """The ``cfg.n_roots`` rightmost characteristic roots at ``point``.

    Every returned root satisfies |D(lambda)| <= ``cfg.newton_tol``.  When
    the problem is a plain polynomial at this point, all of its (possibly
    fewer than ``n_roots``) roots are returned; otherwise fewer converged
    roots than requested raises :class:`ConvergenceFailure`.
    """
    bp = qp.bind(point)
    poly, delayed = _resolved_parts(qp, bp)
    polynomial = not delayed
    if polynomial:
        candidates = _polynomial_candidates(poly)
    else:
        gen = build_collocation_matrix(qp, point, cfg.n_modes)
        candidates = np.linalg.eigvals(gen)

    if candidates.size == 0:
        if cfg.n_roots == 0 or polynomial:
            return RootSet(np.zeros(0, complex), np.zeros(0), dict(point))
        raise ConvergenceFailure("eigenproblem produced no candidates")

    if not polynomial:
        # Discretization accuracy decays leftward; refinement only rescues
        # near-valid candidates, so drop everything clearly left of the
        # estimated n-th rightmost eigenvalue.
        re_sorted = np.sort(candidates.real)[::-1]
        nth = re_sorted[min(max(cfg.n_roots, 1), re_sorted.size) - 1]
        candidates = candidates[candidates.real >= nth - 1.0]

    lam, ok, res = _refine_batch(bp, candidates, cfg.newton_tol,
                                 cfg.newton_max_iter)
    lam = lam[ok]
    res = res[ok]
    if lam.size:
        lam, res = _dedup(lam, res, cfg.dedup_tol)
        lam, res = _conjugate_closure(bp, lam, res, cfg.dedup_tol,
                                      cfg.newton_tol)
        lam, res = _dedup(lam, res, cfg.dedup_tol)

    if lam.size < cfg.n_roots and not polynomial:
        raise ConvergenceFailure(
            f"only {lam.size} of {cfg.n_roots} requested roots converged "
            f"(n_modes={cfg.n_modes})"
        )
    lam, res = _sorted_cut(lam, res, cfg.n_roots, cfg.dedup_tol)
    return RootSet(lam, res, dict(point))
