"""Tracking characteristic roots along one parameter.

Each root lambda_k of D(lambda; p) = 0 is an implicit function of the
parameter p and obeys the scalar ODE

    dlambda/dp = -(dD/dp) / (dD/dlambda).

The sensitivity matrix of the whole root vector is diagonal, so the roots
are integrated as independent scalar complex ODEs; one root hitting a
rank-deficient point (|dD/dlambda| below threshold) terminates only its
own run and is reported as a singular event for the caller to handle.
Grid values come from the integrator's continuous extension rather than
from restarts, so truncation error does not accumulate per node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import integrator
from .errors import NonFiniteState, UnknownParameter
from .quasipoly import BoundFamily, ParameterPoint, QuasiPolynomial
from .seeding import RootSet

CONTINUED = "continued"
RESEEDED = "reseeded"
FAILED = "failed"


@dataclass(frozen=True)
class ContinuationConfig:
    """Integrator tolerances and on-manifold certification thresholds."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    eps_jacobian: float = 1e-8
    residual_check_tol: float = 1e-6
    max_step: float | None = None

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.eps_jacobian,
               self.residual_check_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive when given")


@dataclass
class SingularEvent:
    """A root ran into |dD/dlambda| < eps while continuing ``param``."""

    param: str
    value: float
    root_index: int
    roots_before: np.ndarray | None = None


@dataclass
class Trajectory:
    """Roots evaluated at every node of a 1-D continuation run.

    ``roots_at[j][k]`` continues ``roots_at[j-1][k]`` unless the node is
    flagged reseeded; a failed node carries NaN roots.  ``point`` holds the
    base parameter assignment (the continued parameter's entry is the seed
    anchor and is overridden per node).
    """

    param: str
    grid: np.ndarray
    roots_at: np.ndarray
    residuals_at: np.ndarray
    status_at: list[str]
    singular_events: list[SingularEvent] = field(default_factory=list)
    diverged: list[tuple[float, int]] = field(default_factory=list)
    point: dict = field(default_factory=dict)

    @property
    def n_roots(self) -> int:
        return self.roots_at.shape[1]


def make_system(family: BoundFamily, cfg: ContinuationConfig):
    """Integrator callback: continuation RHS plus the singularity margin."""

    def system(p, lam, rows):
        return family.rhs_and_gap(p, lam, cfg.eps_jacobian, rows)

    return system


def make_projection(family: BoundFamily, cfg: ContinuationConfig):
    """One guarded Newton step onto D = 0 after each accepted step.

    D(lambda(p), p) is an exact invariant of the continuation flow, so
    pulling the endpoint back onto the root manifold removes the only
    error component that otherwise accumulates over a long run.  The step
    is skipped wherever it would be large (off the basin) or the slope is
    near-singular (the gap event owns that case).
    """

    def project(p, lam, rows):
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            d, dlam, _ = family.d_all(p, lam, rows)
            step = d / dlam
            ok = (
                np.isfinite(step)
                & (np.abs(step) < 0.01 * (1.0 + np.abs(lam)))
                & (np.abs(dlam) > cfg.eps_jacobian)
            )
            return np.where(ok, lam - step, lam)

    return project


def integrate_roots(
    family: BoundFamily,
    roots0: np.ndarray,
    p0: float,
    nodes: np.ndarray,
    cfg: ContinuationConfig,
) -> integrator.BatchResult:
    """Run one batch of root ODEs toward ``nodes`` (shared start and grid)."""
    return integrator.integrate_batch(
        make_system(family, cfg),
        roots0,
        p0,
        nodes,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        project=make_projection(family, cfg),
    )


def _split_grid(grid: np.ndarray, p_star: float):
    """Indices of nodes below / at / above the anchor value."""
    below = np.flatnonzero(grid < p_star)
    at = np.flatnonzero(grid == p_star)
    above = np.flatnonzero(grid > p_star)
    return below, at, above


def residual_matrix(
    qp: QuasiPolynomial,
    base_point: ParameterPoint,
    param: str,
    grid: np.ndarray,
    roots_at: np.ndarray,
) -> np.ndarray:
    """|D| recomputed at every (node, root); NaN roots give NaN residuals."""
    fam = BoundFamily(qp, [dict(base_point)], vary=param)
    out = np.full(roots_at.shape, np.nan)
    for j, p in enumerate(grid):
        lam = roots_at[j]
        finite = np.isfinite(lam)
        if not finite.any():
            continue
        with np.errstate(invalid="ignore", over="ignore"):
            r = fam.residuals(np.array([p]), lam[None, :])[0]
        out[j] = np.where(finite, r, np.nan)
    return out


def continue_1d(
    qp: QuasiPolynomial,
    seed: RootSet,
    param: str,
    grid,
    cfg: ContinuationConfig,
) -> Trajectory:
    """Continue every seed root across ``grid``, in both directions.

    The range splits at the seed's anchor value; each side is integrated
    away from the anchor with dense output evaluated at the grid nodes.
    A node is ``continued`` when every root covers it, ``failed``
    otherwise (roots cut short by singular events or divergence carry NaN
    past their termination).  Reseeding is the chart layer's job; this
    operation only detects and reports.
    """
    if param not in qp.param_names:
        raise UnknownParameter(param)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-D array")
    ascending = bool(grid[-1] >= grid[0])
    order = np.argsort(grid, kind="stable") if ascending else \
        np.argsort(-grid, kind="stable")
    g = grid[order]
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly monotone")

    try:
        p_star = float(seed.point[param])
    except KeyError:
        raise UnknownParameter(param) from None
    if not (g[0] <= p_star <= g[-1]):
        raise ValueError(
            f"seed value {p_star} lies outside the grid range [{g[0]}, {g[-1]}]"
        )
    roots0 = np.asarray(seed.roots, dtype=complex)
    if not np.all(np.isfinite(roots0)):
        raise NonFiniteState("seed roots contain non-finite values")
    w = roots0.size

    values = np.full((g.size, w), np.nan + 0j)
    covered = np.zeros((g.size, w), bool)
    events: list[SingularEvent] = []
    diverged: list[tuple[float, int]] = []

    below, at, above = _split_grid(g, p_star)
    for j in at:
        values[j] = roots0
        covered[j] = True

    family = BoundFamily(qp, [dict(seed.point)], vary=param)
    for idx, direction_nodes in ((below[::-1], g[below][::-1]),
                                 (above, g[above])):
        if len(idx) == 0:
            continue
        run = integrate_roots(family, roots0, p_star, direction_nodes, cfg)
        values[idx] = run.values
        covered[idx] = run.covered
        for k in np.flatnonzero(run.reason == integrator.SINGULAR):
            events.append(SingularEvent(param, float(run.end_param[k]),
                                        int(k), roots_before=roots0.copy()))
        for k in np.flatnonzero(run.reason == integrator.NONFINITE):
            diverged.append((float(run.end_param[k]), int(k)))

    residuals = residual_matrix(qp, seed.point, param, g, values)
    status = [CONTINUED if covered[j].all() else FAILED
              for j in range(g.size)]
    for j, st in enumerate(status):
        if st == FAILED:
            values[j] = np.nan + 0j
            residuals[j] = np.nan

    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return Trajectory(
        param=param,
        grid=grid.copy(),
        roots_at=values[inv],
        residuals_at=residuals[inv],
        status_at=[status[i] for i in inv],
        singular_events=events,
        diverged=diverged,
        point=dict(seed.point),
    )


def verify_residuals(
    qp: QuasiPolynomial, traj: Trajectory, cfg: ContinuationConfig
) -> list[tuple[int, int, float]]:
    """Entries of the trajectory whose recomputed |D| exceeds the bound.

    An empty list certifies the trajectory: the integrated roots stayed on
    the root manifold to within ``cfg.residual_check_tol`` at every node
    that is not flagged failed.
    """
    res = residual_matrix(qp, traj.point, traj.param, traj.grid, traj.roots_at)
    violations = []
    for j in range(res.shape[0]):
        if traj.status_at[j] == FAILED:
            continue
        for k in range(res.shape[1]):
            r = res[j, k]
            if np.isfinite(r) and r > cfg.residual_check_tol:
                violations.append((j, k, float(r)))
    return violations
