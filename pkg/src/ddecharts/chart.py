"""Two-stage parameter sweeps, stability classification and the dense oracle.

The fast sweep seeds one set of rightmost roots at an anchor point,
continues them along the first parameter, then continues each column of
that line along the second parameter, classifying every grid node by the
sign of the dominant root's real part.  Rank-deficient Jacobian events and
residual violations trigger the reseed policy: integration resumes at the
next grid node with a freshly seeded, index-realigned root set.

``dense_sweep`` solves an independent eigenproblem at every node instead;
it is the verification oracle and the benchmark baseline the continuation
sweep is measured against.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import integrator
from .continuation import (
    CONTINUED,
    FAILED,
    RESEEDED,
    ContinuationConfig,
    SingularEvent,
    Trajectory,
)
from .errors import ConvergenceFailure, DegenerateProblem
from .quasipoly import BoundFamily, ParameterPoint, QuasiPolynomial
from .seeding import RootSet, SeedConfig, seed_roots

_COLUMN_CHUNK = 64  # columns per vectorized batch; fixed so results do not
                    # depend on the worker count


@dataclass(frozen=True)
class SweepConfig:
    """A 2-D sweep: two parameters, their ranges and grid, and the anchor."""

    param1: str
    param2: str
    range1: tuple[float, float]
    range2: tuple[float, float]
    n1: int
    n2: int
    seed_point: dict
    seed_cfg: SeedConfig = SeedConfig()
    cont_cfg: ContinuationConfig = ContinuationConfig()

    def validate(self, qp: QuasiPolynomial) -> None:
        for pname, rng, n in ((self.param1, self.range1, self.n1),
                              (self.param2, self.range2, self.n2)):
            if pname not in qp.param_names:
                raise ValueError(f"{pname!r} is not a parameter of the problem")
            lo, hi = rng
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"invalid range {rng} for {pname!r}")
            if n < 1:
                raise ValueError("grid counts must be at least 1")
            if pname in self.seed_point:
                v = self.seed_point[pname]
                if not (lo <= v <= hi):
                    raise ValueError(
                        f"anchor value {v} for {pname!r} lies outside {rng}"
                    )
        if self.param1 == self.param2:
            raise ValueError("param1 and param2 must differ")
        missing = qp.param_names - set(self.seed_point)
        if missing:
            raise ValueError(f"seed_point misses parameters {sorted(missing)}")
        self._check_delays(qp)

    def _check_delays(self, qp: QuasiPolynomial) -> None:
        ranges = {self.param1: self.range1, self.param2: self.range2}
        for t in qp.terms:
            d = t.delay
            if not d.is_parameter:
                continue
            if d.name in ranges:
                lo, hi = ranges[d.name]
                if min(d.scale * lo, d.scale * hi) < 0:
                    raise ValueError(
                        f"delay {d} goes negative over the sweep range"
                    )
            elif d.scale * self.seed_point[d.name] < 0:
                raise ValueError(f"delay {d} is negative at the seed point")

    def grid1(self) -> np.ndarray:
        return np.linspace(self.range1[0], self.range1[1], self.n1)

    def grid2(self) -> np.ndarray:
        return np.linspace(self.range2[0], self.range2[1], self.n2)


@dataclass
class StabilityChart:
    """Per-node classification over the 2-D grid, plus sweep metadata.

    ``stable`` follows the marginal-counts-as-stable convention:
    stable[i, j] is True exactly when max_re[i, j] <= 0.  Failed nodes
    carry NaN data and are never stable.  ``singular_points`` lists grid
    nodes immediately preceding a reseeded node in the direction the
    Jacobian event was encountered.
    """

    grid1: np.ndarray
    grid2: np.ndarray
    max_re: np.ndarray
    max_im: np.ndarray
    dominant_index: np.ndarray
    stable: np.ndarray
    reseeded: np.ndarray
    failed: np.ndarray
    residual_max: np.ndarray
    singular_points: list[tuple[float, float]] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    trajectories: list[Trajectory] | None = None

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())


@dataclass
class AgreementReport:
    """Node-by-node comparison of two charts of identical geometry."""

    n_compared: int
    n_agree: int
    max_re_max_diff: float
    margin: float

    @property
    def fraction(self) -> float:
        return 1.0 if self.n_compared == 0 else self.n_agree / self.n_compared


@dataclass
class BenchmarkResult:
    """Wall-time comparison between the continuation sweep and the oracle."""

    repetitions: int
    sweep_seconds: list[float] = field(default_factory=list)
    dense_seconds: list[float] = field(default_factory=list)
    agreement: AgreementReport | None = None
    sweep_chart: StabilityChart | None = None
    dense_chart: StabilityChart | None = None

    @property
    def speedup(self) -> float | None:
        if not self.sweep_seconds or not self.dense_seconds:
            return None
        return float(np.median(self.dense_seconds)
                     / np.median(self.sweep_seconds))


def _align_roots(fresh: RootSet, prev: np.ndarray):
    """Greedy nearest-neighbor alignment of a fresh set to previous roots.

    Returns (roots, residuals) where entry i continues prev[i].  Fresh
    roots left over after matching first refill slots whose previous root
    was lost (NaN), then get appended; previous slots with no fresh match
    stay NaN.  Exact distance ties prefer the fresh root with the larger
    real part.
    """
    f = np.asarray(fresh.roots, complex)
    fr = np.asarray(fresh.residuals, float)
    w = prev.size
    n = f.size
    out = np.full(w + n, np.nan + 0j)
    out_res = np.full(w + n, np.nan)
    used_f = np.zeros(n, bool)
    used_p = np.zeros(w, bool)
    if n:
        dist = np.abs(prev[:, None] - f[None, :])
        dist = np.where(np.isfinite(dist), dist, np.inf)
        for _ in range(min(w, n)):
            d = np.where(used_p[:, None] | used_f[None, :], np.inf, dist)
            m = d.min()
            if not np.isfinite(m):
                break
            ii, jj = np.nonzero(d == m)
            pick = np.argmax(f[jj].real)
            i, jx = int(ii[pick]), int(jj[pick])
            out[i] = f[jx]
            out_res[i] = fr[jx]
            used_p[i] = True
            used_f[jx] = True
    spare_slots = list(np.flatnonzero(~used_p))
    end = w
    for jx in np.flatnonzero(~used_f):
        slot = spare_slots.pop(0) if spare_slots else end
        if slot == end:
            end += 1
        out[slot] = f[jx]
        out_res[slot] = fr[jx]
    return out[:end], out_res[:end]


def reseed_policy(
    qp: QuasiPolynomial,
    event: SingularEvent,
    next_node: ParameterPoint,
    cfg: SweepConfig,
) -> RootSet:
    """Fresh initial conditions at the grid node just past a singular event.

    Seeds anew at ``next_node`` and realigns the result so index k keeps
    continuing the root that index k tracked before the event (greedy
    nearest matching; unmatched fresh roots are appended).  Seeding
    failures propagate and mark the remainder of the run failed.
    """
    fresh = seed_roots(qp, next_node, cfg.seed_cfg)
    if event.roots_before is None:
        return RootSet(fresh.roots, fresh.residuals, dict(next_node))
    roots, res = _align_roots(fresh, np.asarray(event.roots_before, complex))
    return RootSet(roots, res, dict(next_node))


@dataclass
class _LineRun:
    """One continued line over an ascending grid, after reseed recovery."""

    roots: np.ndarray          # (J, W)
    residuals: np.ndarray      # (J, W)
    status: list[str]
    events: list[SingularEvent]
    snap_values: list[float]   # node values preceding each reseed
    n_diverged: int = 0


@dataclass
class _ColumnState:
    vals: np.ndarray           # (jd, w)
    resid: np.ndarray          # (jd, w)
    status: list[str]
    events: list[SingularEvent]
    snaps: list[float]
    n_diverged: int = 0
    cur_roots: np.ndarray | None = None
    last_certified: np.ndarray | None = None
    cur_p: float = np.nan
    start: int = 0
    alive: bool = True


def _continue_columns(qp, bases, roots0, param, p0, nodes, sweep_cfg,
                      anchor_node_value):
    """Continue many columns away from a shared anchor, with reseeds.

    ``bases`` fixes every parameter but ``param`` per column; ``roots0``
    has shape (n_columns, w).  All columns start at the same anchor value
    and share the node grid (ordered in the direction of integration), so
    their root ODEs run as one vectorized batch; reseed recovery regroups
    the surviving columns by restart node and keeps batching.
    """
    cont_cfg = sweep_cfg.cont_cfg
    ncol, w = roots0.shape
    jd = nodes.size
    s = 1.0 if jd == 0 or nodes[-1] > p0 else -1.0
    cols = []
    for c in range(ncol):
        r0 = np.asarray(roots0[c], complex).copy()
        cols.append(_ColumnState(
            vals=np.full((jd, w), np.nan + 0j),
            resid=np.full((jd, w), np.nan),
            status=[FAILED] * jd,
            events=[], snaps=[],
            cur_roots=r0, last_certified=r0.copy(), cur_p=float(p0),
        ))
    if jd == 0:
        return cols
    family = BoundFamily(qp, [dict(b) for b in bases for _ in range(w)],
                         vary=param)

    def run_group(group: list[int], start: int):
        """One batched integration for columns sharing a restart node."""
        seg = nodes[start:]
        rows = np.concatenate([np.arange(c * w, (c + 1) * w) for c in group])
        y0 = np.stack([cols[c].cur_roots for c in group]).reshape(-1)
        y0 = np.where(np.isfinite(y0), y0, np.nan)

        def system(p, lam, local_rows):
            return family.rhs_and_gap(p, lam, cont_cfg.eps_jacobian,
                                      rows[local_rows])

        def project(p, lam, local_rows):
            with np.errstate(invalid="ignore", over="ignore",
                             divide="ignore"):
                d, dlam, _ = family.d_all(p, lam, rows[local_rows])
                step = d / dlam
                ok = (
                    np.isfinite(step)
                    & (np.abs(step) < 0.01 * (1.0 + np.abs(lam)))
                    & (np.abs(dlam) > cont_cfg.eps_jacobian)
                )
                return np.where(ok, lam - step, lam)

        run = integrator.integrate_batch(
            system, y0, cols[group[0]].cur_p, seg,
            rtol=cont_cfg.rel_tol, atol=cont_cfg.abs_tol,
            max_step=cont_cfg.max_step, project=project,
        )
        # residuals wherever covered, in one vectorized pass per node
        nb = len(group) * w
        res = np.full(run.values.shape, np.nan)
        for jn in range(seg.size):
            with np.errstate(invalid="ignore", over="ignore"):
                res[jn] = family.residuals(np.full(nb, seg[jn]),
                                           run.values[jn], rows)
        return run, res

    active = [c for c in range(ncol)]
    while active:
        groups: dict[int, list[int]] = {}
        for c in active:
            groups.setdefault(cols[c].start, []).append(c)
        reseed_requests = []  # (col, node_index)
        for start, group in sorted(groups.items()):
            run, res = run_group(group, start)
            seg = nodes[start:]
            for gix, c in enumerate(group):
                st = cols[c]
                sel = slice(gix * w, (gix + 1) * w)
                cov = run.covered[:, sel]
                vals = run.values[:, sel]
                rr = res[:, sel]
                reason = run.reason[sel]
                endp = run.end_param[sel]
                full = cov.all(axis=1)
                nfull = int(seg.size if full.all() else np.argmin(full))
                viol = None
                for j in range(nfull):
                    r = rr[j]
                    if np.any(~np.isfinite(r)) or \
                            np.any(r > cont_cfg.residual_check_tol):
                        viol = j
                        break
                    st.vals[start + j] = vals[j]
                    st.resid[start + j] = r
                    st.status[start + j] = CONTINUED
                    st.last_certified = vals[j].copy()

                if viol is None and nfull == seg.size:
                    for k in np.flatnonzero(reason == integrator.SINGULAR):
                        st.events.append(SingularEvent(
                            param, float(endp[k]), int(k),
                            st.last_certified.copy()))
                    st.n_diverged += int(np.sum(reason == integrator.NONFINITE))
                    st.alive = False
                    continue

                if viol is not None:
                    reseed_at = start + viol + 1
                    # the violating node stays failed with no data
                else:
                    reseed_at = start + nfull
                    limit = seg[nfull]
                    before = s * (endp - limit) <= 0
                    sing = (reason == integrator.SINGULAR) & before
                    for k in np.flatnonzero(sing):
                        st.events.append(SingularEvent(
                            param, float(endp[k]), int(k),
                            st.last_certified.copy()))
                    st.n_diverged += int(np.sum(
                        (reason == integrator.NONFINITE) & before))
                    # only genuine rank-deficiency events mark a chart
                    # singularity; divergence-driven reseeds do not
                    if sing.any():
                        if reseed_at >= 1:
                            st.snaps.append(float(nodes[reseed_at - 1]))
                        elif anchor_node_value is not None:
                            st.snaps.append(float(anchor_node_value))

                if reseed_at >= jd:
                    st.alive = False
                    continue
                reseed_requests.append((c, reseed_at))

        for c, reseed_at in reseed_requests:
            st = cols[c]
            node_value = float(nodes[reseed_at])
            next_point = {**bases[c], param: node_value}
            carrier = SingularEvent(param, node_value, -1,
                                    st.last_certified.copy())
            try:
                fresh = reseed_policy(qp, carrier, next_point, sweep_cfg)
            except (ConvergenceFailure, DegenerateProblem):
                st.alive = False
                continue
            aligned = fresh.roots[:w]
            aligned_res = fresh.residuals[:w]
            if aligned.size < w:
                pad = w - aligned.size
                aligned = np.concatenate([aligned, np.full(pad, np.nan + 0j)])
                aligned_res = np.concatenate([aligned_res, np.full(pad, np.nan)])
            st.vals[reseed_at] = aligned
            st.resid[reseed_at] = aligned_res
            st.status[reseed_at] = RESEEDED
            st.cur_roots = aligned.copy()
            st.last_certified = aligned.copy()
            st.cur_p = node_value
            st.start = reseed_at + 1
            st.alive = st.start < jd
        active = [c for c in range(ncol) if cols[c].alive]
    return cols


def _run_line(qp, roots0, base, param, p_star, grid, sweep_cfg,
              seed_residuals=None):
    """Both directions away from the anchor, merged in ascending order."""
    grid = np.asarray(grid, float)
    j = grid.size
    w = roots0.size
    vals = np.full((j, w), np.nan + 0j)
    resid = np.full((j, w), np.nan)
    status = [FAILED] * j
    events: list[SingularEvent] = []
    snaps: list[float] = []
    n_div = 0

    below = np.flatnonzero(grid < p_star)
    at = np.flatnonzero(grid == p_star)
    above = np.flatnonzero(grid > p_star)
    anchor_value = float(grid[at[0]]) if at.size else None

    for idx in at:
        vals[idx] = roots0
        if seed_residuals is not None:
            resid[idx] = seed_residuals
        else:
            fam = BoundFamily(qp, [dict(base)], vary=param)
            with np.errstate(invalid="ignore", over="ignore"):
                resid[idx] = fam.residuals(np.array([p_star]),
                                           roots0[None, :])[0]
        status[idx] = CONTINUED

    for indices in (below[::-1], above):
        if indices.size == 0:
            continue
        col = _continue_columns(qp, [base], roots0[None, :], param, p_star,
                                grid[indices], sweep_cfg, anchor_value)[0]
        vals[indices] = col.vals
        resid[indices] = col.resid
        for pos, idx in enumerate(indices):
            status[idx] = col.status[pos]
        events.extend(col.events)
        snaps.extend(col.snaps)
        n_div += col.n_diverged

    return _LineRun(vals, resid, status, events, snaps, n_div)


def _classify(vals: np.ndarray, resid: np.ndarray):
    """Dominant-root summary of one line: (max_re, max_im, index, res_max)."""
    j, w = vals.shape
    finite = np.isfinite(vals)
    re = np.where(finite, vals.real, -np.inf)
    ok = finite.any(axis=1)
    dom = np.argmax(re, axis=1)
    rows = np.arange(j)
    max_re = np.where(ok, re[rows, dom], np.nan)
    with np.errstate(invalid="ignore"):
        max_im = np.where(ok, np.abs(vals.imag[rows, dom]), np.nan)
    dom = np.where(ok, dom, -1)
    res_fin = np.where(np.isfinite(resid), resid, -np.inf)
    any_res = np.isfinite(resid).any(axis=1)
    res_max = np.where(any_res, res_fin.max(axis=1), np.nan)
    return max_re, max_im, dom, res_max


def _line_to_trajectory(param, grid, base, run: _LineRun) -> Trajectory:
    return Trajectory(
        param=param,
        grid=np.asarray(grid, float).copy(),
        roots_at=run.roots.copy(),
        residuals_at=run.residuals.copy(),
        status_at=list(run.status),
        singular_events=list(run.events),
        point=dict(base),
    )


def sweep2d(
    qp: QuasiPolynomial,
    cfg: SweepConfig,
    threads: int = 1,
    collect_trajectories: bool = False,
) -> StabilityChart:
    """Two-stage continuation sweep over the full 2-D grid.

    Stage 1 continues the anchor seed along ``param1``; stage 2 continues
    each stage-1 column along ``param2``, taking its initial conditions
    from the stage-1 dense output.  Residual verification runs on every
    line; violations and singular events mark nodes and trigger reseeds.
    Per-node failures are recorded, never fatal; only seeding failure at
    the anchor propagates.
    """
    cfg.validate(qp)
    t0 = time.perf_counter()
    seeds = seed_roots(qp, cfg.seed_point, cfg.seed_cfg)
    t_seed = time.perf_counter() - t0
    w = len(seeds.roots)
    if w == 0:
        raise ConvergenceFailure("anchor produced an empty root set")
    g1 = cfg.grid1()
    g2 = cfg.grid2()
    p1s = float(cfg.seed_point[cfg.param1])
    p2s = float(cfg.seed_point[cfg.param2])

    t1 = time.perf_counter()
    base1 = dict(cfg.seed_point)
    line1 = _run_line(qp, np.asarray(seeds.roots, complex), base1, cfg.param1,
                      p1s, g1, cfg, seed_residuals=np.asarray(seeds.residuals))
    t_stage1 = time.perf_counter() - t1

    n1, n2 = cfg.n1, cfg.n2
    max_re = np.full((n1, n2), np.nan)
    max_im = np.full((n1, n2), np.nan)
    dom_idx = np.full((n1, n2), -1, dtype=int)
    res_max = np.full((n1, n2), np.nan)
    reseeded = np.zeros((n1, n2), bool)
    failed = np.zeros((n1, n2), bool)
    singular: list[tuple[float, float]] = []
    trajectories: list[Trajectory] = []
    n_div = line1.n_diverged

    j2_anchor = np.flatnonzero(g2 == p2s)
    j2a = int(j2_anchor[0]) if j2_anchor.size else None
    for i, st in enumerate(line1.status):
        if st == RESEEDED and j2a is not None:
            reseeded[i, j2a] = True
    if j2a is not None:
        for v in line1.snap_values:
            singular.append((float(v), float(p2s)))
    if collect_trajectories:
        trajectories.append(_line_to_trajectory(cfg.param1, g1, base1, line1))

    t2 = time.perf_counter()
    below2 = np.flatnonzero(g2 < p2s)
    above2 = np.flatnonzero(g2 > p2s)
    at2 = np.flatnonzero(g2 == p2s)

    def run_chunk(chunk: np.ndarray):
        good = [i for i in chunk if line1.status[i] != FAILED]
        results = {}
        if not good:
            return results
        bases = [{**cfg.seed_point, cfg.param1: float(g1[i])} for i in good]
        roots0 = np.stack([line1.roots[i] for i in good])
        merged = {
            i: _LineRun(
                np.full((n2, w), np.nan + 0j), np.full((n2, w), np.nan),
                [FAILED] * n2, [], [], 0,
            )
            for i in good
        }
        for i, run in merged.items():
            for pos in at2:
                run.roots[pos] = line1.roots[i]
                run.residuals[pos] = line1.residuals[i]
                run.status[pos] = CONTINUED
        for indices in (below2[::-1], above2):
            if indices.size == 0:
                continue
            colres = _continue_columns(
                qp, bases, roots0, cfg.param2, p2s, g2[indices], cfg,
                float(p2s) if at2.size else None,
            )
            for gix, i in enumerate(good):
                st = colres[gix]
                run = merged[i]
                run.roots[indices] = st.vals
                run.residuals[indices] = st.resid
                for pos, idx in enumerate(indices):
                    run.status[idx] = st.status[pos]
                run.events.extend(st.events)
                run.snap_values.extend(st.snaps)
                run.n_diverged += st.n_diverged
        return merged

    chunks = [np.arange(c, min(c + _COLUMN_CHUNK, n1))
              for c in range(0, n1, _COLUMN_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunk_results = list(pool.map(run_chunk, chunks))
    else:
        chunk_results = [run_chunk(c) for c in chunks]

    for res in chunk_results:
        for i, run in res.items():
            mr, mi, dm, rm = _classify(run.roots, run.residuals)
            max_re[i] = mr
            max_im[i] = mi
            dom_idx[i] = dm
            res_max[i] = rm
            for jn, st in enumerate(run.status):
                if st == RESEEDED:
                    reseeded[i, jn] = True
                elif st == FAILED:
                    failed[i, jn] = True
            for v in run.snap_values:
                singular.append((float(g1[i]), float(v)))
            n_div += run.n_diverged
            if collect_trajectories:
                base = {**cfg.seed_point, cfg.param1: float(g1[i])}
                trajectories.append(
                    _line_to_trajectory(cfg.param2, g2, base, run)
                )
    for i, st in enumerate(line1.status):
        if st == FAILED:
            failed[i, :] = True
    t_stage2 = time.perf_counter() - t2

    failed |= np.isnan(max_re)
    stable = np.where(np.isnan(max_re), False, max_re <= 0.0)
    singular = sorted(set(singular))
    timings = {
        "seed": t_seed,
        "stage1": t_stage1,
        "stage2": t_stage2,
        "total": time.perf_counter() - t0,
        "diverged_runs": float(n_div),
    }
    return StabilityChart(
        grid1=g1, grid2=g2, max_re=max_re, max_im=max_im,
        dominant_index=dom_idx, stable=stable, reseeded=reseeded,
        failed=failed, residual_max=res_max, singular_points=singular,
        timings=timings,
        trajectories=trajectories if collect_trajectories else None,
    )


def dense_sweep(
    qp: QuasiPolynomial,
    cfg: SweepConfig,
    seed_cfg: SeedConfig | None = None,
    threads: int = 1,
) -> StabilityChart:
    """Independent eigenproblem at every grid node; no continuation.

    This is the verification oracle and the benchmark baseline.  Per-node
    seeding failures are recorded as failed nodes.  In a benchmark the
    caller usually passes a lighter ``seed_cfg`` (fewer modes) than the
    anchor seeding uses, matching how eigenvalue-per-node baselines are
    normally run.
    """
    cfg.validate(qp)
    sc = seed_cfg or cfg.seed_cfg
    t0 = time.perf_counter()
    g1 = cfg.grid1()
    g2 = cfg.grid2()
    n1, n2 = cfg.n1, cfg.n2
    max_re = np.full((n1, n2), np.nan)
    max_im = np.full((n1, n2), np.nan)
    dom_idx = np.full((n1, n2), -1, dtype=int)
    res_max = np.full((n1, n2), np.nan)
    failed = np.zeros((n1, n2), bool)

    def run_row(i: int):
        out = []
        for jn in range(n2):
            pt = {**cfg.seed_point, cfg.param1: float(g1[i]),
                  cfg.param2: float(g2[jn])}
            try:
                rs = seed_roots(qp, pt, sc)
            except (ConvergenceFailure, DegenerateProblem):
                out.append(None)
                continue
            if len(rs) == 0:
                out.append(None)
                continue
            dom = int(np.argmax(rs.roots.real))
            out.append((float(rs.roots.real[dom]),
                        abs(float(rs.roots.imag[dom])),
                        float(rs.residuals.max())))
        return out

    rows = range(n1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_rows = list(pool.map(run_row, rows))
    else:
        all_rows = [run_row(i) for i in rows]

    for i, row in enumerate(all_rows):
        for jn, cell in enumerate(row):
            if cell is None:
                failed[i, jn] = True
                continue
            max_re[i, jn], max_im[i, jn], res_max[i, jn] = cell
            dom_idx[i, jn] = 0  # roots are sorted, the first is rightmost

    stable = np.where(np.isnan(max_re), False, max_re <= 0.0)
    timings = {"total": time.perf_counter() - t0}
    return StabilityChart(
        grid1=g1, grid2=g2, max_re=max_re, max_im=max_im,
        dominant_index=dom_idx, stable=stable,
        reseeded=np.zeros((n1, n2), bool), failed=failed,
        residual_max=res_max, singular_points=[], timings=timings,
    )


def classification_agreement(
    sweep: StabilityChart, oracle: StabilityChart, margin: float = 1e-3
) -> AgreementReport:
    """Compare stable/unstable flags where the oracle is decisive.

    Nodes failed on either side, or where the oracle's |max_re| falls
    below ``margin`` (too close to the boundary to classify reliably on a
    finite grid), are excluded.
    """
    mask = (~sweep.failed & ~oracle.failed
            & (np.abs(oracle.max_re) >= margin))
    n = int(mask.sum())
    agree = mask & (sweep.stable == oracle.stable)
    diff = np.abs(sweep.max_re - oracle.max_re)
    max_diff = float(np.max(diff[mask])) if n else 0.0
    return AgreementReport(n_compared=n, n_agree=int(agree.sum()),
                           max_re_max_diff=max_diff, margin=margin)


def benchmark(
    qp: QuasiPolynomial,
    cfg: SweepConfig,
    repetitions: int,
    oracle_seed_cfg: SeedConfig | None = None,
    threads: int = 1,
    margin: float = 1e-3,
) -> BenchmarkResult:
    """Run the sweep and the dense oracle on identical grids and compare.

    Reports wall times per repetition, the speedup ratio of medians, and
    per-node classification agreement.  ``repetitions = 0`` returns an
    empty record.
    """
    result = BenchmarkResult(repetitions=repetitions)
    if repetitions <= 0:
        return result
    sweep = dense = None
    for _ in range(repetitions):
        t0 = time.perf_counter()
        sweep = sweep2d(qp, cfg, threads=threads)
        result.sweep_seconds.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        dense = dense_sweep(qp, cfg, seed_cfg=oracle_seed_cfg,
                            threads=threads)
        result.dense_seconds.append(time.perf_counter() - t0)
    result.sweep_chart = sweep
    result.dense_chart = dense
    result.agreement = classification_agreement(sweep, dense, margin=margin)
    return result
