"""Optimisation models built from a UC instance and a load profile.

Every model shares one column layout (see :class:`VariableLayout`) and one
set of row families:

``genlo``/``genhi``   ``x - pmin u >= 0`` and ``x - pmax u <= 0``
``flowup``/``flowlo`` ``K_j f <= limit`` and ``K_j f >= -limit``
``bal``               ``G x + A f (- l) = load`` per bus
``agg``               ``sum x (- sum l) = total load`` per timestep
``rampup``/``rampdn`` start-up/shut-down aware ramp limits, written as

    x(t) - x(t-1) + (Rsu - Rup) u(t-1) + (pmax - Rsu) u(t) <= pmax
    x(t-1) - x(t) + (Rsd - Rdn) u(t) + (pmax - Rsd) u(t-1) <= pmax

At ``t = 1`` the previous-step quantities come from the generator's
``initial_on``/``initial_output`` and move to the right-hand side.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, InvalidFixError, InvalidRangeError, ScheduleCoverageError, ValidationError
from .lp import LinearProgram, Sense
from .milp import MixedIntegerProgram
from .model import CommitmentSchedule, FlowModel, LoadProfile, UCInstance, build_flow_model

INF = np.inf


class TargetSense(str, enum.Enum):
    UPPER = "UPPER"
    LOWER = "LOWER"


@dataclass(frozen=True)
class ScreeningTarget:
    """One line-limit inequality: ``line`` at 1-based ``timestep``."""

    line: int
    sense: TargetSense
    timestep: int

    def __post_init__(self):
        object.__setattr__(self, "sense", TargetSense(self.sense))
        if self.line < 0 or self.timestep < 1:
            raise ValidationError("target", f"invalid target {self}")

    @property
    def sort_key(self):
        # timestep-major, line-minor, UPPER first
        return (self.timestep, self.line, 0 if self.sense is TargetSense.UPPER else 1)

    def label(self) -> str:
        return f"t{self.timestep}/line{self.line}/{self.sense.value}"


def all_targets(instance: UCInstance, horizon: int | None = None) -> list[ScreeningTarget]:
    T = instance.horizon if horizon is None else horizon
    return [
        ScreeningTarget(j, s, t)
        for t in range(1, T + 1)
        for j in range(instance.n_lines)
        for s in (TargetSense.UPPER, TargetSense.LOWER)
    ]


@dataclass(frozen=True)
class VariableLayout:
    """Column layout ``[u | x | f | l]``, each block generator/coordinate/bus major.

    The block covers timesteps ``first_step .. first_step + horizon - 1``.
    ``n_load_buses > 0`` adds load columns (load-region models only).
    """

    n_generators: int
    n_flow: int
    horizon: int
    n_load_buses: int = 0
    first_step: int = 1

    @property
    def steps(self) -> range:
        return range(self.first_step, self.first_step + self.horizon)

    @property
    def n_vars(self) -> int:
        return self.horizon * (2 * self.n_generators + self.n_flow + self.n_load_buses)

    def _pos(self, t):
        p = t - self.first_step
        if not 0 <= p < self.horizon:
            raise IndexError(f"timestep {t} outside layout")
        return p

    def u(self, i, t) -> int:
        return i * self.horizon + self._pos(t)

    def x(self, i, t) -> int:
        return (self.n_generators + i) * self.horizon + self._pos(t)

    def f(self, c, t) -> int:
        return (2 * self.n_generators + c) * self.horizon + self._pos(t)

    def l(self, b, t) -> int:
        return (2 * self.n_generators + self.n_flow + b) * self.horizon + self._pos(t)

    @property
    def u_block(self) -> slice:
        return slice(0, self.n_generators * self.horizon)

    @property
    def x_block(self) -> slice:
        return slice(self.n_generators * self.horizon, 2 * self.n_generators * self.horizon)

    @property
    def f_block(self) -> slice:
        s = 2 * self.n_generators * self.horizon
        return slice(s, s + self.n_flow * self.horizon)

    @property
    def l_block(self) -> slice:
        s = (2 * self.n_generators + self.n_flow) * self.horizon
        return slice(s, s + self.n_load_buses * self.horizon)

    # matrices of column ids, shape (entities, horizon)
    def u_cols(self):
        return np.arange(self.u_block.start, self.u_block.stop).reshape(self.n_generators, self.horizon)

    def x_cols(self):
        return np.arange(self.x_block.start, self.x_block.stop).reshape(self.n_generators, self.horizon)

    def f_cols(self):
        return np.arange(self.f_block.start, self.f_block.stop).reshape(self.n_flow, self.horizon)

    def l_cols(self):
        return np.arange(self.l_block.start, self.l_block.stop).reshape(self.n_load_buses, self.horizon)

    def names(self) -> tuple[str, ...]:
        out = [""] * self.n_vars
        for prefix, cols in (("u", self.u_cols()), ("x", self.x_cols()), ("f", self.f_cols()), ("l", self.l_cols())):
            for a in range(cols.shape[0]):
                for p, t in enumerate(self.steps):
                    out[cols[a, p]] = f"{prefix}[{a},{t}]"
        return tuple(out)


class _Rows:
    """Accumulates sparse rows block by block."""

    def __init__(self):
        self.r, self.c, self.v = [], [], []
        self.lo, self.hi, self.names = [], [], []
        self.n = 0

    def add(self, cols, coefs, lo, hi, names):
        """``cols``/``coefs``: (n_rows, nnz_per_row) arrays; ``lo``/``hi``: (n_rows,)."""
        cols = np.atleast_2d(cols)
        coefs = np.broadcast_to(np.atleast_2d(coefs), cols.shape)
        k = cols.shape[0]
        rows = self.n + np.repeat(np.arange(k), cols.shape[1])
        self.r.append(rows)
        self.c.append(cols.ravel())
        self.v.append(np.asarray(coefs, dtype=float).ravel())
        self.lo.append(np.broadcast_to(np.asarray(lo, dtype=float), (k,)))
        self.hi.append(np.broadcast_to(np.asarray(hi, dtype=float), (k,)))
        self.names.extend(names)
        start = self.n
        self.n += k
        return np.arange(start, self.n)

    def matrix(self, n_vars):
        if not self.r:
            return sp.csr_matrix((0, n_vars)), np.zeros(0), np.zeros(0)
        A = sp.csr_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))), shape=(self.n, n_vars)
        )
        A.sum_duplicates()
        A.eliminate_zeros()
        return A, np.concatenate(self.lo), np.concatenate(self.hi)


@dataclass(frozen=True, eq=False)
class Region:
    """A built feasible region plus bookkeeping.

    ``target_rows`` maps each line-limit target present to its row index.
    """

    lp: LinearProgram
    layout: VariableLayout
    target_rows: dict
    binary_vars: np.ndarray


def _load_matrix(loads, instance, k, first=1):
    values = loads.values if isinstance(loads, LoadProfile) else np.asarray(loads, dtype=float)
    if values.ndim != 2 or values.shape[0] != instance.n_buses:
        raise DimensionError(f"load table has shape {values.shape}, expected {instance.n_buses} rows")
    if values.shape[1] < k:
        raise DimensionError(f"loads cover {values.shape[1]} steps, need {k}")
    return values[:, first - 1 : k]


def _fix_matrix(fixed_u, ng, k):
    """Dense ``(ng, k)`` fix matrix with NaN for free entries."""
    out = np.full((ng, k), np.nan)
    if fixed_u is None:
        return out
    if isinstance(fixed_u, CommitmentSchedule):
        if fixed_u.values.shape[0] != ng:
            raise DimensionError("schedule generator count mismatch")
        for t in fixed_u.defined_steps:
            if t <= k:
                out[:, t - 1] = fixed_u.at(t)
        return out
    arr = np.asarray(fixed_u, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != ng or arr.shape[1] < k:
        raise DimensionError(f"fix matrix has shape {arr.shape}, expected ({ng}, >= {k})")
    arr = arr[:, :k]
    bad = ~np.isnan(arr) & (arr != 0) & (arr != 1)
    if bad.any():
        i, t = np.argwhere(bad)[0]
        raise InvalidFixError(f"u[{i},{t + 1}] fixed to {arr[i, t]}, expected 0 or 1")
    return arr


def build_region(
    instance: UCInstance,
    loads,
    k: int,
    flow_model: FlowModel | None = None,
    *,
    single_step: bool = False,
    fixed_u=None,
    load_box=None,
    binary: bool = False,
    line_steps=None,
    kept_targets=None,
    aggregate: bool = True,
) -> Region:
    """Assemble the region shared by every model in this module.

    Parameters
    ----------
    loads
        Load table covering steps ``1..k``; ignored where ``load_box`` is given.
    single_step
        Model only step ``k``, without ramp or aggregate rows.
    fixed_u
        Schedule or ``(ng, T)`` array (NaN = free) of fixed commitments.
    load_box
        ``(lower, upper)`` load tables; loads become bounded variables.
    binary
        Mark the commitment columns as binaries (the UC problem).
    line_steps
        Steps that carry line-limit and nodal-balance rows; default all.
    kept_targets
        If given, only these line-limit rows are added.
    aggregate
        Add the per-step total balance rows on steps without nodal balance.
    """
    fm = flow_model or build_flow_model(instance)
    ng, nb, m = instance.n_generators, instance.n_buses, instance.n_lines
    nf = fm.n_flow_coords
    if not 1 <= k <= max(instance.horizon, k):
        raise DimensionError(f"step {k} out of range")
    first = k if single_step else 1
    T = k - first + 1
    if load_box is not None:
        lo_tab = _load_matrix(load_box[0], instance, k, first)
        hi_tab = _load_matrix(load_box[1], instance, k, first)
        L = None
    else:
        L = _load_matrix(loads, instance, k, first)
    lay = VariableLayout(ng, nf, T, nb if load_box is not None else 0, first)
    steps = list(lay.steps)
    line_steps = set(steps if line_steps is None else line_steps) & set(steps)

    pmin, pmax = instance.p_min, instance.p_max
    U, X, F = lay.u_cols(), lay.x_cols(), lay.f_cols()
    n = lay.n_vars
    var_lo = np.zeros(n)
    var_hi = np.full(n, INF)
    var_hi[lay.u_block] = 1.0
    var_hi[lay.x_block] = np.repeat(pmax, T)
    var_lo[lay.f_block] = -INF
    fix = _fix_matrix(fixed_u, ng, k)[:, first - 1 :]
    fixed = ~np.isnan(fix)
    var_lo[U[fixed]] = fix[fixed]
    var_hi[U[fixed]] = fix[fixed]
    if load_box is not None:
        Lc = lay.l_cols()
        var_lo[Lc.ravel()] = lo_tab.ravel()
        var_hi[Lc.ravel()] = hi_tab.ravel()

    rows = _Rows()
    gi, tp = np.meshgrid(np.arange(ng), np.arange(T), indexing="ij")
    gi, tp = gi.ravel(), tp.ravel()
    tname = [steps[p] for p in tp]
    rows.add(
        np.column_stack([X[gi, tp], U[gi, tp]]),
        np.column_stack([np.ones(gi.size), -pmin[gi]]),
        0.0, INF, [f"genlo[{i},{t}]" for i, t in zip(gi, tname)],
    )
    rows.add(
        np.column_stack([X[gi, tp], U[gi, tp]]),
        np.column_stack([np.ones(gi.size), -pmax[gi]]),
        -INF, 0.0, [f"genhi[{i},{t}]" for i, t in zip(gi, tname)],
    )

    target_rows = {}
    limits = instance.flow_limits
    keep = None if kept_targets is None else set(kept_targets)
    Ksp = sp.csr_matrix(fm.K)
    for t in steps:
        if t not in line_steps:
            continue
        p = t - first
        for sense in (TargetSense.UPPER, TargetSense.LOWER):
            for j in range(m):
                tg = ScreeningTarget(j, sense, t)
                if keep is not None and tg not in keep:
                    continue
                s, e = Ksp.indptr[j], Ksp.indptr[j + 1]
                cols = F[Ksp.indices[s:e], p]
                lo, hi = (-INF, limits[j]) if sense is TargetSense.UPPER else (-limits[j], INF)
                tag = "flowup" if sense is TargetSense.UPPER else "flowlo"
                (r,) = rows.add(cols[None, :], Ksp.data[s:e][None, :], lo, hi, [f"{tag}[{j},{t}]"])
                target_rows[tg] = int(r)

    G = fm.G
    Asp = sp.csr_matrix(fm.A)
    Gsp = sp.csr_matrix(G)
    for t in steps:
        if t not in line_steps:
            continue
        p = t - first
        for b in range(nb):
            gs, ge = Gsp.indptr[b], Gsp.indptr[b + 1]
            as_, ae = Asp.indptr[b], Asp.indptr[b + 1]
            cols = [X[Gsp.indices[gs:ge], p], F[Asp.indices[as_:ae], p]]
            vals = [Gsp.data[gs:ge], Asp.data[as_:ae]]
            if load_box is not None:
                cols.append([lay.l(b, t)])
                vals.append([-1.0])
                rhs = 0.0
            else:
                rhs = L[b, p]
            rows.add(np.concatenate(cols)[None, :], np.concatenate(vals)[None, :], rhs, rhs, [f"bal[{b},{t}]"])

    if aggregate and not single_step:
        for t in steps:
            if t in line_steps:
                continue
            p = t - first
            cols = [X[:, p]]
            vals = [np.ones(ng)]
            if load_box is not None:
                cols.append(lay.l_cols()[:, p])
                vals.append(-np.ones(nb))
                rhs = 0.0
            else:
                rhs = float(L[:, p].sum())
            rows.add(np.concatenate(cols)[None, :], np.concatenate(vals)[None, :], rhs, rhs, [f"agg[{t}]"])

    if not single_step:
        gens = instance.generators
        rup = np.array([g.ramp_up for g in gens])
        rdn = np.array([g.ramp_down for g in gens])
        rsu = np.array([g.ramp_startup for g in gens])
        rsd = np.array([g.ramp_shutdown for g in gens])
        u0 = np.array([1.0 if g.initial_on else 0.0 for g in gens])
        x0 = np.array([g.initial_output for g in gens])
        idx = np.arange(ng)
        # t = 1 boundary rows
        rows.add(
            np.column_stack([X[:, 0], U[:, 0]]),
            np.column_stack([np.ones(ng), pmax - rsu]),
            -INF, pmax + x0 - (rsu - rup) * u0, [f"rampup[{i},{first}]" for i in idx],
        )
        rows.add(
            np.column_stack([X[:, 0], U[:, 0]]),
            np.column_stack([-np.ones(ng), rsd - rdn]),
            -INF, pmax - x0 - (pmax - rsd) * u0, [f"rampdn[{i},{first}]" for i in idx],
        )
        if T > 1:
            gi, tp = np.meshgrid(idx, np.arange(1, T), indexing="ij")
            gi, tp = gi.ravel(), tp.ravel()
            ones = np.ones(gi.size)
            rows.add(
                np.column_stack([X[gi, tp], X[gi, tp - 1], U[gi, tp - 1], U[gi, tp]]),
                np.column_stack([ones, -ones, rsu[gi] - rup[gi], pmax[gi] - rsu[gi]]),
                -INF, pmax[gi], [f"rampup[{i},{steps[p]}]" for i, p in zip(gi, tp)],
            )
            rows.add(
                np.column_stack([X[gi, tp - 1], X[gi, tp], U[gi, tp], U[gi, tp - 1]]),
                np.column_stack([ones, -ones, rsd[gi] - rdn[gi], pmax[gi] - rsd[gi]]),
                -INF, pmax[gi], [f"rampdn[{i},{steps[p]}]" for i, p in zip(gi, tp)],
            )

    A, rl, ru = rows.matrix(n)
    cost = np.zeros(n)
    if binary:
        cost[lay.x_block] = np.repeat(np.array([g.cost for g in instance.generators]), T)
    lp = LinearProgram(Sense.MIN, cost, A, rl, ru, var_lo, var_hi, lay.names(), tuple(rows.names))
    bins = np.arange(lay.u_block.start, lay.u_block.stop) if binary else np.zeros(0, dtype=int)
    return Region(lp, lay, target_rows, bins)


def build_uc(
    instance: UCInstance,
    loads,
    horizon_k: int | None = None,
    fixed_u=None,
    flow_model: FlowModel | None = None,
    kept_targets=None,
) -> tuple[MixedIntegerProgram, VariableLayout]:
    """The unit-commitment MILP over steps ``1..horizon_k`` (default: all).

    ``fixed_u`` entries become variables with equal bounds.  With
    ``kept_targets`` only those line-limit rows are kept (the reduced problem).
    """
    k = instance.horizon if horizon_k is None else horizon_k
    reg = build_region(instance, loads, k, flow_model, fixed_u=fixed_u, binary=True, kept_targets=kept_targets)
    return MixedIntegerProgram(reg.lp, reg.binary_vars), reg.layout


# --------------------------------------------------------------------------
# screening models


def _check_target(instance, target: ScreeningTarget):
    if not 0 <= target.line < instance.n_lines:
        raise ValidationError("target.line", f"unknown line {target.line}")


def _target_objective(region: Region, target: ScreeningTarget, fm: FlowModel) -> tuple[np.ndarray, Sense]:
    c = np.zeros(region.lp.n_vars)
    F = region.layout.f_cols()[:, target.timestep - region.layout.first_step]
    c[F] = fm.K[target.line]
    return c, (Sense.MAX if target.sense is TargetSense.UPPER else Sense.MIN)


def finish_screen(region: Region, target: ScreeningTarget, fm: FlowModel) -> LinearProgram:
    """Drop the target's own row and attach its flow objective."""
    c, sense = _target_objective(region, target, fm)
    lp = region.lp.with_objective(c, sense)
    row = region.target_rows.get(target)
    return lp.drop_rows([row]) if row is not None else lp


def _check_schedule(schedule: CommitmentSchedule, instance, k, full: bool):
    if schedule.values.shape[0] != instance.n_generators:
        raise ScheduleCoverageError("schedule generator count mismatch")
    if schedule.horizon < k:
        raise ScheduleCoverageError(f"schedule covers {schedule.horizon} steps, need {k}")
    if full:
        missing = set(range(1, k + 1)) - set(schedule.defined_steps)
        if missing:
            raise ScheduleCoverageError(f"schedule undefined at steps {sorted(missing)}")


def region_single(instance, loads, k, fm=None) -> Region:
    return build_region(instance, loads, k, fm, single_step=True)


def region_multi_aware(instance, loads, k, fm=None) -> Region:
    return build_region(instance, loads, k, fm, line_steps={k})


def region_truth(instance, loads, k, schedule: CommitmentSchedule, fm=None) -> Region:
    _check_schedule(schedule, instance, k, full=True)
    return build_region(instance, loads, k, fm, line_steps={k}, fixed_u=schedule)


def region_partial(instance, loads, k, partial: CommitmentSchedule, fm=None) -> Region:
    _check_schedule(partial, instance, k, full=False)
    return build_region(instance, loads, k, fm, line_steps={k}, fixed_u=partial)


def load_box(nominal, r: float):
    if not (np.isfinite(r) and 0 <= r < 1):
        raise InvalidRangeError(f"range r must satisfy 0 <= r < 1, got {r}")
    values = nominal.values if isinstance(nominal, LoadProfile) else np.asarray(nominal, dtype=float)
    return (1 - r) * values, (1 + r) * values


def region_load_range(instance, nominal, r, k, fm=None) -> Region:
    return build_region(instance, None, k, fm, line_steps={k}, load_box=load_box(nominal, r))


def build_screen_single(instance, loads, target: ScreeningTarget, flow_model=None) -> LinearProgram:
    """Target flow extreme at its own step only, commitments relaxed to [0, 1]."""
    fm = flow_model or build_flow_model(instance)
    _check_target(instance, target)
    return finish_screen(region_single(instance, loads, target.timestep, fm), target, fm)


def build_screen_multi_aware(instance, loads, target: ScreeningTarget, flow_model=None) -> LinearProgram:
    """Steps ``1..k`` with ramping; network rows only at ``k``, totals elsewhere."""
    fm = flow_model or build_flow_model(instance)
    _check_target(instance, target)
    return finish_screen(region_multi_aware(instance, loads, target.timestep, fm), target, fm)


def build_screen_truth(instance, loads, target: ScreeningTarget, schedule: CommitmentSchedule, flow_model=None):
    """As the multi-step model with every commitment fixed to ``schedule``."""
    fm = flow_model or build_flow_model(instance)
    _check_target(instance, target)
    return finish_screen(region_truth(instance, loads, target.timestep, schedule, fm), target, fm)


def build_screen_partial(instance, loads, target: ScreeningTarget, partial: CommitmentSchedule, flow_model=None):
    """As the multi-step model with commitments fixed on the schedule's defined steps."""
    fm = flow_model or build_flow_model(instance)
    _check_target(instance, target)
    return finish_screen(region_partial(instance, loads, target.timestep, partial, fm), target, fm)


def build_screen_region(instance, nominal_loads, r: float, target: ScreeningTarget, flow_model=None):
    """As the multi-step model with loads free in ``[(1-r), (1+r)] * nominal``."""
    fm = flow_model or build_flow_model(instance)
    _check_target(instance, target)
    return finish_screen(region_load_range(instance, nominal_loads, r, target.timestep, fm), target, fm)
