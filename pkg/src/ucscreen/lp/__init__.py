"""LP engine: bounded-variable primal simplex plus an optional HiGHS backend."""

from __future__ import annotations

import io

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ..errors import NumericalBreakdownError
from .problem import (
    LinearProgram,
    LPOptions,
    LPSolution,
    Sense,
    Status,
    dual_objective,
    kkt_residuals,
)
from .simplex import BoundedSimplex

__all__ = [
    "LinearProgram",
    "LPOptions",
    "LPSolution",
    "LPSession",
    "Sense",
    "Status",
    "dual_objective",
    "kkt_residuals",
    "solve_lp",
    "solve_lp_restricted",
    "write_lp",
]


class _Presolved:
    """Fixed-variable substitution and empty row/column removal."""

    def __init__(self, problem: LinearProgram, cost_min: np.ndarray | None, feas_tol: float):
        self.problem = problem
        A = problem.A.tocsc()
        n = problem.n_vars
        lo, hi = problem.var_lower, problem.var_upper
        fixed = lo == hi
        self.fixed_vals = np.where(fixed, lo, 0.0)
        shift = A @ self.fixed_vals
        rl = problem.row_lower - shift
        ru = problem.row_upper - shift

        col_nnz = np.diff(A.indptr)
        live = ~fixed
        empty_col = live & (col_nnz == 0) if cost_min is not None else np.zeros(n, bool)
        self.keep_cols = np.flatnonzero(live & ~empty_col)
        self.empty_cols = np.flatnonzero(empty_col)
        Ak = A[:, self.keep_cols].tocsr()
        row_nnz = np.diff(Ak.indptr)
        empty_rows = row_nnz == 0
        self.keep_rows = np.flatnonzero(~empty_rows)
        self.infeasible_row = None
        for i in np.flatnonzero(empty_rows):
            if rl[i] > feas_tol * (1 + abs(rl[i])) or ru[i] < -feas_tol * (1 + abs(ru[i])):
                self.infeasible_row = (i, 1.0 if rl[i] > 0 else -1.0)
                break
        self.A = Ak[self.keep_rows]
        self.rl = rl[self.keep_rows]
        self.ru = ru[self.keep_rows]
        self.lo = lo[self.keep_cols]
        self.hi = hi[self.keep_cols]

        # empty columns go to their cheapest bound
        self.empty_vals = np.zeros(len(self.empty_cols))
        self.unbounded_col = None
        if cost_min is not None:
            for k, j in enumerate(self.empty_cols):
                c = cost_min[j]
                if c > 0:
                    v = lo[j]
                elif c < 0:
                    v = hi[j]
                else:
                    v = lo[j] if np.isfinite(lo[j]) else (hi[j] if np.isfinite(hi[j]) else 0.0)
                if not np.isfinite(v):
                    self.unbounded_col = (j, -np.sign(c))
                    v = 0.0
                self.empty_vals[k] = v

    def expand(self, x_red):
        x = self.fixed_vals.copy()
        x[self.keep_cols] = x_red
        x[self.empty_cols] = self.empty_vals
        return x

    def expand_rows(self, y_red):
        y = np.zeros(self.problem.n_rows)
        y[self.keep_rows] = y_red
        return y


def _finish(problem, status, x, y_min, ray=None, iterations=0, basis=None):
    """Package a min-sense result in the user's sense."""
    sign = 1.0 if problem.sense is Sense.MIN else -1.0
    if status is Status.OPTIMAL:
        y = sign * y_min
        d = problem.objective - problem.A.T @ y
        return LPSolution(status, problem.evaluate(x), x, y, d, None, iterations, basis)
    value = np.nan
    if status is Status.UNBOUNDED:
        value = np.inf if problem.sense is Sense.MAX else -np.inf
    elif status is Status.INFEASIBLE:
        value = -np.inf if problem.sense is Sense.MAX else np.inf
    n, m = problem.n_vars, problem.n_rows
    return LPSolution(
        status, value, np.full(n, np.nan) if x is None else x, np.zeros(m), np.zeros(n), ray, iterations, basis
    )


def _bound_scale(problem):
    b = np.concatenate([problem.row_lower, problem.row_upper, problem.var_lower, problem.var_upper])
    return 1.0 + float(np.max(np.abs(b[np.isfinite(b)]), initial=0.0))


def _violation(problem, x, skip_rows=()):
    act = problem.A @ x
    rv = np.maximum(problem.row_lower - act, act - problem.row_upper)
    if len(skip_rows):
        rv[list(skip_rows)] = 0.0
    vv = np.maximum(problem.var_lower - x, x - problem.var_upper)
    return float(max(np.max(rv, initial=0.0), np.max(vv, initial=0.0)))


def _box_sup(coef, lo, hi):
    """``max coef . v`` over ``lo <= v <= hi`` (zero coefficients ignore infinite bounds)."""
    with np.errstate(invalid="ignore"):
        terms = np.where(coef > 0, coef * hi, np.where(coef < 0, coef * lo, 0.0))
    return float(np.sum(terms))


def _proves_infeasible(problem, y, tol):
    """Whether row multipliers ``y`` certify that ``problem`` has no feasible point.

    For feasible ``x`` with ``s = A x`` in the row box, ``y . (A x - s) = 0``;
    a sign of that expression fixed over the boxes rules out every point.
    """
    yA = problem.A.T @ y
    # round-off on free columns would otherwise make every sup infinite
    noise = 1e-9 * max(1.0, float(np.max(np.abs(y), initial=0.0)) * float(abs(problem.A).max()) if problem.A.nnz else 0.0)
    yA[np.abs(yA) <= noise] = 0.0
    hi = _box_sup(yA, problem.var_lower, problem.var_upper) + _box_sup(-y, problem.row_lower, problem.row_upper)
    lo = -(_box_sup(-yA, problem.var_lower, problem.var_upper) + _box_sup(y, problem.row_lower, problem.row_upper))
    return hi < -tol or lo > tol


def _check_primal(problem, x, options):
    scale = _bound_scale(problem)
    viol = _violation(problem, x)
    if viol > 10 * options.feas_tol * scale:
        raise NumericalBreakdownError(f"final primal infeasibility {viol:.3e} exceeds tolerance")


def _solve_native(problem: LinearProgram, options: LPOptions) -> LPSolution:
    sign = 1.0 if problem.sense is Sense.MIN else -1.0
    cost_min = sign * problem.objective
    pre = _Presolved(problem, cost_min, options.feas_tol)
    if pre.infeasible_row is not None:
        i, s = pre.infeasible_row
        ray = np.zeros(problem.n_rows)
        ray[i] = s
        return _finish(problem, Status.INFEASIBLE, None, None, ray)
    n_red = len(pre.keep_cols)
    if pre.A.shape[0] == 0:
        # only box constraints remain
        cr = cost_min[pre.keep_cols]
        x_red = np.where(cr > 0, pre.lo, np.where(cr < 0, pre.hi, np.where(np.isfinite(pre.lo), pre.lo, np.where(np.isfinite(pre.hi), pre.hi, 0.0))))
        if not np.all(np.isfinite(x_red)) or pre.unbounded_col is not None:
            ray = np.zeros(problem.n_vars)
            bad = np.flatnonzero(~np.isfinite(x_red))
            if len(bad):
                ray[pre.keep_cols[bad[0]]] = -np.sign(cr[bad[0]])
            else:
                ray[pre.unbounded_col[0]] = pre.unbounded_col[1]
            return _finish(problem, Status.UNBOUNDED, None, None, ray)
        x = pre.expand(x_red)
        return _finish(problem, Status.OPTIMAL, x, np.zeros(problem.n_rows))

    solver = BoundedSimplex(pre.A, pre.rl, pre.ru, pre.lo, pre.hi, options)
    outcome = solver.optimize(cost_min[pre.keep_cols])
    if outcome == "infeasible":
        return _finish(problem, Status.INFEASIBLE, None, None, pre.expand_rows(solver.farkas), solver.iterations)
    if outcome == "unbounded" or pre.unbounded_col is not None:
        ray = np.zeros(problem.n_vars)
        if outcome == "unbounded":
            ray[pre.keep_cols] = solver.unbounded_dir[:n_red]
        else:
            ray[pre.unbounded_col[0]] = pre.unbounded_col[1]
        return _finish(problem, Status.UNBOUNDED, None, None, ray, solver.iterations)
    x = pre.expand(solver.primal)
    _check_primal(problem, x, options)
    return _finish(problem, Status.OPTIMAL, x, pre.expand_rows(solver.row_duals), None, solver.iterations, solver.basis.copy())


def _solve_highs(problem: LinearProgram, options: LPOptions) -> LPSolution:
    sign = 1.0 if problem.sense is Sense.MIN else -1.0
    A = problem.A
    rl, ru = problem.row_lower, problem.row_upper
    eq = rl == ru
    up = ~eq & np.isfinite(ru)
    lo = ~eq & np.isfinite(rl)
    A_ub = sp.vstack([A[up], -A[lo]]).tocsr()
    b_ub = np.concatenate([ru[up], -rl[lo]])
    bounds = np.column_stack([problem.var_lower, problem.var_upper])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b) for a, b in bounds]
    res = linprog(
        sign * problem.objective,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A[eq] if eq.any() else None,
        b_eq=rl[eq] if eq.any() else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": options.feas_tol, "dual_feasibility_tolerance": options.feas_tol},
    )
    if res.status == 2:
        return _finish(problem, Status.INFEASIBLE, None, None)
    if res.status == 3:
        return _finish(problem, Status.UNBOUNDED, None, None)
    if res.status != 0:
        raise NumericalBreakdownError(f"HiGHS: {res.message}")
    y = np.zeros(problem.n_rows)
    if eq.any():
        y[eq] += res.eqlin.marginals
    if A_ub.shape[0]:
        mu = res.ineqlin.marginals
        n_up = int(up.sum())
        y[up] += mu[:n_up]
        y[lo] -= mu[n_up:]
    return _finish(problem, Status.OPTIMAL, np.asarray(res.x, dtype=float), y, None, int(res.nit))


def solve_lp(problem: LinearProgram, options: LPOptions | None = None) -> LPSolution:
    """Solve ``problem``.

    ``options.backend`` selects ``"native"`` (bounded simplex, default) or
    ``"highs"``.  Raises NumericalBreakdownError / IterationLimitError.
    """
    options = options or LPOptions()
    if options.backend == "highs":
        return _solve_highs(problem, options)
    if options.backend != "native":
        raise ValueError(f"unknown LP backend {options.backend!r}")
    return _solve_native(problem, options)


def solve_lp_restricted(problem: LinearProgram, fixed: dict, options: LPOptions | None = None) -> LPSolution:
    """Solve with ``var_lower = var_upper = value`` for every ``var -> value`` in ``fixed``.

    A value outside the variable's bounds makes the problem INFEASIBLE.
    """
    lo = problem.var_lower.copy()
    hi = problem.var_upper.copy()
    for j, v in fixed.items():
        if v < lo[j] or v > hi[j]:
            ray = np.zeros(problem.n_rows)
            return _finish(problem, Status.INFEASIBLE, None, None, ray)
        lo[j] = hi[j] = v
    return solve_lp(problem.with_bounds(lo, hi), options)


class LPSession:
    """Optimise several objectives over one feasible region.

    Phase 1 runs once; every later ``solve`` restarts phase 2 from the
    previous optimal basis.  Only the native backend keeps state; with
    ``backend="highs"`` each call is an independent solve.
    """

    def __init__(self, problem: LinearProgram, options: LPOptions | None = None):
        self.problem = problem
        self.options = options or LPOptions()
        self._pre = None
        self._solver = None
        if self.options.backend == "native":
            self._pre = _Presolved(problem, None, self.options.feas_tol)
            if self._pre.infeasible_row is None and self._pre.A.shape[0]:
                self._solver = BoundedSimplex(
                    self._pre.A, self._pre.rl, self._pre.ru, self._pre.lo, self._pre.hi, self.options
                )
        self._scale = _bound_scale(problem)
        self._ray = None

    @property
    def region_feasible(self) -> bool:
        """Whether the full region (no rows dropped) is non-empty."""
        if self._solver is None:
            return self._pre is None or self._pre.infeasible_row is None
        if self._solver.feasible is None:
            self._solver._phase1()
        return bool(self._solver.feasible)

    def solve(self, objective, sense=Sense.MAX, drop_rows=(), duals: bool = True) -> LPSolution:
        """Optimise ``objective`` over the region with ``drop_rows`` removed.

        The returned solution refers to the problem without ``drop_rows``;
        their duals are reported as zero.  ``duals=False`` skips the dual
        bookkeeping (``duals``/``reduced_costs`` are then ``None``).
        """
        drop_rows = list(drop_rows)
        sense = Sense(sense)
        objective = np.asarray(objective, dtype=float)
        if self._solver is None or not self.region_feasible:
            problem = self.problem.with_objective(objective, sense)
            y = self._region_ray()
            if y is not None:
                # the region's certificate survives dropping rows it does not use
                y = y.copy()
                y[drop_rows] = 0.0
                if _proves_infeasible(self.problem, y, 1e-9 * self._scale):
                    return _finish(problem, Status.INFEASIBLE, None, None, y)
            return self._cold(problem, drop_rows)
        pre = self._pre
        pos = np.searchsorted(pre.keep_rows, drop_rows)
        red = [int(p) for p, r in zip(pos, drop_rows) if p < len(pre.keep_rows) and pre.keep_rows[p] == r]
        sign = 1.0 if sense is Sense.MIN else -1.0
        solver = self._solver
        before = solver.iterations
        token = solver.relax_rows(red) if red else None
        try:
            outcome = solver.optimize(sign * objective[pre.keep_cols])
            if outcome == "unbounded":
                ray = np.zeros(self.problem.n_vars)
                ray[pre.keep_cols] = solver.unbounded_dir[: len(pre.keep_cols)]
                problem = self.problem.with_objective(objective, sense)
                return _finish(problem, Status.UNBOUNDED, None, None, ray, solver.iterations - before)
            x = pre.expand(solver.primal)
            y = pre.expand_rows(solver.row_duals) if duals else None
        finally:
            if token is not None:
                solver.unrelax_rows(token)
        iters = solver.iterations - before
        viol = _violation(self.problem, x, drop_rows)
        if viol > 10 * self.options.feas_tol * self._scale:
            raise NumericalBreakdownError(f"final primal infeasibility {viol:.3e} exceeds tolerance")
        if not duals:
            return LPSolution(Status.OPTIMAL, float(objective @ x), x, None, None, None, iters)
        y[drop_rows] = 0.0
        return _finish(self.problem.with_objective(objective, sense), Status.OPTIMAL, x, y, None, iters)

    def _region_ray(self):
        """Infeasibility certificate of the full region, or ``None``."""
        if self._ray is None and self._solver is not None and self._solver.farkas is not None:
            self._ray = self._pre.expand_rows(self._solver.farkas)
        elif self._ray is None and self._pre is not None and self._pre.infeasible_row is not None:
            i, sgn = self._pre.infeasible_row
            self._ray = np.zeros(self.problem.n_rows)
            self._ray[i] = sgn
        if self._ray is None:
            sol = solve_lp(self.problem.with_objective(np.zeros(self.problem.n_vars), Sense.MIN), self.options)
            ok = sol.status is Status.INFEASIBLE and sol.ray is not None
            self._ray = sol.ray if ok else False
        return None if self._ray is False else self._ray

    def _cold(self, problem, drop_rows):
        if not drop_rows:
            return solve_lp(problem, self.options)
        sol = solve_lp(problem.drop_rows(drop_rows), self.options)
        keep = np.setdiff1d(np.arange(problem.n_rows), drop_rows)
        y = np.zeros(problem.n_rows)
        if sol.optimal:
            y[keep] = sol.duals
        sol.duals = y
        return sol


def _fmt(v: float) -> str:
    return repr(float(v))


def write_lp(problem: LinearProgram, fh=None, integer_vars=()) -> str:
    """Render ``problem`` in CPLEX LP text format.

    Columns are named ``var_names`` (default ``x<j>``) and rows ``row_names``
    (default ``r<i>``).  A ranged row ``r`` becomes ``r_lo`` and ``r_hi``.
    """
    vn = problem.var_names or tuple(f"x{j}" for j in range(problem.n_vars))
    rn = problem.row_names or tuple(f"r{i}" for i in range(problem.n_rows))
    clean = lambda s: "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in s)  # noqa: E731
    vn = [clean(s) for s in vn]
    rn = [clean(s) for s in rn]

    def expr(coefs, idx):
        parts = []
        for c, j in zip(coefs, idx):
            parts.append(f"{'-' if c < 0 else '+'} {_fmt(abs(c))} {vn[j]}")
        text = " ".join(parts) or "0 " + vn[0]
        return text[2:] if text.startswith("+ ") else text

    out = io.StringIO()
    out.write("Maximize\n" if problem.sense is Sense.MAX else "Minimize\n")
    nz = np.flatnonzero(problem.objective)
    out.write(f" obj: {expr(problem.objective[nz], nz)}\n")
    out.write("Subject To\n")
    A = problem.A.tocsr()
    for i in range(problem.n_rows):
        lo, hi = problem.row_lower[i], problem.row_upper[i]
        s, e = A.indptr[i], A.indptr[i + 1]
        body = expr(A.data[s:e], A.indices[s:e])
        if lo == hi:
            out.write(f" {rn[i]}: {body} = {_fmt(lo)}\n")
            continue
        if np.isfinite(lo) and np.isfinite(hi):
            out.write(f" {rn[i]}_lo: {body} >= {_fmt(lo)}\n")
            out.write(f" {rn[i]}_hi: {body} <= {_fmt(hi)}\n")
        elif np.isfinite(lo):
            out.write(f" {rn[i]}: {body} >= {_fmt(lo)}\n")
        elif np.isfinite(hi):
            out.write(f" {rn[i]}: {body} <= {_fmt(hi)}\n")
    out.write("Bounds\n")
    for j in range(problem.n_vars):
        lo, hi = problem.var_lower[j], problem.var_upper[j]
        if lo == hi:
            out.write(f" {vn[j]} = {_fmt(lo)}\n")
        elif not np.isfinite(lo) and not np.isfinite(hi):
            out.write(f" {vn[j]} free\n")
        else:
            lo_s = _fmt(lo) if np.isfinite(lo) else "-inf"
            hi_s = _fmt(hi) if np.isfinite(hi) else "+inf"
            out.write(f" {lo_s} <= {vn[j]} <= {hi_s}\n")
    ints = list(integer_vars)
    if ints:
        out.write("Binaries\n")
        out.write(" " + " ".join(vn[j] for j in ints) + "\n")
    out.write("End\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text
