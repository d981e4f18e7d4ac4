"""Linear program containers shared by the LP and MILP engines."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp


class Sense(str, enum.Enum):
    MAX = "max"
    MIN = "min"


class Status(str, enum.Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"


@dataclass(frozen=True)
class LPOptions:
    feas_tol: float = 1e-7
    pivot_tol: float = 1e-9
    dual_tol: float = 1e-9
    max_iter: int | None = None
    refactor_interval: int = 50
    backend: str = "native"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``opt c.x  s.t.  row_lower <= A x <= row_upper,  var_lower <= x <= var_upper``.

    Infinite bounds are given as ``-inf``/``+inf``.  ``objective_offset`` is a
    constant added to the reported objective value.
    """

    sense: Sense
    objective: np.ndarray
    A: sp.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray
    var_names: tuple[str, ...] | None = None
    row_names: tuple[str, ...] | None = None
    objective_offset: float = 0.0

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        m, n = A.shape
        obj = np.asarray(self.objective, dtype=float).reshape(-1)
        if obj.shape != (n,):
            raise ValueError(f"objective has length {obj.size}, expected {n}")
        vecs = {}
        for name, size in (("row_lower", m), ("row_upper", m), ("var_lower", n), ("var_upper", n)):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (size,):
                raise ValueError(f"{name} has length {v.size}, expected {size}")
            vecs[name] = v
        if np.any(vecs["row_lower"] > vecs["row_upper"]):
            raise ValueError("row_lower > row_upper")
        if np.any(vecs["var_lower"] > vecs["var_upper"]):
            raise ValueError("var_lower > var_upper")
        if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(obj))):
            raise ValueError("coefficients must be finite")
        if self.var_names is not None and len(self.var_names) != n:
            raise ValueError("var_names length mismatch")
        if self.row_names is not None and len(self.row_names) != m:
            raise ValueError("row_names length mismatch")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "sense", Sense(self.sense))
        for name, v in vecs.items():
            object.__setattr__(self, name, v)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    def with_bounds(self, var_lower=None, var_upper=None) -> "LinearProgram":
        return replace(
            self,
            var_lower=self.var_lower if var_lower is None else var_lower,
            var_upper=self.var_upper if var_upper is None else var_upper,
        )

    def with_objective(self, objective, sense=None) -> "LinearProgram":
        return replace(self, objective=objective, sense=self.sense if sense is None else sense, objective_offset=0.0)

    def drop_rows(self, rows) -> "LinearProgram":
        keep = np.setdiff1d(np.arange(self.n_rows), np.asarray(list(rows), dtype=int))
        return replace(
            self,
            A=self.A[keep],
            row_lower=self.row_lower[keep],
            row_upper=self.row_upper[keep],
            row_names=None if self.row_names is None else tuple(self.row_names[i] for i in keep),
        )

    def evaluate(self, x) -> float:
        return float(self.objective @ x) + self.objective_offset

    def max_violation(self, x) -> float:
        """Largest absolute bound/row violation of ``x``."""
        x = np.asarray(x, dtype=float)
        act = self.A @ x
        viol = [
            np.max(self.row_lower - act, initial=0.0),
            np.max(act - self.row_upper, initial=0.0),
            np.max(self.var_lower - x, initial=0.0),
            np.max(x - self.var_upper, initial=0.0),
        ]
        return float(max(viol))


@dataclass(eq=False)
class LPSolution:
    """Result of an LP solve.

    ``duals`` and ``reduced_costs`` satisfy ``c = A^T duals + reduced_costs``
    for the user's objective ``c`` (in the problem's own sense).  ``ray`` is a
    Farkas multiplier vector over rows for INFEASIBLE and an improving primal
    direction for UNBOUNDED.
    """

    status: Status
    objective_value: float
    primal: np.ndarray
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None = None
    ray: np.ndarray | None = None
    iterations: int = 0
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def dual_objective(problem: LinearProgram, sol: LPSolution) -> float:
    """Dual objective implied by ``sol.duals``/``sol.reduced_costs``.

    A multiplier that pushes against an infinite bound yields ``+-inf``.
    """
    sign = 1.0 if problem.sense is Sense.MIN else -1.0
    total = problem.objective_offset
    # multipliers at round-off level carry no price
    noise = 1e-12 * (1.0 + float(np.max(np.abs(problem.objective), initial=0.0)))
    for mult, lo, hi in (
        (sol.duals, problem.row_lower, problem.row_upper),
        (sol.reduced_costs, problem.var_lower, problem.var_upper),
    ):
        mult = np.asarray(mult)
        # for MIN a positive multiplier prices the lower bound
        use_lo = sign * mult > 0
        bound = np.where(use_lo, lo, hi)
        active = np.abs(mult) > noise
        if np.any(~np.isfinite(bound[active])):
            return -sign * np.inf
        total += float(mult[active] @ bound[active])
    return total


def kkt_residuals(problem: LinearProgram, sol: LPSolution) -> dict:
    """Primal feasibility, dual sign feasibility and complementary slackness."""
    x = sol.primal
    act = problem.A @ x
    sign = 1.0 if problem.sense is Sense.MIN else -1.0
    y = sign * np.asarray(sol.duals)
    d = sign * np.asarray(sol.reduced_costs)
    primal = problem.max_violation(x)
    stat = float(np.max(np.abs(problem.objective - problem.A.T @ sol.duals - sol.reduced_costs), initial=0.0))

    def sign_and_cs(mult, val, lo, hi):
        scale = 1.0 + np.abs(mult)
        # multiplier > 0 must sit at the lower bound, < 0 at the upper bound
        dual_bad = np.where(np.isinf(lo), np.maximum(mult, 0), 0) + np.where(np.isinf(hi), np.maximum(-mult, 0), 0)
        gap_lo = np.where(np.isfinite(lo), val - lo, 0.0)
        gap_hi = np.where(np.isfinite(hi), hi - val, 0.0)
        cs = np.maximum(mult, 0) * gap_lo + np.maximum(-mult, 0) * gap_hi
        return float(np.max(dual_bad, initial=0.0)), float(np.max(cs / scale / (1.0 + np.abs(val)), initial=0.0))

    dr, cr = sign_and_cs(y, act, problem.row_lower, problem.row_upper)
    dv, cv = sign_and_cs(d, x, problem.var_lower, problem.var_upper)
    return {"primal": primal, "dual": max(dr, dv), "stationarity": stat, "complementarity": max(cr, cv)}
