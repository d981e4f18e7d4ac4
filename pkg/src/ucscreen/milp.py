"""Best-first branch-and-bound over the LP engine."""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NotOptimalError, NumericalBreakdownError
from .lp import LinearProgram, LPOptions, Sense, Status, solve_lp
from .model import CommitmentSchedule, UCInstance

log = logging.getLogger(__name__)


class MIPStatus(str, enum.Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    GAP_LIMIT = "GAP_LIMIT"


@dataclass(frozen=True, eq=False)
class MixedIntegerProgram:
    """An LP whose ``binary_vars`` must take values in {0, 1}."""

    base: LinearProgram
    binary_vars: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(list(self.binary_vars), dtype=int))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.base.n_vars):
            raise ValueError("binary variable index out of range")
        if np.any(self.base.var_lower[idx] < 0) or np.any(self.base.var_upper[idx] > 1):
            raise ValueError("binary variables must have bounds within [0, 1]")
        object.__setattr__(self, "binary_vars", idx)

    @property
    def sense(self) -> Sense:
        return self.base.sense


@dataclass(frozen=True)
class MIPOptions:
    integrality_tol: float = 1e-6
    gap_tol: float = 1e-6
    node_limit: int = 10**6
    log_interval: int = 1000
    backend: str = "native"
    lp: LPOptions = field(default_factory=LPOptions)


@dataclass(eq=False)
class MIPSolution:
    """Outcome of :func:`solve_mip`.

    ``bound`` is the best proven bound on the optimum and ``gap`` the relative
    distance ``|incumbent - bound| / max(1, |incumbent|)``.  The native engine
    also records the incumbent history and ``(parent_bound, child_bound)``
    pairs, both in the problem's own sense.
    """

    status: MIPStatus
    objective_value: float
    primal: np.ndarray
    bound: float
    gap: float
    nodes: int = 0
    lp_solves: int = 0
    root_bound: float = np.nan
    incumbent_history: list = field(default_factory=list, repr=False)
    child_bounds: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is MIPStatus.OPTIMAL


def _rel_gap(incumbent, bound):
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


class _BranchAndBound:
    def __init__(self, problem: MixedIntegerProgram, options: MIPOptions):
        self.problem = problem
        self.opts = options
        base = problem.base
        self.sign = 1.0 if base.sense is Sense.MIN else -1.0
        self.bins = problem.binary_vars
        self.lo0 = base.var_lower.copy()
        self.hi0 = base.var_upper.copy()
        self.lp_solves = 0
        self.incumbent = np.inf  # min sense
        self.best_x = None
        self.history = []
        self.child_bounds = []
        self.counter = itertools.count()

    def _solve(self, lo, hi):
        self.lp_solves += 1
        sol = solve_lp(self.problem.base.with_bounds(lo, hi), self.opts.lp)
        if sol.status is Status.UNBOUNDED:
            raise NumericalBreakdownError("LP relaxation is unbounded")
        if not sol.optimal:
            return None, np.inf
        return sol.primal, self.sign * sol.objective_value

    def _fractional(self, x):
        vals = x[self.bins]
        frac = np.abs(vals - np.round(vals))
        return frac

    def _offer(self, x, value, node):
        if value < self.incumbent:
            self.incumbent = value
            self.best_x = x.copy()
            self.history.append((node, value * self.sign))

    def _probe(self, x, node):
        """Fix binaries to a rounding of ``x`` and solve the remaining LP."""
        vals = x[self.bins]
        for guess in (np.round(vals), np.ceil(vals - self.opts.integrality_tol)):
            lo, hi = self.lo0.copy(), self.hi0.copy()
            g = np.clip(guess, lo[self.bins], hi[self.bins])
            lo[self.bins] = hi[self.bins] = g
            px, pv = self._solve(lo, hi)
            if px is not None:
                self._offer(px, pv, node)
                return

    def run(self) -> MIPSolution:
        opts = self.opts
        tol = opts.integrality_tol
        x, root = self._solve(self.lo0, self.hi0)
        if x is None:
            return self._result(MIPStatus.INFEASIBLE, 0, np.inf, np.inf)
        heap = [(root, next(self.counter), self.lo0, self.hi0, x)]
        nodes = 0
        if self._fractional(x).max(initial=0.0) > tol:
            self._probe(x, 0)
        best_bound = root
        while heap:
            best_bound = heap[0][0]
            if _rel_gap(self.incumbent, best_bound) <= opts.gap_tol:
                break
            if nodes >= opts.node_limit:
                return self._result(MIPStatus.GAP_LIMIT, nodes, best_bound, root)
            bound, _, lo, hi, x = heapq.heappop(heap)
            nodes += 1
            if nodes % opts.log_interval == 0:
                log.info(
                    "node=%d bound=%.10g incumbent=%.10g gap=%.3e",
                    nodes, self.sign * bound, self.sign * self.incumbent, _rel_gap(self.incumbent, bound),
                )
            if _rel_gap(self.incumbent, bound) <= opts.gap_tol:
                continue
            frac = self._fractional(x)
            if frac.max(initial=0.0) <= tol:
                self._offer(x, bound, nodes)
                continue
            # most fractional; argmax returns the lowest index on ties
            k = int(np.argmax(frac))
            j = self.bins[k]
            for value in (0.0, 1.0):
                clo, chi = lo.copy(), hi.copy()
                clo[j] = chi[j] = value
                cx, cv = self._solve(clo, chi)
                if cx is None:
                    continue
                self.child_bounds.append((self.sign * bound, self.sign * cv))
                if self._fractional(cx).max(initial=0.0) <= tol:
                    self._offer(cx, cv, nodes)
                elif cv < self.incumbent:
                    heapq.heappush(heap, (cv, next(self.counter), clo, chi, cx))
        else:
            best_bound = self.incumbent
        if self.best_x is None:
            return self._result(MIPStatus.INFEASIBLE, nodes, np.inf, root)
        best_bound = min(best_bound, self.incumbent)
        return self._result(MIPStatus.OPTIMAL, nodes, best_bound, root)

    def _polish(self, x):
        """Round binaries and re-solve the continuous part with them fixed."""
        r = np.round(x[self.bins])
        if np.array_equal(r, x[self.bins]):
            return x
        lo, hi = self.lo0.copy(), self.hi0.copy()
        lo[self.bins] = hi[self.bins] = r
        px, _ = self._solve(lo, hi)
        if px is None:
            x = x.copy()
            x[self.bins] = r
            return x
        return px

    def _result(self, status, nodes, bound_min, root_min):
        base = self.problem.base
        if self.best_x is None:
            x = np.full(base.n_vars, np.nan)
            value = np.inf if base.sense is Sense.MIN else -np.inf
            if status is MIPStatus.INFEASIBLE:
                bound_min = np.inf
            gap = np.inf
        else:
            x = self._polish(self.best_x)
            value = base.evaluate(x)
            gap = _rel_gap(self.incumbent, bound_min)
        return MIPSolution(
            status=status,
            objective_value=value,
            primal=x,
            bound=self.sign * bound_min,
            gap=gap,
            nodes=nodes,
            lp_solves=self.lp_solves,
            root_bound=self.sign * root_min,
            incumbent_history=self.history,
            child_bounds=self.child_bounds,
        )


_HIGHS_OPTIONS = {
    "output_flag": False,
    "mip_heuristic_run_rins": False,
    "mip_heuristic_run_rens": False,
    "mip_heuristic_run_root_reduced_cost": False,
    "mip_allow_restart": False,
}


def _solve_highs(problem: MixedIntegerProgram, options: MIPOptions) -> MIPSolution:
    import highspy

    base = problem.base
    sign = 1.0 if base.sense is Sense.MIN else -1.0
    n = base.n_vars
    h = highspy.Highs()
    for key, value in _HIGHS_OPTIONS.items():
        h.setOptionValue(key, value)
    h.setOptionValue("mip_rel_gap", float(options.gap_tol))
    h.setOptionValue("mip_feasibility_tolerance", float(options.integrality_tol))
    h.setOptionValue("mip_max_nodes", int(min(options.node_limit, 2**31 - 1)))
    A = base.A.tocsc()
    lp = highspy.HighsLp()
    lp.num_col_, lp.num_row_ = n, base.n_rows
    lp.col_cost_ = sign * base.objective
    lp.col_lower_, lp.col_upper_ = base.var_lower, base.var_upper
    lp.row_lower_, lp.row_upper_ = base.row_lower, base.row_upper
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_, lp.a_matrix_.index_, lp.a_matrix_.value_ = A.indptr, A.indices, A.data
    kinds = [highspy.HighsVarType.kContinuous] * n
    for j in problem.binary_vars:
        kinds[j] = highspy.HighsVarType.kInteger
    lp.integrality_ = kinds
    h.passModel(lp)
    h.run()
    status = h.getModelStatus()
    info = h.getInfo()
    MS = highspy.HighsModelStatus
    if status == MS.kInfeasible:
        return MIPSolution(MIPStatus.INFEASIBLE, sign * np.inf, np.full(n, np.nan), sign * np.inf, np.inf)
    if status in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
        raise NumericalBreakdownError("MILP is unbounded or infeasible")
    nodes = int(info.mip_node_count)
    if info.primal_solution_status != 2:  # no feasible point
        if status == MS.kSolutionLimit or status == MS.kIterationLimit or status == MS.kTimeLimit:
            return MIPSolution(MIPStatus.GAP_LIMIT, sign * np.inf, np.full(n, np.nan), -sign * np.inf, np.inf, nodes)
        raise NumericalBreakdownError(f"HiGHS: {h.modelStatusToString(status)}")
    x = np.array(h.getSolution().col_value, dtype=float)
    x[problem.binary_vars] = np.round(x[problem.binary_vars])
    bound = sign * float(info.mip_dual_bound)
    mip_status = MIPStatus.OPTIMAL if status == MS.kOptimal else MIPStatus.GAP_LIMIT
    gap = float(info.mip_gap)
    return MIPSolution(mip_status, base.evaluate(x), x, bound, gap, nodes=nodes)


def solve_mip(problem: MixedIntegerProgram, options: MIPOptions | None = None) -> MIPSolution:
    """Solve ``problem`` to ``options.gap_tol`` relative optimality.

    The native engine is best-first branch-and-bound: nodes are taken in
    order of LP bound (creation order on ties), the most fractional binary
    is branched on (lowest index on ties) and both children are solved
    immediately.  A rounding probe at the root seeds the incumbent.  When the
    node limit is hit the status is GAP_LIMIT with the best incumbent.
    ``backend="highs"`` hands the problem to HiGHS instead.
    """
    options = options or MIPOptions()
    if options.backend == "highs":
        return _solve_highs(problem, options)
    if options.backend != "native":
        raise ValueError(f"unknown MIP backend {options.backend!r}")
    if problem.binary_vars.size == 0:
        sol = solve_lp(problem.base, options.lp)
        if sol.status is Status.UNBOUNDED:
            raise NumericalBreakdownError("LP relaxation is unbounded")
        if not sol.optimal:
            n = problem.base.n_vars
            inf = np.inf if problem.sense is Sense.MIN else -np.inf
            return MIPSolution(MIPStatus.INFEASIBLE, inf, np.full(n, np.nan), inf, np.inf, lp_solves=1)
        v = sol.objective_value
        return MIPSolution(MIPStatus.OPTIMAL, v, sol.primal, v, 0.0, lp_solves=1, root_bound=v)
    return _BranchAndBound(problem, options).run()


def extract_schedule(solution: MIPSolution, instance: UCInstance, layout=None) -> CommitmentSchedule:
    """Commitment matrix of an OPTIMAL UC solution."""
    if solution.status is not MIPStatus.OPTIMAL:
        raise NotOptimalError(f"solution status is {solution.status.value}")
    if layout is None:
        from .formulation import VariableLayout

        layout = VariableLayout(instance.n_generators, instance.n_buses - 1, instance.horizon)
    u = solution.primal[layout.u_block].reshape(layout.n_generators, layout.horizon)
    return CommitmentSchedule(np.round(u).astype(np.int8), provenance="SOLVED")
