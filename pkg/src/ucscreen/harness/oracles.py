"""Brute-force and third-party reference solvers.

None of these route through the package's own formulation or solvers.  The
network is written directly in bus angles (``flow = b (theta_from -
theta_to)``, reference angle zero), ramping in its textbook case form, and
the optimisation is done by HiGHS through :mod:`scipy.optimize` or by
explicit enumeration.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..errors import TooLargeError
from ..formulation import ScreeningTarget, TargetSense
from ..model import CommitmentSchedule, LoadProfile, UCInstance

MAX_BINARIES = 16


# --------------------------------------------------------------------------
# angle-form UC rows


class _Model:
    """Columns ``[u | x | theta | load]``, each generator/bus-major over steps."""

    def __init__(self, instance: UCInstance, T: int, free_load: bool):
        self.inst = instance
        self.T = T
        ng, nb = instance.n_generators, instance.n_buses
        self.ng, self.nb = ng, nb
        self.nu = ng * T
        self.nx = ng * T
        self.nth = nb * T
        self.nl = nb * T if free_load else 0
        self.n = self.nu + self.nx + self.nth + self.nl
        self.rows, self.lo, self.hi = [], [], []

    def u(self, i, t):
        return i * self.T + t

    def x(self, i, t):
        return self.nu + i * self.T + t

    def th(self, b, t):
        return self.nu + self.nx + b * self.T + t

    def ld(self, b, t):
        return self.nu + self.nx + self.nth + b * self.T + t

    def add(self, coefs: dict, lo, hi):
        self.rows.append(coefs)
        self.lo.append(lo)
        self.hi.append(hi)

    def flow(self, line, t) -> dict:
        return {self.th(line.from_bus, t): line.susceptance, self.th(line.to_bus, t): -line.susceptance}

    def matrix(self):
        A = np.zeros((len(self.rows), self.n))
        for r, coefs in enumerate(self.rows):
            for c, v in coefs.items():
                A[r, c] += v
        return A, np.array(self.lo, dtype=float), np.array(self.hi, dtype=float)


def _uc_model(instance: UCInstance, loads, T, skip=None, load_box=None, u_fixed=None):
    """Rows of the UC over steps ``0..T-1`` (zero-based) as an angle model.

    ``u_fixed`` turns the commitments into constants (a pattern) whose
    columns are kept but pinned by their bounds; NaN entries stay free.
    """
    M = _Model(instance, T, load_box is not None)
    gens, lines = instance.generators, instance.lines
    lower = np.zeros(M.n)
    upper = np.full(M.n, np.inf)
    upper[: M.nu] = 1.0
    for i, g in enumerate(gens):
        for t in range(T):
            upper[M.x(i, t)] = g.p_max
    lower[M.nu + M.nx : M.nu + M.nx + M.nth] = -np.inf
    ref = instance.reference_bus
    for t in range(T):
        lower[M.th(ref, t)] = upper[M.th(ref, t)] = 0.0
    if load_box is not None:
        lo_tab, hi_tab = load_box
        for b in range(M.nb):
            for t in range(T):
                lower[M.ld(b, t)] = lo_tab[b, t]
                upper[M.ld(b, t)] = hi_tab[b, t]
    if u_fixed is not None:
        for i in range(M.ng):
            for t in range(T):
                if not np.isnan(u_fixed[i, t]):
                    lower[M.u(i, t)] = upper[M.u(i, t)] = u_fixed[i, t]

    for i, g in enumerate(gens):
        for t in range(T):
            M.add({M.x(i, t): 1.0, M.u(i, t): -g.p_min}, 0.0, np.inf)
            M.add({M.x(i, t): 1.0, M.u(i, t): -g.p_max}, -np.inf, 0.0)
    for t in range(T):
        for ln in lines:
            if skip != (ln.id, TargetSense.UPPER, t):
                M.add(M.flow(ln, t), -np.inf, ln.flow_limit)
            if skip != (ln.id, TargetSense.LOWER, t):
                M.add(M.flow(ln, t), -ln.flow_limit, np.inf)
    for t in range(T):
        for b in range(M.nb):
            row = {}
            for i, g in enumerate(gens):
                if g.bus == b:
                    row[M.x(i, t)] = row.get(M.x(i, t), 0.0) + 1.0
            for ln in lines:
                # power leaving bus b on the line
                sgn = 1.0 if ln.from_bus == b else -1.0 if ln.to_bus == b else 0.0
                if sgn:
                    for c, v in M.flow(ln, t).items():
                        row[c] = row.get(c, 0.0) - sgn * v
            if load_box is not None:
                row[M.ld(b, t)] = -1.0
                M.add(row, 0.0, 0.0)
            else:
                M.add(row, loads[b, t], loads[b, t])
    # ramping: x(t) - x(t-1) <= Rup u(t-1) + Rsu (u(t) - u(t-1)) + pmax (1 - u(t)),
    #          x(t-1) - x(t) <= Rdn u(t) + Rsd (u(t-1) - u(t)) + pmax (1 - u(t-1))
    for i, g in enumerate(gens):
        u0, x0 = float(g.initial_on), g.initial_output
        for t in range(T):
            up = {M.x(i, t): 1.0}
            dn = {M.x(i, t): -1.0}
            up[M.u(i, t)] = g.p_max - g.ramp_startup
            dn[M.u(i, t)] = g.ramp_shutdown - g.ramp_down
            if t == 0:
                rhs_up = g.p_max + x0 - (g.ramp_startup - g.ramp_up) * u0
                rhs_dn = g.p_max - x0 - (g.p_max - g.ramp_shutdown) * u0
            else:
                up[M.x(i, t - 1)] = -1.0
                up[M.u(i, t - 1)] = g.ramp_startup - g.ramp_up
                dn[M.x(i, t - 1)] = 1.0
                dn[M.u(i, t - 1)] = g.p_max - g.ramp_shutdown
                rhs_up = rhs_dn = g.p_max
            M.add(up, -np.inf, rhs_up)
            M.add(dn, -np.inf, rhs_dn)
    A, rl, ru = M.matrix()
    return M, A, rl, ru, lower, upper


def _cost(M: _Model):
    c = np.zeros(M.n)
    for i, g in enumerate(M.inst.generators):
        for t in range(M.T):
            c[M.x(i, t)] = g.cost
    return c


def _values(loads):
    return loads.values if isinstance(loads, LoadProfile) else np.asarray(loads, dtype=float)


# --------------------------------------------------------------------------
# exhaustive UC oracle


@dataclass
class OracleUCResult:
    status: str  # "OPTIMAL" or "INFEASIBLE"
    objective: float
    schedule: CommitmentSchedule | None
    dispatch: np.ndarray | None
    n_optimal: int = 0  # commitment patterns attaining the optimum
    patterns_solved: int = 0
    ties: list = field(default_factory=list, repr=False)

    @property
    def unique(self) -> bool:
        return self.status == "OPTIMAL" and self.n_optimal == 1


def _dispatch_floor(gens, on, demand):
    """Cheapest cost of meeting ``demand`` with the units ``on`` (no network, no ramps)."""
    idx = [i for i in range(len(gens)) if on[i]]
    lo = sum(gens[i].p_min for i in idx)
    hi = sum(gens[i].p_max for i in idx)
    tol = 1e-9 * max(1.0, demand)
    if demand < lo - tol or demand > hi + tol:
        return np.inf
    cost = sum(gens[i].cost * gens[i].p_min for i in idx)
    rest = demand - lo
    for i in sorted(idx, key=lambda i: (gens[i].cost, i)):
        take = min(rest, gens[i].p_max - gens[i].p_min)
        cost += gens[i].cost * take
        rest -= take
        if rest <= 0:
            break
    return cost


def oracle_uc(instance: UCInstance, loads, tol: float = 1e-7, max_binaries: int = MAX_BINARIES) -> OracleUCResult:
    """Optimal UC by enumerating commitment patterns.

    Every pattern is priced by an LP over dispatch and angles with its
    ramping cases enforced.  Patterns are visited in increasing order of a
    per-step dispatch floor (the cheapest way to meet each step's total
    with those units, which is never above the pattern's true cost), and
    the search stops once the floor exceeds the best cost found.  Patterns
    within ``tol`` (relative) of the optimum are all recorded, so ties are
    detected.
    """
    ng, T = instance.n_generators, instance.horizon
    if ng * T > max_binaries:
        raise TooLargeError(f"{ng * T} binaries exceed the oracle limit of {max_binaries}")
    L = _values(loads)[:, :T]
    gens = instance.generators
    patterns = list(itertools.product((0, 1), repeat=ng))
    floors = np.array([[_dispatch_floor(gens, p, L[:, t].sum()) for p in patterns] for t in range(T)])
    if not np.all(np.isfinite(floors).any(axis=1)):
        return OracleUCResult("INFEASIBLE", np.inf, None, None)
    # per-step choices sorted by floor; best-first over the product
    order = [np.argsort(floors[t], kind="stable") for t in range(T)]
    order = [o[np.isfinite(floors[t][o])] for t, o in enumerate(order)]
    vals = [floors[t][order[t]] for t in range(T)]

    M, A, rl, ru, lower, upper = _uc_model(instance, L, T)
    c = _cost(M)
    cons = LinearConstraint(A, rl, ru)
    start = (0,) * T
    heap = [(float(sum(v[0] for v in vals)), start)]
    seen = {start}
    best, best_x, best_u = np.inf, None, None
    ties = []
    solved = 0
    while heap:
        floor, pos = heapq.heappop(heap)
        if floor > best + tol * max(1.0, abs(best)):
            break
        u = np.array([patterns[order[t][pos[t]]] for t in range(T)], dtype=float).T
        lo, hi = lower.copy(), upper.copy()
        lo[: M.nu] = hi[: M.nu] = u.ravel()
        solved += 1
        res = milp(c, constraints=[cons], bounds=Bounds(lo, hi))
        if res.status == 0:
            v = float(res.fun)
            if v < best - tol * max(1.0, abs(v)):
                ties = [(w, uu) for w, uu in ties if w <= v + tol * max(1.0, abs(v))]
                best, best_x, best_u = v, res.x, u
            if v <= best + tol * max(1.0, abs(best)):
                ties.append((v, u))
        for t in range(T):
            if pos[t] + 1 < len(order[t]):
                nxt = pos[:t] + (pos[t] + 1,) + pos[t + 1 :]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (floor - vals[t][pos[t]] + vals[t][pos[t] + 1], nxt))
    if best_x is None:
        return OracleUCResult("INFEASIBLE", np.inf, None, None, 0, solved)
    ties = [(w, uu) for w, uu in ties if w <= best + tol * max(1.0, abs(best))]
    x = best_x[M.nu : M.nu + M.nx].reshape(M.ng, T)
    sched = CommitmentSchedule(best_u.astype(np.int8), provenance="SOLVED")
    return OracleUCResult("OPTIMAL", best, sched, x, len(ties), solved, ties)


# --------------------------------------------------------------------------
# binding oracle


@dataclass
class OracleBindingResult:
    status: str  # "OPTIMAL" or "INFEASIBLE"
    value: float  # extreme target flow; -inf / +inf when the region is empty
    bound: float  # HiGHS dual bound


def oracle_binding(
    instance: UCInstance,
    loads,
    target: ScreeningTarget,
    load_box=None,
    max_binaries: int = 64,
    u_fixed=None,
) -> OracleBindingResult:
    """Extreme flow of the target line over the full UC region without the target row.

    The region keeps every step ``1..T``, the binaries and every other row.
    With ``load_box = (lower, upper)`` the loads are free inside that box.
    ``u_fixed`` is an ``(ng, T)`` array of commitments to pin (NaN = free).
    """
    ng, T = instance.n_generators, instance.horizon
    if ng * T > max_binaries:
        raise TooLargeError(f"{ng * T} binaries exceed the oracle limit of {max_binaries}")
    L = None if load_box is not None else _values(loads)[:, :T]
    box = None if load_box is None else (_values(load_box[0])[:, :T], _values(load_box[1])[:, :T])
    k = target.timestep - 1
    fix = None if u_fixed is None else np.asarray(u_fixed, dtype=float)[:, :T]
    M, A, rl, ru, lower, upper = _uc_model(instance, L, T, skip=(target.line, target.sense, k), load_box=box, u_fixed=fix)
    c = np.zeros(M.n)
    for col, v in M.flow(instance.lines[target.line], k).items():
        c[col] += v
    maximise = target.sense is TargetSense.UPPER
    integrality = np.zeros(M.n)
    integrality[: M.nu] = 1
    res = milp(
        -c if maximise else c,
        constraints=[LinearConstraint(A, rl, ru)],
        integrality=integrality,
        bounds=Bounds(lower, upper),
        options={"mip_rel_gap": 1e-9, "presolve": True},
    )
    empty = -np.inf if maximise else np.inf
    if res.status == 2 or res.x is None:
        if res.status not in (0, 1, 2):
            raise RuntimeError(f"HiGHS failed on the binding oracle: {res.message}")
        return OracleBindingResult("INFEASIBLE", empty, empty)
    value = float(c @ res.x)
    bound = getattr(res, "mip_dual_bound", None)
    bound = value if bound is None else (-float(bound) if maximise else float(bound))
    return OracleBindingResult("OPTIMAL", value, bound)


def certify(instance: UCInstance, loads, target: ScreeningTarget, load_box=None) -> tuple[bool, float]:
    """Whether the oracle confirms the target bound cannot be exceeded.

    Returns ``(ok, excess)`` where ``excess`` is how far the oracle's
    extreme flow goes past the bound (negative when inside).
    """
    limit = instance.lines[target.line].flow_limit
    res = oracle_binding(instance, loads, target, load_box)
    if res.status == "INFEASIBLE":
        return True, -np.inf
    excess = res.value - limit if target.sense is TargetSense.UPPER else -limit - res.value
    return excess <= 1e-6 * max(1.0, limit), excess


# --------------------------------------------------------------------------
# LP vertex enumeration


def vertex_lp(c, A, row_lower, row_upper, var_lower, var_upper, maximize=False):
    """Optimum of a small bounded LP by visiting every basic solution.

    Every finite row side and variable bound becomes an inequality
    ``g . x <= h``; each choice of ``n`` of them with a non-singular system
    gives a candidate vertex, kept if feasible.  Returns ``(value, x)`` or
    ``(None, None)`` when no vertex is feasible.  The feasible set must be
    bounded.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = c.size
    G, h = [], []
    for i in range(A.shape[0]):
        if np.isfinite(row_upper[i]):
            G.append(A[i]); h.append(row_upper[i])
        if np.isfinite(row_lower[i]):
            G.append(-A[i]); h.append(-row_lower[i])
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(var_upper[j]):
            G.append(eye[j]); h.append(var_upper[j])
        if np.isfinite(var_lower[j]):
            G.append(-eye[j]); h.append(-var_lower[j])
    G, h = np.array(G), np.array(h)
    best, best_x = None, None
    scale = 1.0 + np.abs(h)
    for subset in itertools.combinations(range(len(h)), n):
        S = G[list(subset)]
        if abs(np.linalg.det(S)) < 1e-10:
            continue
        x = np.linalg.solve(S, h[list(subset)])
        if np.all(G @ x <= h + 1e-9 * scale):
            v = float(c @ x)
            if best is None or (v > best if maximize else v < best):
                best, best_x = v, x
    return best, best_x


def runner_up(instance: UCInstance, loads, schedule: CommitmentSchedule) -> float:
    """Best cost over commitments other than ``schedule`` (``inf`` if none).

    Solved by HiGHS with a no-good cut on the binaries.  Comparing the
    result with the optimum tells whether an optimal commitment is unique
    on instances too large for :func:`oracle_uc`.
    """
    T = instance.horizon
    L = _values(loads)[:, :T]
    M, A, rl, ru, lower, upper = _uc_model(instance, L, T)
    u = np.asarray(schedule.values, dtype=float).ravel()
    # sum over u*=1 of (1 - u) + sum over u*=0 of u >= 1
    cut = np.zeros(M.n)
    cut[: M.nu] = np.where(u > 0.5, -1.0, 1.0)
    rhs = 1.0 - float((u > 0.5).sum())
    integrality = np.zeros(M.n)
    integrality[: M.nu] = 1
    res = milp(
        _cost(M),
        constraints=[LinearConstraint(A, rl, ru), LinearConstraint(cut[None, :], rhs, np.inf)],
        integrality=integrality,
        bounds=Bounds(lower, upper),
        options={"mip_rel_gap": 1e-9},
    )
    if res.x is None:
        return np.inf
    return float(res.fun)
