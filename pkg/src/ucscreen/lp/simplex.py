"""Bounded-variable revised primal simplex.

Rows are turned into equalities with one logical variable each,
``A x - s = 0`` with ``row_lower <= s <= row_upper``, so every variable
(structural or logical) simply carries a box.  Phase 1 adds an artificial
column for each row whose starting activity violates its bounds and
minimises their sum; phase 2 minimises the true cost from the resulting
feasible basis.

Pricing is Dantzig (largest reduced-cost magnitude, lowest index on ties).
After ``2 * n_vars`` consecutive degenerate pivots the phase switches to
Bland's rule.  The ratio test is Harris's two-pass test in Dantzig mode and
the textbook minimum ratio with lowest-index tie-break in Bland mode.

The basis inverse is kept either as an explicit dense matrix (small bases)
or as a sparse LU with a product-form eta file, refactorised every
``refactor_interval`` updates.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import IterationLimitError, NumericalBreakdownError
from .problem import LPOptions

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3

DENSE_LIMIT = 400


class _DenseInverse:
    def __init__(self, W, basis):
        self.W = W
        self.refactor(basis)

    def refactor(self, basis):
        B = self.W[:, basis].toarray()
        try:
            lu, piv = sla.lu_factor(B, check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise NumericalBreakdownError(f"basis factorisation failed: {exc}") from exc
        diag = np.abs(np.diag(lu))
        if diag.size and diag.min() <= 1e-11 * max(1.0, diag.max()):
            raise NumericalBreakdownError("singular basis matrix")
        self.Binv = sla.lu_solve((lu, piv), np.eye(len(basis)), check_finite=False)
        self.n_updates = 0

    def ftran(self, v):
        return self.Binv @ v

    def btran(self, v):
        return v @ self.Binv

    def update(self, p, alpha):
        row = self.Binv[p] / alpha[p]
        a = alpha.copy()
        a[p] = 0.0
        self.Binv -= np.outer(a, row)
        self.Binv[p] = row
        self.n_updates += 1


class _SparseLU:
    def __init__(self, W, basis):
        self.W = W
        self.refactor(basis)

    def refactor(self, basis):
        B = self.W[:, basis].tocsc()
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalBreakdownError(f"basis factorisation failed: {exc}") from exc
        udiag = np.abs(self.lu.U.diagonal())
        if udiag.size and udiag.min() <= 1e-11 * max(1.0, udiag.max()):
            raise NumericalBreakdownError("singular basis matrix")
        self.etas = []
        self.n_updates = 0

    def ftran(self, v):
        w = self.lu.solve(np.asarray(v, dtype=float))
        for p, a in self.etas:
            wp = w[p] / a[p]
            w -= a * wp
            w[p] = wp
        return w

    def btran(self, v):
        c = np.array(v, dtype=float)
        for p, a in reversed(self.etas):
            c[p] = (c[p] - (a @ c - a[p] * c[p])) / a[p]
        return self.lu.solve(c, trans="T")

    def update(self, p, alpha):
        self.etas.append((p, alpha.copy()))
        self.n_updates += 1


class BoundedSimplex:
    """Stateful solver over a fixed feasible region.

    The region is ``row_lower <= A x <= row_upper``, ``lower <= x <= upper``.
    ``optimize(cost)`` minimises ``cost . x``; later calls with another cost
    restart phase 2 from the previous optimal basis.
    """

    def __init__(self, A, row_lower, row_upper, lower, upper, options: LPOptions | None = None):
        self.opts = options or LPOptions()
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        self.A = A
        self.row_lower = np.asarray(row_lower, dtype=float)
        self.row_upper = np.asarray(row_upper, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.iterations = 0
        self.feasible = None  # unknown until phase 1 has run
        self.farkas = None
        n_total = self.n + self.m
        self.max_iter = self.opts.max_iter or 20 * n_total + 10000

    # ------------------------------------------------------------------
    def _setup_phase1(self):
        m, n = self.m, self.n
        ftol = self.opts.feas_tol
        lo, hi = self.lower, self.upper
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        status = np.where(np.isfinite(lo), AT_LOWER, np.where(np.isfinite(hi), AT_UPPER, AT_ZERO))
        act = self.A @ x
        below = act < self.row_lower - ftol * (1 + np.abs(self.row_lower))
        above = act > self.row_upper + ftol * (1 + np.abs(self.row_upper))
        need = np.flatnonzero(below | above)
        s = act.copy()
        s_status = np.full(m, BASIC)
        s[below] = self.row_lower[below]
        s_status[below] = AT_LOWER
        s[above] = self.row_upper[above]
        s_status[above] = AT_UPPER
        art_val = np.abs(s[need] - act[need])
        sigma = np.sign(s[need] - act[need])

        k = len(need)
        cols = [self.A, -sp.identity(m, format="csc")]
        if k:
            cols.append(sp.csc_matrix((sigma, (need, np.arange(k))), shape=(m, k)))
        self.W = sp.hstack(cols, format="csc")
        self.WT = self.W.T.tocsr()
        self._Wp, self._Wi, self._Wx = self.W.indptr, self.W.indices, self.W.data
        self.lo = np.concatenate([lo, self.row_lower, np.zeros(k)])
        self.hi = np.concatenate([hi, self.row_upper, np.full(k, np.inf)])
        self.x = np.concatenate([x, s, art_val])
        self.status = np.concatenate([status, s_status, np.full(k, BASIC)])
        basis = np.arange(n, n + m)
        basis[need] = n + m + np.arange(k)
        self.basis = basis
        self.n_art = k
        self.art_start = n + m
        self.factor = (_DenseInverse if m <= DENSE_LIMIT else _SparseLU)(self.W, self.basis)
        finite = np.abs(self.x[np.isfinite(self.x)])
        self._scale = 1.0 + float(np.max(finite, initial=0.0))
        # structurals must sit exactly at the bound their status names
        return k

    def _column(self, q):
        col = np.zeros(self.m)
        s, e = self._Wp[q], self._Wp[q + 1]
        col[self._Wi[s:e]] = self._Wx[s:e]
        return col

    def _residual(self):
        return float(np.max(np.abs(self.W @ self.x), initial=0.0))

    def _recompute_basics(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.factor.ftran(-(self.W @ xn))

    def _refactor(self):
        self.factor.refactor(self.basis)
        self._recompute_basics()

    # ------------------------------------------------------------------
    def _iterate(self, cost):
        """Primal simplex on the current basis; returns 'optimal' or 'unbounded'."""
        opts = self.opts
        ptol, ftol = opts.pivot_tol, opts.feas_tol
        dtol = opts.dual_tol * max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        lo, hi = self.lo, self.hi
        movable = lo < hi
        bland = False
        degenerate = 0
        degen_limit = 2 * max(self.n, 1)
        verified = False
        self.unbounded_dir = None
        while True:
            if self.iterations >= self.max_iter:
                raise IterationLimitError(f"simplex exceeded {self.max_iter} iterations")
            if self.factor.n_updates >= opts.refactor_interval:
                self._refactor()
            y = self.factor.btran(cost[self.basis])
            d = cost - self.WT @ y
            st = self.status
            inc = movable & ((st == AT_LOWER) | (st == AT_ZERO)) & (d < -dtol)
            dec = movable & ((st == AT_UPPER) | (st == AT_ZERO)) & (d > dtol)
            elig = inc | dec
            if not elig.any():
                if verified or (self.factor.n_updates == 0 or self._residual() <= 1e-9 * self._scale):
                    self.y, self.d = y, d
                    return "optimal"
                # drifted: confirm on a fresh factorisation
                self._refactor()
                verified = True
                continue
            verified = False
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if d[q] < 0 else -1.0

            alpha = self.factor.ftran(self._column(q))
            delta = -direction * alpha
            basis = self.basis
            xB = self.x[basis]
            lB, uB = lo[basis], hi[basis]
            falling = (delta < -ptol) & np.isfinite(lB)
            rising = (delta > ptol) & np.isfinite(uB)
            exact = np.full(self.m, np.inf)
            exact[falling] = (xB[falling] - lB[falling]) / -delta[falling]
            exact[rising] = (uB[rising] - xB[rising]) / delta[rising]
            flip = hi[q] - lo[q]

            if bland:
                theta_max = float(exact.min(initial=np.inf))
                cand = np.flatnonzero(exact <= theta_max + 1e-12 * (1 + abs(theta_max))) if np.isfinite(theta_max) else []
                p = int(cand[np.argmin(basis[cand])]) if len(cand) else -1
            else:
                relaxed = np.full(self.m, np.inf)
                tl = ftol * (1 + np.abs(lB[falling]))
                tu = ftol * (1 + np.abs(uB[rising]))
                relaxed[falling] = (xB[falling] - lB[falling] + tl) / -delta[falling]
                relaxed[rising] = (uB[rising] - xB[rising] + tu) / delta[rising]
                theta_max = float(relaxed.min(initial=np.inf))
                if np.isfinite(theta_max):
                    cand = np.flatnonzero(exact <= theta_max)
                    p = int(cand[np.argmax(np.abs(delta[cand]))])
                else:
                    p = -1

            if p < 0 and not np.isfinite(flip):
                dirn = np.zeros_like(self.x)
                dirn[q] = direction
                dirn[basis] = delta
                self.unbounded_dir = dirn
                self.y, self.d = y, d
                return "unbounded"

            self.iterations += 1
            if p < 0 or flip <= exact[p]:
                theta = flip
                self.x[basis] += theta * delta
                if self.status[q] == AT_LOWER or (self.status[q] == AT_ZERO and direction > 0):
                    self.x[q], self.status[q] = hi[q], AT_UPPER
                else:
                    self.x[q], self.status[q] = lo[q], AT_LOWER
            else:
                if abs(alpha[p]) < ptol:
                    raise NumericalBreakdownError(f"pivot {alpha[p]:.3e} below pivot tolerance")
                theta = max(float(exact[p]), 0.0)
                self.x[basis] += theta * delta
                self.x[q] += direction * theta
                leave = basis[p]
                if delta[p] < 0:
                    self.x[leave], self.status[leave] = lB[p], AT_LOWER
                else:
                    self.x[leave], self.status[leave] = uB[p], AT_UPPER
                basis[p] = q
                self.status[q] = BASIC
                self.factor.update(p, alpha)

            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= degen_limit:
                    bland = True
            else:
                degenerate = 0

    def _drive_out_artificials(self):
        n_real = self.art_start
        for p in range(self.m):
            j = self.basis[p]
            if j < n_real:
                continue
            e = np.zeros(self.m)
            e[p] = 1.0
            rho = self.factor.btran(e)
            row = self.WT[:n_real] @ rho
            row[self.status[:n_real] == BASIC] = 0.0
            row[self.lo[:n_real] == self.hi[:n_real]] = 0.0
            q = int(np.argmax(np.abs(row)))
            if abs(row[q]) <= 1e-7:
                continue  # redundant row; artificial stays basic at zero
            alpha = self.factor.ftran(self._column(q))
            self.status[j] = AT_LOWER
            self.x[j] = 0.0
            self.basis[p] = q
            self.status[q] = BASIC
            self.factor.update(p, alpha)
            self._refactor()

    def _phase1(self):
        k = self._setup_phase1()
        if k:
            cost1 = np.zeros(self.W.shape[1])
            cost1[self.art_start:] = 1.0
            self._iterate(cost1)
            infeas = float(self.x[self.art_start:].sum())
            scale = 1.0 + float(np.max(np.abs(np.concatenate([self.row_lower, self.row_upper])[np.isfinite(np.concatenate([self.row_lower, self.row_upper]))]), initial=0.0))
            if infeas > self.opts.feas_tol * scale:
                self.feasible = False
                self.farkas = self._farkas(self.y)
                return False
            self.hi[self.art_start:] = 0.0
            self.x[self.art_start:] = np.minimum(self.x[self.art_start:], 0.0)
            self._drive_out_artificials()
            self._refactor()
        self.feasible = True
        return True

    def _farkas(self, y):
        """Orient ``y`` so that ``sup_{box} y.(A x - s) < 0`` certifies infeasibility."""
        yA = self.A.T @ y

        def sup(coef, lo, hi):
            return float(np.sum(np.where(coef > 0, coef * hi, np.where(coef < 0, coef * lo, 0.0))))

        with np.errstate(invalid="ignore"):
            up = sup(yA, self.lower, self.upper) + sup(-y, self.row_lower, self.row_upper)
            down = sup(-yA, self.lower, self.upper) + sup(y, self.row_lower, self.row_upper)
        if up < 0 or not (down < 0):
            return y
        return -y

    # ------------------------------------------------------------------
    def optimize(self, cost):
        """Minimise ``cost . x``; returns 'optimal', 'infeasible' or 'unbounded'."""
        if self.feasible is None:
            self._phase1()
        if not self.feasible:
            return "infeasible"
        full = np.zeros(self.W.shape[1])
        full[: self.n] = cost
        outcome = self._iterate(full)
        self.last_cost = full
        return outcome

    def snapshot(self):
        f = self.factor
        fstate = f.Binv.copy() if isinstance(f, _DenseInverse) else (f.lu, list(f.etas))
        return (self.x.copy(), self.status.copy(), self.basis.copy(), self.lo.copy(), self.hi.copy(), fstate, f.n_updates)

    def restore(self, snap):
        x, status, basis, lo, hi, fstate, n_updates = snap
        self.x, self.status, self.basis, self.lo, self.hi = x.copy(), status.copy(), basis.copy(), lo.copy(), hi.copy()
        f = self.factor
        if isinstance(f, _DenseInverse):
            f.Binv = fstate.copy()
        else:
            f.lu, f.etas = fstate[0], list(fstate[1])
        f.n_updates = n_updates

    def relax_rows(self, rows):
        """Drop the bounds of ``rows``; returns a token for :meth:`unrelax_rows`.

        Requires a feasible basis (phase 1 done).  Relaxing keeps the basis
        primal feasible, so phase 2 can restart directly.
        """
        idx = self.n + np.asarray(rows, dtype=int)
        token = (idx, self.lo[idx].copy(), self.hi[idx].copy(), self.status[idx].copy(), self.snapshot())
        self.lo[idx] = -np.inf
        self.hi[idx] = np.inf
        nonbasic = idx[self.status[idx] != BASIC]
        self.status[nonbasic] = AT_ZERO
        return token

    def unrelax_rows(self, token):
        idx, lo, hi, status, snap = token
        self.lo[idx] = lo
        self.hi[idx] = hi
        still = self.status[idx] == AT_ZERO
        # a free nonbasic logical never moved, so it still sits on its old bound
        self.status[idx[still]] = status[still]
        val = self.x[idx]
        tol = self.opts.feas_tol * (1 + np.abs(val))
        if np.any(val < lo - tol) or np.any(val > hi + tol):
            self.restore(snap)

    @property
    def primal(self):
        return self.x[: self.n].copy()

    @property
    def row_duals(self):
        return self.y.copy()

    @property
    def reduced_costs(self):
        return self.d[: self.n].copy()

    def max_infeasibility(self):
        act = self.A @ self.x[: self.n]
        v = [
            np.max(self.row_lower - act, initial=0.0),
            np.max(act - self.row_upper, initial=0.0),
            np.max(self.lower - self.x[: self.n], initial=0.0),
            np.max(self.x[: self.n] - self.upper, initial=0.0),
        ]
        return float(max(v))
