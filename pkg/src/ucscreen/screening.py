"""Rolling-horizon screening of line-limit constraints and the reduced UC."""

from __future__ import annotations

import enum
import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import formulation as fo
from .errors import CoverageError, UCScreenError, UniverseMismatchError, ValidationError
from .formulation import ScreeningTarget, TargetSense, all_targets
from .lp import LPOptions, LPSession, Status, solve_lp
from .milp import MIPOptions, MIPSolution, solve_mip
from .model import SCHEMA_VERSION, CommitmentSchedule, LoadProfile, UCInstance, build_flow_model

log = logging.getLogger(__name__)

MARGIN_REL = 1e-5


class MethodKind(str, enum.Enum):
    SINGLE = "SINGLE"
    MULTI_AWARE = "MULTI_AWARE"
    MULTI_TRUTH = "MULTI_TRUTH"
    MULTI_PARTIAL = "MULTI_PARTIAL"
    REGION = "REGION"


@dataclass(frozen=True, eq=False)
class ScreeningMethod:
    """Screening model choice and its parameters.

    ``MULTI_TRUTH`` needs a full ``schedule``, ``MULTI_PARTIAL`` a schedule
    defined on the prediction steps, ``REGION`` a range ``r``.
    """

    kind: MethodKind
    schedule: CommitmentSchedule | None = None
    r: float | None = None

    def __post_init__(self):
        kind = MethodKind(self.kind)
        object.__setattr__(self, "kind", kind)
        needs_schedule = kind in (MethodKind.MULTI_TRUTH, MethodKind.MULTI_PARTIAL)
        if needs_schedule != (self.schedule is not None):
            raise ValidationError("method.schedule", f"{kind.value} {'requires' if needs_schedule else 'takes no'} schedule")
        if (kind is MethodKind.REGION) != (self.r is not None):
            raise ValidationError("method.r", f"{kind.value} {'requires' if kind is MethodKind.REGION else 'takes no'} range")
        if kind is MethodKind.REGION:
            fo.load_box(np.zeros((1, 1)), self.r)  # range check

    @classmethod
    def single(cls):
        return cls(MethodKind.SINGLE)

    @classmethod
    def multi_aware(cls):
        return cls(MethodKind.MULTI_AWARE)

    @classmethod
    def truth(cls, schedule):
        return cls(MethodKind.MULTI_TRUTH, schedule=schedule)

    @classmethod
    def partial(cls, schedule):
        return cls(MethodKind.MULTI_PARTIAL, schedule=schedule)

    @classmethod
    def region(cls, r):
        return cls(MethodKind.REGION, r=float(r))

    @property
    def uses_prediction(self) -> bool:
        return self.kind is MethodKind.MULTI_PARTIAL

    def label(self) -> str:
        if self.kind is MethodKind.REGION:
            return f"REGION(r={self.r:g})"
        return self.kind.value

    def to_dict(self) -> dict:
        doc = {"kind": self.kind.value}
        if self.r is not None:
            doc["r"] = self.r
        if self.schedule is not None:
            doc["schedule"] = self.schedule.values.tolist()
            doc["steps"] = list(self.schedule.defined_steps)
        return doc

    def region_at(self, instance, loads, k, fm):
        kind = self.kind
        if kind is MethodKind.SINGLE:
            return fo.region_single(instance, loads, k, fm)
        if kind is MethodKind.MULTI_AWARE:
            return fo.region_multi_aware(instance, loads, k, fm)
        if kind is MethodKind.MULTI_TRUTH:
            return fo.region_truth(instance, loads, k, self.schedule, fm)
        if kind is MethodKind.MULTI_PARTIAL:
            return fo.region_partial(instance, loads, k, self.schedule, fm)
        return fo.region_load_range(instance, loads, self.r, k, fm)

    def build(self, instance, loads, target, fm=None):
        """The method's screening LP for one target (target row removed)."""
        fm = fm or build_flow_model(instance)
        return fo.finish_screen(self.region_at(instance, loads, target.timestep, fm), target, fm)


class Verdict(str, enum.Enum):
    ELIMINATED = "ELIMINATED"
    KEPT = "KEPT"


@dataclass(frozen=True)
class TargetVerdict:
    target: ScreeningTarget
    verdict: Verdict
    s_star: float
    bound: float
    margin: float
    solve_ms: float = 0.0
    diagnostic: str = ""


def margin_for(limit: float) -> float:
    return MARGIN_REL * max(1.0, limit)


def decide(target: ScreeningTarget, s_star: float, limit: float) -> Verdict:
    """ELIMINATED iff the extreme flow stays ``margin`` inside the limit."""
    m = margin_for(limit)
    if not np.isfinite(s_star):
        return Verdict.KEPT
    if target.sense is TargetSense.UPPER:
        return Verdict.ELIMINATED if s_star <= limit - m else Verdict.KEPT
    return Verdict.ELIMINATED if s_star >= -limit + m else Verdict.KEPT


@dataclass(eq=False)
class ScreeningResult:
    verdicts: dict
    method: ScreeningMethod
    instance_fingerprint: str
    n_lines: int
    horizon: int
    stats: dict = field(default_factory=dict)

    @property
    def targets(self) -> list[ScreeningTarget]:
        return sorted(self.verdicts, key=lambda t: t.sort_key)

    @property
    def eliminated(self) -> frozenset:
        return frozenset(t for t, v in self.verdicts.items() if v.verdict is Verdict.ELIMINATED)

    @property
    def kept(self) -> frozenset:
        return frozenset(t for t, v in self.verdicts.items() if v.verdict is Verdict.KEPT)

    @property
    def total(self) -> int:
        return 2 * self.n_lines * self.horizon

    @property
    def remaining(self) -> int:
        return len(self.kept)

    @property
    def screening_rate(self) -> float:
        return 1.0 - self.remaining / self.total if self.total else 0.0

    def s_star(self, target) -> float:
        return self.verdicts[target].s_star

    def per_step_remaining(self) -> list[int]:
        counts = [0] * self.horizon
        for t in self.kept:
            counts[t.timestep - 1] += 1
        return counts

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method.to_dict(),
            "instance": self.instance_fingerprint,
            "n_lines": self.n_lines,
            "horizon": self.horizon,
            "remaining": self.remaining,
            "eliminated": self.total - self.remaining,
            "verdicts": [
                {
                    "timestep": t.timestep,
                    "line": t.line,
                    "sense": t.sense.value,
                    "s_star": _num(v.s_star),
                    "bound": v.bound,
                    "margin": v.margin,
                    "verdict": v.verdict.value,
                    "diagnostic": v.diagnostic,
                }
                for t in self.targets
                for v in [self.verdicts[t]]
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def table(self, timings: bool = True) -> str:
        """Plain-text verdict table, one row per target in sweep order."""
        out = io.StringIO()
        head = f"{'timestep':>8} {'line':>5} {'sense':>5} {'S*':>14} {'bound':>12} {'verdict':>10}"
        out.write(head + (f" {'solve_ms':>9}" if timings else "") + "\n")
        for t in self.targets:
            v = self.verdicts[t]
            row = f"{t.timestep:>8} {t.line:>5} {t.sense.value:>5} {v.s_star:>14.6f} {v.bound:>12.4f} {v.verdict.value:>10}"
            out.write(row + (f" {v.solve_ms:>9.2f}" if timings else "") + "\n")
        return out.getvalue()


def _num(v):
    return float(v) if np.isfinite(v) else str(v)


def result_from_dict(doc: dict, method: ScreeningMethod | None = None) -> ScreeningResult:
    """Rebuild a result from :meth:`ScreeningResult.to_dict` output."""
    if method is None:
        md = doc["method"]
        sched = None
        if "schedule" in md:
            sched = CommitmentSchedule(np.array(md["schedule"]), steps=md.get("steps"))
        method = ScreeningMethod(md["kind"], schedule=sched, r=md.get("r"))
    verdicts = {}
    for row in doc["verdicts"]:
        t = ScreeningTarget(row["line"], row["sense"], row["timestep"])
        verdicts[t] = TargetVerdict(
            t, Verdict(row["verdict"]), float(row["s_star"]), row["bound"], row["margin"], 0.0, row.get("diagnostic", "")
        )
    return ScreeningResult(verdicts, method, doc["instance"], doc["n_lines"], doc["horizon"])


def _solution_verdict(target, sol, limit, ms) -> TargetVerdict:
    bound = limit if target.sense is TargetSense.UPPER else -limit
    if sol.status is Status.OPTIMAL:
        s = float(sol.objective_value)
        return TargetVerdict(target, decide(target, s, limit), s, bound, margin_for(limit), ms)
    diag = f"screening LP {sol.status.value.lower()}"
    s = np.nan
    if sol.status is Status.UNBOUNDED:
        s = np.inf if target.sense is TargetSense.UPPER else -np.inf
    return TargetVerdict(target, Verdict.KEPT, s, bound, margin_for(limit), ms, diag)


def _error_verdict(target, exc, limit, ms) -> TargetVerdict:
    log.warning("screening %s failed: %s", target.label(), exc)
    bound = limit if target.sense is TargetSense.UPPER else -limit
    return TargetVerdict(target, Verdict.KEPT, np.nan, bound, margin_for(limit), ms, f"solver error: {exc}")


def screen(
    instance: UCInstance,
    loads,
    method: ScreeningMethod,
    *,
    flow_model=None,
    strategy: str = "shared",
    lp_options: LPOptions | None = None,
    steps=None,
) -> ScreeningResult:
    """Screen every line-limit target at every step.

    ``loads`` is the sample profile, or the nominal profile for ``REGION``.
    The ``shared`` strategy builds each step's region once and, for every
    target, re-optimises with only that target's row switched off.  The
    ``per_target`` strategy builds and solves each target's LP from scratch.
    Both give the same optimal values.
    """
    if strategy not in ("shared", "per_target"):
        raise ValueError(f"unknown strategy {strategy!r}")
    fm = flow_model or build_flow_model(instance)
    opts = lp_options or LPOptions()
    T = instance.horizon
    if isinstance(loads, LoadProfile) and loads.horizon < T:
        raise CoverageError(f"loads cover {loads.horizon} steps, need {T}")
    limits = instance.flow_limits
    verdicts = {}
    step_ms = []
    t_start = time.perf_counter()
    for k in steps or range(1, T + 1):
        tk = time.perf_counter()
        targets = all_targets(instance, k)[2 * instance.n_lines * (k - 1) :]
        session = None
        region = None
        try:
            region = method.region_at(instance, loads, k, fm)
            if strategy == "shared":
                session = LPSession(region.lp, opts)
        except UCScreenError as exc:
            for tg in targets:
                verdicts[tg] = _error_verdict(tg, exc, limits[tg.line], 0.0)
            step_ms.append(1000 * (time.perf_counter() - tk))
            continue
        # one sense after the other keeps consecutive optima close; verdicts
        # do not depend on the order and are reported in sweep order
        for tg in sorted(targets, key=lambda x: (x.sense is not TargetSense.UPPER, x.line)):
            t0 = time.perf_counter()
            c, sense = fo._target_objective(region, tg, fm)
            row = region.target_rows[tg]
            try:
                if session is not None:
                    try:
                        sol = session.solve(c, sense, drop_rows=[row], duals=False)
                    except UCScreenError:
                        # the warm state may be damaged; rebuild and retry cold
                        session = LPSession(region.lp, opts)
                        sol = solve_lp(region.lp.with_objective(c, sense).drop_rows([row]), opts)
                else:
                    sol = solve_lp(region.lp.with_objective(c, sense).drop_rows([row]), opts)
                verdicts[tg] = _solution_verdict(tg, sol, limits[tg.line], 1000 * (time.perf_counter() - t0))
            except UCScreenError as exc:
                verdicts[tg] = _error_verdict(tg, exc, limits[tg.line], 1000 * (time.perf_counter() - t0))
        step_ms.append(1000 * (time.perf_counter() - tk))
    verdicts = {t: verdicts[t] for t in sorted(verdicts, key=lambda x: x.sort_key)}
    stats = {"wall_ms": 1000 * (time.perf_counter() - t_start), "step_ms": step_ms, "strategy": strategy}
    result = ScreeningResult(verdicts, method, instance.fingerprint(), instance.n_lines, T, stats)
    stats["remaining"] = result.remaining
    stats["eliminated"] = result.total - result.remaining
    return result


# --------------------------------------------------------------------------
# reduced problem


@dataclass(frozen=True, eq=False)
class ReducedInstance:
    base: UCInstance
    kept_targets: frozenset

    @property
    def n_line_rows(self) -> int:
        return len(self.kept_targets)


def reduce(instance: UCInstance, result: ScreeningResult) -> ReducedInstance:
    """Keep only the targets the screening could not eliminate."""
    universe = set(all_targets(instance))
    if result.instance_fingerprint != instance.fingerprint() or set(result.verdicts) != universe:
        missing = len(universe - set(result.verdicts))
        raise CoverageError(f"result does not cover the instance targets ({missing} missing)")
    return ReducedInstance(instance, frozenset(result.kept))


def solve_reduced(reduced: ReducedInstance, loads, options: MIPOptions | None = None, fixed_u=None) -> MIPSolution:
    """Solve the UC MILP with only the kept line-limit rows."""
    mip, _ = fo.build_uc(reduced.base, loads, fixed_u=fixed_u, kept_targets=reduced.kept_targets)
    return solve_mip(mip, options)


def full_violation(instance: UCInstance, loads, solution: MIPSolution) -> float:
    """Largest violation of any row or bound of the full UC at ``solution``."""
    mip, _ = fo.build_uc(instance, loads)
    return mip.base.max_violation(solution.primal)


# --------------------------------------------------------------------------
# comparison


@dataclass(eq=False)
class Comparison:
    only_a: frozenset  # eliminated by a, kept by b
    only_b: frozenset
    per_step: list  # (step, remaining_a, remaining_b)
    per_line: dict  # line -> (eliminated_a, eliminated_b)

    @property
    def a_within_b(self) -> bool:
        """Every target eliminated by ``a`` is eliminated by ``b``."""
        return not self.only_a

    @property
    def b_within_a(self) -> bool:
        return not self.only_b

    @property
    def identical(self) -> bool:
        return not self.only_a and not self.only_b

    def summary(self) -> str:
        lines = [
            f"eliminated only by a: {len(self.only_a)}",
            f"eliminated only by b: {len(self.only_b)}",
            f"a's eliminated set within b's: {self.a_within_b}",
        ]
        for t in sorted(self.only_b, key=lambda x: x.sort_key):
            lines.append(f"  gained by b: {t.label()}")
        for t in sorted(self.only_a, key=lambda x: x.sort_key):
            lines.append(f"  gained by a: {t.label()}")
        return "\n".join(lines)


def compare_results(a: ScreeningResult, b: ScreeningResult) -> Comparison:
    if a.instance_fingerprint != b.instance_fingerprint or set(a.verdicts) != set(b.verdicts):
        raise UniverseMismatchError("results cover different instances or target sets")
    ea, eb = a.eliminated, b.eliminated
    ra, rb = a.per_step_remaining(), b.per_step_remaining()
    per_line = {}
    for j in range(a.n_lines):
        per_line[j] = (sum(t.line == j for t in ea), sum(t.line == j for t in eb))
    return Comparison(ea - eb, eb - ea, [(k + 1, ra[k], rb[k]) for k in range(a.horizon)], per_line)
