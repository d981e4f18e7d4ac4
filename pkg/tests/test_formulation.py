from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucscreen.errors import DimensionError, InvalidFixError, InvalidRangeError, ScheduleCoverageError
from ucscreen.formulation import (
    ScreeningTarget,
    TargetSense,
    all_targets,
    build_screen_multi_aware,
    build_screen_partial,
    build_screen_region,
    build_screen_single,
    build_screen_truth,
    build_uc,
    region_multi_aware,
    region_partial,
    region_truth,
)
from ucscreen.harness.fixtures import load_fixture
from ucscreen.harness.oracles import oracle_binding
from ucscreen.harness.samples import gen_samples, random_instance
from ucscreen.lp import Status, solve_lp, solve_lp_restricted
from ucscreen.milp import MIPOptions, extract_schedule, solve_mip
from ucscreen.model import Bus, CommitmentSchedule, Generator, Line, LoadProfile, UCInstance, build_flow_model
from ucscreen.predictor import partial_schedule

# multi-step extreme of the FIX-A line-0 flow at step 2, frozen from oracle_binding
FIX_A_MULTI = 18.214285714285715
FIX_A_TARGET = ScreeningTarget(0, TargetSense.UPPER, 2)


def s_star(problem):
    return solve_lp(problem).objective_value


def same_lp(a, b):
    return (
        a.sense == b.sense
        and np.array_equal(a.objective, b.objective)
        and (a.A != b.A).nnz == 0
        and np.array_equal(a.row_lower, b.row_lower)
        and np.array_equal(a.row_upper, b.row_upper)
        and np.array_equal(a.var_lower, b.var_lower)
        and np.array_equal(a.var_upper, b.var_upper)
    )


def loose_ramps(inst):
    """All units on at t = 0 with ramps that never bind."""
    gens = tuple(
        replace(g, ramp_up=1e4, ramp_down=1e4, ramp_startup=1e4, ramp_shutdown=1e4, initial_on=True,
                initial_output=g.p_min)
        for g in inst.generators
    )
    return replace(inst, generators=gens)


def truth_schedule(inst, loads):
    sol = solve_mip(build_uc(inst, loads)[0], MIPOptions(backend="highs"))
    return extract_schedule(sol, inst) if sol.optimal else None


# build_uc ---------------------------------------------------------------


def test_fix_a_row_count():
    inst, loads = load_fixture("fix_a")
    mip, layout = build_uc(inst, loads)
    ng, m, nb, T = inst.n_generators, inst.n_lines, inst.n_buses, 2
    assert mip.base.n_rows == ng * T * 2 + m * T * 2 + nb * T + ng * T * 2 == 34
    assert layout.n_vars == mip.base.n_vars == T * (2 * ng + nb - 1)
    assert len(mip.binary_vars) == ng * T


@pytest.mark.parametrize("name", ["fix2", "fix_a", "fix6", "fix39"])
def test_each_family_once_per_entity_and_step(name):
    inst, loads = load_fixture(name)
    mip, _ = build_uc(inst, loads)
    names = mip.base.row_names
    assert len(set(names)) == len(names)
    fam = Counter(n.split("[")[0] for n in names)
    ng, m, nb, T = inst.n_generators, inst.n_lines, inst.n_buses, inst.horizon
    assert fam == {"genlo": ng * T, "genhi": ng * T, "flowup": m * T, "flowlo": m * T, "bal": nb * T,
                   "rampup": ng * T, "rampdn": ng * T}


def test_single_period_dispatch():
    gen = Generator(0, 0, 7.0, 10.0, 100.0, 1.0, 1.0, 1.0, 1.0)
    inst = UCInstance((Bus(0, True), Bus(1)), (Line(0, 0, 1, 1.0, 200.0),), (gen,), 1)
    loads = LoadProfile([[0.0], [55.0]])
    mip, layout = build_uc(inst, loads)
    assert len(mip.binary_vars) == 1
    # a generous ramp from an off start limits output to the start-up ramp
    sol = solve_mip(mip)
    assert sol.status.value == "INFEASIBLE"
    gen = replace(gen, ramp_startup=100.0)
    sol = solve_mip(build_uc(replace(inst, generators=(gen,)), loads)[0])
    assert sol.objective_value == pytest.approx(7.0 * 55.0)


@pytest.mark.parametrize("name", ["fix_a", "fix6"])
def test_fixing_the_optimal_schedule_keeps_the_objective(name):
    inst, loads = load_fixture(name)
    mip, _ = build_uc(inst, loads)
    sol = solve_mip(mip)
    fixed = solve_mip(build_uc(inst, loads, fixed_u=extract_schedule(sol, inst))[0])
    assert fixed.objective_value == pytest.approx(sol.objective_value, rel=1e-9)


def test_build_uc_errors():
    inst, loads = load_fixture("fix_a")
    with pytest.raises(InvalidFixError):
        build_uc(inst, loads, fixed_u=np.array([[0.5, np.nan], [np.nan, np.nan]]))
    with pytest.raises(DimensionError):
        build_uc(inst, LoadProfile(loads.values[:, :1]))
    with pytest.raises(DimensionError):
        build_uc(inst, LoadProfile(loads.values[:2]))


# single-step ------------------------------------------------------------


def test_two_bus_single_step():
    inst, loads = load_fixture("fix2")
    up = build_screen_single(inst, loads, ScreeningTarget(0, TargetSense.UPPER, 1))
    lo = build_screen_single(inst, loads, ScreeningTarget(0, TargetSense.LOWER, 1))
    assert s_star(up) == pytest.approx(40.0)
    assert s_star(lo) == pytest.approx(40.0)


def test_single_step_has_only_its_step():
    inst, loads = load_fixture("fix6")
    lp = build_screen_single(inst, loads, ScreeningTarget(2, TargetSense.UPPER, 4))
    assert all(n.endswith(",4]") for n in lp.row_names)
    assert not any(n.startswith(("ramp", "agg")) for n in lp.row_names)
    # the target row itself is gone, its opposite sense stays
    assert "flowup[2,4]" not in lp.row_names and "flowlo[2,4]" in lp.row_names


def test_fix_a_single_reaches_the_limit():
    inst, loads = load_fixture("fix_a")
    assert s_star(build_screen_single(inst, loads, FIX_A_TARGET)) == pytest.approx(30.0, abs=1e-7)


# multi-step -------------------------------------------------------------


def test_fix_a_multi_proves_the_limit_unreachable():
    inst, loads = load_fixture("fix_a")
    value = s_star(build_screen_multi_aware(inst, loads, FIX_A_TARGET))
    assert value == pytest.approx(FIX_A_MULTI, abs=1e-7)
    assert value < 30.0
    oracle = oracle_binding(inst, loads, FIX_A_TARGET)
    assert oracle.value == pytest.approx(FIX_A_MULTI, abs=1e-6)


def test_multi_at_first_step_equals_single_with_loose_ramps():
    for seed in range(15):
        inst, loads = random_instance(seed)
        inst = loose_ramps(inst)
        fm = build_flow_model(inst)
        for tg in all_targets(inst, 1):
            a = s_star(build_screen_multi_aware(inst, loads, tg, fm))
            b = s_star(build_screen_single(inst, loads, tg, fm))
            assert a == pytest.approx(b, abs=1e-7)


def test_multi_structure():
    inst, loads = load_fixture("fix6")
    lp = build_screen_multi_aware(inst, loads, ScreeningTarget(1, TargetSense.LOWER, 3))
    fam = Counter(n.split("[")[0] for n in lp.row_names)
    ng, m, nb = inst.n_generators, inst.n_lines, inst.n_buses
    # network rows only at k, totals before k, ramps everywhere
    assert fam == {"genlo": 3 * ng, "genhi": 3 * ng, "flowup": m, "flowlo": m - 1, "bal": nb, "agg": 2,
                   "rampup": 3 * ng, "rampdn": 3 * ng}


def test_multi_infeasible_when_capacity_is_short():
    inst, loads = load_fixture("fix_a")
    heavy = loads.values.copy()
    heavy[2, 0] = 100.0
    lp = build_screen_multi_aware(inst, LoadProfile(heavy), FIX_A_TARGET)
    assert solve_lp(lp).status is Status.INFEASIBLE


# ground truth / partial ---------------------------------------------------


def test_truth_all_off_is_infeasible():
    inst, loads = load_fixture("fix_a")
    off = CommitmentSchedule(np.zeros((2, 2)))
    assert solve_lp(build_screen_truth(inst, loads, FIX_A_TARGET, off)).status is Status.INFEASIBLE


def test_truth_never_above_aware_on_fix_a():
    inst, loads = load_fixture("fix_a")
    truth = truth_schedule(inst, loads)
    for tg in all_targets(inst):
        a = s_star(build_screen_truth(inst, loads, tg, truth))
        b = s_star(build_screen_multi_aware(inst, loads, tg))
        if tg.sense is TargetSense.UPPER:
            assert a <= b + 1e-7
        else:
            assert a >= b - 1e-7


def test_truth_all_on_equals_single_with_u_fixed():
    for seed in range(10):
        inst, loads = random_instance(seed)
        inst = loose_ramps(inst)
        on = CommitmentSchedule(np.ones((inst.n_generators, inst.horizon)))
        for tg in all_targets(inst, 1):
            single = build_screen_single(inst, loads, tg)
            fixed = {j: 1.0 for j in range(inst.n_generators)}  # u columns come first
            a = solve_lp_restricted(single, fixed)
            b = solve_lp(build_screen_truth(inst, loads, tg, on))
            assert a.status is b.status
            if a.optimal:
                assert a.objective_value == pytest.approx(b.objective_value, abs=1e-7)


def test_truth_coverage_error():
    inst, loads = load_fixture("fix_a")
    with pytest.raises(ScheduleCoverageError):
        build_screen_truth(inst, loads, FIX_A_TARGET, CommitmentSchedule(np.ones((2, 1))))
    with pytest.raises(ScheduleCoverageError):
        build_screen_truth(inst, loads, FIX_A_TARGET, CommitmentSchedule(np.ones((2, 2)), steps=(1,)))


def test_partial_on_every_step_is_truth():
    inst, loads = load_fixture("fix6")
    truth = truth_schedule(inst, loads)
    part = partial_schedule(truth, 1)
    for k in range(1, inst.horizon + 1):
        a = region_partial(inst, loads, k, part)
        b = region_truth(inst, loads, k, truth)
        assert same_lp(a.lp, b.lp)


def test_partial_on_no_step_is_aware():
    inst, loads = load_fixture("fix6")
    truth = truth_schedule(inst, loads)
    empty = partial_schedule(truth, inst.horizon + 1)
    assert empty.defined_steps == ()
    for k in range(1, inst.horizon + 1):
        a = region_partial(inst, loads, k, empty)
        b = region_multi_aware(inst, loads, k)
        assert same_lp(a.lp, b.lp)
        assert a.lp.row_names == b.lp.row_names


def test_fix_a_partial_eliminations_hold_with_first_step_fixed():
    inst, loads = load_fixture("fix_a")
    truth = truth_schedule(inst, loads)
    part = CommitmentSchedule(truth.values, provenance="PARTIAL", steps=(1,))
    pinned = np.full(truth.values.shape, np.nan)
    pinned[:, 0] = truth.values[:, 0]
    checked = 0
    for tg in all_targets(inst):
        value = s_star(build_screen_partial(inst, loads, tg, part))
        limit = inst.lines[tg.line].flow_limit
        eliminated = value <= limit * (1 - 1e-5) if tg.sense is TargetSense.UPPER else value >= -limit * (1 - 1e-5)
        if not eliminated:
            continue
        ref = oracle_binding(inst, loads, tg, u_fixed=pinned).value
        if tg.sense is TargetSense.UPPER:
            assert ref <= limit + 1e-6 * max(1, limit)
        else:
            assert ref >= -limit - 1e-6 * max(1, limit)
        checked += 1
    assert checked > 0


# load region ------------------------------------------------------------


def test_region_at_zero_range_is_aware():
    for name in ("fix_a", "fix6"):
        inst, loads = load_fixture(name)
        for tg in all_targets(inst):
            a = s_star(build_screen_region(inst, loads, 0.0, tg))
            b = s_star(build_screen_multi_aware(inst, loads, tg))
            assert a == pytest.approx(b, abs=1e-7)


def test_region_covers_in_region_samples():
    inst, loads = load_fixture("fix_a")
    targets = all_targets(inst)
    region = {tg: s_star(build_screen_region(inst, loads, 0.5, tg)) for tg in targets}
    for sample in gen_samples(loads, 0.5, 20, seed=5):
        for tg in targets:
            v = s_star(build_screen_multi_aware(inst, sample, tg))
            if tg.sense is TargetSense.UPPER:
                assert region[tg] >= v - 1e-7
            else:
                assert region[tg] <= v + 1e-7


def test_region_grows_with_range():
    inst, loads = load_fixture("fix6")
    for tg in all_targets(inst)[:: 5]:
        vals = [s_star(build_screen_region(inst, loads, r, tg)) for r in (0.2, 0.5, 0.8)]
        if tg.sense is TargetSense.UPPER:
            assert vals[0] <= vals[1] + 1e-7 <= vals[2] + 2e-7
        else:
            assert vals[0] >= vals[1] - 1e-7 >= vals[2] - 2e-7


def test_region_range_checked():
    inst, loads = load_fixture("fix_a")
    for r in (-0.1, 1.0, np.nan):
        with pytest.raises(InvalidRangeError):
            build_screen_region(inst, loads, r, FIX_A_TARGET)


# nesting chain ----------------------------------------------------------


def nesting_violation(inst, loads, truth, r=0.3, interval=2, steps=None):
    """Largest breach of truth <= partial <= aware <= region over every target (UPPER orientation)."""
    fm = build_flow_model(inst)
    part = partial_schedule(truth, interval)
    worst = -np.inf
    for tg in all_targets(inst):
        if steps is not None and tg.timestep not in steps:
            continue
        sgn = 1.0 if tg.sense is TargetSense.UPPER else -1.0
        chain = [
            sgn * s_star(build_screen_truth(inst, loads, tg, truth, fm)),
            sgn * s_star(build_screen_partial(inst, loads, tg, part, fm)),
            sgn * s_star(build_screen_multi_aware(inst, loads, tg, fm)),
            sgn * s_star(build_screen_region(inst, loads, r, tg, fm)),
        ]
        for a, b in zip(chain, chain[1:]):
            if np.isfinite(a) and np.isfinite(b):
                worst = max(worst, a - b)
            elif a == np.inf or b == -np.inf:
                worst = np.inf
    return worst


@settings(max_examples=15)
@given(st.integers(0, 10**6))
def test_nesting_chain_on_random_instances(seed):
    inst, loads = random_instance(seed)
    truth = truth_schedule(inst, loads)
    if truth is None:
        return
    assert nesting_violation(inst, loads, truth) <= 1e-7
