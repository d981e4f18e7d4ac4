import json
from dataclasses import replace

import numpy as np
import pytest

from ucscreen.errors import CoverageError, UniverseMismatchError
from ucscreen.formulation import ScreeningTarget, TargetSense, all_targets, build_uc
from ucscreen.harness.fixtures import load_fixture
from ucscreen.harness.oracles import certify
from ucscreen.harness.samples import gen_samples, random_instance
from ucscreen.milp import MIPOptions, MIPStatus, extract_schedule, solve_mip
from ucscreen.model import Line, LoadProfile
from ucscreen.screening import (
    ScreeningMethod,
    Verdict,
    compare_results,
    decide,
    margin_for,
    reduce,
    result_from_dict,
    screen,
    solve_reduced,
    full_violation,
)

HIGHS = MIPOptions(backend="highs")
FIX_A_TARGET = ScreeningTarget(0, TargetSense.UPPER, 2)


def test_two_bus_nothing_remains():
    inst, loads = load_fixture("fix2")
    for method in (ScreeningMethod.single(), ScreeningMethod.multi_aware()):
        res = screen(inst, loads, method)
        assert res.remaining == 0 and res.total == 4
        assert res.screening_rate == 1.0


def test_fix_a_single_keeps_line_zero_upper():
    inst, loads = load_fixture("fix_a")
    single = screen(inst, loads, ScreeningMethod.single())
    multi = screen(inst, loads, ScreeningMethod.multi_aware())
    early = ScreeningTarget(0, TargetSense.UPPER, 1)
    assert single.kept == {early, FIX_A_TARGET}
    assert single.s_star(FIX_A_TARGET) == pytest.approx(30.0, abs=1e-7)
    assert multi.remaining == 0
    assert multi.verdicts[FIX_A_TARGET].verdict is Verdict.ELIMINATED
    cmp = compare_results(single, multi)
    assert cmp.a_within_b and not cmp.identical
    assert cmp.only_b == {early, FIX_A_TARGET}
    assert cmp.per_step == [(1, 1, 0), (2, 1, 0)]
    assert "gained by b: t2/line0/UPPER" in cmp.summary()


def test_fix_a_golden(golden):
    inst, loads = load_fixture("fix_a")
    doc = json.loads((golden / "fix_a_multi.json").read_text())
    res = screen(inst, loads, ScreeningMethod.multi_aware())
    now = res.to_dict()
    assert now["instance"] == doc["instance"]
    for a, b in zip(now["verdicts"], doc["verdicts"]):
        assert (a["timestep"], a["line"], a["sense"], a["verdict"]) == (b["timestep"], b["line"], b["sense"], b["verdict"])
        assert a["s_star"] == pytest.approx(b["s_star"], abs=1e-7)
    # every frozen elimination is backed by the independent check
    for row in doc["verdicts"]:
        if row["verdict"] == "ELIMINATED":
            ok, _ = certify(inst, loads, ScreeningTarget(row["line"], row["sense"], row["timestep"]))
            assert ok
    again = result_from_dict(doc)
    assert again.eliminated == res.eliminated


def test_margin_and_decision():
    assert margin_for(0.5) == pytest.approx(1e-5)
    assert margin_for(200.0) == pytest.approx(2e-3)
    up = ScreeningTarget(0, TargetSense.UPPER, 1)
    lo = ScreeningTarget(0, TargetSense.LOWER, 1)
    assert decide(up, 100.0 - 2e-3, 100.0) is Verdict.ELIMINATED
    assert decide(up, 100.0 - 0.5e-3, 100.0) is Verdict.KEPT
    assert decide(lo, -100.0 + 2e-3, 100.0) is Verdict.ELIMINATED
    assert decide(lo, -100.0, 100.0) is Verdict.KEPT
    assert decide(up, np.nan, 100.0) is Verdict.KEPT


def test_target_row_excluded_from_its_own_screen():
    inst, loads = load_fixture("fix2")
    tight = replace(inst, lines=(Line(0, 0, 1, 1.0, 30.0),))
    res = screen(tight, loads, ScreeningMethod.single())
    up = ScreeningTarget(0, TargetSense.UPPER, 1)
    # the flow is forced to 40, which only the missing own row would cap at 30
    assert res.s_star(up) == pytest.approx(40.0)
    assert res.verdicts[up].verdict is Verdict.KEPT


def test_infeasible_region_keeps_with_diagnostic():
    inst, loads = load_fixture("fix_a")
    heavy = loads.values.copy()
    heavy[2, 0] = 100.0
    res = screen(inst, LoadProfile(heavy), ScreeningMethod.multi_aware())
    v = res.verdicts[FIX_A_TARGET]
    assert v.verdict is Verdict.KEPT
    assert "infeasible" in v.diagnostic


@pytest.mark.parametrize("name", ["fix_a", "fix6"])
def test_shared_and_per_target_agree(name):
    inst, loads = load_fixture(name)
    for method in (ScreeningMethod.single(), ScreeningMethod.multi_aware(), ScreeningMethod.region(0.3)):
        a = screen(inst, loads, method)
        b = screen(inst, loads, method, strategy="per_target")
        assert a.eliminated == b.eliminated
        for t in a.targets:
            va, vb = a.s_star(t), b.s_star(t)
            assert (np.isnan(va) and np.isnan(vb)) or va == pytest.approx(vb, abs=1e-6)


def test_repeated_screening_is_byte_identical():
    inst, loads = load_fixture("fix6")
    method = ScreeningMethod.multi_aware()
    a, b = screen(inst, loads, method), screen(inst, loads, method)
    assert a.to_json() == b.to_json()
    assert a.table(timings=False) == b.table(timings=False)
    assert [t.sort_key for t in a.targets] == sorted(t.sort_key for t in a.targets)


def test_reduce_bookkeeping():
    inst, loads = load_fixture("fix_a")
    res = screen(inst, loads, ScreeningMethod.single())
    red = reduce(inst, res)
    assert FIX_A_TARGET in red.kept_targets
    assert red.n_line_rows == 2
    mip, _ = build_uc(inst, loads, kept_targets=red.kept_targets)
    full, _ = build_uc(inst, loads)
    assert full.base.n_rows - mip.base.n_rows == len(all_targets(inst)) - 2
    partial = screen(inst, loads, ScreeningMethod.single(), steps=[1])
    with pytest.raises(CoverageError):
        reduce(inst, partial)
    other, _ = load_fixture("fix2")
    with pytest.raises(CoverageError):
        reduce(other, res)
    with pytest.raises(UniverseMismatchError):
        compare_results(res, screen(other, *load_fixture("fix2")[1:], ScreeningMethod.single()))


def test_empty_reduced_problem_two_bus():
    inst, loads = load_fixture("fix2")
    red = reduce(inst, screen(inst, loads, ScreeningMethod.single()))
    assert red.n_line_rows == 0
    sol = solve_reduced(red, loads)
    cost = inst.generators[0].cost
    assert sol.objective_value == pytest.approx(cost * loads.values.sum())


def check_reduction(inst, loads, method):
    res = screen(inst, loads, method)
    full = solve_mip(build_uc(inst, loads)[0], HIGHS)
    red = solve_reduced(reduce(inst, res), loads, HIGHS)
    if full.status is MIPStatus.INFEASIBLE:
        return
    assert red.status is MIPStatus.OPTIMAL
    assert red.objective_value == pytest.approx(full.objective_value, rel=1e-6, abs=1e-6)
    assert full_violation(inst, loads, red) <= 1e-6 * max(1.0, float(np.max(inst.flow_limits)))


@pytest.mark.parametrize("name", ["fix_a", "fix6"])
def test_reduced_problem_is_exact_on_fixtures(name):
    inst, loads = load_fixture(name)
    check_reduction(inst, loads, ScreeningMethod.single())
    check_reduction(inst, loads, ScreeningMethod.multi_aware())


def test_reduced_problem_is_exact_on_random_instances():
    for seed in range(12):
        inst, loads = random_instance(seed)
        check_reduction(inst, loads, ScreeningMethod.multi_aware())


def test_region_screening_is_exact_for_samples_inside():
    inst, nominal = load_fixture("fix6")
    res = screen(inst, nominal, ScreeningMethod.region(0.3))
    red = reduce(inst, res)
    for sample in gen_samples(nominal, 0.3, 4, seed=8):
        full = solve_mip(build_uc(inst, sample)[0], HIGHS)
        got = solve_reduced(red, sample, HIGHS)
        if full.optimal:
            assert got.objective_value == pytest.approx(full.objective_value, rel=1e-6)


def test_truth_screening_solves_the_fixed_problem():
    inst, loads = load_fixture("fix6")
    truth = extract_schedule(solve_mip(build_uc(inst, loads)[0], HIGHS), inst)
    res = screen(inst, loads, ScreeningMethod.truth(truth))
    full = solve_mip(build_uc(inst, loads, fixed_u=truth.values)[0], HIGHS)
    red = solve_reduced(reduce(inst, res), loads, HIGHS, fixed_u=truth.values)
    assert red.objective_value == pytest.approx(full.objective_value, rel=1e-6)
    multi = screen(inst, loads, ScreeningMethod.multi_aware())
    assert compare_results(multi, res).a_within_b
