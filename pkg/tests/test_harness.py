import json

import numpy as np
import pytest

from ucscreen.errors import InvalidRangeError, ValidationError
from ucscreen.formulation import ScreeningTarget, TargetSense, build_uc
from ucscreen.harness.experiment import ExperimentConfig, MetricsReport, derive_seed, run_experiment
from ucscreen.harness.fixtures import load_fixture, make_fix39
from ucscreen.harness.oracles import certify, oracle_binding, oracle_uc, runner_up
from ucscreen.harness.samples import gen_samples, random_instance, rng_for
from ucscreen.milp import MIPOptions, solve_mip
from ucscreen.model import validate


def test_zero_range_reproduces_nominal():
    _, nominal = load_fixture("fix6")
    for s in gen_samples(nominal, 0.0, 5, seed=1):
        assert s == nominal


def test_sample_statistics():
    _, nominal = load_fixture("fix6")
    samples = np.stack([s.values for s in gen_samples(nominal, 0.5, 1000, seed=2)])
    base = nominal.values
    assert np.all(samples >= 0.5 * base - 1e-12) and np.all(samples <= 1.5 * base + 1e-12)
    pos = base > 0
    ratio = samples.mean(axis=0)[pos] / base[pos]
    assert np.all(np.abs(ratio - 1) <= 0.02 * 2)  # per entry, 1000 draws of a +-50% uniform
    assert abs(ratio.mean() - 1) <= 0.02


def test_samples_are_reproducible():
    _, nominal = load_fixture("fix_a")
    a = gen_samples(nominal, 0.3, 20, seed=9)
    b = gen_samples(nominal, 0.3, 20, seed=9)
    assert all(x == y for x, y in zip(a, b))
    assert gen_samples(nominal, 0.3, 1, seed=10)[0] != a[0]
    assert rng_for(4).random() == rng_for(4).random()
    for r in (-0.1, 1.0, np.inf):
        with pytest.raises(InvalidRangeError):
            gen_samples(nominal, r, 1, seed=0)


def test_random_instances_are_valid_and_reproducible():
    for seed in range(30):
        inst, loads = random_instance(seed)
        validate(inst)
        again, loads2 = random_instance(seed)
        assert again == inst and loads2 == loads
        assert 3 <= inst.n_buses <= 6 and 2 <= inst.n_generators <= 4 and 2 <= inst.horizon <= 6


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    seeds = {derive_seed(s, i) for s in range(5) for i in range(5)}
    assert len(seeds) == 25


def test_fix39_shape():
    inst, loads = load_fixture("fix39")
    assert (inst.n_buses, inst.n_lines, inst.n_generators, inst.horizon) == (39, 46, 10, 24)
    assert make_fix39()[0] == inst
    assert loads.values.shape == (39, 24)


# oracles ----------------------------------------------------------------


def test_oracle_uc_two_bus():
    inst, loads = load_fixture("fix2")
    ref = oracle_uc(inst, loads)
    assert ref.status == "OPTIMAL"
    assert ref.objective == pytest.approx(inst.generators[0].cost * loads.values.sum())
    assert ref.unique


def test_oracle_binding_fix_a():
    inst, loads = load_fixture("fix_a")
    up = ScreeningTarget(0, TargetSense.UPPER, 2)
    ref = oracle_binding(inst, loads, up)
    assert ref.value == pytest.approx(18.214285714285715, abs=1e-6)
    ok, excess = certify(inst, loads, up)
    assert ok and excess == pytest.approx(ref.value - 30.0, abs=1e-6)


def test_runner_up_exceeds_optimum():
    checked = 0
    for seed in range(25):
        inst, loads = random_instance(seed, ng=2, T=3)
        ref = oracle_uc(inst, loads)
        if ref.status != "OPTIMAL":
            continue
        second = runner_up(inst, loads, ref.schedule)
        assert second >= ref.objective - 1e-7
        assert (second > ref.objective + 1e-7) == ref.unique
        checked += 1
    assert checked >= 10


# experiment -------------------------------------------------------------


def test_config_validation(tmp_path):
    with pytest.raises(InvalidRangeError):
        ExperimentConfig("fix6", r_values=(1.2,))
    with pytest.raises(ValidationError):
        ExperimentConfig("fix6", samples=0)
    with pytest.raises(ValidationError):
        ExperimentConfig("fix6", methods=("single", "magic"))
    with pytest.raises(ValidationError):
        ExperimentConfig("fix6", mip_backend="cplex")
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"instance": "fix6", "colour": 1})
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    with pytest.raises(ValidationError):
        ExperimentConfig.from_file(bad)
    good = tmp_path / "good.json"
    cfg = ExperimentConfig("fix6", r_values=(0.2, 0.4), samples=3, seed=5)
    good.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_file(good) == cfg


@pytest.fixture(scope="module")
def small_report():
    cfg = ExperimentConfig("fix6", r_values=(0.2, 0.5), samples=4, methods=("single", "multi", "truth", "region"),
                           seed=1, oracle=True)
    return run_experiment(cfg)


def test_small_experiment(small_report):
    rep = small_report
    assert len(rep.ok_samples()) == 8
    assert rep.certification()["violations"] == []
    assert rep.certification()["checked"] > 0
    for r in (0.2, 0.5):
        inc = rep.inclusion("SINGLE", "MULTI_AWARE", r)
        assert inc["holds"] == inc["samples"] == 4
        assert rep.inclusion("MULTI_AWARE", "MULTI_TRUTH", r)["holds"] == 4
        sound = rep.region_soundness(r)
        assert sound["holds"] == sound["samples"] == 4
        for label in ("SINGLE", "MULTI_AWARE"):
            m = rep.summary(label, r)
            assert m["feasibility_rate"] == 1.0
            assert m["max_gap"] <= 1e-6
        # eliminations under the true schedule need not hold once u is free,
        # but dropping rows can only lower the cost
        for s in rep.ok_samples(r):
            red = s["methods"]["MULTI_TRUTH"]["reduced"]["objective"]
            assert red <= s["full"]["objective"] * (1 + 1e-9)
    assert rep.region["0.2"]["remaining"] <= rep.region["0.5"]["remaining"]


def test_report_arithmetic(small_report):
    rep = small_report
    recs = rep.ok_samples(0.5)
    m = rep.summary("MULTI_AWARE", 0.5)
    rem = [s["methods"]["MULTI_AWARE"]["remaining"] for s in recs]
    assert m["mean_remaining"] == pytest.approx(np.mean(rem))
    assert m["screening_rate"] == pytest.approx(1 - np.mean(rem) / rep.total_targets)
    assert rep.total_targets == 2 * rep.n_lines * rep.horizon
    assert m["min_remaining"] == min(rem) and m["max_remaining"] == max(rem)
    doc = json.loads(rep.to_json())
    assert doc["summary"]["MULTI_AWARE"]["0.5"]["samples"] == 4
    assert "MULTI_AWARE" in rep.table()


def test_full_solutions_match_recorded_objective(small_report):
    inst, nominal = load_fixture("fix6")
    first = small_report.ok_samples(0.2)[0]
    loads = gen_samples(nominal, 0.2, 1, derive_seed(1, 0))[0]
    sol = solve_mip(build_uc(inst, loads)[0], MIPOptions(backend="highs"))
    assert sol.objective_value == pytest.approx(first["full"]["objective"], rel=1e-9)


def test_failed_sample_is_recorded():
    rep = MetricsReport({}, "x", 1, 1, samples=[{"r": 0.5, "index": 0, "error": "SolverError: boom"}])
    assert rep.ok_samples() == []
    assert rep.summary("SINGLE", 0.5) == {}
    assert "failed samples: 1" in rep.table()
