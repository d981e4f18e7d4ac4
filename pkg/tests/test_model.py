import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucscreen.errors import (
    DimensionError,
    DisconnectedNetworkError,
    NegativeLoadError,
    SchemaError,
    ValidationError,
)
from ucscreen.harness.fixtures import load_fixture, make_fix_a
from ucscreen.model import (
    Bus,
    CommitmentSchedule,
    Generator,
    Line,
    LoadProfile,
    UCInstance,
    build_flow_model,
    instance_to_dict,
    parse_case,
    parse_loads,
    schedule_from_dict,
    schedule_to_dict,
    serialize_case,
    serialize_loads,
)

TWO_BUS = {
    "buses": [{"id": 0, "reference": True}, {"id": 1}],
    "lines": [{"id": 0, "from": 0, "to": 1, "susceptance": 1.0, "limit": 50}],
    "generators": [
        {"id": 0, "bus": 0, "cost": 10, "pmin": 0, "pmax": 100, "ramp_up": 100, "ramp_down": 100,
         "ramp_su": 100, "ramp_sd": 100, "u0": True, "x0": 40}
    ],
    "horizon": 2,
}


def _case(**patch):
    doc = json.loads(json.dumps(TWO_BUS))
    for path, value in patch.items():
        obj = doc
        keys = path.split(".")
        for k in keys[:-1]:
            obj = obj[int(k)] if k.isdigit() else obj[k]
        obj[keys[-1]] = value
    return json.dumps(doc)


def _withdrawal(p):
    # A f is the net withdrawal, so an injection p needs A f = -p
    return -np.asarray(p, dtype=float)


def _instance(nb, edges, suscept):
    lines = tuple(Line(j, a, b, float(s), 100.0) for j, ((a, b), s) in enumerate(zip(edges, suscept)))
    gen = Generator(0, 0, 1.0, 0.0, 100.0, 100.0, 100.0, 100.0, 100.0)
    return UCInstance(tuple(Bus(i, i == 0) for i in range(nb)), lines, (gen,), 1)


def test_parse_two_bus():
    inst = parse_case(_case())
    assert (inst.n_buses, inst.n_lines, inst.n_generators, inst.horizon) == (2, 1, 1, 2)
    assert inst.reference_bus == 0


def test_negative_limit_names_the_field():
    with pytest.raises(ValidationError) as exc:
        parse_case(_case(**{"lines.0.limit": -5}))
    assert exc.value.path == "lines[0].flow_limit"


def test_missing_and_extra_fields_are_schema_errors():
    doc = json.loads(_case())
    del doc["lines"][0]["limit"]
    with pytest.raises(SchemaError):
        parse_case(json.dumps(doc))
    with pytest.raises(SchemaError):
        parse_case(_case(**{"lines.0.colour": "red"}))
    with pytest.raises(SchemaError):
        parse_case("{not json")


@pytest.mark.parametrize(
    "patch",
    [
        {"generators.0.pmin": 120},
        {"generators.0.ramp_up": -1},
        {"generators.0.x0": 150},
        {"lines.0.to": 0},
        {"lines.0.susceptance": 0},
        {"horizon": 0},
        {"generators.0.bus": 7},
    ],
)
def test_invariant_violations(patch):
    with pytest.raises(ValidationError):
        parse_case(_case(**patch))


def test_off_unit_with_output_rejected():
    with pytest.raises(ValidationError):
        parse_case(_case(**{"generators.0.u0": False}))


def test_disconnected_network():
    doc = json.loads(_case())
    doc["buses"].append({"id": 2})
    with pytest.raises(DisconnectedNetworkError):
        parse_case(json.dumps(doc))


def test_reference_defaults_to_bus_zero():
    doc = json.loads(_case())
    doc["buses"][0].pop("reference")
    assert parse_case(json.dumps(doc)).reference_bus == 0


def test_fix_a_parses():
    inst, loads = load_fixture("fix_a")
    assert (inst.n_buses, inst.n_lines, inst.n_generators) == (3, 3, 2)
    # the heavy step then the light step on the load bus
    assert loads.values[2].tolist() == [60.0, 35.0]


def test_parse_loads():
    inst = parse_case(_case())
    prof = parse_loads("# bus,t1,t2\n0,0\n40,40\n", inst)
    assert prof.values.tolist() == [[0, 0], [40, 40]]
    with pytest.raises(DimensionError):
        parse_loads("0,0,0\n40,40,40\n", inst)
    with pytest.raises(NegativeLoadError):
        parse_loads("0,0\n40,-1\n", inst)
    with pytest.raises(DimensionError):
        parse_loads("0,0\n40\n", inst)


def test_case_round_trip():
    for name in ("fix2", "fix_a", "fix6", "fix39"):
        inst, loads = load_fixture(name)
        again = parse_case(serialize_case(inst))
        assert again == inst
        assert instance_to_dict(again) == instance_to_dict(inst)
        assert parse_loads(serialize_loads(loads), inst) == loads


def test_schedule_round_trip():
    s = CommitmentSchedule(np.array([[1, 0, 1], [0, 0, 1]]), provenance="PARTIAL", steps=(1, 3))
    assert schedule_from_dict(schedule_to_dict(s)) == s
    with pytest.raises(ValidationError):
        CommitmentSchedule(np.array([[2]]))


def test_two_bus_flow_model():
    fm = build_flow_model(parse_case(_case()))
    assert fm.K.shape == (1, 1) and abs(fm.K[0, 0]) == 1.0
    assert np.all(fm.A.sum(axis=0) == 0)
    f = fm.solve_flows(_withdrawal([40, -40]))
    assert fm.line_flows(f)[0] == pytest.approx(40.0)


def test_triangle_splits_two_to_one():
    inst = _instance(3, [(0, 1), (1, 2), (0, 2)], [1.0, 1.0, 1.0])
    fm = build_flow_model(inst)
    flows = fm.line_flows(fm.solve_flows(_withdrawal([30, 0, -30])))
    assert flows == pytest.approx([10.0, 10.0, 20.0])


def test_radial_chain():
    fm = build_flow_model(_instance(3, [(0, 1), (1, 2)], [3.0, 7.0]))
    flows = fm.line_flows(fm.solve_flows(_withdrawal([10, 0, -10])))
    assert flows == pytest.approx([10.0, 10.0], abs=1e-12)


def test_fix_a_line_shares():
    inst, _ = make_fix_a()
    fm = build_flow_model(inst)
    from_bus0 = fm.line_flows(fm.solve_flows(_withdrawal([1, 0, -1])))[0]
    from_bus1 = fm.line_flows(fm.solve_flows(_withdrawal([0, 1, -1])))[0]
    assert from_bus0 == pytest.approx(6 / 7)
    assert from_bus1 == pytest.approx(1 / 14)


def _angle_flows(nb, edges, suscept, p):
    """Reference DC power flow from bus angles (bus 0 is the slack)."""
    B = np.zeros((nb, nb))
    for (a, b), s in zip(edges, suscept):
        B[a, a] += s
        B[b, b] += s
        B[a, b] -= s
        B[b, a] -= s
    theta = np.zeros(nb)
    theta[1:] = np.linalg.solve(B[1:, 1:], p[1:])
    return np.array([s * (theta[a] - theta[b]) for (a, b), s in zip(edges, suscept)])


@st.composite
def networks(draw):
    nb = draw(st.integers(2, 8))
    edges = set()
    for i in range(1, nb):
        j = draw(st.integers(0, i - 1))
        edges.add((j, i))
    extra = draw(st.lists(st.tuples(st.integers(0, nb - 1), st.integers(0, nb - 1)), max_size=nb))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    edges = sorted(edges)
    suscept = draw(st.lists(st.floats(0.5, 50.0), min_size=len(edges), max_size=len(edges)))
    p = np.array(draw(st.lists(st.floats(-100, 100), min_size=nb, max_size=nb)))
    return nb, edges, suscept, p - p.mean()


@given(networks())
def test_flows_match_angle_power_flow(net):
    nb, edges, suscept, p = net
    fm = build_flow_model(_instance(nb, edges, suscept))
    flows = fm.line_flows(fm.solve_flows(_withdrawal(p)))
    assert np.max(np.abs(flows - _angle_flows(nb, edges, suscept, p)), initial=0.0) <= 1e-9 * max(1.0, np.abs(p).max())
    assert np.max(np.abs(fm.A.sum(axis=0)), initial=0.0) <= 1e-12


def test_balanced_injections_over_random_networks():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        nb = int(rng.integers(2, 9))
        edges = {(int(rng.integers(0, i)), i) for i in range(1, nb)}
        for _ in range(int(rng.integers(0, nb))):
            a, b = rng.choice(nb, 2, replace=False)
            edges.add((int(min(a, b)), int(max(a, b))))
        edges = sorted(edges)
        suscept = rng.uniform(0.5, 50.0, len(edges))
        p = rng.uniform(-100, 100, nb)
        p -= p.mean()
        fm = build_flow_model(_instance(nb, edges, suscept))
        flows = fm.line_flows(fm.solve_flows(_withdrawal(p)))
        worst = max(worst, np.max(np.abs(flows - _angle_flows(nb, edges, suscept, p))))
    assert worst <= 1e-9


def test_flow_model_is_deterministic():
    inst, _ = load_fixture("fix39")
    a, b = build_flow_model(inst), build_flow_model(inst)
    assert np.array_equal(a.K, b.K) and np.array_equal(a.A, b.A)
    assert np.linalg.matrix_rank(a.A) == inst.n_buses - 1


def test_load_profile_is_read_only():
    prof = LoadProfile([[1.0, 2.0]])
    with pytest.raises(ValueError):
        prof.values[0, 0] = 5.0
    with pytest.raises(DimensionError):
        LoadProfile([1.0, 2.0])
