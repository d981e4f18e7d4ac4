import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucscreen.errors import DimensionMismatchError, EmptyTrainingError, InvalidRangeError, ValidationError
from ucscreen.harness.fixtures import load_fixture
from ucscreen.model import CommitmentSchedule, LoadProfile
from ucscreen.predictor import (
    TrainingSet,
    error_rate,
    load_model,
    neighbours,
    partial_schedule,
    predict,
    train,
    model_from_dict,
    save_model,
)


@pytest.fixture
def fix_a():
    return load_fixture("fix_a")


def pairs_from(rng, inst, loads, n):
    """Random load samples labelled with random schedules."""
    out = []
    for _ in range(n):
        L = loads.values * rng.uniform(0.5, 1.5, loads.values.shape)
        S = rng.integers(0, 2, (inst.n_generators, inst.horizon))
        out.append((LoadProfile(L), CommitmentSchedule(S)))
    return out


def test_identical_samples_reproduce_their_schedule(fix_a):
    inst, loads = fix_a
    sched = CommitmentSchedule(np.array([[1, 0], [0, 1]]))
    model = train(TrainingSet.from_pairs([(loads, sched)] * 5, inst), 3)
    assert predict(model, loads) == CommitmentSchedule(sched.values, provenance="PREDICTED")


def test_single_neighbour_recalls_training_labels(fix_a):
    inst, loads = fix_a
    pairs = pairs_from(np.random.default_rng(1), inst, loads, 30)
    model = train(TrainingSet.from_pairs(pairs, inst), 1)
    for L, S in pairs:
        assert np.array_equal(predict(model, L).values, S.values)
        assert error_rate(predict(model, L), S) == 0.0


def test_even_split_votes_on(fix_a):
    inst, loads = fix_a
    on = CommitmentSchedule(np.ones((2, 2), dtype=int))
    off = CommitmentSchedule(np.zeros((2, 2), dtype=int))
    model = train(TrainingSet.from_pairs([(loads, on), (loads, off)], inst), 2)
    assert predict(model, loads).values.tolist() == [[1, 1], [1, 1]]


def test_equal_distances_break_by_index(fix_a):
    inst, loads = fix_a
    pairs = pairs_from(np.random.default_rng(2), inst, loads, 6)
    pairs[4] = (pairs[1][0], pairs[4][1])
    model = train(TrainingSet.from_pairs(pairs, inst), 2)
    assert neighbours(model, pairs[1][0]).tolist() == [1, 4]


def test_bad_k_and_empty_set(fix_a):
    inst, loads = fix_a
    ts = TrainingSet.from_pairs(pairs_from(np.random.default_rng(3), inst, loads, 4), inst)
    for k in (0, -1, 2.5, 5):
        with pytest.raises(ValidationError):
            train(ts, k)
    with pytest.raises(EmptyTrainingError):
        train(TrainingSet(np.zeros((0, 3, 2)), np.zeros((0, 2, 2), dtype=np.int8), inst.fingerprint()), 1)


def test_shape_checks(fix_a):
    inst, loads = fix_a
    with pytest.raises(DimensionMismatchError):
        TrainingSet(np.zeros((3, 3, 2)), np.zeros((2, 2, 2), dtype=np.int8), "x")
    with pytest.raises(DimensionMismatchError):
        TrainingSet(np.zeros((2, 3, 2)), np.zeros((2, 2, 3), dtype=np.int8), "x")
    model = train(TrainingSet.from_pairs(pairs_from(np.random.default_rng(4), inst, loads, 4), inst), 1)
    with pytest.raises(DimensionMismatchError):
        predict(model, LoadProfile(np.ones((3, 3))))
    with pytest.raises(DimensionMismatchError):
        error_rate(CommitmentSchedule(np.ones((2, 2))), CommitmentSchedule(np.ones((2, 3))))


def test_fingerprint_and_save_round_trip(fix_a, tmp_path):
    inst, loads = fix_a
    pairs = pairs_from(np.random.default_rng(5), inst, loads, 12)
    a = train(TrainingSet.from_pairs(pairs, inst), 3)
    b = train(TrainingSet.from_pairs(pairs, inst), 3)
    assert a.fingerprint() == b.fingerprint()
    assert train(TrainingSet.from_pairs(pairs[:-1], inst), 3).fingerprint() != a.fingerprint()
    path = tmp_path / "model.json"
    save_model(a, path)
    again = load_model(path)
    assert again.fingerprint() == a.fingerprint()
    for L, _ in pairs_from(np.random.default_rng(6), inst, loads, 10):
        assert predict(again, L) == predict(a, L)
    with pytest.raises(ValidationError):
        model_from_dict({"kind": "tree"})


def test_partial_schedule_steps():
    full = CommitmentSchedule(np.ones((3, 24), dtype=int))
    assert partial_schedule(full, 1).defined_steps == tuple(range(1, 25))
    assert partial_schedule(full, 4).defined_steps == (4, 8, 12, 16, 20, 24)
    assert partial_schedule(full, 25).defined_steps == ()
    assert partial_schedule(full, 4).provenance == "PARTIAL"
    for bad in (0, -2, 1.5):
        with pytest.raises(InvalidRangeError):
            partial_schedule(full, bad)


@given(st.integers(1, 30), st.integers(1, 30))
def test_partial_steps_are_multiples(interval, T):
    full = CommitmentSchedule(np.zeros((2, T), dtype=int))
    steps = partial_schedule(full, interval).defined_steps
    assert all(s % interval == 0 and 1 <= s <= T for s in steps)
    assert len(steps) == T // interval


@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
def test_prediction_is_a_majority_of_neighbours(seed, k):
    inst, loads = load_fixture("fix_a")
    rng = np.random.default_rng(seed)
    pairs = pairs_from(rng, inst, loads, 10)
    model = train(TrainingSet.from_pairs(pairs, inst), k)
    query = LoadProfile(loads.values * rng.uniform(0.5, 1.5, loads.values.shape))
    idx = neighbours(model, query)
    assert len(idx) == k
    votes = np.mean([pairs[i][1].values for i in idx], axis=0)
    assert np.array_equal(predict(model, query).values, (votes >= 0.5).astype(int))
