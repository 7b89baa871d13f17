"""Model loading, validation, grid generation, aggregate views."""

import json

import numpy as np
import pytest

from cltlsynth.system import (AggregateSystem, ContinuousSystem, ModelError,
                              MultiRobotInstance, TransitionSystem,
                              aggregate_view, build_grid_system, label_vector,
                              load_model, validate)


def chain_ts(labels_on=("s1",)):
    return TransitionSystem(
        states=("s0", "s1", "s2"),
        transitions=frozenset({(0, 1), (1, 2), (0, 0), (1, 1), (2, 2)}),
        ap=("a",),
        labels=tuple(frozenset({"a"}) if name in labels_on else frozenset()
                     for name in ("s0", "s1", "s2")),
    )


def test_load_explicit_model(tmp_path):
    payload = {
        "ap": ["a"],
        "robots": [{
            "states": ["s0", "s1", "s2"],
            "transitions": [[0, 1], [1, 2], [0, 0], [1, 1], [2, 2]],
            "labels": {"s1": ["a"]},
            "init": 0,
        }],
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(payload))
    inst = load_model(path)
    assert isinstance(inst, MultiRobotInstance)
    ts = inst.systems[0]
    assert ts.n_states == 3
    assert len(ts.transitions) == 5
    assert ts.labels[1] == frozenset({"a"})
    assert inst.initial_states == (0,)


def test_load_grid_model(tmp_path):
    payload = {
        "ap": [],
        "grid": {"width": 10, "height": 10,
                 "regions": {"A": [[0, 0], [1, 0]], "D": [[5, 5]]}},
        "robots": [{"init": [0, 0]}, {"init": [9, 9]}],
    }
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(payload))
    inst = load_model(path)
    ts = inst.systems[0]
    assert ts.n_states == 100
    # interior cells: 4 moves + stay; corners: 2 + stay; edges: 3 + stay
    out_degrees = [len(ts.successors(i)) for i in range(100)]
    assert min(out_degrees) == 3 and max(out_degrees) == 5
    corner = 0
    assert sorted(ts.successors(corner)) == [0, 1, 10]
    assert "A" in ts.labels[0] and "D" in ts.labels[55]
    assert inst.grid_shape == (10, 10)


def test_grid_degree_bounds_various_sizes():
    for w, h in ((2, 2), (3, 4), (8, 8)):
        ts = build_grid_system(w, h, {})
        degs = [len(ts.successors(i)) for i in range(w * h)]
        assert min(degs) >= 3 and max(degs) <= 5


def test_load_rejects_label_on_missing_state(tmp_path):
    payload = {
        "ap": ["a"],
        "robots": [{"states": ["s0"], "transitions": [[0, 0]],
                    "labels": {"nope": ["a"]}, "init": 0}],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ModelError, match="missing state"):
        load_model(path)


def test_load_rejects_dangling_transition(tmp_path):
    payload = {
        "ap": [],
        "robots": [{"states": ["s0"], "transitions": [[0, 3]],
                    "labels": {}, "init": 0}],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ModelError, match="dangling"):
        load_model(path)


def test_load_rejects_unknown_label(tmp_path):
    payload = {
        "ap": [],
        "robots": [{"states": ["s0"], "transitions": [[0, 0]],
                    "labels": {"s0": ["mystery"]}, "init": 0}],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ModelError, match="unknown label"):
        load_model(path)


def test_validate_flags_ap_mismatch():
    ts1 = chain_ts()
    ts2 = TransitionSystem(("s0",), frozenset({(0, 0)}), ("b",), (frozenset(),))
    inst = MultiRobotInstance((ts1, ts2), (0, 0))
    problems = validate(inst)
    assert len(problems) == 1 and "propositions differ" in problems[0]


def test_validate_flags_bad_initial_state():
    inst = MultiRobotInstance((chain_ts(),), (7,))
    problems = validate(inst)
    assert len(problems) == 1 and "out of range" in problems[0]


def test_validate_clean_grid():
    ts = build_grid_system(4, 4, {"A": [[0, 0]]})
    inst = MultiRobotInstance((ts, ts), (0, 5))
    assert validate(inst) == []


def test_adjacency_orientation():
    ts = chain_ts()
    a = ts.adjacency()
    # entry [j][i] says i can move to j
    assert a[1][0] == 1 and a[0][1] == 0


def test_label_vector_examples():
    ts = chain_ts(labels_on=("s1",))
    assert list(label_vector(ts, "a")) == [0, 1, 0]
    all_on = chain_ts(labels_on=("s0", "s1", "s2"))
    assert list(label_vector(all_on, "a")) == [1, 1, 1]
    none_on = chain_ts(labels_on=())
    assert list(label_vector(none_on, "a")) == [0, 0, 0]
    with pytest.raises(ModelError, match="unknown proposition"):
        label_vector(ts, "zz")


def test_label_vector_matches_membership():
    ts = build_grid_system(3, 3, {"A": [[0, 0], [2, 2]]})
    vec = label_vector(ts, "A")
    for s in range(ts.n_states):
        assert (vec[s] == 1) == ("A" in ts.labels[s])


def test_aggregate_view_counts_robots():
    ts = chain_ts()
    inst = MultiRobotInstance((ts, ts), (0, 0))
    agg = aggregate_view(inst)
    assert agg.w0 == (2, 0, 0)
    inst3 = MultiRobotInstance((ts, ts, ts), (0, 0, 1))
    assert aggregate_view(inst3).w0 == (2, 1, 0)


def test_aggregate_view_total_is_exact():
    ts = build_grid_system(3, 2, {})
    inst = MultiRobotInstance(tuple([ts] * 5), (0, 1, 1, 4, 5))
    agg = aggregate_view(inst)
    assert sum(agg.w0) == 5


def test_aggregate_view_rejects_different_labels():
    ts1 = chain_ts(labels_on=("s1",))
    ts2 = chain_ts(labels_on=("s2",))
    inst = MultiRobotInstance((ts1, ts2), (0, 0))
    with pytest.raises(ModelError, match="labeling differs"):
        aggregate_view(inst)


def test_load_continuous_model(tmp_path):
    payload = {
        "continuous": {
            "robots": [
                {"F": [[1.0]], "G": [[1.0]], "c": [0.0], "init": [0.0]},
                {"F": [[1.0]], "G": [[1.0]], "c": [0.0], "init": [0.5]},
            ],
            "atoms": {"A": {"H": [[1.0], [-1.0]], "h": [1.1, -0.9]}},
            "state_bounds": [[-10.0, 10.0]],
            "input_bounds": [[-1.0, 1.0]],
        }
    }
    path = tmp_path / "cont.json"
    path.write_text(json.dumps(payload))
    sys_ = load_model(path)
    assert isinstance(sys_, ContinuousSystem)
    assert sys_.n_robots == 2 and sys_.d_w == 1 and sys_.d_u == 1
    assert sys_.validate() == []


def test_continuous_rejects_infinite_bounds(tmp_path):
    payload = {
        "continuous": {
            "robots": [{"F": [[1.0]], "G": [[1.0]], "c": [0.0], "init": [0.0]}],
            "atoms": {},
            "state_bounds": [[-1e400, 10.0]],
            "input_bounds": [[-1.0, 1.0]],
        }
    }
    path = tmp_path / "cont.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ModelError, match="finite"):
        load_model(path)


def test_groups_loaded_and_checked(tmp_path):
    payload = {
        "ap": [],
        "grid": {"width": 2, "height": 2, "regions": {}},
        "robots": [{"init": 0}, {"init": 1}, {"init": 2}],
        "groups": {"cam": [0, 2]},
    }
    path = tmp_path / "g.json"
    path.write_text(json.dumps(payload))
    inst = load_model(path)
    assert inst.groups["cam"] == frozenset({0, 2})
    payload["groups"] = {"cam": [7]}
    path.write_text(json.dumps(payload))
    with pytest.raises(ModelError, match="out of range"):
        load_model(path)
