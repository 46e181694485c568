import io
import json

import pytest

from fairsub.network import (
    Arc,
    Instance,
    InstanceError,
    InstanceParseError,
    burdens,
    changed_arcs,
    check_assignment,
    dump_assignment,
    load_assignment,
    load_instance,
    natural_key,
    relabel_resources,
    scheduler_arcs,
    structural_lower_bound,
    total_imbalance,
)


def test_natural_key_orders_numeric_suffixes():
    assert sorted(["r10", "r2", "r1"], key=natural_key) == ["r1", "r2", "r10"]


def test_round_trip_t1(t1):
    back = load_instance(t1.dumps())
    assert back == t1
    assert len(back.nodes) == 2 and len(back.arcs) == 2


def test_load_from_stream_and_bytes(d1):
    assert load_instance(io.StringIO(d1.dumps())) == d1
    assert load_instance(d1.dumps().encode()) == d1


def _doc(inst):
    return json.loads(inst.dumps())


def test_incompatible_initial_rejected(t1):
    doc = _doc(t1)
    doc["arcs"][0]["candidates"] = ["r2"]
    with pytest.raises(InstanceError, match="initial assignment incompatible"):
        load_instance(json.dumps(doc))


def test_node_in_two_schedulers_rejected(d1):
    doc = _doc(d1)
    doc["schedulers"]["s2"] = ["n3", "n1"]
    with pytest.raises(InstanceError, match="partition"):
        load_instance(json.dumps(doc))


def test_parse_error_has_context(t1):
    doc = _doc(t1)
    del doc["arcs"][1]["to"]
    with pytest.raises(InstanceParseError, match="arcs"):
        load_instance(json.dumps(doc))
    with pytest.raises(InstanceParseError):
        load_instance("{not json")


def test_imbalance_fixtures(t1, d1):
    assert total_imbalance(t1, t1.initial).total == 4
    assert total_imbalance(d1, d1.initial).total == 4
    rep = total_imbalance(t1, t1.initial)
    assert rep.imbalance("n1", "r1") == 1 and rep.imbalance("n1", "r2") == 1


def test_self_loop_contributes_nothing():
    arcs = (Arc("a1", "n1", "n1", ("r1", "r2"), "r1"),)
    inst = Instance(("n1",), ("r1", "r2"), {"s1": ("n1",)}, arcs)
    for r in ("r1", "r2"):
        assert total_imbalance(inst, {"a1": r}).total == 0


def test_missing_arc_is_an_error(t1):
    with pytest.raises(KeyError):
        total_imbalance(t1, {"a1": "r1"})


def test_scheduler_arcs(d1):
    assert scheduler_arcs(d1, "s1") == {"a1", "a2"}
    assert scheduler_arcs(d1, "s2") == {"a3"}
    with pytest.raises(KeyError):
        scheduler_arcs(d1, "s9")


def test_single_scheduler_owns_everything(t1):
    assert scheduler_arcs(t1, "s1") == {"a1", "a2"}


def test_burdens_examples(d1):
    b = burdens(d1, {**d1.initial, "a2": "r1"})
    assert (b.changes, dict(b.per_scheduler), b.max_burden) == (1, {"s1": 1, "s2": 0}, 1)
    b = burdens(d1, d1.initial)
    assert (b.changes, b.max_burden) == (0, 0)
    b = burdens(d1, {**d1.initial, "a1": "r2", "a3": "r2"})
    assert (b.changes, b.as_list(), b.max_burden) == (2, [1, 1], 1)


def test_structural_lower_bound(t1, d1):
    assert structural_lower_bound(t1) == 0
    assert structural_lower_bound(d1) == 0
    arcs = (Arc("a1", "c", "x", ("r1",), "r1"), Arc("a2", "c", "y", ("r1",), "r1"))
    star = Instance(("c", "x", "y"), ("r1",), {"s1": ("c", "x", "y")}, arcs)
    assert structural_lower_bound(star) == 4


def test_changed_arcs_and_assignment_io(d1):
    phi = {**d1.initial, "a3": "r2"}
    assert changed_arcs(d1, phi) == ["a3"]
    assert load_assignment(dump_assignment(phi)) == phi
    check_assignment(d1, phi)
    with pytest.raises(ValueError):
        check_assignment(d1, {**phi, "a1": "r9"})


def test_relabel_preserves_accounting(d1):
    swapped = relabel_resources(d1, {"r1": "r2", "r2": "r1"})
    phi = {"a1": "r1", "a2": "r1", "a3": "r1"}
    mapped = {a: {"r1": "r2", "r2": "r1"}[r] for a, r in phi.items()}
    assert total_imbalance(d1, phi).total == total_imbalance(swapped, mapped).total
    assert burdens(d1, phi) == burdens(swapped, mapped)
