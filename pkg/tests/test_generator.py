import pytest

from fairsub.generator import (
    DESK_LADDER,
    BandError,
    ClassParams,
    collaboration_share,
    example1_instance,
    generate_instance,
    generate_reference_pool,
    manifest_csv,
    reference_solutions,
    size_class,
)
from fairsub.models import build_stage1, build_stage2_efficient
from fairsub.network import Arc, Instance, load_instance, total_imbalance
from fairsub.solver import solve_brute_force


def test_same_params_same_bytes():
    p = ClassParams(seed=7, nodes=12, arcs=60)
    assert generate_instance(p).dumps() == generate_instance(p).dumps()
    assert generate_instance(p, index=1).dumps() != generate_instance(p).dumps()


def test_zero_collaboration_keeps_arcs_internal():
    inst = generate_instance(ClassParams(seed=3, nodes=12, arcs=80, collaboration=0))
    assert all(inst.owner(a.origin) == inst.owner(a.dest) for a in inst.arcs)


@pytest.mark.parametrize("ratio", [0.0, 0.1, 0.3, 0.5, 1.0])
def test_collaboration_ratio_tracked(ratio):
    inst = generate_instance(ClassParams(seed=1, nodes=20, arcs=150, collaboration=ratio))
    assert abs(collaboration_share(inst) - ratio) <= 0.05


def test_desk_default_class_validates():
    inst = generate_instance(ClassParams())
    back = load_instance(inst.dumps())
    assert back == inst
    assert len(inst.schedulers) == 3 and len(inst.nodes) == 30 and len(inst.arcs) == 300
    assert inst.meta["I0"] > 0


def test_initial_within_candidates_and_sizes():
    inst = generate_instance(ClassParams(seed=5, nodes=10, arcs=40, resources=14))
    for a in inst.arcs:
        assert a.initial in a.candidates
        assert 1 <= a.volume <= 100 and 10 <= a.miles <= 2000
        assert 0 <= a.tod < 24 and 0 <= a.tow < 168
        assert a.size_class == size_class(a.volume)


def test_band_retry_and_failure():
    p = ClassParams(seed=2, nodes=10, arcs=30)
    i0 = generate_instance(p).meta["I0"]
    hit = generate_instance(ClassParams(seed=2, nodes=10, arcs=30, imbalance_band=(i0, i0)))
    assert hit.meta["I0"] == i0
    with pytest.raises(BandError, match="achieved range"):
        generate_instance(ClassParams(seed=2, nodes=10, arcs=30, imbalance_band=(10**6, 10**6), max_retries=3))


def test_params_validation_and_round_trip():
    with pytest.raises(ValueError):
        ClassParams(arcs=0)
    with pytest.raises(ValueError):
        ClassParams(collaboration=1.5)
    with pytest.raises(ValueError):
        ClassParams(schedulers=5, nodes=3)
    p = ClassParams(seed=4, imbalance_band=(1, 9))
    assert ClassParams.from_dict(p.to_dict()) == p


def test_ladder_grows():
    arcs = [DESK_LADDER[k].arcs for k in sorted(DESK_LADDER)]
    assert arcs == sorted(arcs)
    assert DESK_LADDER[1].nodes == 33 and DESK_LADDER[1].schedulers == 2


def _two_optima():
    arcs = (Arc("a1", "n1", "n2", ("r1", "r2"), "r1"), Arc("a2", "n2", "n1", ("r1", "r2"), "r2"))
    return Instance(("n1", "n2"), ("r1", "r2"), {"s1": ("n1", "n2")}, arcs)


def test_alternates_from_symmetry():
    refs = reference_solutions(_two_optima(), alternates=2)
    assert refs == [{"a1": "r1", "a2": "r1"}, {"a1": "r2", "a2": "r2"}]
    assert len(reference_solutions(_two_optima(), alternates=1)) == 1


def test_pool_size_and_determinism():
    p = ClassParams(seed=9, nodes=6, arcs=10, resources=4)
    with pytest.raises(ValueError):
        generate_reference_pool(p, 0)
    a = generate_reference_pool(p, 3, seed=1)
    b = generate_reference_pool(p, 3, seed=1)
    assert [(i.dumps(), phi) for i, phi in a] == [(i.dumps(), phi) for i, phi in b]
    assert len(a) == 3


def test_references_are_efficient_optima():
    p = ClassParams(seed=4, nodes=6, arcs=9, resources=4)
    for inst, phi in generate_reference_pool(p, 4, alternates=3):
        istar = solve_brute_force(build_stage1(inst)).value
        assert total_imbalance(inst, phi).total == istar
        oracle = solve_brute_force(build_stage2_efficient(inst, None, int(istar)))
        assert sum(phi[a.id] != a.initial for a in inst.arcs) == oracle.value


def test_manifest_header():
    text = manifest_csv([["x.json", 1, 5, "c"]])
    assert text.splitlines() == ["instance_file,seed,I0,class", "x.json,1,5,c"]


def test_example1_pattern():
    inst = example1_instance()
    assert total_imbalance(inst, inst.initial).total == 16
    assert sorted(inst.schedulers) == ["s1", "s2", "s3"]
