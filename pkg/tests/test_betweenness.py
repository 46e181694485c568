import random

import pytest

from fairsub.betweenness import (
    BetweennessReport,
    assign_kappa,
    classify,
    dynamic_kappa,
    edge_betweenness_exact,
    edge_betweenness_sampled,
    quantile_thresholds,
    report_csv,
    static_kappa,
)

from .oracles import digraph, path_count_betweenness


def test_p3(p3):
    assert dict(edge_betweenness_exact(p3).values) == {"e1": 2.0, "e2": 2.0}


def test_single_arc():
    assert dict(edge_betweenness_exact(digraph(2, [(0, 1)])).values) == {"a1": 1.0}


def test_diamond_splits_paths():
    g = digraph(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    assert all(v == pytest.approx(1.5) for v in edge_betweenness_exact(g).values.values())


def test_parallel_arcs_share_paths():
    g = digraph(2, [(0, 1), (0, 1)])
    assert dict(edge_betweenness_exact(g).values) == {"a1": 0.5, "a2": 0.5}
    assert path_count_betweenness(g) == {"a1": 0.5, "a2": 0.5}


def test_full_pivot_sample_equals_exact(p3):
    assert edge_betweenness_sampled(p3, 3, seed=5).values == edge_betweenness_exact(p3).values


def test_sampling_deterministic_and_range_checked():
    rng = random.Random(3)
    g = digraph(12, [(rng.randrange(12), rng.randrange(12)) for _ in range(30)])
    assert edge_betweenness_sampled(g, 5, 42).values == edge_betweenness_sampled(g, 5, 42).values
    with pytest.raises(ValueError):
        edge_betweenness_sampled(g, 0, 1)
    with pytest.raises(ValueError):
        edge_betweenness_sampled(g, 13, 1)


def test_sampled_estimator_is_unbiased():
    rng = random.Random(11)
    g = digraph(30, [(rng.randrange(30), rng.randrange(30)) for _ in range(75)])
    exact = edge_betweenness_exact(g).values
    runs = [edge_betweenness_sampled(g, 15, seed).values for seed in range(200)]
    for a, b in exact.items():
        if b >= 1:
            mean = sum(r[a] for r in runs) / len(runs)
            assert abs(mean - b) <= 0.1 * b, a


def test_quantiles_nearest_rank():
    rep = BetweennessReport({f"a{i}": v for i, v in enumerate([0, 0, 1, 2, 4, 8])})
    assert quantile_thresholds(rep, 0.5, 0.9) == (1, 8)
    flat = BetweennessReport({"a": 3.0, "b": 3.0})
    t = quantile_thresholds(flat, 0.6, 0.9)
    assert t == (3.0, 3.0)
    assert set(assign_kappa(flat, t).classes.values()) == {"High"}
    with pytest.raises(ValueError):
        quantile_thresholds(BetweennessReport({}), 0.5, 0.9)
    with pytest.raises(ValueError):
        quantile_thresholds(flat, 0.9, 0.5)


def test_equal_quantiles_leave_medium_empty():
    rep = BetweennessReport({f"a{i}": float(i) for i in range(10)})
    k = assign_kappa(rep, quantile_thresholds(rep, 0.5, 0.5))
    assert "Medium" not in k.classes.values()


def test_band_rules():
    assert classify(0.1, (1, 5)) == "Low"
    assert classify(1, (1, 5)) == "Medium"
    assert classify(5, (1, 5)) == "High"
    rep = BetweennessReport({"a": 0.1})
    assert assign_kappa(rep, (1, 5), (1, 3, 5)).kappa["a"] == 1
    with pytest.raises(ValueError):
        assign_kappa(rep, (1, 5), (3, 1, 5))
    with pytest.raises(ValueError):
        assign_kappa(rep, (1, 5), (0, 1, 1))


def test_uniform_class_kappas_match_static(e1):
    report, dyn = dynamic_kappa(e1, class_kappas=(2, 2, 2))
    assert dict(dyn.kappa) == dict(static_kappa(e1, 2).kappa)
    assert report.method == "exact"


def test_kappa_monotone_in_betweenness(e1):
    rep, k = dynamic_kappa(e1)
    for a in rep.values:
        for b in rep.values:
            if rep.values[a] >= rep.values[b]:
                assert k.kappa[a] >= k.kappa[b]


def test_report_csv_columns(p3):
    rep = edge_betweenness_exact(p3)
    text = report_csv(rep, assign_kappa(rep, quantile_thresholds(rep, 0.6, 0.9)))
    assert text.splitlines()[0] == "arc_id,betweenness,class,kappa"
    assert len(text.splitlines()) == 3
