"""Acceptance criteria, one or more tests per criterion.

Run ``pytest tests/test_acceptance.py`` for the per-criterion PASS/FAIL
summary printed after the test report.
"""
import filecmp
import json
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from fairsub.betweenness import dynamic_kappa, edge_betweenness_exact, edge_betweenness_sampled, static_kappa
from fairsub.cli import read_csv_rows, run
from fairsub.generator import example1_instance, generate_instance, generate_reference_pool
from fairsub.models import EFFICIENT, GINI, KINDS, MINIMAX, STAGE1, WEIGHTED, build
from fairsub.network import fixture, total_imbalance
from fairsub.portfolio import dominates, gini_coefficient, partial_implementation_curve, sweep_alpha
from fairsub.scorer import (
    MLP,
    FrequencyBaseline,
    build_training_set,
    evaluate,
    top_kappa_candidates,
    train_scorer,
)
from fairsub.solver import OPTIMAL, solve_brute_force, solve_exact
from fairsub.solver.brute import all_outcomes

from .oracles import digraph, gini_direct, pairwise, path_count_betweenness
from .suites import desk_suite, filter_params, small_suite

criterion = pytest.mark.criterion

DESK = desk_suite()
STAGE2 = (EFFICIENT, MINIMAX, WEIGHTED, GINI)


def _istar(inst, cands=None):
    sol = solve_exact(build(STAGE1, inst, cands))
    assert sol.status == OPTIMAL
    return int(sol.value)


def _pair(inst, istar, cands=None):
    eff = solve_exact(build(EFFICIENT, inst, cands, istar))
    fair = solve_exact(build(MINIMAX, inst, cands, istar))
    assert eff.status == fair.status == OPTIMAL
    return eff, fair


# ---------------------------------------------------------------------------

@criterion(1, "exact solver equals brute force on 500 random instances, all five kinds, < 60 s")
def test_c1_oracle_equivalence():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    checked = 0
    for inst in small_suite(500):
        assert len(inst.arcs) <= 10 and len(inst.resources) <= 4 and len(inst.schedulers) <= 3
        istar = int(solve_brute_force(build(STAGE1, inst)).value)
        alpha = Fraction(rng.randint(0, 8), 8)
        omega = Fraction(rng.randint(0, 8), 8)
        for kind in KINDS:
            spec = build(kind, inst, None, None if kind == STAGE1 else istar, alpha, omega)
            exact, oracle = solve_exact(spec), solve_brute_force(spec)
            assert exact.status == oracle.status == OPTIMAL
            assert exact.value == oracle.value, (inst.meta, kind)
            assert exact.bound == exact.value
            checked += 1
    elapsed = time.perf_counter() - t0
    print(f"\n  {checked} specs, {elapsed:.1f} s")
    assert checked == 2500
    assert elapsed < 60


# ---------------------------------------------------------------------------

@criterion(2, "T1 and D1 give (I0, I*, delta*, Z_fair) = (4, 0, 1, 1) through the CLI")
@pytest.mark.parametrize("name", ["T1", "D1"])
def test_c2_fixtures_end_to_end(name, tmp_path):
    inst = fixture(name)
    i0 = total_imbalance(inst, inst.initial).total
    istar = int(solve_brute_force(build(STAGE1, inst)).value)
    dstar = solve_brute_force(build(EFFICIENT, inst, None, istar)).value
    zfair = solve_brute_force(build(MINIMAX, inst, None, istar)).value
    assert (i0, istar, dstar, zfair) == (4, 0, 1, 1)

    assert run(["gen", "--fixture", name, "--out", str(tmp_path)]) == 0
    path = str(tmp_path / f"{name.lower()}.json")
    assert run(["solve", "--instance", path, "--model", "stage1", "--out", str(tmp_path / "s1")]) == 0
    s1 = str(tmp_path / "s1" / "solution.json")
    got = {}
    for model in ("stage2-efficient", "stage2-minimax"):
        out = tmp_path / model
        assert run(["solve", "--instance", path, "--model", model, "--stage1", s1, "--out", str(out)]) == 0
        got[model] = json.loads((out / "solution.json").read_text())["solution"]["objective"]
    s1doc = json.loads(Path(s1).read_text())
    cli = (total_imbalance(inst, inst.initial).total, s1doc["istar_found"],
           got["stage2-efficient"]["changes"], got["stage2-minimax"]["max_burden"])
    assert cli == (4, 0, 1, 1)

    assert run(["portfolio", "--instance", path, "--out", str(tmp_path / "pf")]) == 0
    header, row = read_csv_rows(tmp_path / "pf" / "tradeoff.csv")
    row = dict(zip(header, row))
    assert (row["I0"], row["Istar"], row["delta_star"], row["z_fair"]) == ("4", "0", "1", "1")


# ---------------------------------------------------------------------------

@criterion(3, "fairness sign pattern on the suites; strict on the three-scheduler showcase")
def test_c3_sign_pattern():
    strict = []
    suite = DESK + small_suite(200)
    for inst in suite:
        if len(inst.schedulers) < 2:
            continue
        istar = _istar(inst)
        eff, fair = _pair(inst, istar)
        d_star, z_star = eff.objective.changes, eff.objective.max_burden
        d_fair, z_fair = fair.objective.changes, fair.objective.max_burden
        assert d_fair >= d_star and z_fair <= z_star, inst.meta
        if d_fair > d_star and z_fair < z_star:
            strict.append(inst)
    e1 = example1_instance()
    eff, fair = _pair(e1, _istar(e1))
    assert (eff.objective.changes, eff.objective.max_burden) == (4, 4)
    assert (fair.objective.changes, fair.objective.max_burden) == (6, 2)
    assert sorted(fair.objective.burdens.values()) == [2, 2, 2]
    assert sorted(eff.objective.burdens.values()) == [0, 0, 4]
    print(f"\n  strict on {len(strict)} instances")
    assert strict


# ---------------------------------------------------------------------------

@criterion(4, "alpha sweep: delta nondecreasing, Z nonincreasing, interior optima nondominated")
def test_c4_alpha_sweep():
    alphas = [Fraction(k, 10) for k in range(11)]
    moved = 0
    for inst in DESK:
        istar = _istar(inst)
        pf = sweep_alpha(inst, None, istar, alphas)
        assert all(e.optimal for e in pf.entries)
        pts = [e.point for e in pf.entries]
        deltas = [p[0] for p in pts]
        zs = [p[1] for p in pts]
        assert deltas == sorted(deltas), inst.meta
        assert zs == sorted(zs, reverse=True), inst.meta
        interior = pts[1:-1]
        for p in interior:
            assert not any(dominates(q, p) for q in interior)
        moved += pts[0] != pts[-1]
    print(f"\n  {moved} of {len(DESK)} instances change between alpha=0 and alpha=1")


# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def filter_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("filter")
    p = filter_params("pool")
    args = ["--schedulers", str(p.schedulers), "--nodes", str(p.nodes), "--arcs", str(p.arcs),
            "--resources", str(p.resources), "--collab", str(p.collaboration), "--seed", str(p.seed)]
    assert run(["gen", "--name", "pool", *args, "--weeks", "13", "--pool", "--out", str(root / "pool")]) == 0
    t0 = time.perf_counter()
    assert run(["train", "--pool", str(root / "pool" / "pool.json"), "--out", str(root / "model")]) == 0
    train_s = time.perf_counter() - t0
    assert run(["gen", "--name", "bench", *args, "--weeks", "8", "--salt", "77", "--out", str(root / "bench")]) == 0
    files = sorted(str(f) for f in (root / "bench" / "instances").glob("*.json"))
    return root, files, train_s


@criterion(5, "filtering keeps I*_filtered >= I*_full, equality at full kappa, bench reduction >= 50%")
def test_c5_filtering(filter_run):
    root, files, _ = filter_run
    model = str(root / "model" / "model.json")
    assert run(["bench", "--instances", *files, "--scorer", model, "--out", str(root / "b")]) == 0
    header, *rows = read_csv_rows(root / "b" / "bench.csv")
    rows = [dict(zip(header, r)) for r in rows]
    assert len(rows) == len(files)
    before = after = 0
    for r in rows:
        assert int(r["resources"]) >= 8
        assert r["status_full"] == r["status_filtered"] == OPTIMAL
        assert int(r["istar_filtered"]) >= int(r["istar_full"])
        assert float(r["reduction_pct"]) >= 50.0, r
        before += int(r["pairs_before"])
        after += int(r["pairs_after"])
    equal = sum(r["optimal_equal"] == "1" for r in rows)
    print(f"\n  pair reduction {100 * (before - after) / before:.1f}% overall, "
          f"optimal-equal on {equal} of {len(rows)}")

    assert run(["bench", "--instances", *files, "--kappa", "full", "--out", str(root / "bf")]) == 0
    header, *rows = read_csv_rows(root / "bf" / "bench.csv")
    for r in (dict(zip(header, r)) for r in rows):
        assert r["reduction_pct"] == "0.00" and r["optimal_equal"] == "1"
        assert r["istar_full"] == r["istar_filtered"] and r["delta_full"] == r["delta_filtered"]


@criterion(5, "filtering keeps I*_filtered >= I*_full, equality at full kappa, bench reduction >= 50%")
def test_c5_candidates_keep_incumbent(filter_run):
    from fairsub.network import read_instance
    from fairsub.scorer import ScorerModel

    root, files, _ = filter_run
    model = ScorerModel.load(root / "model" / "model.json")
    for f in files:
        inst = read_instance(f)
        _, kappas = dynamic_kappa(inst)
        cands = top_kappa_candidates(inst, model, kappas)
        for a in inst.arcs:
            assert a.initial in cands[a.id]
            assert len(cands[a.id]) <= kappas.kappa[a.id] + 1
        full_k = {a.id: len(a.candidates) for a in inst.arcs}
        assert top_kappa_candidates(inst, model, full_k) == inst.full_candidates()
        assert _istar(inst, cands) >= _istar(inst)


# ---------------------------------------------------------------------------

def _random_digraphs(n_graphs=100, seed=6):
    rng = random.Random(seed)
    graphs = []
    for _ in range(n_graphs):
        n = rng.randint(2, 50)
        m = rng.randint(1, 3 * n)
        graphs.append(digraph(n, [(rng.randrange(n), rng.randrange(n)) for _ in range(m)]))
    return graphs


@criterion(6, "Brandes equals path enumeration on 100 digraphs; full-pivot sampling exact; dynamic collapses")
def test_c6_betweenness():
    graphs = _random_digraphs()
    assert max(len(g.nodes) for g in graphs) <= 50
    worst = 0.0
    for g in graphs:
        exact = edge_betweenness_exact(g).values
        oracle = path_count_betweenness(g)
        worst = max(worst, max(abs(exact[a] - oracle[a]) for a in exact))
        assert edge_betweenness_sampled(g, len(g.nodes), seed=len(g.arcs)).values == exact
    print(f"\n  max deviation {worst:.2e}")
    assert worst <= 1e-9
    for inst in DESK[:6]:
        for k in range(1, 6):
            _, dyn = dynamic_kappa(inst, class_kappas=(k, k, k))
            assert dict(dyn.kappa) == dict(static_kappa(inst, k).kappa)


# ---------------------------------------------------------------------------

@criterion(7, "scorer: TOP monotone to 1, beats baseline TOP_3 on a 13-week pool, gradient check, < 5 min")
def test_c7_scorer_pool():
    pool = generate_reference_pool(filter_params("pool"), 13)
    assert len({id(i) for i, _ in pool}) == 13
    ts = build_training_set(pool, seed=0)
    t0 = time.perf_counter()
    model = train_scorer(ts, seed=0)
    train_s = time.perf_counter() - t0
    kappas = list(range(1, len(ts.resources) + 1))
    net = dict(evaluate(model, ts, "test", kappas))
    base = dict(evaluate(FrequencyBaseline.from_training_set(ts), ts, "test", kappas))
    tops = [net[k] for k in kappas]
    assert all(a <= b for a, b in zip(tops, tops[1:]))
    assert net[len(ts.resources)] == 1.0
    print(f"\n  TOP_3 net {net[3]:.4f} vs baseline {base[3]:.4f}; training {train_s:.1f} s")
    assert net[3] >= base[3]
    assert train_s < 300


@criterion(7, "scorer: TOP monotone to 1, beats baseline TOP_3 on a 13-week pool, gradient check, < 5 min")
def test_c7_gradient_check():
    rng = np.random.default_rng(7)
    net = MLP([], 1, [2], 2, rng=rng)
    assert net.n_params() == 10
    cats = np.zeros((5, 0), dtype=np.int64)
    nums = rng.random((5, 1))
    y = rng.dirichlet([1, 1], size=5)
    _, grads = net.loss_and_grads(cats, nums, y)
    h = 1e-6
    for name, p in net.params.items():
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = net.loss(cats, nums, y)
            p[i] = old - h
            down = net.loss(cats, nums, y)
            p[i] = old
            num = (up - down) / (2 * h)
            assert abs(num - grads[name][i]) <= 1e-4 * max(abs(num), abs(grads[name][i]), 1e-8)


@criterion(7, "scorer: TOP monotone to 1, beats baseline TOP_3 on a 13-week pool, gradient check, < 5 min")
def test_c7_cli_training_time(filter_run):
    _, _, train_s = filter_run
    assert train_s < 300


# ---------------------------------------------------------------------------

@criterion(8, "Gini at omega=1 reaches the oracle pairwise minimum; coefficient matches formula")
def test_c8_gini():
    checked = 0
    for inst in small_suite(150):
        if len(inst.schedulers) < 2:
            continue
        istar = int(solve_brute_force(build(STAGE1, inst)).value)
        best = min(pairwise(b) for _, imb, b in all_outcomes(build(STAGE1, inst)) if imb <= istar)
        sol = solve_exact(build(GINI, inst, None, istar, omega=1))
        assert sol.status == OPTIMAL
        assert pairwise(sol.objective.burdens.values()) == best
        checked += 1
    assert checked > 50
    rng = random.Random(8)
    for _ in range(1000):
        v = [rng.randint(0, 40) for _ in range(rng.randint(1, 9))]
        assert abs(gini_coefficient(v) - gini_direct(v)) <= 1e-12


# ---------------------------------------------------------------------------

@criterion(9, "partial-implementation curves monotone from I0 to I(plan); fair at-or-below efficient on a prefix")
def test_c9_partial_curves():
    levels = [Fraction(k, 10) for k in range(11)]
    witnesses = []
    for inst in DESK:
        i0 = total_imbalance(inst, inst.initial).total
        eff, fair = _pair(inst, _istar(inst))
        curves = {}
        for label, sol in (("efficient", eff), ("fair", fair)):
            phi = sol.assignment
            full = [Fraction(k, max(1, sol.objective.changes)) for k in range(sol.objective.changes + 1)]
            for grid in (levels, full):
                vals = [v for _, v in partial_implementation_curve(inst, phi, grid)]
                assert vals[0] == i0 and vals[-1] == total_imbalance(inst, phi).total
                assert all(b <= a for a, b in zip(vals, vals[1:])), (inst.meta, label, vals)
            curves[label] = [v for _, v in partial_implementation_curve(inst, phi, levels)]
        e, f = curves["efficient"], curves["fair"]
        prefix = 0
        while prefix < len(levels) and f[prefix] <= e[prefix]:
            prefix += 1
        if prefix >= 2 and any(f[k] < e[k] for k in range(prefix)):
            witnesses.append((inst.meta.get("name") or inst.meta.get("seed"), prefix))
    print(f"\n  fair curve at-or-below efficient on a prefix: {witnesses}")
    assert witnesses


# ---------------------------------------------------------------------------

def _pipeline(out: Path, pool_dir: Path, model: str, stage1: str) -> None:
    common = ["--no-timing", "--seed", "3"]
    inst = str(pool_dir / "instances" / "det_w00.json")
    steps = [
        ["train", "--pool", str(pool_dir / "pool.json"), "--epochs", "20"],
        ["score", "--instance", inst, "--scorer", model],
        ["betweenness", "--instance", inst, "--samples", "4"],
        ["solve", "--instance", inst, "--model", "stage1", "--backend", "ils"],
        ["solve", "--instance", inst, "--model", "stage2-gini", "--omega", "0.5", "--stage1",
         stage1, "--backend", "exact"],
        ["sweep", "--instance", inst, "--alphas", "0,0.5,1"],
        ["portfolio", "--instance", inst, "--scorer", model, "--kappa", "dynamic",
         "--omegas", "1"],
        ["export-lp", "--instance", inst, "--model", "stage2-weighted", "--alpha", "0.3", "--istar", "10"],
        ["bench", "--instances", inst, "--scorer", model],
    ]
    for step in steps:
        sub = step[0] if step[0] != "solve" or "stage1" in step else "solve2"
        assert run([*step, *common, "--out", str(out / sub)]) in (0, 2), step


@criterion(10, "repeated CLI runs with identical configuration are byte-identical")
def test_c10_determinism(tmp_path):
    gen = ["gen", "--name", "det", "--schedulers", "3", "--nodes", "7", "--arcs", "14", "--resources", "6",
           "--weeks", "4", "--pool", "--alternates", "2", "--seed", "5", "--no-timing"]
    assert run([*gen, "--out", str(tmp_path / "g1")]) == 0
    assert run([*gen, "--out", str(tmp_path / "g2")]) == 0
    _same_tree(tmp_path / "g1", tmp_path / "g2")
    # downstream steps share input paths so both configurations match exactly
    train = ["train", "--pool", str(tmp_path / "g1" / "pool.json"), "--epochs", "20", "--no-timing", "--seed", "3"]
    assert run([*train, "--out", str(tmp_path / "m")]) == 0
    model = str(tmp_path / "m" / "model.json")
    inst = str(tmp_path / "g1" / "instances" / "det_w00.json")
    assert run(["solve", "--instance", inst, "--model", "stage1", "--no-timing", "--out", str(tmp_path / "s1")]) == 0
    stage1 = str(tmp_path / "s1" / "solution.json")
    _pipeline(tmp_path / "a", tmp_path / "g1", model, stage1)
    _pipeline(tmp_path / "b", tmp_path / "g1", model, stage1)
    _same_tree(tmp_path / "a", tmp_path / "b")


def _same_tree(a: Path, b: Path) -> None:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    for rel in files_a:
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
