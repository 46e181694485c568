"""``fairsub`` command line: generate, score, filter, solve and report.

Every command writes machine-readable artifacts (JSON/CSV) into ``--out``
(default: ``$FAIRSUB_OUT`` or the current directory) plus ``run.json``, the
full run configuration. Artifacts carry the configuration hash and seed.
Exit codes: 0 success, 1 usage or input error, 2 infeasible or limit-reached
outcome.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .betweenness import (
    DEFAULT_CLASS_KAPPAS,
    DEFAULT_QUANTILES,
    dynamic_kappa,
    edge_betweenness_exact,
    edge_betweenness_sampled,
    assign_kappa,
    quantile_thresholds,
    report_csv,
    static_kappa,
)
from .generator import (
    DESK_LADDER,
    BandError,
    ClassParams,
    example1_instance,
    generate_instance,
    manifest_csv,
    reference_solutions,
)
from .models import (
    EFFICIENT,
    GINI,
    MINIMAX,
    STAGE1,
    WEIGHTED,
    CandidateError,
    build,
    candidates_fingerprint,
    export_lp,
)
from .network import (
    Instance,
    InstanceError,
    dump_json,
    fixture,
    load_assignment,
    natural_key,
    read_instance,
    total_imbalance,
)
from .portfolio import (
    Entry,
    Portfolio,
    alpha_curve_csv,
    curve_csv,
    partial_implementation_curve,
    shares_csv,
    sweep_alpha,
    sweep_omega,
    tradeoff_csv,
    tradeoff_row,
)
from .scorer import (
    SPLITS,
    FrequencyBaseline,
    ScorerError,
    ScorerModel,
    TrainConfig,
    TrainingError,
    build_training_set,
    evaluate,
    top_kappa_candidates,
    top_kappa_metric,
    train_scorer,
)
from .solver import (
    BACKENDS,
    INFEASIBLE,
    LIMIT_REACHED,
    OPTIMAL,
    ILSParams,
    SearchSpaceError,
    SolveLimits,
    solve,
)

OUT_ENV = "FAIRSUB_OUT"
EXIT_OK, EXIT_USAGE, EXIT_OUTCOME = 0, 1, 2
MODEL_KINDS = {
    "stage1": STAGE1,
    "stage2-efficient": EFFICIENT,
    "stage2-minimax": MINIMAX,
    "stage2-weighted": WEIGHTED,
    "stage2-gini": GINI,
}
# arguments that only say where results go; they never change results
OUTPUT_KEYS = {"out", "summary", "command", "func"}
# arguments naming input files; hashed by content so the config hash ignores location
INPUT_KEYS = {"instance", "instances", "pool", "scorer", "candidates", "stage1", "config", "matrix", "reference",
              "class_params"}
BAD_OUTCOMES = (INFEASIBLE, LIMIT_REACHED)


class UsageError(Exception):
    pass


class PipelineError(Exception):
    def __init__(self, module: str, message: str):
        super().__init__(f"{module}: {message}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# run configuration

def _digest(path: str) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError as exc:
        raise PipelineError("io", f"cannot read {path}: {exc.strerror or exc}") from None


@dataclass
class RunConfig:
    command: str
    params: dict
    inputs: dict = field(default_factory=dict)  # input path -> content digest

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        params = {k: v for k, v in sorted(vars(args).items()) if k not in OUTPUT_KEYS and not k.startswith("_")}
        inputs = {}
        for k in sorted(INPUT_KEYS & params.keys()):
            v = params[k]
            for p in v if isinstance(v, list) else [v] if isinstance(v, str) else []:
                inputs[p] = _digest(p)
        return cls(args.command, params, inputs)

    def hashed_view(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if k in INPUT_KEYS and (isinstance(v, str) or isinstance(v, list)):
                v = [self.inputs[p] for p in v] if isinstance(v, list) else self.inputs[v]
            params[k] = v
        return {"command": self.command, "params": params, "version": __version__}

    @property
    def hash(self) -> str:
        text = json.dumps(self.hashed_view(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def seed(self):
        return self.params.get("seed")

    def stamp(self) -> dict:
        return {"config_hash": self.hash, "seed": self.seed}

    def to_dict(self) -> dict:
        return {"command": self.command, "params": self.params, "inputs": self.inputs,
                "config_hash": self.hash, "version": __version__}


class Output:
    def __init__(self, root: Path, cfg: RunConfig, timing: bool):
        self.root = root
        self.cfg = cfg
        self.timing = timing
        self.written: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def json(self, name: str, obj: dict) -> Path:
        p = self.path(name)
        p.write_text(dump_json({"run": self.cfg.stamp(), **obj}))
        return p

    def csv(self, name: str, text: str) -> Path:
        p = self.path(name)
        stamp = self.cfg.stamp()
        p.write_text(f"# config_hash={stamp['config_hash']} seed={stamp['seed']}\n{text}")
        return p

    def text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p


def read_csv_rows(path) -> list[list[str]]:
    """CSV artifact rows without the leading ``#`` stamp line."""
    import csv

    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


# ---------------------------------------------------------------------------
# argument helpers

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _kappa_mode(text: str) -> str:
    if text in ("dynamic", "full") or (text.startswith("static:") and text[7:].isdigit() and int(text[7:]) >= 1):
        return text
    raise argparse.ArgumentTypeError("kappa mode is 'dynamic', 'full' or 'static:K' with K >= 1")


def _limits(args) -> SolveLimits:
    from fractions import Fraction

    return SolveLimits(time_limit=args.time_limit, node_limit=args.node_limit, gap=Fraction(str(args.gap)))


def _load_instance(path: str) -> Instance:
    return read_instance(path)


def _load_candidates(path: str | None, inst: Instance):
    if path is None:
        return inst.full_candidates()
    data = json.loads(Path(path).read_text())
    cands = data.get("candidates", data)
    return {a: tuple(sorted(v, key=natural_key)) for a, v in cands.items()}


def _kappas_for(inst: Instance, args):
    """KappaAssignment (or None for full candidate sets) and the betweenness report."""
    mode = args.kappa
    if mode == "full":
        return None, None
    if mode.startswith("static:"):
        return static_kappa(inst, int(mode[7:])), None
    report, kappas = dynamic_kappa(inst, tuple(args.quantiles), tuple(args.class_kappas), args.samples, args.seed)
    return kappas, report


def _filtered_candidates(inst: Instance, args):
    if not getattr(args, "scorer", None):
        if args.kappa != "full":
            raise UsageError("--kappa other than 'full' needs --scorer")
        return inst.full_candidates(), None
    model = ScorerModel.load(args.scorer)
    kappas, _ = _kappas_for(inst, args)
    if kappas is None:
        return inst.full_candidates(), model
    return top_kappa_candidates(inst, model, kappas), model


def decision_pairs(cands) -> int:
    """Number of (arc, resource) assignment variables."""
    return sum(len(v) for v in cands.values())


def free_arcs(cands) -> int:
    return sum(1 for v in cands.values() if len(v) > 1)


def _table(rows: list[list], header: list[str]) -> str:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells)


def _solution_payload(spec, sol, timing: bool) -> dict:
    return {
        "model": spec.summary(),
        "istar": spec.istar,
        "candidates_fingerprint": spec.fingerprint,
        "solution": sol.to_dict(timing),
    }


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args, out: Output) -> int:
    if args.fixture:
        name = args.fixture.upper()
        inst = example1_instance() if name == "E1" else fixture(name)
        out.text(f"{name.lower()}.json", _with_run(inst, out).dumps())
        if args.summary:
            print(_table([[name, len(inst.nodes), len(inst.arcs), total_imbalance(inst, inst.initial).total]],
                         ["fixture", "nodes", "arcs", "I0"]))
        return EXIT_OK
    if args.class_params:
        base = ClassParams.from_dict(json.loads(Path(args.class_params).read_text()))
    elif args.ladder is not None:
        if args.ladder not in DESK_LADDER:
            raise UsageError(f"--ladder must be one of {sorted(DESK_LADDER)}")
        base = DESK_LADDER[args.ladder]
    else:
        base = ClassParams()
    over = {"schedulers": args.schedulers, "nodes": args.nodes, "arcs": args.arcs, "resources": args.resources,
            "collaboration": args.collab, "seed": args.seed, "habit": args.habit, "lanes": args.lanes,
            "matrix_path": args.matrix, "name": args.name}
    if args.band is not None:
        if len(args.band) != 2:
            raise UsageError("--band takes LO,HI")
        over["imbalance_band"] = tuple(args.band)
    params = ClassParams.from_dict({**base.to_dict(), **{k: v for k, v in over.items() if v is not None}})
    if params.arcs < params.nodes:
        raise UsageError("arc count must be at least the node count")
    rows, refs = [], []
    label = params.name or "class"
    for week in range(args.weeks):
        inst = generate_instance(params, index=week, salt=args.salt)
        fname = f"instances/{label}_w{week:02d}.json"
        out.text(fname, _with_run(inst, out).dumps())
        rows.append([fname, params.seed, inst.meta["I0"], label])
        if args.pool:
            for phi in reference_solutions(inst, args.alternates, _limits(args)):
                refs.append({"instance": fname, "assignment": {a: phi[a] for a in sorted(phi, key=natural_key)}})
    out.csv("manifest.csv", manifest_csv(rows))
    if args.pool:
        out.json("pool.json", {"params": params.to_dict(), "alternates": args.alternates, "references": refs})
    if args.summary:
        print(_table(rows, ["instance_file", "seed", "I0", "class"]))
    return EXIT_OK


def _with_run(inst: Instance, out: Output) -> Instance:
    return Instance(inst.nodes, inst.resources, dict(inst.schedulers), inst.arcs, {**inst.meta, "run": out.cfg.stamp()})


def cmd_betweenness(args, out: Output) -> int:
    inst = _load_instance(args.instance)
    weight = args.weight
    if args.samples is None or args.samples >= len(inst.nodes):
        report = edge_betweenness_exact(inst, weight)
    else:
        report = edge_betweenness_sampled(inst, args.samples, args.seed, weight)
    if args.static_kappa is not None:
        kappas = static_kappa(inst, args.static_kappa)
    else:
        kappas = assign_kappa(report, quantile_thresholds(report, *args.quantiles), tuple(args.class_kappas))
    out.csv("betweenness.csv", report_csv(report, kappas))
    out.json("kappa.json", {
        "method": report.method, "samples": report.samples, "pivots": list(report.pivots),
        "thresholds": list(kappas.thresholds), "class_kappas": list(kappas.class_kappas),
        "mean_kappa": kappas.mean_kappa(), "kappa": dict(kappas.kappa), "classes": dict(kappas.classes),
    })
    if args.summary:
        counts = {c: sum(1 for v in kappas.classes.values() if v == c) for c in ("Low", "Medium", "High")}
        print(_table([[report.method, f"{kappas.thresholds[0]:.4f}", f"{kappas.thresholds[1]:.4f}",
                       counts["Low"], counts["Medium"], counts["High"], f"{kappas.mean_kappa():.3f}"]],
                     ["method", "tau1", "tau2", "low", "medium", "high", "mean_kappa"]))
    return EXIT_OK


def _load_pool(path: str):
    data = json.loads(Path(path).read_text())
    root = Path(path).parent
    cache: dict[str, Instance] = {}
    refs = []
    for r in data["references"]:
        f = r["instance"]
        if f not in cache:
            cache[f] = read_instance(root / f)
        refs.append((cache[f], r["assignment"]))
    if not refs:
        raise PipelineError("scorer", "reference pool is empty")
    return refs


def cmd_train(args, out: Output) -> int:
    refs = _load_pool(args.pool)
    cfg = TrainConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else TrainConfig()
    over = {"epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.lr, "dropout": args.dropout}
    if args.hidden:
        over["hidden"] = args.hidden
    cfg = TrainConfig.from_dict({**cfg.to_dict(), **{k: v for k, v in over.items() if v is not None}})
    ts = build_training_set(refs, seed=args.seed)
    t0 = time.perf_counter()
    model = train_scorer(ts, cfg, args.seed)
    train_ms = (time.perf_counter() - t0) * 1000
    model.meta["run"] = out.cfg.stamp()
    out.text("model.json", model.dumps())
    base = FrequencyBaseline.from_training_set(ts, "train")
    kappas = [k for k in args.kappas if k <= len(ts.resources)] or [len(ts.resources)]
    net_top = dict(evaluate(model, ts, "test", kappas))
    base_top = dict(evaluate(base, ts, "test", kappas))
    rows = [[k, f"{net_top[k]:.4f}", f"{base_top[k]:.4f}"] for k in kappas]
    out.csv("topk.csv", "kappa,model,baseline\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows))
    metrics = {
        "resources": list(ts.resources),
        "splits": {s: len(ts.split(s)) for s in SPLITS},
        "epochs_run": model.meta["epochs_run"],
        "final_validation_loss": model.meta["final_validation_loss"],
        "test_top": {str(k): net_top[k] for k in kappas},
        "baseline_test_top": {str(k): base_top[k] for k in kappas},
        "config": cfg.to_dict(),
    }
    if out.timing:
        metrics["train_ms"] = round(train_ms, 3)
    out.json("metrics.json", metrics)
    if args.summary:
        print(_table(rows, ["kappa", "TOP_model", "TOP_baseline"]))
    return EXIT_OK


def cmd_score(args, out: Output) -> int:
    inst = _load_instance(args.instance)
    model = ScorerModel.load(args.scorer)
    kappas, report = _kappas_for(inst, args)
    cands = inst.full_candidates() if kappas is None else top_kappa_candidates(inst, model, kappas)
    full = inst.full_candidates()
    payload = {
        "instance": inst.meta.get("name", Path(args.instance).stem),
        "kappa_mode": args.kappa,
        "fingerprint": candidates_fingerprint(cands),
        "pairs_before": decision_pairs(full),
        "pairs_after": decision_pairs(cands),
        "candidates": {a: list(v) for a, v in cands.items()},
    }
    if kappas is not None:
        payload["kappa"] = dict(kappas.kappa)
    out.json("candidates.json", payload)
    rows = []
    if args.reference:
        import numpy as np

        phi = load_assignment(Path(args.reference).read_text())
        probs = model.predict_batch(model.encoder.encode_instance(inst))
        col = {r: k for k, r in enumerate(model.resources)}
        labels = np.zeros_like(probs)
        for k, a in enumerate(inst.arcs):
            labels[k, col[phi[a.id]]] = 1.0
        for k in range(1, len(model.resources) + 1):
            rows.append([k, f"{top_kappa_metric(probs, labels, k):.4f}"])
        out.csv("topk.csv", "kappa,top\n" + "".join(f"{a},{b}\n" for a, b in rows))
    if args.summary:
        print(_table([[payload["pairs_before"], payload["pairs_after"],
                       _pct(payload["pairs_before"], payload["pairs_after"])]],
                     ["pairs_before", "pairs_after", "reduction_pct"]))
        if rows:
            print(_table(rows, ["kappa", "TOP"]))
    return EXIT_OK


def _pct(before: int, after: int) -> str:
    return "0.00" if before == 0 else f"{100 * (before - after) / before:.2f}"


def _istar(args, cands) -> int:
    """I* from --istar or a Stage 1 artifact whose candidate fingerprint must match."""
    if args.istar is not None:
        return args.istar
    if not args.stage1:
        raise UsageError("Stage 2 models need --istar or --stage1 (a Stage 1 solution file)")
    data = json.loads(Path(args.stage1).read_text())
    if data.get("model", {}).get("kind") != STAGE1 or data.get("istar_found") is None:
        raise PipelineError("models", f"{args.stage1} is not an optimal Stage 1 solution")
    fp = candidates_fingerprint(cands)
    if data.get("candidates_fingerprint") != fp:
        raise PipelineError("models", "candidate sets differ from the ones the Stage 1 run used "
                                      f"({data.get('candidates_fingerprint')} vs {fp}); rerun Stage 1")
    return int(data["istar_found"])


def _spec(args, inst: Instance, kind: str):
    cands = _load_candidates(args.candidates, inst)
    istar = None if kind == STAGE1 else _istar(args, cands)
    if kind == WEIGHTED and args.alpha is None:
        raise UsageError("stage2-weighted needs --alpha")
    if kind == GINI and args.omega is None:
        raise UsageError("stage2-gini needs --omega")
    return build(kind, inst, cands, istar, args.alpha, args.omega)


def cmd_solve(args, out: Output) -> int:
    inst = _load_instance(args.instance)
    kind = MODEL_KINDS[args.model]
    spec = _spec(args, inst, kind)
    sol = solve(spec, args.backend, _limits(args), args.seed, ILSParams(iters=args.ils_iters))
    payload = _solution_payload(spec, sol, out.timing)
    if kind == STAGE1:
        payload["istar_found"] = int(sol.value) if sol.status == OPTIMAL else None
    out.json("solution.json", payload)
    if args.summary:
        o = sol.objective
        print(_table([[spec.label(), sol.status, "" if o is None else str(o.value),
                       "" if o is None else o.imbalance, "" if o is None else o.changes,
                       "" if o is None else o.max_burden]],
                     ["model", "status", "objective", "I", "delta", "Z"]))
    return EXIT_OUTCOME if sol.status in BAD_OUTCOMES else EXIT_OK


def _stage1(inst, cands, args):
    spec = build(STAGE1, inst, cands)
    sol = solve(spec, args.backend, _limits(args), args.seed)
    if sol.assignment is None:
        raise PipelineError("solver", f"Stage 1 produced no assignment ({sol.status})")
    return spec, sol, int(sol.objective.imbalance)


def cmd_sweep(args, out: Output) -> int:
    inst = _load_instance(args.instance)
    if not args.alphas and not args.omegas:
        raise UsageError("sweep needs --alphas or --omegas")
    cands = _load_candidates(args.candidates, inst)
    if args.istar is None and not args.stage1:
        _, s1, istar = _stage1(inst, cands, args)
        stage1_ok = s1.status == OPTIMAL
    else:
        istar, stage1_ok = _istar(args, cands), True
    pf = Portfolio(inst, [])
    if args.alphas:
        pf = pf.merged(sweep_alpha(inst, cands, istar, args.alphas, args.backend, _limits(args), args.seed))
    if args.omegas:
        pf = pf.merged(sweep_omega(inst, cands, istar, args.omegas, args.backend, _limits(args), args.seed))
    out.json("portfolio.json", {"istar": istar, "candidates_fingerprint": candidates_fingerprint(cands),
                                **pf.to_dict(out.timing)})
    if args.alphas:
        out.csv("alpha_curve.csv", alpha_curve_csv(pf, out.timing))
    out.csv("shares.csv", shares_csv(pf))
    if args.summary:
        _print_portfolio(pf)
    bad = not stage1_ok or any(e.solution.status in BAD_OUTCOMES for e in pf.entries)
    return EXIT_OUTCOME if bad else EXIT_OK


def _print_portfolio(pf: Portfolio) -> None:
    rows = []
    for e in pf.entries:
        p = e.point or ("", "")
        rows.append([e.label, e.solution.status, p[0], p[1], "*" if e.on_front else ""])
    print(_table(rows, ["label", "status", "delta", "Z", "front"]))


def cmd_portfolio(args, out: Output) -> int:
    inst = _load_instance(args.instance)
    cands, _ = _filtered_candidates(inst, args)
    limits = _limits(args)
    s1_spec, s1, istar = _stage1(inst, cands, args)
    eff = solve(build(EFFICIENT, inst, cands, istar), args.backend, limits, args.seed)
    fair = solve(build(MINIMAX, inst, cands, istar), args.backend, limits, args.seed)
    pf = Portfolio(inst, [Entry("efficient", {"kind": EFFICIENT}, eff), Entry("minimax", {"kind": MINIMAX}, fair)])
    if args.alphas:
        pf = pf.merged(sweep_alpha(inst, cands, istar, args.alphas, args.backend, limits, args.seed))
    if args.omegas:
        pf = pf.merged(sweep_omega(inst, cands, istar, args.omegas, args.backend, limits, args.seed))
    name = inst.meta.get("name") or Path(args.instance).stem
    out.json("stage1.json", {**_solution_payload(s1_spec, s1, out.timing), "istar_found": istar})
    out.json("portfolio.json", {"instance": name, "I0": total_imbalance(inst, inst.initial).total, "istar": istar,
                                "candidates_fingerprint": candidates_fingerprint(cands),
                                "pairs_before": decision_pairs(inst.full_candidates()),
                                "pairs_after": decision_pairs(cands), **pf.to_dict(out.timing)})
    if eff.objective is not None and fair.objective is not None:
        out.csv("tradeoff.csv", tradeoff_csv([tradeoff_row(name, inst, istar, eff, fair, out.timing)]))
    if args.alphas:
        out.csv("alpha_curve.csv", alpha_curve_csv(pf, out.timing))
    curves = {}
    for label, sol in (("efficient", eff), ("minimax", fair)):
        if sol.assignment is not None:
            curves[label] = partial_implementation_curve(inst, sol.assignment, args.levels)
    out.csv("curves.csv", curve_csv(curves))
    out.csv("shares.csv", shares_csv(pf))
    if args.summary:
        print(f"I0={total_imbalance(inst, inst.initial).total} I*={istar} ({s1.status})")
        _print_portfolio(pf)
    bad = s1.status in BAD_OUTCOMES or any(e.solution.status in BAD_OUTCOMES for e in pf.entries)
    return EXIT_OUTCOME if bad else EXIT_OK


def cmd_export_lp(args, out: Output) -> int:
    inst = _load_instance(args.instance)
    spec = _spec(args, inst, MODEL_KINDS[args.model])
    stamp = out.cfg.stamp()
    out.text("model.lp", f"\\ config_hash={stamp['config_hash']} seed={stamp['seed']}\n" + export_lp(spec))
    if args.summary:
        print(spec.label())
    return EXIT_OK


BENCH_HEADER = ["instance", "resources", "arcs", "pairs_before", "pairs_after", "reduction_pct", "free_before",
                "free_after", "istar_full", "istar_filtered", "delta_full", "delta_filtered", "optimal_equal",
                "status_full", "status_filtered", "time_full_ms", "time_filtered_ms", "runtime_ratio"]


def bench_row(inst: Instance, name: str, cands, args, timing: bool) -> list:
    limits = _limits(args)
    full = inst.full_candidates()
    results = []
    for cs in (full, cands):
        t0 = time.perf_counter()
        _, s1, istar = _stage1(inst, cs, args)
        s2 = solve(build(EFFICIENT, inst, cs, istar), args.backend, limits, args.seed)
        ms = (time.perf_counter() - t0) * 1000
        ok = s1.status == OPTIMAL and s2.status == OPTIMAL
        results.append((istar, None if s2.objective is None else s2.objective.changes,
                        s1.status if s1.status != OPTIMAL else s2.status, ms, ok))
    (i_f, d_f, st_f, t_f, ok_f), (i_c, d_c, st_c, t_c, ok_c) = results
    equal = ok_f and ok_c and i_f == i_c and d_f == d_c
    pb, pa = decision_pairs(full), decision_pairs(cands)
    return [name, len(inst.resources), len(inst.arcs), pb, pa, _pct(pb, pa), free_arcs(full), free_arcs(cands),
            i_f, i_c, d_f, d_c, int(equal), st_f, st_c,
            f"{t_f:.3f}" if timing else "", f"{t_c:.3f}" if timing else "",
            f"{t_f / t_c:.3f}" if timing and t_c > 0 else ""]


def cmd_bench(args, out: Output) -> int:
    rows = []
    for path in args.instances:
        inst = _load_instance(path)
        cands, _ = _filtered_candidates(inst, args)
        rows.append(bench_row(inst, Path(path).stem, cands, args, out.timing))
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    w.writerows(rows)
    out.csv("bench.csv", buf.getvalue())
    out.json("bench.json", {"kappa_mode": args.kappa, "rows": [dict(zip(BENCH_HEADER, r)) for r in rows]})
    if args.summary:
        cols = [0, 3, 4, 5, 8, 9, 10, 11, 12, 17]
        print(_table([[r[c] for c in cols] for r in rows], [BENCH_HEADER[c] for c in cols]))
    bad = any(r[13] in BAD_OUTCOMES or r[14] in BAD_OUTCOMES for r in rows)
    return EXIT_OUTCOME if bad else EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--summary", action="store_true", help="print a human-readable table")
    p.add_argument("--no-timing", dest="timing", action="store_false", help="omit wall-clock fields")
    p.add_argument("--seed", type=int, default=0)


def _solver_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=BACKENDS, default="exact")
    p.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--gap", type=float, default=0.0, help="absolute optimality gap")


def _stage2_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--istar", type=int, default=None, help="imbalance cap for Stage 2")
    p.add_argument("--stage1", default=None, help="Stage 1 solution file providing I*")
    p.add_argument("--candidates", default=None, help="candidate-set file from `score`")


def _kappa_opts(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--kappa", type=_kappa_mode, default=default, help="dynamic | full | static:K")
    p.add_argument("--quantiles", type=_floats, default=list(DEFAULT_QUANTILES))
    p.add_argument("--class-kappas", type=_ints, default=list(DEFAULT_CLASS_KAPPAS))
    p.add_argument("--samples", type=int, default=None, help="betweenness pivots (default: exact)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairsub", description="Fair resource substitution pipeline.")
    parser.add_argument("--version", action="version", version=f"fairsub {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="generate instances and reference pools")
    _common(p)
    p.add_argument("--fixture", choices=["T1", "D1", "P3", "E1", "t1", "d1", "p3", "e1"])
    p.add_argument("--class-params", default=None, help="JSON file with class parameters")
    p.add_argument("--ladder", type=int, default=None, help="desk-scale class 1..8")
    p.add_argument("--schedulers", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--arcs", type=int)
    p.add_argument("--resources", type=int)
    p.add_argument("--collab", type=float, help="cross-boundary arc ratio")
    p.add_argument("--band", type=_ints, default=None, help="target I0 band LO,HI")
    p.add_argument("--habit", type=float)
    p.add_argument("--lanes", type=int)
    p.add_argument("--matrix", default=None, help="compatibility matrix CSV")
    p.add_argument("--name", default=None)
    p.add_argument("--weeks", type=int, default=1)
    p.add_argument("--salt", type=int, default=0, help="pool seed mixed into weekly streams")
    p.add_argument("--pool", action="store_true", help="also solve reference solutions")
    p.add_argument("--alternates", type=int, default=1)
    _solver_opts(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("betweenness", help="edge betweenness and kappa classes")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--weight", choices=["miles"], default=None)
    p.add_argument("--quantiles", type=_floats, default=list(DEFAULT_QUANTILES))
    p.add_argument("--class-kappas", type=_ints, default=list(DEFAULT_CLASS_KAPPAS))
    p.add_argument("--static-kappa", type=int, default=None)
    p.set_defaults(func=cmd_betweenness)

    p = sub.add_parser("train", help="train the propensity scorer on a reference pool")
    _common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--config", default=None, help="training config JSON")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--hidden", type=_ints)
    p.add_argument("--kappas", type=_ints, default=[1, 2, 3, 4, 5])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="candidate sets from a trained scorer")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--scorer", required=True)
    p.add_argument("--reference", default=None, help="assignment file for a TOP_k table")
    _kappa_opts(p, "dynamic")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("solve", help="solve one model")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--model", choices=sorted(MODEL_KINDS), required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--ils-iters", type=int, default=60)
    _stage2_opts(p)
    _solver_opts(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="alpha or omega sweep into a portfolio")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--alphas", type=_floats, default=None)
    p.add_argument("--omegas", type=_floats, default=None)
    _stage2_opts(p)
    _solver_opts(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("portfolio", help="full pipeline to a solution portfolio")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--scorer", default=None)
    p.add_argument("--alphas", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--omegas", type=_floats, default=None)
    p.add_argument("--levels", type=_floats, default=[i / 10 for i in range(11)])
    _kappa_opts(p, "full")
    _solver_opts(p)
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("export-lp", help="write a model in CPLEX LP format")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--model", choices=sorted(MODEL_KINDS), required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--omega", type=float, default=None)
    _stage2_opts(p)
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("bench", help="with/without candidate filtering comparison")
    _common(p)
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--scorer", default=None)
    _kappa_opts(p, "dynamic")
    _solver_opts(p)
    p.set_defaults(func=cmd_bench)
    return parser


def _context(exc: Exception) -> str:
    if isinstance(exc, PipelineError):
        return str(exc)
    if isinstance(exc, InstanceError):
        return f"network-core: {exc}"
    if isinstance(exc, CandidateError):
        return f"models: {exc}"
    if isinstance(exc, SearchSpaceError):
        return f"solver: {exc}"
    if isinstance(exc, (ScorerError, TrainingError)):
        return f"scorer: {exc}"
    if isinstance(exc, BandError):
        return f"instance-gen: {exc}"
    if isinstance(exc, OSError):
        return f"io: {exc}"
    if isinstance(exc, json.JSONDecodeError):
        return f"io: malformed JSON ({exc})"
    return f"{type(exc).__name__}: {exc}"


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        if args.command == "bench" and args.kappa != "full" and not args.scorer:
            raise UsageError("bench needs --scorer unless --kappa full")
        cfg = RunConfig.from_args(args)
        out_dir = Path(args.out or os.environ.get(OUT_ENV) or ".")
        out = Output(out_dir, cfg, args.timing)
        code = args.func(args, out)
        (out_dir / "run.json").write_text(dump_json(cfg.to_dict()))
        return code
    except UsageError as exc:
        sub = parser._subparsers._group_actions[0].choices.get(args.command)  # noqa: SLF001
        if sub is not None:
            sub.print_usage(sys.stderr)
        print(f"fairsub {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, InstanceError, CandidateError, SearchSpaceError, ScorerError, TrainingError,
            BandError, OSError, ValueError, KeyError) as exc:
        print(f"fairsub {args.command}: {_context(exc)}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())

