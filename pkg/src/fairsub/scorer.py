"""Arc-to-resource propensity model and candidate-set filtering.

A small feedforward network in numpy: one embedding table per categorical
arc feature, concatenated with min-max scaled numeric features, two ReLU
hidden layers with dropout, and a softmax over the resource family. It is
trained with Adam on soft labels (the frequency with which reference
solutions assign each resource to the arc).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .network import Instance, natural_key

CATEGORICAL = ("origin", "dest", "origin_sched", "dest_sched", "size_class")
NUMERIC = ("volume", "tod", "tow", "miles")
UNKNOWN = 0
FORMAT = "fairsub-scorer"
SPLITS = ("train", "validation", "test")


class ScorerError(ValueError):
    """Dimension mismatches and malformed model files."""


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# features

@dataclass(frozen=True)
class FeatureVector:
    """Encoded categorical indices (0 = unseen) plus numeric features in [0, 1]."""

    cats: tuple[int, ...]
    nums: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.cats) + len(self.nums)


def _raw(inst: Instance, arc) -> tuple[tuple[str, ...], tuple[float, ...]]:
    cats = (arc.origin, arc.dest, inst.owner(arc.origin), inst.owner(arc.dest), arc.size_class or "")
    return cats, (float(arc.volume), float(arc.tod), float(arc.tow), float(arc.miles))


@dataclass
class ArcEncoder:
    """Index dictionaries for categorical fields and training-time numeric ranges."""

    vocab: dict[str, dict[str, int]]
    lo: list[float]
    hi: list[float]

    @classmethod
    def fit(cls, instances: Sequence[Instance]) -> "ArcEncoder":
        values: dict[str, set] = {f: set() for f in CATEGORICAL}
        lo = [math.inf] * len(NUMERIC)
        hi = [-math.inf] * len(NUMERIC)
        for inst in instances:
            for a in inst.arcs:
                cats, nums = _raw(inst, a)
                for f, v in zip(CATEGORICAL, cats):
                    values[f].add(v)
                for k, v in enumerate(nums):
                    lo[k] = min(lo[k], v)
                    hi[k] = max(hi[k], v)
        vocab = {f: {v: j + 1 for j, v in enumerate(sorted(values[f], key=natural_key))} for f in CATEGORICAL}
        lo = [0.0 if math.isinf(v) else v for v in lo]
        hi = [0.0 if math.isinf(v) else v for v in hi]
        return cls(vocab, lo, hi)

    @property
    def cardinalities(self) -> list[int]:
        """Embedding rows per field, including the reserved unknown row."""
        return [len(self.vocab[f]) + 1 for f in CATEGORICAL]

    def encode(self, inst: Instance, arc) -> FeatureVector:
        cats, nums = _raw(inst, arc)
        idx = tuple(self.vocab[f].get(v, UNKNOWN) for f, v in zip(CATEGORICAL, cats))
        scaled = []
        for v, lo, hi in zip(nums, self.lo, self.hi):
            s = 0.0 if hi <= lo else (v - lo) / (hi - lo)
            scaled.append(min(1.0, max(0.0, s)))
        return FeatureVector(idx, tuple(scaled))

    def encode_instance(self, inst: Instance) -> list[FeatureVector]:
        return [self.encode(inst, a) for a in inst.arcs]

    def to_dict(self) -> dict:
        return {"vocab": self.vocab, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "ArcEncoder":
        return cls({f: dict(d["vocab"][f]) for f in CATEGORICAL}, list(d["lo"]), list(d["hi"]))


def _stack(xs: Sequence[FeatureVector], n_cat: int, n_num: int) -> tuple[np.ndarray, np.ndarray]:
    for x in xs:
        if len(x.cats) != n_cat or len(x.nums) != n_num:
            raise ScorerError(f"feature dimension {x.dim} does not match model input "
                              f"({n_cat} categorical + {n_num} numeric)")
    cats = np.array([x.cats for x in xs], dtype=np.int64).reshape(len(xs), n_cat)
    nums = np.array([x.nums for x in xs], dtype=np.float64).reshape(len(xs), n_num)
    return cats, nums


# ---------------------------------------------------------------------------
# training data

@dataclass
class Example:
    instance: str  # instance fingerprint
    arc: str
    features: FeatureVector
    label: np.ndarray
    split: str = "train"

    @property
    def modal(self) -> int:
        return int(np.argmax(self.label))


@dataclass
class TrainingSet:
    resources: tuple[str, ...]
    encoder: ArcEncoder
    examples: list[Example]
    seed: int = 0

    def split(self, name: str) -> list[Example]:
        return [e for e in self.examples if e.split == name]

    def arrays(self, name: str | None = None):
        ex = self.examples if name is None else self.split(name)
        cats, nums = _stack([e.features for e in ex], len(CATEGORICAL), len(NUMERIC))
        y = np.array([e.label for e in ex], dtype=np.float64).reshape(len(ex), len(self.resources))
        return cats, nums, y


def instance_fingerprint(inst: Instance) -> str:
    return hashlib.sha256(inst.dumps().encode()).hexdigest()[:16]


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_training_set(refs: Sequence[tuple[Instance, Mapping[str, str]]], seed: int = 0,
                       encoder: ArcEncoder | None = None) -> TrainingSet:
    """One example per distinct (instance, arc); labels are reference frequencies.

    The 60/20/20 split is stratified by each example's modal resource.
    """
    if not refs:
        raise ValueError("empty reference pool")
    groups: dict[str, tuple[Instance, list]] = {}
    for inst, phi in refs:
        missing = [a.id for a in inst.arcs if a.id not in phi]
        if missing:
            raise ValueError(f"reference assignment misses arcs {missing[:5]}")
        fp = instance_fingerprint(inst)
        groups.setdefault(fp, (inst, []))[1].append(phi)
    insts = [g[0] for g in groups.values()]
    resources = tuple(sorted({r for i in insts for r in i.resources}, key=natural_key))
    col = {r: k for k, r in enumerate(resources)}
    encoder = encoder or ArcEncoder.fit(insts)
    examples = []
    for fp, (inst, phis) in groups.items():
        for a in inst.arcs:
            y = np.zeros(len(resources))
            for phi in phis:
                y[col[phi[a.id]]] += 1
            examples.append(Example(fp, a.id, encoder.encode(inst, a), y / len(phis)))
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for k, e in enumerate(examples):
        by_class.setdefault(e.modal, []).append(k)
    for cls_ in sorted(by_class):
        idx = by_class[cls_]
        order = [idx[j] for j in rng.permutation(len(idx))]
        n_train = _half_up(0.6 * len(idx))
        n_val = min(_half_up(0.2 * len(idx)), len(idx) - n_train)
        for pos, k in enumerate(order):
            examples[k].split = "train" if pos < n_train else "validation" if pos < n_train + n_val else "test"
    return TrainingSet(resources, encoder, examples, seed)


# ---------------------------------------------------------------------------
# network

@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (128, 64)
    dropout: float = 0.3
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    embedding_dim: int = 8
    check_every: int = 10  # epochs between validation TOP_k checks
    patience: int = 2  # consecutive declines before stopping
    early_kappa: int = 3

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        aliases = {"neurons": "hidden", "dropout_rate": "dropout", "lr": "learning_rate"}
        kw = {aliases.get(k, k): v for k, v in d.items() if aliases.get(k, k) in cls.__dataclass_fields__}
        if "hidden" in kw:
            kw["hidden"] = tuple(kw["hidden"])
        return cls(**kw)


def _relu(z):
    return np.maximum(z, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class MLP:
    """Embeddings -> dense ReLU layers -> softmax. Parameters live in ``self.params``."""

    def __init__(self, cardinalities: Sequence[int], n_num: int, hidden: Sequence[int], n_out: int,
                 embedding_dim: int = 8, rng: np.random.Generator | None = None):
        self.cardinalities = list(cardinalities)
        self.n_num = n_num
        self.hidden = list(hidden)
        self.n_out = n_out
        self.embedding_dim = embedding_dim if self.cardinalities else 0
        self.params: dict[str, np.ndarray] = {}
        rng = rng if rng is not None else np.random.default_rng(0)
        for f, card in enumerate(self.cardinalities):
            self.params[f"E{f}"] = rng.normal(0.0, 0.05, size=(card, self.embedding_dim))
        widths = [self.input_width] + self.hidden + [n_out]
        for k in range(len(widths) - 1):
            fan_in = widths[k]
            self.params[f"W{k}"] = rng.normal(0.0, math.sqrt(2.0 / max(fan_in, 1)), size=(fan_in, widths[k + 1]))
            self.params[f"b{k}"] = np.zeros(widths[k + 1])

    @property
    def input_width(self) -> int:
        return len(self.cardinalities) * self.embedding_dim + self.n_num

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _input(self, cats, nums):
        parts = [self.params[f"E{f}"][cats[:, f]] for f in range(len(self.cardinalities))]
        parts.append(nums)
        return np.concatenate(parts, axis=1) if parts else nums

    def forward(self, cats, nums, dropout: float = 0.0, rng=None):
        h = self._input(cats, nums)
        cache = [(h, None)]
        for k in range(self.n_layers):
            z = h @ self.params[f"W{k}"] + self.params[f"b{k}"]
            if k == self.n_layers - 1:
                return softmax(z), cache
            h = _relu(z)
            mask = None
            if dropout > 0:
                mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                h = h * mask
            cache.append((h, mask))
        raise AssertionError

    def loss(self, cats, nums, y) -> float:
        p, _ = self.forward(cats, nums)
        return float(-(y * np.log(np.clip(p, 1e-300, None))).sum(axis=1).mean())

    def loss_and_grads(self, cats, nums, y, dropout: float = 0.0, rng=None):
        """Mean categorical cross-entropy and its gradient w.r.t. every parameter."""
        n = len(y)
        p, cache = self.forward(cats, nums, dropout, rng)
        loss = float(-(y * np.log(np.clip(p, 1e-300, None))).sum(axis=1).mean())
        grads = {}
        # softmax + cross-entropy with soft labels summing to one
        delta = (p * y.sum(axis=1, keepdims=True) - y) / n
        for k in reversed(range(self.n_layers)):
            h_prev, _ = cache[k]
            grads[f"W{k}"] = h_prev.T @ delta
            grads[f"b{k}"] = delta.sum(axis=0)
            delta = delta @ self.params[f"W{k}"].T
            if k > 0:
                h, mask = cache[k]
                delta = delta * (h > 0)
                if mask is not None:
                    delta = delta * mask
        d = self.embedding_dim
        for f in range(len(self.cardinalities)):
            g = np.zeros_like(self.params[f"E{f}"])
            np.add.at(g, cats[:, f], delta[:, f * d:(f + 1) * d])
            grads[f"E{f}"] = g
        return loss, grads


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-7):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# ---------------------------------------------------------------------------
# models

@dataclass
class ScorerModel:
    resources: tuple[str, ...]
    encoder: ArcEncoder
    net: MLP
    config: TrainConfig = field(default_factory=TrainConfig)
    meta: dict = field(default_factory=dict)

    @property
    def layer_widths(self) -> list[int]:
        return [self.net.input_width] + self.net.hidden + [self.net.n_out]

    def predict_batch(self, xs: Sequence[FeatureVector]) -> np.ndarray:
        if not xs:
            return np.zeros((0, len(self.resources)))
        cats, nums = _stack(xs, len(self.net.cardinalities), self.net.n_num)
        if cats.size and (cats.min() < 0 or (cats >= np.array(self.net.cardinalities)).any()):
            raise ScorerError("categorical index outside the model's vocabulary")
        return self.net.forward(cats, nums)[0]

    def predict(self, x: FeatureVector) -> np.ndarray:
        return self.predict_batch([x])[0]

    def predict_instance(self, inst: Instance) -> dict[str, dict[str, float]]:
        probs = self.predict_batch(self.encoder.encode_instance(inst))
        return {a.id: dict(zip(self.resources, map(float, row))) for a, row in zip(inst.arcs, probs)}

    # persistence --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT, "version": 1,
            "resources": list(self.resources),
            "layer_widths": self.layer_widths,
            "cardinalities": self.net.cardinalities,
            "n_num": self.net.n_num,
            "embedding_dim": self.net.embedding_dim,
            "activation": {"hidden": "relu", "output": "softmax"},
            "config": self.config.to_dict(),
            "encoder": self.encoder.to_dict(),
            "params": {k: self.net.params[k].tolist() for k in sorted(self.net.params)},
            "meta": self.meta,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerModel":
        if d.get("format") != FORMAT:
            raise ScorerError("not a scorer model file")
        widths = d["layer_widths"]
        net = MLP(d["cardinalities"], d["n_num"], widths[1:-1], widths[-1], d["embedding_dim"])
        for k, v in d["params"].items():
            arr = np.asarray(v, dtype=np.float64)
            if k not in net.params or arr.shape != net.params[k].shape:
                raise ScorerError(f"parameter {k} has unexpected shape {arr.shape}")
            net.params[k] = arr
        return cls(tuple(d["resources"]), ArcEncoder.from_dict(d["encoder"]), net,
                   TrainConfig.from_dict(d["config"]), d.get("meta", {}))

    @classmethod
    def load(cls, path) -> "ScorerModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(model, x: FeatureVector) -> np.ndarray:
    """Probability vector over ``model.resources`` (works for the baseline too)."""
    return model.predict(x)


def train_scorer(ts: TrainingSet, config: TrainConfig | None = None, seed: int = 0) -> ScorerModel:
    """Adam on mini-batches with dropout; early stop on validation TOP_k declines."""
    config = config or TrainConfig()
    cats, nums, y = ts.arrays("train")
    if len(y) == 0:
        raise ValueError("training split is empty")
    rng = np.random.default_rng(seed)
    net = MLP(ts.encoder.cardinalities, len(NUMERIC), config.hidden, len(ts.resources),
              config.embedding_dim, rng)
    model = ScorerModel(ts.resources, ts.encoder, net, config)
    vc, vn, vy = ts.arrays("validation")
    opt = _Adam(net.params, config.learning_rate)
    history = {"train_loss": [net.loss(cats, nums, y)], "val_top": []}
    last_top, declines, epochs_run = None, 0, 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(y))
        for b, start in enumerate(range(0, len(y), config.batch_size)):
            idx = perm[start:start + config.batch_size]
            loss, grads = net.loss_and_grads(cats[idx], nums[idx], y[idx], config.dropout, rng)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(net.params, grads)
        epochs_run = epoch
        history["train_loss"].append(net.loss(cats, nums, y))
        if len(vy) and epoch % config.check_every == 0:
            top = top_kappa_metric(net.forward(vc, vn)[0], vy, min(config.early_kappa, len(ts.resources)))
            history["val_top"].append([epoch, top])
            declines = declines + 1 if last_top is not None and top < last_top else 0
            last_top = top
            if declines >= config.patience:
                break
    val_loss = net.loss(vc, vn, vy) if len(vy) else None
    model.meta = {"seed": seed, "epochs_run": epochs_run, "final_validation_loss": val_loss,
                  "train_examples": int(len(y)), "history": history}
    return model


# ---------------------------------------------------------------------------
# metric and filtering

def rank_resources(probs: np.ndarray) -> np.ndarray:
    """Column indices by descending probability, ties by ascending index."""
    return np.argsort(-np.asarray(probs), axis=-1, kind="stable")


def top_kappa_metric(predictions, labels, kappa: int) -> float:
    """Share of label mass captured by each row's ``kappa`` best-ranked resources."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} are not aligned")
    if y.size == 0:
        return 0.0
    top = rank_resources(p)[:, :kappa]
    captured = np.take_along_axis(y, top, axis=1).sum()
    total = y.sum()
    return float(min(1.0, captured / total)) if kappa < y.shape[1] else 1.0


def top_kappa_table(predictions, labels, kappas: Sequence[int]) -> list[tuple[int, float]]:
    return [(k, top_kappa_metric(predictions, labels, k)) for k in kappas]


def top_kappa_candidates(inst: Instance, model, kappas) -> dict[str, tuple[str, ...]]:
    """Per arc, the kappa_a most probable compatible resources plus the incumbent.

    ``kappas`` is a KappaAssignment, an arc -> kappa mapping, or one integer.
    """
    if hasattr(kappas, "kappa"):
        kappas = kappas.kappa
    xs = model.encoder.encode_instance(inst)
    probs = model.predict_batch(xs)
    col = {r: k for k, r in enumerate(model.resources)}
    out = {}
    for a, row in zip(inst.arcs, probs):
        k = kappas if isinstance(kappas, int) else kappas[a.id]
        if k < 1:
            raise ValueError(f"arc {a.id}: kappa must be >= 1")
        ranked = sorted(a.candidates, key=lambda r: (-(row[col[r]] if r in col else 0.0), natural_key(r)))
        chosen = set(ranked[:k]) | {a.initial}
        out[a.id] = tuple(sorted(chosen, key=natural_key))
    return out


# ---------------------------------------------------------------------------
# frequency baseline

class FrequencyBaseline:
    """Empirical resource frequencies per (origin, destination, size class).

    Unseen keys fall back to the global frequency distribution.
    """

    def __init__(self, resources, encoder: ArcEncoder, table: dict, overall: np.ndarray):
        self.resources = tuple(resources)
        self.encoder = encoder
        self.table = table
        self.overall = overall

    @staticmethod
    def _key(x: FeatureVector):
        return (x.cats[0], x.cats[1], x.cats[4])

    @classmethod
    def from_training_set(cls, ts: TrainingSet, split: str | None = "train") -> "FrequencyBaseline":
        ex = ts.examples if split is None else ts.split(split)
        if not ex:
            raise ValueError("no examples for the baseline")
        sums: dict = {}
        overall = np.zeros(len(ts.resources))
        for e in ex:
            k = cls._key(e.features)
            sums[k] = sums.get(k, np.zeros(len(ts.resources))) + e.label
            overall += e.label
        table = {k: v / v.sum() for k, v in sums.items()}
        return cls(ts.resources, ts.encoder, table, overall / overall.sum())

    def predict(self, x: FeatureVector) -> np.ndarray:
        if len(x.cats) != len(CATEGORICAL):
            raise ScorerError("feature dimension mismatch")
        return self.table.get(self._key(x), self.overall).copy()

    def predict_batch(self, xs: Sequence[FeatureVector]) -> np.ndarray:
        return np.array([self.predict(x) for x in xs]).reshape(len(xs), len(self.resources))


def frequency_baseline(refs, encoder: ArcEncoder | None = None) -> FrequencyBaseline:
    """Baseline built from every (instance, assignment) pair in ``refs``."""
    ts = build_training_set(refs, seed=0, encoder=encoder)
    return FrequencyBaseline.from_training_set(ts, split=None)


def evaluate(model, ts: TrainingSet, split: str, kappas: Sequence[int]) -> list[tuple[int, float]]:
    ex = ts.split(split)
    preds = model.predict_batch([e.features for e in ex])
    labels = np.array([e.label for e in ex]).reshape(len(ex), len(ts.resources))
    return top_kappa_table(preds, labels, kappas)
