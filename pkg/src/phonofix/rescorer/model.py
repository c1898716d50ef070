"""Linear rescoring model, MWER objective and Adam training."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .features import ZERO_STD, feature_groups

Features = Dict[str, float]


class SchemaError(ValueError):
    pass


class TrainingError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 1e-4
    mask: Tuple[str, ...] = ()  # feature groups removed from the schema

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mask"] = list(self.mask)
        return d


@dataclass
class TrainingExample:
    features: List[Features]
    wers: List[float]


def schema_version(schema: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(schema).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_version: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector has non-finite values")


@dataclass
class RescorerModel:
    schema: List[str]
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.stds = np.asarray(self.stds, dtype=float)
        n = len(self.schema)
        if not (len(self.weights) == len(self.means) == len(self.stds) == n):
            raise SchemaError("weights, standardization and schema lengths differ")
        if n and self.stds.min() < ZERO_STD:
            raise SchemaError("retained features need a positive standard deviation")

    @property
    def version(self) -> str:
        return schema_version(self.schema)

    def matrix(self, rows: Sequence[Features]) -> np.ndarray:
        """Standardized K x D matrix; every schema feature must be present."""
        try:
            raw = np.array([[row[n] for n in self.schema] for row in rows], dtype=float)
        except KeyError as exc:
            raise SchemaError(f"feature {exc.args[0]!r} missing from input") from None
        return (raw.reshape(len(rows), len(self.schema)) - self.means) / self.stds

    def vectors(self, rows: Sequence[Features]) -> List[FeatureVector]:
        return [FeatureVector(x, self.version) for x in self.matrix(rows)]

    def scores(self, rows: Sequence[Features]) -> np.ndarray:
        return self.matrix(rows) @ self.weights

    def to_json(self) -> str:
        doc = {
            "schema": list(self.schema),
            "weights": [repr(float(x)) for x in self.weights],
            "standardization": {
                "means": [repr(float(x)) for x in self.means],
                "stddevs": [repr(float(x)) for x in self.stds],
            },
            "config": self.config,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RescorerModel":
        doc = json.loads(text)
        std = doc["standardization"]
        return cls(
            list(doc["schema"]),
            np.array([float(x) for x in doc["weights"]]),
            np.array([float(x) for x in std["means"]]),
            np.array([float(x) for x in std["stddevs"]]),
            doc.get("config", {}),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "RescorerModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def score(model: RescorerModel, x: FeatureVector) -> float:
    if x.schema_version != model.version or len(x.values) != len(model.weights):
        raise SchemaError("feature vector does not match the model schema")
    return float(np.dot(x.values, model.weights))


def best_index(scores: Sequence[float]) -> int:
    """Argmax; the lowest index wins ties."""
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def rescore(model: RescorerModel, hyps: Sequence, rows: Sequence[Features]):
    """Pick the highest-scoring hypothesis (ASR top-1 wins ties)."""
    if not hyps or len(hyps) != len(rows):
        raise ValueError("need one feature row per hypothesis")
    return hyps[best_index(model.scores(rows).tolist())]


def softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max())
    return e / e.sum()


def mwer_loss(w: np.ndarray, batch: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[float, np.ndarray]:
    """Mean expected WER over records and its gradient.

    Each batch item is ``(X, wers)`` with X the K x D standardized features.
    With p = softmax(X w), the record loss is p . wers and its gradient is
    X^T (p * (wers - p . wers)).
    """
    if not batch:
        return 0.0, np.zeros_like(np.asarray(w, dtype=float))
    return _Stacked([x for x, _ in batch], [r for _, r in batch]).loss(w)


class _Stacked:
    """Records stacked into one matrix so the loss is a few segment reductions."""

    def __init__(self, xs: Sequence[np.ndarray], rs: Sequence[np.ndarray]):
        self.x = np.vstack(xs)
        self.r = np.concatenate([np.asarray(r, dtype=float) for r in rs])
        sizes = np.array([len(r) for r in rs])
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.seg = np.repeat(np.arange(len(sizes)), sizes)
        self.n = len(sizes)

    def subset(self, records: np.ndarray) -> "_Stacked":
        out = _Stacked.__new__(_Stacked)
        sizes = np.diff(np.append(self.starts, len(self.r)))[records]
        # row indices of the selected records, in the given order
        idx = np.repeat(self.starts[records] - np.concatenate([[0], np.cumsum(sizes)[:-1]]), sizes) + np.arange(sizes.sum())
        out.x, out.r = self.x[idx], self.r[idx]
        out.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        out.seg = np.repeat(np.arange(len(sizes)), sizes)
        out.n = len(sizes)
        return out

    def loss(self, w: np.ndarray) -> Tuple[float, np.ndarray]:
        s = self.x @ w
        s = s - np.maximum.reduceat(s, self.starts)[self.seg]
        e = np.exp(s)
        p = e / np.add.reduceat(e, self.starts)[self.seg]
        expected = np.add.reduceat(p * self.r, self.starts)
        grad = self.x.T @ (p * (self.r - expected[self.seg]))
        return float(expected.sum()) / self.n, grad / self.n


def _discard_uniform(dataset: Iterable[TrainingExample]) -> List[TrainingExample]:
    return [ex for ex in dataset if len(ex.wers) >= 2 and max(ex.wers) - min(ex.wers) > 0.0]


def build_schema(examples: Sequence[TrainingExample], mask: Sequence[str] = ()) -> List[str]:
    names: Dict[str, None] = {}
    seen_keys = set()
    for ex in examples:
        for row in ex.features:
            keys = tuple(row)
            if keys in seen_keys:
                continue
            seen_keys.add(keys)
            for n in keys:
                names.setdefault(n, None)
    masked = set(mask)
    return [n for n in names if not (feature_groups(n) & masked)]


def _rows_matrix(rows: Sequence[Features], schema: Sequence[str]) -> np.ndarray:
    # fast path: rows produced by one extractor share key order
    keys = list(rows[0]) if rows else []
    if all(list(r) == keys for r in rows):
        pos = {n: i for i, n in enumerate(keys)}
        if all(n in pos for n in schema):
            full = np.array([list(r.values()) for r in rows], dtype=float)
            return full[:, [pos[n] for n in schema]].reshape(len(rows), len(schema))
    return np.array([[r.get(n, 0.0) for n in schema] for r in rows], dtype=float).reshape(len(rows), len(schema))


def train_mwer(dataset: Sequence[TrainingExample], config: Optional[TrainConfig] = None,
               curve: Optional[List[float]] = None) -> RescorerModel:
    """Fit weights with minibatch Adam on the MWER objective.

    Records whose hypotheses all share one WER carry no signal and are
    dropped first. ``curve`` receives the full training loss before the
    first epoch and after each epoch.
    """
    cfg = config or TrainConfig()
    examples = _discard_uniform(dataset)
    if not examples:
        raise TrainingError("no discriminative training signal")
    schema = build_schema(examples, cfg.mask)
    raw = [_rows_matrix(ex.features, schema) for ex in examples]
    stacked = np.vstack(raw)
    means = stacked.mean(axis=0)
    stds = stacked.std(axis=0)
    keep = stds >= ZERO_STD * np.maximum(1.0, np.abs(means))
    schema = [n for n, k in zip(schema, keep) if k]
    means, stds = means[keep], stds[keep]
    data = [((x[:, keep] - means) / stds, np.clip(np.asarray(ex.wers, dtype=float), 0.0, 1.0))
            for x, ex in zip(raw, examples)]

    d = len(schema)
    w = np.zeros(d)
    m1 = np.zeros(d)
    m2 = np.zeros(d)
    rng = np.random.default_rng(cfg.seed)
    step = 0

    full = _Stacked([x for x, _ in data], [r for _, r in data])

    def objective(weights):
        loss, grad = full.loss(weights)
        return loss + 0.5 * cfg.l2 * float(weights @ weights), grad + cfg.l2 * weights

    if curve is not None:
        curve.append(objective(w)[0])
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data))
        for lo in range(0, len(order), cfg.batch_size):
            _, g = full.subset(order[lo:lo + cfg.batch_size]).loss(w)
            g = g + cfg.l2 * w
            step += 1
            m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * g
            m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * g * g
            mhat = m1 / (1 - cfg.beta1 ** step)
            vhat = m2 / (1 - cfg.beta2 ** step)
            w = w - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
        if curve is not None:
            curve.append(objective(w)[0])

    config_doc = cfg.to_dict()
    config_doc["records"] = len(examples)
    return RescorerModel(schema, w, means, stds, config_doc)
