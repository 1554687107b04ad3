"""Training-dynamics data: an ensemble of small classifiers trained from uniform random starts.

Every cycle's randomness derives from ``(base_seed, cycle)`` only, so records
are reproducible regardless of how cycles are scheduled.

Flat weight layout: for each layer, the ``(out, in)`` weight matrix in
row-major order followed by the ``out`` biases.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from morsedyn.errors import NumericalError, ValidationError
from morsedyn.surrogate import SamplePair

__all__ = [
    "NetConfig",
    "EnsembleConfig",
    "EnsembleRecord",
    "DataSplit",
    "load_dataset",
    "stratified_split",
    "cycle_seed",
    "train_once",
    "train_ensemble",
    "prediction_entropy",
    "balanced_accuracy",
    "select_coordinates",
    "project",
    "write_records",
    "read_records",
]

log = logging.getLogger(__name__)

ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(float)),
    "sigmoid": (lambda z: 1.0 / (1.0 + np.exp(-z)), lambda a: a * (1.0 - a)),
    "identity": (lambda z: z, lambda a: np.ones_like(a)),
}


@dataclass(frozen=True)
class NetConfig:
    layers: tuple[int, ...] = (4, 1, 3)
    activation: str = "tanh"
    epochs: int = 150
    batch_size: int = 32
    learning_rate: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(int(w) for w in self.layers))
        if len(self.layers) < 2 or any(w < 1 for w in self.layers):
            raise ValidationError("layers needs >= 2 positive widths (input, ..., output)")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {sorted(ACTIVATIONS)}")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")

    @property
    def n_weights(self) -> int:
        return sum(o * i + o for i, o in zip(self.layers[:-1], self.layers[1:]))

    def unpack(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` per layer into ``flat``."""
        out, k = [], 0
        for i, o in zip(self.layers[:-1], self.layers[1:]):
            w = flat[k : k + o * i].reshape(o, i)
            k += o * i
            b = flat[k : k + o]
            k += o
            out.append((w, b))
        return out


@dataclass(frozen=True)
class EnsembleConfig:
    cycles: int = 100
    base_seed: int = 0
    init_low: float | tuple[float, ...] = -1.0
    init_high: float | tuple[float, ...] = 1.0
    dataset: str | None = None
    label_column: str = "label"
    split_seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self) -> None:
        if self.cycles < 1:
            raise ValidationError("cycles must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must be in (0, 1)")

    def init_box(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.init_low, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.init_high, dtype=float), (n,)).copy()
        if np.any(lo >= hi):
            raise ValidationError("init box needs low < high on every coordinate")
        return lo, hi


@dataclass
class EnsembleRecord:
    cycle: int
    seed: int
    diverged: bool
    initial: list[float]
    final: list[float]
    predictions: list[int]
    balanced_accuracy: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


@dataclass
class DataSplit:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self) -> None:
        if not self.n_classes:
            self.n_classes = int(max(self.y_train.max(), self.y_test.max())) + 1


def load_dataset(path: str | Path | None = None, label_column: str = "label") -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and integer labels from a CSV with a header; bundled Iris when ``path`` is None."""
    if path is None:
        text = resources.files("morsedyn").joinpath("data/iris.csv").read_text()
        rows = list(csv.reader(text.splitlines()))
        source = "bundled iris.csv"
    else:
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"dataset not found: {path}")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        source = str(path)
    if not rows:
        raise ValidationError(f"{source}: empty dataset")
    header, body = rows[0], [r for r in rows[1:] if r]
    if label_column not in header:
        raise ValidationError(f"{source}: no label column {label_column!r}")
    li = header.index(label_column)
    try:
        x = np.array([[float(v) for j, v in enumerate(r) if j != li] for r in body])
        y = np.array([int(r[li]) for r in body])
    except ValueError as exc:
        raise ValidationError(f"{source}: {exc}") from None
    if y.min() < 0:
        raise ValidationError(f"{source}: labels must be non-negative integers")
    return x, y


def stratified_split(
    x: np.ndarray, y: np.ndarray, train_fraction: float = 0.8, seed: int = 0, standardize: bool = True
) -> DataSplit:
    """Per-class shuffled split; features z-scored with training statistics."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = int(round(train_fraction * len(idx)))
        train_idx.extend(idx[:k].tolist())
        test_idx.extend(idx[k:].tolist())
    train_idx, test_idx = sorted(train_idx), sorted(test_idx)
    xtr, xte = x[train_idx], x[test_idx]
    if standardize:
        mu, sd = xtr.mean(axis=0), xtr.std(axis=0)
        sd[sd == 0] = 1.0
        xtr, xte = (xtr - mu) / sd, (xte - mu) / sd
    return DataSplit(xtr, y[train_idx], xte, y[test_idx], int(y.max()) + 1)


def cycle_seed(base_seed: int, cycle: int) -> int:
    return int(np.random.SeedSequence([base_seed, cycle]).generate_state(1)[0])


def _forward(net: NetConfig, params, x: np.ndarray) -> list[np.ndarray]:
    act = ACTIVATIONS[net.activation][0]
    acts = [x]
    for k, (w, b) in enumerate(params):
        z = acts[-1] @ w.T + b
        acts.append(z if k == len(params) - 1 else act(z))
    return acts


def _softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    p = expz / expz.sum(axis=1, keepdims=True)
    n = len(y)
    loss = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))
    p[np.arange(n), y] -= 1.0
    return loss, p / n


def predict(net: NetConfig, weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        logits = _forward(net, net.unpack(weights), x)[-1]
    return np.argmax(np.nan_to_num(logits), axis=1)


def train_once(
    net: NetConfig, data: DataSplit, initial: Sequence[float], seed: int
) -> tuple[np.ndarray, np.ndarray, float, bool]:
    """Mini-batch SGD on soft-max cross-entropy for ``net.epochs`` epochs.

    Returns final weights, test predictions, test balanced accuracy and a
    divergence flag.  On a non-finite loss training stops and the last finite
    weights are returned.
    """
    w = np.array(initial, dtype=float)
    if w.shape != (net.n_weights,):
        raise ValidationError(f"initial weights have length {w.size}, architecture needs {net.n_weights}")
    if data.x_train.shape[1] != net.layers[0] or data.n_classes != net.layers[-1]:
        raise ValidationError("layer widths do not match the dataset's features/classes")
    deriv = ACTIVATIONS[net.activation][1]
    rng = np.random.default_rng(seed)
    n = len(data.y_train)
    diverged = False
    for _ in range(net.epochs):
        order = rng.permutation(n)
        for start in range(0, n, net.batch_size):
            batch = order[start : start + net.batch_size]
            params = net.unpack(w)
            with np.errstate(all="ignore"):
                acts = _forward(net, params, data.x_train[batch])
                loss, delta = _softmax_xent(acts[-1], data.y_train[batch])
                grads = []
                for k in range(len(params) - 1, -1, -1):
                    wk, _ = params[k]
                    grads.append((delta.T @ acts[k], delta.sum(axis=0)))
                    if k:
                        delta = (delta @ wk) * deriv(acts[k])
                step = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in reversed(grads)])
                new = w - net.learning_rate * step
            if not (np.isfinite(loss) and np.all(np.isfinite(new))):
                diverged = True
                break
            w = new
        if diverged:
            break
    preds = predict(net, w, data.x_test)
    return w, preds, balanced_accuracy(preds, data.y_test, data.n_classes), diverged


def train_ensemble(
    net: NetConfig, ens: EnsembleConfig, data: DataSplit | None = None, threads: int = 1
) -> list[EnsembleRecord]:
    """``ens.cycles`` independent training runs from uniform random starts."""
    if data is None:
        x, y = load_dataset(ens.dataset, ens.label_column)
        data = stratified_split(x, y, ens.train_fraction, ens.split_seed)
    lo, hi = ens.init_box(net.n_weights)

    def cycle(k: int) -> EnsembleRecord:
        seed = cycle_seed(ens.base_seed, k)
        init = np.random.default_rng([seed, 0]).uniform(lo, hi)
        final, preds, bacc, diverged = train_once(net, data, init, seed)
        return EnsembleRecord(
            cycle=k,
            seed=seed,
            diverged=diverged,
            initial=init.tolist(),
            final=final.tolist(),
            predictions=preds.astype(int).tolist(),
            balanced_accuracy=bacc,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(cycle, range(ens.cycles)))
    else:
        records = [cycle(k) for k in range(ens.cycles)]
    n_div = sum(r.diverged for r in records)
    if n_div == len(records):
        raise NumericalError("every training cycle diverged")
    if n_div:
        log.warning("%d of %d cycles diverged", n_div, len(records))
    return records


def _live(records: Iterable[EnsembleRecord]) -> list[EnsembleRecord]:
    return [r for r in records if not r.diverged]


def prediction_entropy(records: Sequence[EnsembleRecord], n_classes: int) -> np.ndarray:
    """Per-test-point Shannon entropy (bits) of the predicted class across cycles."""
    live = _live(records)
    if not live:
        raise ValidationError("no non-diverged records")
    preds = np.array([r.predictions for r in live])
    counts = np.stack([(preds == c).sum(axis=0) for c in range(n_classes)], axis=1)
    p = counts / len(live)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    return terms.sum(axis=1) + 0.0


def balanced_accuracy(predictions: Sequence[int], labels: Sequence[int], n_classes: int) -> float:
    """Mean over classes of per-class recall."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ValidationError("predictions and labels differ in length")
    recalls = []
    for c in range(n_classes):
        mask = lab == c
        if not mask.any():
            raise ValidationError(f"class {c} absent from labels")
        recalls.append(float(np.mean(pred[mask] == c)))
    return float(np.mean(recalls))


def select_coordinates(records: Sequence[EnsembleRecord], k: int = 2) -> list[int]:
    """Indices of the ``k`` coordinates whose displacement varies most across cycles."""
    live = _live(records)
    if len(live) < 2:
        raise ValidationError("need at least 2 non-diverged records")
    disp = np.array([r.final for r in live]) - np.array([r.initial for r in live])
    if not 1 <= k <= disp.shape[1]:
        raise ValidationError(f"k must be in [1, {disp.shape[1]}]")
    var = disp.var(axis=0)
    return np.argsort(-var, kind="stable")[:k].tolist()


def project(records: Sequence[EnsembleRecord], indices: Sequence[int]) -> list[SamplePair]:
    idx = list(indices)
    return [
        SamplePair(tuple(r.initial[i] for i in idx), tuple(r.final[i] for i in idx))
        for r in _live(records)
    ]


def write_records(path: str | Path, records: Iterable[EnsembleRecord]) -> None:
    with open(path, "w") as fh:
        for r in sorted(records, key=lambda r: r.cycle):
            fh.write(r.to_json() + "\n")


def read_records(path: str | Path) -> list[EnsembleRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(EnsembleRecord(**json.loads(line)))
            except (TypeError, json.JSONDecodeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad record ({exc})") from None
    if not records:
        raise ValidationError(f"{path}: no records")
    lengths = {(len(r.initial), len(r.final)) for r in records}
    if len(lengths) != 1 or len(lengths.pop()) != 2 or len(records[0].initial) != len(records[0].final):
        raise ValidationError(f"{path}: weight vectors differ in length across records")
    return sorted(records, key=lambda r: r.cycle)
