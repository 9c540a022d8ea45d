"""From-scratch MLP travel-mode classifier.

Rectifier hidden layers, softmax output, mean cross-entropy plus an L2
weight penalty, trained by plain mini-batch gradient descent. Everything
is seeded and single-threaded over the batch loop so that identical
inputs give bit-identical weights; a central-finite-difference gradient
check guards the backprop.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embedding import SceneEmbedding
from .evaluation import confusion_matrix, report_from_confusion
from .trajectory import MODES, Mode

N_CLASSES = 5


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]  # input, hidden..., 5
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rng_seed: int

    def __post_init__(self) -> None:
        if self.layer_dims[-1] != N_CLASSES:
            raise ValueError(f"output dimension must be {N_CLASSES}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"layer {i}: weight shape {w.shape} does not chain {expect}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for a batch, shape (n, 5)."""
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected input of width {self.input_dim}, got {x.shape}")
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        logits = a @ self.weights[-1] + self.biases[-1]
        return _softmax(logits)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward_batch(x), axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, x: Sequence[float]) -> np.ndarray:
    """Probability vector (length 5) for a single input."""
    return model.forward_batch(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def init_model(input_dim: int, hidden_dims: Sequence[int], seed: int) -> MlpModel:
    """He-style scaled normal initialization of all layers from one seed."""
    rng = np.random.default_rng(seed)
    dims = (input_dim, *hidden_dims, N_CLASSES)
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
        for i in range(len(dims) - 1)
    ]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return MlpModel(layer_dims=dims, weights=weights, biases=biases, rng_seed=seed)


def loss_and_grads(
    model: MlpModel, x: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy plus l2_penalty * sum of squared weights, with
    analytic gradients for every weight matrix and bias vector."""
    n = x.shape[0]
    activations = [x]
    pre = []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    logits = a @ model.weights[-1] + model.biases[-1]

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    ce = -float(np.mean(log_probs[np.arange(n), y]))
    loss = ce + l2_penalty * sum(float(np.sum(w * w)) for w in model.weights)

    probs = np.exp(log_probs)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads_w: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = activations[layer].T @ delta + 2.0 * l2_penalty * model.weights[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (pre[layer - 1] > 0.0)
    return loss, grads_w, grads_b


def gradient_check(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    l2_penalty: float = 0.0,
    step: float = 1e-5,
) -> float:
    """Max relative error of analytic vs central-finite-difference gradients.

    Intended for small models and batches; perturbs every parameter twice.
    """
    _, grads_w, grads_b = loss_and_grads(model, x, y, l2_penalty)
    max_err = 0.0

    def loss_only() -> float:
        return loss_and_grads(model, x, y, l2_penalty)[0]

    for params, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for tensor, grad in zip(params, grads):
            it = np.nditer(tensor, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = tensor[idx]
                tensor[idx] = orig + step
                plus = loss_only()
                tensor[idx] = orig - step
                minus = loss_only()
                tensor[idx] = orig
                numeric = (plus - minus) / (2.0 * step)
                analytic = grad[idx]
                denom = max(abs(numeric), abs(analytic))
                if denom > 1e-10:
                    max_err = max(max_err, abs(numeric - analytic) / denom)
                it.iternext()
    return max_err


@dataclass(frozen=True)
class TrainConfig:
    hidden_dims: tuple[int, ...] = (128,)
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    l2_penalty: float = 1e-4
    split_seed: int = 0
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self) -> None:
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("train/val/test fractions must be positive and sum to 1")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, epochs must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")


@dataclass
class TrainLog:
    train_ids: list[str]
    val_ids: list[str]
    test_ids: list[str]
    train_loss: list[float] = field(default_factory=list)
    val_macro_f1: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final_train_accuracy: float = 0.0

    def to_dict(self) -> dict:
        return {
            "train_ids": self.train_ids,
            "val_ids": self.val_ids,
            "test_ids": self.test_ids,
            "train_loss": self.train_loss,
            "val_macro_f1": self.val_macro_f1,
            "best_epoch": self.best_epoch,
            "final_train_accuracy": self.final_train_accuracy,
        }


Dataset = Sequence[tuple[SceneEmbedding, Mode]]


def stratified_split(
    dataset: Dataset, cfg: TrainConfig
) -> tuple[list[tuple[SceneEmbedding, Mode]], ...]:
    """Deterministic stratified split on sorted segment ids.

    Sorting first makes membership independent of dataset order, so
    parallel loaders and repeated runs always agree.
    """
    items = sorted(dataset, key=lambda it: it[0].segment_id)
    rng = np.random.default_rng(cfg.split_seed)
    train: list = []
    val: list = []
    test: list = []
    by_mode: dict[Mode, list] = {}
    for item in items:
        by_mode.setdefault(item[1], []).append(item)
    for mode in MODES:
        group = by_mode.get(mode, [])
        if not group:
            continue
        order = rng.permutation(len(group))
        n = len(group)
        n_train = int(round(n * cfg.train_frac))
        n_val = int(round(n * cfg.val_frac))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        for pos, j in enumerate(order):
            if pos < n_train:
                train.append(group[j])
            elif pos < n_train + n_val:
                val.append(group[j])
            else:
                test.append(group[j])
    return train, val, test


def _to_arrays(items: Sequence[tuple[SceneEmbedding, Mode]]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([emb.combined for emb, _ in items])
    y = np.array([MODES.index(mode) for _, mode in items], dtype=np.int64)
    return x, y


def train(dataset: Dataset, cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainLog]:
    """Train on the stratified train split, select by val macro-F1.

    The returned model is the epoch snapshot with the best validation
    macro-F1 (the final model when the validation split is empty).
    """
    if not dataset:
        raise ValueError("empty dataset")
    lengths = {len(emb.combined) for emb, _ in dataset}
    if len(lengths) != 1:
        raise ValueError(f"mixed embedding lengths in dataset: {sorted(lengths)}")
    rules = {emb.combine_rule for emb, _ in dataset}
    if len(rules) != 1:
        raise ValueError(f"mixed combine rules in dataset: {sorted(r.value for r in rules)}")
    if len({mode for _, mode in dataset}) < 2:
        raise ValueError("dataset must contain at least 2 classes")

    train_items, val_items, test_items = stratified_split(dataset, cfg)
    log = TrainLog(
        train_ids=[emb.segment_id for emb, _ in train_items],
        val_ids=[emb.segment_id for emb, _ in val_items],
        test_ids=[emb.segment_id for emb, _ in test_items],
    )
    x_train, y_train = _to_arrays(train_items)
    has_val = len(val_items) > 0
    if has_val:
        x_val, y_val = _to_arrays(val_items)

    model = init_model(x_train.shape[1], cfg.hidden_dims, cfg.split_seed)
    rng = np.random.default_rng(cfg.split_seed + 1)  # epoch shuffling stream

    best_f1 = -1.0
    best_weights: Optional[list[np.ndarray]] = None
    best_biases: Optional[list[np.ndarray]] = None

    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads_w, grads_b = loss_and_grads(
                model, x_train[idx], y_train[idx], cfg.l2_penalty
            )
            for layer in range(len(model.weights)):
                model.weights[layer] -= cfg.learning_rate * grads_w[layer]
                model.biases[layer] -= cfg.learning_rate * grads_b[layer]
            epoch_loss += loss
            batches += 1
        log.train_loss.append(epoch_loss / max(batches, 1))

        if has_val:
            pred = model.predict(x_val)
            report = report_from_confusion(confusion_matrix(y_val, pred))
            log.val_macro_f1.append(report.macro_f1)
            if report.macro_f1 > best_f1:
                best_f1 = report.macro_f1
                best_weights = [w.copy() for w in model.weights]
                best_biases = [b.copy() for b in model.biases]
                log.best_epoch = epoch

    if best_weights is not None:
        model = MlpModel(
            layer_dims=model.layer_dims,
            weights=best_weights,
            biases=best_biases,
            rng_seed=model.rng_seed,
        )
    log.final_train_accuracy = float(np.mean(model.predict(x_train) == y_train))
    return model, log


CHECKPOINT_FORMAT = "trajmode-mlp"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: MlpModel, path: str | Path, meta: Optional[dict] = None) -> None:
    """Write a self-describing JSON checkpoint with a versioned header."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(model.layer_dims),
        "rng_seed": model.rng_seed,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[MlpModel, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    model = MlpModel(
        layer_dims=tuple(doc["layer_dims"]),
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        rng_seed=doc["rng_seed"],
    )
    return model, doc.get("meta", {})
