"""Reference client model: a small MLP with per-layer training modes.

Layers can be trained in full, bias-only (weights frozen), or frozen
entirely, which is what the depth/capacity planner manipulates. The
predictive distribution is a plain softmax over final-layer scores.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Rng


class LayerMode(str, Enum):
    FROZEN = "frozen"
    BIAS_ONLY = "bias_only"
    FULL = "full"


@dataclass(frozen=True)
class LayerPlan:
    """Per-layer training modes, index 0 nearest the input."""

    modes: tuple[LayerMode, ...]

    @staticmethod
    def all_full(num_layers: int) -> "LayerPlan":
        return LayerPlan(tuple([LayerMode.FULL] * num_layers))

    @staticmethod
    def all_frozen(num_layers: int) -> "LayerPlan":
        return LayerPlan(tuple([LayerMode.FROZEN] * num_layers))

    @staticmethod
    def all_bias(num_layers: int) -> "LayerPlan":
        return LayerPlan(tuple([LayerMode.BIAS_ONLY] * num_layers))

    @staticmethod
    def terraced(frozen: int, bias_only: int, full: int) -> "LayerPlan":
        return LayerPlan(
            tuple(
                [LayerMode.FROZEN] * frozen
                + [LayerMode.BIAS_ONLY] * bias_only
                + [LayerMode.FULL] * full
            )
        )

    def __len__(self) -> int:
        return len(self.modes)

    def frozen_prefix(self) -> int:
        n = 0
        for m in self.modes:
            if m is not LayerMode.FROZEN:
                break
            n += 1
        return n

    def is_terraced(self) -> bool:
        ranks = {LayerMode.FROZEN: 0, LayerMode.BIAS_ONLY: 1, LayerMode.FULL: 2}
        seq = [ranks[m] for m in self.modes]
        return all(a <= b for a, b in zip(seq, seq[1:]))

    def describe(self) -> str:
        short = {LayerMode.FROZEN: "z", LayerMode.BIAS_ONLY: "b", LayerMode.FULL: "F"}
        return "".join(short[m] for m in self.modes)


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 4
    local_epochs: int = 1
    # bias-only tuning wants a 10x larger step than full tuning
    lr_full: float = 1e-2
    lr_bias: float = 1e-1


@dataclass(frozen=True)
class ModelSpec:
    """Architecture knobs for the reference MLP (depth counts weight layers)."""

    depth: int = 6
    hidden_width: int = 32

    def layer_dims(self, input_dim: int, num_classes: int) -> list[int]:
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.depth == 1:
            return [input_dim, num_classes]
        return [input_dim] + [self.hidden_width] * (self.depth - 1) + [num_classes]


class MlpModel:
    """Feed-forward classifier: tanh hidden layers, linear output layer.

    Value object: training returns a modified copy, never mutates in place
    across module boundaries.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases):
            raise ValueError("weights and biases must pair up")
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, layer_dims: Sequence[int], rng: Rng) -> "MlpModel":
        gen = rng.gen
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(gen.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(gen.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def hidden(self, X: np.ndarray) -> np.ndarray:
        """Activations feeding the output layer."""
        h = np.atleast_2d(X)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W + b)
        return h

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.hidden(X) @ self.weights[-1] + self.biases[-1]

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def bias_parameter_count(self) -> int:
        return sum(b.size for b in self.biases)

    def trainable_parameter_count(self, plan: LayerPlan) -> int:
        if len(plan) != self.num_layers:
            raise ValueError("plan length does not match model depth")
        total = 0
        for mode, W, b in zip(plan.modes, self.weights, self.biases):
            if mode is LayerMode.FULL:
                total += W.size + b.size
            elif mode is LayerMode.BIAS_ONLY:
                total += b.size
        return total


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: MlpModel, X: np.ndarray) -> np.ndarray:
    return softmax(model.logits(X))


def predict_dist(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Predictive distribution over classes for one sample."""
    return predict_proba(model, np.atleast_2d(x))[0]


def accuracy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    pred = model.logits(X).argmax(axis=1)
    return float(np.mean(pred == y))


def batch_loss(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of the softmax distribution on a batch."""
    logits = model.logits(X)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(y)), y]))


def _backprop(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Mean-CE loss and gradients for every layer (masking happens later)."""
    acts = [np.atleast_2d(X)]
    h = acts[0]
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ W + b)
        acts.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    probs = softmax(logits)
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [np.empty(0)] * model.num_layers
    grads_b = [np.empty(0)] * model.num_layers
    for layer in range(model.num_layers - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            dh = delta @ model.weights[layer].T
            delta = dh * (1.0 - acts[layer] ** 2)
    z = logits - logits.max(axis=1, keepdims=True)
    loss = float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(n), y]))
    return loss, grads_w, grads_b


def sgd_step(model: MlpModel, X: np.ndarray, y: np.ndarray, plan: LayerPlan, cfg: TrainerConfig) -> None:
    """One masked SGD step on a batch, in place (module-internal use)."""
    _, grads_w, grads_b = _backprop(model, X, y)
    for layer, mode in enumerate(plan.modes):
        if mode is LayerMode.FULL:
            model.weights[layer] -= cfg.lr_full * grads_w[layer]
            model.biases[layer] -= cfg.lr_full * grads_b[layer]
        elif mode is LayerMode.BIAS_ONLY:
            model.biases[layer] -= cfg.lr_bias * grads_b[layer]


def local_train(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    plan: LayerPlan,
    cfg: TrainerConfig,
    rng: Rng,
) -> tuple[MlpModel, int]:
    """Mini-batch SGD over a client's labeled arrays.

    Frozen layers come back bit-identical; bias-only layers change only
    their bias vector. Returns the updated copy and the sample count used
    for aggregation weighting.
    """
    if len(y) == 0:
        raise ValueError("client has no labeled samples")
    if len(plan) != model.num_layers:
        raise ValueError("plan length does not match model depth")
    out = model.copy()
    n = len(y)
    for _ in range(cfg.local_epochs):
        order = rng.gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            sgd_step(out, X[idx], y[idx], plan, cfg)
    return out, n


def grad_check(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    plan: LayerPlan,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients
    over every trainable parameter under the plan."""
    if len(y) == 0:
        raise ValueError("batch must be nonempty")
    _, grads_w, grads_b = _backprop(model, X, y)

    def numeric(arr: np.ndarray, i: tuple) -> float:
        orig = arr[i]
        arr[i] = orig + step
        up = batch_loss(model, X, y)
        arr[i] = orig - step
        down = batch_loss(model, X, y)
        arr[i] = orig
        return (up - down) / (2.0 * step)

    worst = 0.0
    for layer, mode in enumerate(plan.modes):
        arrays: list[tuple[np.ndarray, np.ndarray]] = []
        if mode is LayerMode.FULL:
            arrays.append((model.weights[layer], grads_w[layer]))
        if mode in (LayerMode.FULL, LayerMode.BIAS_ONLY):
            arrays.append((model.biases[layer], grads_b[layer]))
        for arr, grad in arrays:
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                i = it.multi_index
                a = float(grad[i])
                n_val = numeric(arr, i)
                denom = max(abs(a), abs(n_val), 1e-4)
                worst = max(worst, abs(a - n_val) / denom)
                it.iternext()
    return worst


def fed_avg(updates: Sequence[tuple[MlpModel, int]]) -> MlpModel:
    """Sample-count-weighted parameter mean.

    Weighted contributions are summed in value-sorted order per parameter,
    so the result is exactly invariant to the order of the update list.
    """
    if not updates:
        raise ValueError("fed_avg needs at least one update")
    ref = updates[0][0]
    shapes = [(w.shape, b.shape) for w, b in zip(ref.weights, ref.biases)]
    for m, count in updates:
        if count <= 0:
            raise ValueError("sample counts must be positive")
        if [(w.shape, b.shape) for w, b in zip(m.weights, m.biases)] != shapes:
            raise ValueError("model shapes do not match")
    total = float(sum(c for _, c in updates))
    w = np.array([c / total for _, c in updates])

    def combine(arrays: list[np.ndarray]) -> np.ndarray:
        stacked = np.stack(arrays) * w.reshape((-1,) + (1,) * arrays[0].ndim)
        stacked.sort(axis=0)
        return stacked.sum(axis=0)

    weights = [combine([m.weights[i] for m, _ in updates]) for i in range(ref.num_layers)]
    biases = [combine([m.biases[i] for m, _ in updates]) for i in range(ref.num_layers)]
    return MlpModel(weights, biases)


_HEAD_GAP_TARGET = 6.0


def init_output_from_centroids(
    model: MlpModel, X_public: np.ndarray, y_public: np.ndarray, num_classes: int
) -> MlpModel:
    """Replace the output layer with a Gaussian-discriminant head fit on a
    tiny labeled public split.

    Scores are scaled Gaussian-discriminant logits (h . mu_c - |mu_c|^2/2)
    over the hidden-feature class centroids mu_c. The scale is the inverse
    pooled within-class variance, capped so the mean inter-class logit gap
    stays near _HEAD_GAP_TARGET: an uncapped tiny-sample variance estimate
    produces logits so sharp that the first SGD steps destroy the head.
    """
    out = model.copy()
    h = model.hidden(X_public)
    width = h.shape[1]
    mus = np.zeros((num_classes, width))
    sq_dev, dof = 0.0, 0
    for c in range(num_classes):
        mask = y_public == c
        if mask.any():
            mus[c] = h[mask].mean(axis=0)
            sq_dev += float(((h[mask] - mus[c]) ** 2).sum())
            dof += max(int(mask.sum()) - 1, 0) * width  # Bessel: tiny splits
    sigma2 = sq_dev / dof if dof > 0 and sq_dev > 0 else 1.0
    gaps = [
        0.5 * float(((mus[i] - mus[j]) ** 2).sum())
        for i in range(num_classes)
        for j in range(i + 1, num_classes)
    ]
    mean_gap = float(np.mean(gaps)) if gaps else 0.0
    scale = 1.0 / sigma2
    if mean_gap > 0:
        scale = min(scale, _HEAD_GAP_TARGET / mean_gap)
    out.weights[-1] = (mus * scale).T
    out.biases[-1] = -0.5 * np.einsum("cj,cj->c", mus, mus) * scale
    return out


CHECKPOINT_VERSION = 1


def save_model(model: MlpModel, path: str | Path) -> None:
    """Versioned binary dump; round-trips bit-exactly."""
    arrays = {"version": np.array([CHECKPOINT_VERSION]), "num_layers": np.array([model.num_layers])}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_model(path: str | Path) -> MlpModel:
    with np.load(path) as data:
        version = int(data["version"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        n = int(data["num_layers"][0])
        weights = [data[f"w{i}"] for i in range(n)]
        biases = [data[f"b{i}"] for i in range(n)]
    return MlpModel(weights, biases)
