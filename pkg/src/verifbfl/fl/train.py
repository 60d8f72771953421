"""Local training of the MLP in floating point, then re-quantization."""
from __future__ import annotations

import numpy as np

from verifbfl.circuits.fixedpoint import FixedPointConfig
from verifbfl.errors import EmptyDataset, EmptyEvalSet, ShapeError
from verifbfl.fl.dataset import Dataset
from verifbfl.fl.model import QuantizedModel, predict


def init_model(dims, seed: int = 0, cfg: FixedPointConfig | None = None, scale: float = 0.5,
               owner: str = "") -> QuantizedModel:
    rng = np.random.default_rng([seed, 0x1A])
    layers = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        W = rng.normal(scale=scale / np.sqrt(n_in), size=(n_out, n_in))
        layers.append((W, np.zeros(n_out)))
    return QuantizedModel.from_float(dims, layers, cfg, owner=owner)


def _forward(layers, X):
    acts = [X]
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W.T + b
        h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def _loss_and_grads(layers, X, Y):
    acts = _forward(layers, X)
    logits = acts[-1]
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    n = len(X)
    loss = -np.log(probs[np.arange(n), Y] + 1e-12).mean()
    delta = probs
    delta[np.arange(n), Y] -= 1.0
    delta /= n
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i:
            delta = (delta @ W) * (acts[i] > 0)
    return loss, grads


def training_loss(model: QuantizedModel, data: Dataset) -> float:
    return float(_loss_and_grads(model.float_layers(), data.features, data.labels)[0])


def local_train(global_model: QuantizedModel, data: Dataset, epochs: int = 5, lr: float = 0.1,
                seed: int = 0, batch_size: int = 32, owner: str | None = None,
                history: list | None = None) -> QuantizedModel:
    """Mini-batch SGD on softmax cross-entropy; deterministic given ``seed``.

    When ``history`` is a list, the full-data loss after each epoch is
    appended to it.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if data.num_features != global_model.dims[0] or data.num_classes != global_model.dims[-1]:
        raise ShapeError("dataset does not match the model architecture")
    layers = [(W.copy(), b.copy()) for W, b in global_model.float_layers()]
    rng = np.random.default_rng([seed, 0x7A])
    X, Y = data.features, data.labels
    limit = 2.0 ** (global_model.cfg.value_bits - global_model.cfg.scale_bits - 2)
    for _ in range(epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            idx = order[start : start + batch_size]
            _, grads = _loss_and_grads(layers, X[idx], Y[idx])
            layers = [
                (np.clip(W - lr * gW, -limit, limit), np.clip(b - lr * gb, -limit, limit))
                for (W, b), (gW, gb) in zip(layers, grads)
            ]
        if history is not None:
            history.append(float(_loss_and_grads(layers, X, Y)[0]))
    if lr == 0:
        return global_model.with_meta(owner=owner)
    return QuantizedModel.from_float(global_model.dims, layers, global_model.cfg,
                                     round=global_model.round,
                                     owner=global_model.owner if owner is None else owner)


def evaluate_accuracy(model: QuantizedModel, eval_set) -> tuple:
    """(correct, n) under the fixed-point forward pass.

    ``eval_set`` is a Dataset or a list of quantized (features, label) pairs.
    """
    if isinstance(eval_set, Dataset):
        samples = eval_set.quantized(model.cfg) if len(eval_set) else []
    else:
        samples = list(eval_set)
    if not samples:
        raise EmptyEvalSet("evaluation set is empty")
    correct = sum(int(predict(model, x) == y) for x, y in samples)
    return correct, len(samples)


def train_accuracy(model: QuantizedModel, data: Dataset) -> float:
    layers = model.float_layers()
    pred = _forward(layers, data.features)[-1].argmax(axis=1)
    return float((pred == data.labels).mean())
