"""Adam optimization and the training protocol: stratified 70/15/15
split, shuffled minibatches of 40, validation-based model selection with
early stopping, repeated runs, and grid search.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import MtsDataset, stratified_split
from .errors import DataError
from .evaluate import accuracy
from .model import ConvAttnConfig, ConvAttnModel
from .numerics import PROB_FLOOR, SeededRng, derive_seed

_SHUFFLE_STREAM = 0x5F0E


@dataclass
class AdamState:
    """First/second moment estimates mirroring one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: np.ndarray, **kwargs) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One Adam update, in place:

        m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
        theta <- theta - lr * mhat / (sqrt(vhat) + eps)

    with the usual 1/(1-b^t) bias corrections.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("parameter/gradient/state shapes disagree")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1**state.t)
    vhat = state.v / (1.0 - state.beta2**state.t)
    params -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params


@dataclass(frozen=True)
class TrainProtocol:
    batch_size: int = 40
    max_epochs: int = 200
    patience: int = 20
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    repeats: int = 5
    seed: int = 0
    select_by: str = "accuracy"  # or "loss"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValueError("fractions must be three positive numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")
        if self.select_by not in ("accuracy", "loss"):
            raise ValueError("select_by must be 'accuracy' or 'loss'")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    selected_epoch: int
    best_val_accuracy: float
    test_accuracy: float | None
    seed: int
    split_sizes: tuple[int, int, int]
    wall_seconds: float

    def to_dict(self) -> dict:
        """JSON-ready view; wall time is intentionally left out so report
        files can isolate all timing in one place."""
        return {
            "seed": self.seed,
            "split_sizes": list(self.split_sizes),
            "selected_epoch": self.selected_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "test_accuracy": self.test_accuracy,
            "epochs": [
                {
                    "epoch": r.epoch,
                    "train_loss": r.train_loss,
                    "train_accuracy": r.train_accuracy,
                    "val_loss": r.val_loss,
                    "val_accuracy": r.val_accuracy,
                }
                for r in self.epochs
            ],
        }


def _mean_loss(model: ConvAttnModel, x: np.ndarray, y: np.ndarray) -> float:
    return model.loss_batch(x, y)


def train(dataset: MtsDataset, config: ConvAttnConfig, protocol: TrainProtocol) -> tuple[ConvAttnModel, TrainReport]:
    """One training run.

    The split and the per-epoch shuffles derive from protocol.seed; the
    parameter init derives from config.seed. The returned model carries
    the parameters of the epoch with the best validation metric
    (earliest on ties).
    """
    if (dataset.p, dataset.t_len) != (config.n_variables, config.t_len):
        raise ValueError(
            f"dataset is {dataset.p} x {dataset.t_len} but config expects "
            f"{config.n_variables} x {config.t_len}"
        )
    if dataset.class_count != config.n_classes:
        raise ValueError(f"dataset has {dataset.class_count} classes, config {config.n_classes}")

    t0 = time.perf_counter()
    tr_idx, va_idx, te_idx = stratified_split(dataset, protocol.fractions, protocol.seed)
    x_tr, y_tr = dataset.instances[tr_idx], dataset.labels[tr_idx]
    x_va, y_va = dataset.instances[va_idx], dataset.labels[va_idx]
    x_te, y_te = dataset.instances[te_idx], dataset.labels[te_idx]
    if len(set(y_tr.tolist())) < config.n_classes:
        raise DataError("some class is missing from the training split")

    model = ConvAttnModel(config)
    state = AdamState.for_params(model.params)

    records: list[EpochRecord] = []
    best_params = model.params.copy()
    best_epoch = 0
    best_acc = -np.inf
    best_loss = np.inf
    stale = 0
    for epoch in range(1, protocol.max_epochs + 1):
        order = list(range(len(tr_idx)))
        SeededRng(derive_seed(protocol.seed, _SHUFFLE_STREAM + epoch)).shuffle(order)
        for lo in range(0, len(order), protocol.batch_size):
            chunk = order[lo : lo + protocol.batch_size]  # final partial batch kept
            grads = model.backward_batch(x_tr[chunk], y_tr[chunk])
            adam_step(model.params, grads, state)

        train_loss = _mean_loss(model, x_tr, y_tr)
        train_acc = accuracy(model.predict_batch(x_tr), y_tr)
        val_loss = _mean_loss(model, x_va, y_va)
        val_acc = accuracy(model.predict_batch(x_va), y_va)
        records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))

        if protocol.select_by == "accuracy":
            improved = val_acc > best_acc
        else:
            improved = val_loss < best_loss
        if improved:
            best_acc = val_acc
            best_loss = val_loss
            best_epoch = epoch
            best_params = model.params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= protocol.patience:
                break

    model.set_params(best_params)
    test_acc = accuracy(model.predict_batch(x_te), y_te) if len(te_idx) else None
    report = TrainReport(
        epochs=records,
        selected_epoch=best_epoch,
        best_val_accuracy=records[best_epoch - 1].val_accuracy,
        test_accuracy=test_acc,
        seed=protocol.seed,
        split_sizes=(len(tr_idx), len(va_idx), len(te_idx)),
        wall_seconds=time.perf_counter() - t0,
    )
    return model, report


def train_repeats(
    dataset: MtsDataset, config: ConvAttnConfig, protocol: TrainProtocol
) -> tuple[list[tuple[ConvAttnModel, TrainReport]], dict]:
    """protocol.repeats independent runs with per-repeat seeds
    (base seed + repeat index for both split and init)."""
    runs = []
    for r in range(protocol.repeats):
        cfg = replace(config, seed=config.seed + r)
        proto = replace(protocol, seed=protocol.seed + r, repeats=1)
        runs.append(train(dataset, cfg, proto))
    accs = [rep.test_accuracy for _, rep in runs if rep.test_accuracy is not None]
    summary = {
        "test_accuracies": accs,
        "mean_test_accuracy": float(np.mean(accs)) if accs else None,
        "std_test_accuracy": float(np.std(accs)) if accs else None,
        "mean_val_accuracy": float(np.mean([rep.best_val_accuracy for _, rep in runs])),
    }
    return runs, summary


DEFAULT_GRIDS = {
    "n_filters": [8, 16, 32],
    "kernel_len": [2, 3, 5],
    "hidden_nodes": [8, 16, 32],
    "reg_alpha": [0.001, 0.01, 0.1],
}

_GRID_KEYS = ("n_filters", "kernel_len", "hidden_nodes", "reg_alpha")


def grid_search(
    dataset: MtsDataset,
    config: ConvAttnConfig,
    protocol: TrainProtocol,
    grids: dict | None = None,
) -> tuple[ConvAttnConfig, list[dict]]:
    """Exhaustive product over the hyperparameter grids, selecting the
    cell with the best mean validation accuracy (earliest on ties).

    `grids` may override any of n_filters / kernel_len / hidden_nodes /
    reg_alpha; missing keys fall back to the defaults above.
    """
    merged = dict(DEFAULT_GRIDS)
    if grids is not None:
        unknown = set(grids) - set(_GRID_KEYS)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        merged.update(grids)
    for key in _GRID_KEYS:
        if not merged[key]:
            raise ValueError(f"empty grid for {key}")

    rows: list[dict] = []
    best_row = None
    best_config = None
    for values in itertools.product(*(merged[k] for k in _GRID_KEYS)):
        cell = dict(zip(_GRID_KEYS, values))
        cfg = replace(config, **cell)
        runs, summary = train_repeats(dataset, cfg, protocol)
        val_accs = [rep.best_val_accuracy for _, rep in runs]
        row = dict(cell)
        row["mean_val_accuracy"] = float(np.mean(val_accs))
        row["std_val_accuracy"] = float(np.std(val_accs))
        row["mean_test_accuracy"] = summary["mean_test_accuracy"]
        row["std_test_accuracy"] = summary["std_test_accuracy"]
        rows.append(row)
        if best_row is None or row["mean_val_accuracy"] > best_row["mean_val_accuracy"]:
            best_row = row
            best_config = cfg
    return best_config, rows
