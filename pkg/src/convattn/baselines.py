"""Reference classifiers: 1-nearest-neighbor under multivariate dynamic
time warping, and multinomial logistic regression on the flattened
series.

DTW here is the dependent multivariate form: one warping path shared by
all variables, point cost = sum over variables of the absolute (or,
optionally, squared) difference. The warping window is unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import PROB_FLOOR, SeededRng, derive_seed, softmax
from .trainer import AdamState, adam_step

_BRUTE_LIMIT = 8
_LR_INIT_STREAM = 0x11C0
_LR_SHUFFLE_STREAM = 0x11C1


@dataclass(frozen=True)
class DtwConfig:
    squared: bool = False      # squared instead of absolute point cost
    znormalize: bool = False   # per-variable z-normalization of each series


def _as_mts(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] < 1:
        raise ValueError("sequence must be (P, T) with T >= 1")
    return a


def _znorm(a: np.ndarray) -> np.ndarray:
    mean = a.mean(axis=1, keepdims=True)
    std = a.std(axis=1, keepdims=True)
    return (a - mean) / np.maximum(std, 1e-12)


def _point_costs(a: np.ndarray, b: np.ndarray, config: DtwConfig) -> np.ndarray:
    diff = a[:, :, None] - b[:, None, :]
    if config.squared:
        return (diff * diff).sum(axis=0)
    return np.abs(diff).sum(axis=0)


def _prepare_pair(a, b, config: DtwConfig) -> np.ndarray:
    a, b = _as_mts(a), _as_mts(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"variable counts differ: {a.shape[0]} vs {b.shape[0]}")
    if config.znormalize:
        a, b = _znorm(a), _znorm(b)
    return _point_costs(a, b, config)


def dtw_distance(a, b, config: DtwConfig = DtwConfig()) -> float:
    """Minimum-cost monotone alignment via the standard dynamic program
    with moves (-1, 0), (0, -1), (-1, -1)."""
    cm = _prepare_pair(a, b, config)
    t1, t2 = cm.shape
    rows = cm.tolist()
    inf = float("inf")
    prev = [0.0] + [inf] * t2
    for i in range(t1):
        cur = [inf] * (t2 + 1)
        row = rows[i]
        for j in range(t2):
            best = prev[j]
            if prev[j + 1] < best:
                best = prev[j + 1]
            if cur[j] < best:
                best = cur[j]
            cur[j + 1] = row[j] + best
        prev = cur
    return prev[t2]


def dtw_bruteforce(a, b, config: DtwConfig = DtwConfig()) -> float:
    """Exhaustive enumeration of every monotone warping path (no
    memoization); the independent oracle for dtw_distance. Sequence
    lengths are capped at 8."""
    cm = _prepare_pair(a, b, config)
    t1, t2 = cm.shape
    if t1 > _BRUTE_LIMIT or t2 > _BRUTE_LIMIT:
        raise ValueError(f"brute-force DTW is limited to length <= {_BRUTE_LIMIT}")
    best = [float("inf")]

    def walk(i: int, j: int, acc: float) -> None:
        acc = acc + cm[i, j]
        if i == t1 - 1 and j == t2 - 1:
            if acc < best[0]:
                best[0] = acc
            return
        if i + 1 < t1:
            walk(i + 1, j, acc)
        if j + 1 < t2:
            walk(i, j + 1, acc)
        if i + 1 < t1 and j + 1 < t2:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


def knn_dtw_classify(train_x, train_y, query, k: int = 1, config: DtwConfig = DtwConfig()) -> int:
    """Label of the nearest training sequence(s) under DTW distance.

    Distance ties resolve to the lower training index; for k > 1 the
    majority vote breaks ties toward the smallest class label.
    """
    train_y = np.asarray(train_y, dtype=np.int64)
    n = len(train_x)
    if n == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    distances = [dtw_distance(train_x[i], query, config) for i in range(n)]
    if k == 1:
        return int(train_y[int(np.argmin(distances))])
    order = sorted(range(n), key=lambda i: (distances[i], i))[:k]
    votes = np.bincount(train_y[order], minlength=int(train_y.max()) + 1)
    return int(votes.argmax())


def knn_dtw_predict(train_x, train_y, test_x, k: int = 1, config: DtwConfig = DtwConfig()) -> np.ndarray:
    return np.asarray(
        [knn_dtw_classify(train_x, train_y, q, k, config) for q in test_x], dtype=np.int64
    )


# -- logistic regression -------------------------------------------------------


@dataclass(frozen=True)
class LrConfig:
    learning_rate: float = 0.001
    batch_size: int = 40
    max_epochs: int = 200
    patience: int = 20
    reg_lambda: float = 0.0  # L2 on the weight matrix (not the bias)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")


@dataclass
class LrModel:
    """Multinomial logistic regression on the concatenated variables."""

    weights: np.ndarray  # (C, P*T)
    bias: np.ndarray     # (C,)
    input_shape: tuple[int, int]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]


def _flatten(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != shape:
        raise ValueError(f"expected instances of shape {shape}, got {x.shape[1:]}")
    return x.reshape(x.shape[0], -1)


def lr_loss(model: LrModel, x: np.ndarray, y: np.ndarray, reg_lambda: float = 0.0) -> float:
    flat = _flatten(x, model.input_shape)
    y = np.asarray(y, dtype=np.int64)
    probs = softmax(flat @ model.weights.T + model.bias, axis=-1)
    picked = np.maximum(probs[np.arange(y.size), y], PROB_FLOOR)
    loss = float(-np.log(picked).mean())
    return loss + reg_lambda * float((model.weights * model.weights).sum())


def lr_gradient(model: LrModel, x: np.ndarray, y: np.ndarray, reg_lambda: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    flat = _flatten(x, model.input_shape)
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    probs = softmax(flat @ model.weights.T + model.bias, axis=-1)
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw = dlogits.T @ flat + 2.0 * reg_lambda * model.weights
    db = dlogits.sum(axis=0)
    return dw, db


def lr_train(
    train_x: np.ndarray,
    train_y: np.ndarray,
    n_classes: int,
    config: LrConfig = LrConfig(),
    val_x: np.ndarray | None = None,
    val_y: np.ndarray | None = None,
) -> tuple[LrModel, dict]:
    """Adam on cross-entropy (+ optional L2) over shuffled minibatches.

    Weights start at zero (the objective is convex). With a validation
    set the parameters of the best-validation-accuracy epoch are kept
    (earliest on ties) and training stops early after `patience` epochs
    without improvement.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    if train_x.ndim != 3:
        raise ValueError("training instances must be (N, P, T)")
    shape = train_x.shape[1:]
    train_y = np.asarray(train_y, dtype=np.int64)
    model = LrModel(
        weights=np.zeros((n_classes, int(np.prod(shape)))), bias=np.zeros(n_classes), input_shape=shape
    )
    flat_dim = model.weights.size + model.bias.size
    params = np.zeros(flat_dim)
    state = AdamState.for_params(params, lr=config.learning_rate)

    def unpack(vec: np.ndarray) -> None:
        model.weights[...] = vec[: model.weights.size].reshape(model.weights.shape)
        model.bias[...] = vec[model.weights.size :]

    n = train_y.size
    best = {"val_accuracy": -np.inf, "epoch": 0, "params": params.copy()}
    history = []
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = list(range(n))
        SeededRng(derive_seed(config.seed, _LR_SHUFFLE_STREAM + epoch)).shuffle(order)
        for lo in range(0, n, config.batch_size):
            chunk = order[lo : lo + config.batch_size]
            unpack(params)
            dw, db = lr_gradient(model, train_x[chunk], train_y[chunk], config.reg_lambda)
            grads = np.concatenate([dw.ravel(), db])
            adam_step(params, grads, state)
        unpack(params)
        record = {"epoch": epoch, "train_loss": lr_loss(model, train_x, train_y, config.reg_lambda)}
        if val_x is not None:
            val_acc = 100.0 * float((lr_predict_batch(model, val_x) == val_y).mean())
            record["val_accuracy"] = val_acc
            if val_acc > best["val_accuracy"]:
                best = {"val_accuracy": val_acc, "epoch": epoch, "params": params.copy()}
                stale = 0
            else:
                stale += 1
        history.append(record)
        if val_x is not None and stale >= config.patience:
            break
    if val_x is not None:
        params = best["params"]
    unpack(params)
    info = {"epochs": history, "selected_epoch": best["epoch"] if val_x is not None else len(history)}
    return model, info


def lr_predict_batch(model: LrModel, x: np.ndarray) -> np.ndarray:
    flat = _flatten(x, model.input_shape)
    logits = flat @ model.weights.T + model.bias
    return logits.argmax(axis=-1)


def lr_predict(model: LrModel, x: np.ndarray) -> int:
    """Argmax class (lowest index on ties)."""
    return int(lr_predict_batch(model, np.asarray(x)[None])[0])
