"""Variable and temporal attention networks plus their joint product.

Both attention networks share one functional form. Given a stack of R
row vectors X in R^{R x J} (rows = variables for one interval, or rows =
per-interval context vectors), the attention scores and the weighted
context are

    raw1   = w1 @ X + b1          (1 x J)
    raw2   = sigma1(raw1) @ w2 + b2   (1 x R)
    scores = softmax(sigma2(raw2))    (R,)
    context = scores @ X              (J,)

with w1 in R^{1 x R}, b1 in R^{1 x J}, w2 in R^{J x R}, b2 in R^{1 x R}.
Variable attention uses R = number of variables and is applied to every
interval independently with shared parameters; temporal attention uses
R = number of intervals, once per instance. All functions accept extra
leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convfeat import IntervalLayout
from .numerics import SeededRng, activation_derivative, apply_activation, softmax


@dataclass
class AttentionParams:
    """Weights of one attention network over R items with J features."""

    w1: np.ndarray  # (R,) row vector mixing the R items
    b1: np.ndarray  # (J,)
    w2: np.ndarray  # (J, R)
    b2: np.ndarray  # (R,)
    sigma1: str = "tanh"
    sigma2: str = "tanh"

    @property
    def n_items(self) -> int:
        return self.w1.size

    @property
    def n_features(self) -> int:
        return self.b1.size


def init_attention_params(
    n_items: int, n_features: int, rng: SeededRng, sigma1: str = "tanh", sigma2: str = "tanh"
) -> AttentionParams:
    """All four parameter arrays uniform in [-0.1, 0.1], drawn in the
    order w1, b1, w2, b2."""
    return AttentionParams(
        w1=rng.uniform_array((n_items,), -0.1, 0.1),
        b1=rng.uniform_array((n_features,), -0.1, 0.1),
        w2=rng.uniform_array((n_features, n_items), -0.1, 0.1),
        b2=rng.uniform_array((n_items,), -0.1, 0.1),
        sigma1=sigma1,
        sigma2=sigma2,
    )


@dataclass
class AttentionCache:
    x: np.ndarray       # (..., R, J) input stack
    raw1: np.ndarray    # (..., J)
    g1: np.ndarray      # (..., J) sigma1(raw1)
    raw2: np.ndarray    # (..., R)
    scores: np.ndarray  # (..., R)


@dataclass
class AttentionGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def attention_forward(x: np.ndarray, params: AttentionParams) -> tuple[np.ndarray, np.ndarray, AttentionCache]:
    """Scores and weighted context for a stack x of shape (..., R, J).

    Returns (scores (..., R), context (..., J), cache).
    """
    x = np.asarray(x, dtype=np.float64)
    r, j = params.n_items, params.n_features
    if x.ndim < 2 or x.shape[-2] != r or x.shape[-1] != j:
        raise ValueError(f"expected input (..., {r}, {j}), got {x.shape}")
    raw1 = np.einsum("...rj,r->...j", x, params.w1) + params.b1
    g1 = apply_activation(params.sigma1, raw1)
    raw2 = np.einsum("...j,jr->...r", g1, params.w2) + params.b2
    s = apply_activation(params.sigma2, raw2)
    scores = softmax(s, axis=-1)
    context = np.einsum("...r,...rj->...j", scores, x)
    return scores, context, AttentionCache(x=x, raw1=raw1, g1=g1, raw2=raw2, scores=scores)


def attention_backward(
    dcontext: np.ndarray, cache: AttentionCache, params: AttentionParams
) -> tuple[AttentionGrads, np.ndarray]:
    """Exact gradients through the weighted sum, softmax, both affine
    maps and both activations.

    dcontext: upstream gradient wrt the context output, shape (..., J).
    Returns (parameter gradients summed over all leading axes, gradient
    wrt the input stack x).
    """
    dcontext = np.asarray(dcontext, dtype=np.float64)
    x, a = cache.x, cache.scores
    if dcontext.shape != cache.raw1.shape:
        raise RuntimeError(f"upstream gradient shape {dcontext.shape} does not match cache {cache.raw1.shape}")
    r, j = params.n_items, params.n_features

    da = np.einsum("...rj,...j->...r", x, dcontext)
    dx = a[..., None] * dcontext[..., None, :]

    # softmax jacobian: ds = a * (da - <a, da>)
    ds = a * (da - np.sum(a * da, axis=-1, keepdims=True))
    draw2 = ds * activation_derivative(params.sigma2, cache.raw2)

    flat_draw2 = draw2.reshape(-1, r)
    flat_g1 = cache.g1.reshape(-1, j)
    db2 = flat_draw2.sum(axis=0)
    dw2 = flat_g1.T @ flat_draw2

    dg1 = np.einsum("...r,jr->...j", draw2, params.w2)
    draw1 = dg1 * activation_derivative(params.sigma1, cache.raw1)

    flat_draw1 = draw1.reshape(-1, j)
    flat_x = x.reshape(-1, r, j)
    db1 = flat_draw1.sum(axis=0)
    dw1 = np.einsum("kj,krj->r", flat_draw1, flat_x)

    dx += np.einsum("r,...j->...rj", params.w1, draw1)
    return AttentionGrads(w1=dw1, b1=db1, w2=dw2, b2=db2), dx


def variable_attention(feature_matrix: np.ndarray, params: AttentionParams) -> tuple[np.ndarray, np.ndarray]:
    """Attention over variables for one interval.

    feature_matrix: (P, J), row i = feature vector of variable i.
    Returns (scores (P,) summing to 1, context vector (J,)).
    """
    feature_matrix = np.asarray(feature_matrix, dtype=np.float64)
    if feature_matrix.ndim != 2:
        raise ValueError("feature matrix must be 2-d (variables x filters)")
    scores, context, _ = attention_forward(feature_matrix, params)
    return scores, context


def temporal_attention(context_matrix: np.ndarray, params: AttentionParams) -> tuple[np.ndarray, np.ndarray]:
    """Attention over intervals for one instance.

    context_matrix: (count, J), row t = context vector of interval t.
    Returns (scores (count,) summing to 1, summary embedding (J,)).
    """
    context_matrix = np.asarray(context_matrix, dtype=np.float64)
    if context_matrix.ndim != 2:
        raise ValueError("context matrix must be 2-d (intervals x filters)")
    scores, summary, _ = attention_forward(context_matrix, params)
    return scores, summary


def joint_attention(variable_scores: np.ndarray, temporal_scores: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Entry (i, t) = variable_scores[i, t] * temporal_scores[t].

    variable_scores: (P, count) with every column summing to 1;
    temporal_scores: (count,) summing to 1. The result sums to 1 overall.
    """
    variable_scores = np.asarray(variable_scores, dtype=np.float64)
    temporal_scores = np.asarray(temporal_scores, dtype=np.float64)
    if variable_scores.ndim != 2 or temporal_scores.ndim != 1:
        raise ValueError("expected (P, count) variable scores and (count,) temporal scores")
    if variable_scores.shape[1] != temporal_scores.size:
        raise ValueError("interval counts disagree")
    col_sums = variable_scores.sum(axis=0)
    if np.any(np.abs(col_sums - 1.0) > tol):
        raise ValueError("variable score columns must each sum to 1")
    if abs(float(temporal_scores.sum()) - 1.0) > tol:
        raise ValueError("temporal scores must sum to 1")
    return variable_scores * temporal_scores[None, :]


@dataclass
class AttentionExplanation:
    """Per-instance relevance map over (variable, interval) cells."""

    variable_scores: np.ndarray  # (P, count), column t = variable scores in interval t
    temporal_scores: np.ndarray  # (count,)
    joint: np.ndarray            # (P, count), total mass 1
    layout: IntervalLayout

    @property
    def n_variables(self) -> int:
        return self.variable_scores.shape[0]
