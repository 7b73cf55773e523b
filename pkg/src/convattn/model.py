"""The full classifier: per-variable conv features, dual attention, and
a small feed-forward head, with hand-derived analytic gradients.

Forward pass for one instance X in R^{P x T}:

    C_t  in R^{P x J}   conv features of interval t (per-variable kernels)
    a_t, h_t            variable attention scores / context per interval
    b, z                temporal attention scores / summary embedding
    logits = W2 tanh(W1 z + c1) + c2,   probabilities = softmax(logits)

Loss over a batch is mean cross-entropy plus reg_alpha times the squared
Frobenius norm of the trained parameters. Ablation modes replace either
attention (or both) by unweighted averaging; the unused attention
parameters stay in the parameter vector but receive no gradient and are
excluded from the regularizer.

All parameters live in one flat float64 vector so the optimizer, the
finite-difference oracle, and serialization share a single layout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .attention import (
    AttentionCache,
    AttentionExplanation,
    AttentionParams,
    attention_backward,
    attention_forward,
    joint_attention,
)
from .convfeat import IntervalLayout, interval_count, stride_from_kernel, window_indices
from .errors import FormatError, UnsupportedOperationError
from .numerics import (
    ACTIVATIONS,
    PROB_FLOOR,
    SeededRng,
    activation_derivative,
    apply_activation,
    derive_seed,
    softmax,
)

ABLATIONS = ("full", "no_var_attention", "no_temporal_attention", "no_attention")

CHECKPOINT_FORMAT = "convattn-checkpoint"
CHECKPOINT_VERSION = 1

_INIT_STREAM = 0x1A17


@dataclass(frozen=True)
class ConvAttnConfig:
    """Everything needed to rebuild the parameter layout."""

    n_variables: int
    t_len: int
    n_classes: int
    kernel_len: int = 5
    n_filters: int = 8
    hidden_nodes: int = 8
    reg_alpha: float = 0.01
    conv_activation: str = "relu"
    sigma1: str = "tanh"
    sigma2: str = "tanh"
    ablation: str = "full"
    seed: int = 0
    conv_bias: bool = True
    regularize_conv: bool = True
    regularize_biases: bool = True

    def __post_init__(self):
        if self.n_variables < 1 or self.t_len < 1:
            raise ValueError("need at least one variable and one time point")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if not 1 <= self.kernel_len <= self.t_len:
            raise ValueError(f"kernel length must be in [1, {self.t_len}]")
        if self.n_filters < 1 or self.hidden_nodes < 1:
            raise ValueError("filters and hidden nodes must be >= 1")
        if self.reg_alpha < 0:
            raise ValueError("reg_alpha must be nonnegative")
        for kind in (self.conv_activation, self.sigma1, self.sigma2):
            if kind not in ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")

    @property
    def stride(self) -> int:
        return stride_from_kernel(self.kernel_len)

    @property
    def n_intervals(self) -> int:
        return interval_count(self.t_len, self.kernel_len, self.stride)

    @property
    def layout(self) -> IntervalLayout:
        return IntervalLayout(self.t_len, self.kernel_len, self.stride)

    @property
    def uses_var_attention(self) -> bool:
        return self.ablation in ("full", "no_temporal_attention")

    @property
    def uses_temporal_attention(self) -> bool:
        return self.ablation in ("full", "no_var_attention")


class ParamLayout:
    """Named slices into one flat parameter vector."""

    def __init__(self, entries: list[tuple[str, tuple[int, ...]]]):
        self.entries = entries
        self.slices: dict[str, slice] = {}
        self.shapes: dict[str, tuple[int, ...]] = {}
        offset = 0
        for name, shape in entries:
            size = int(np.prod(shape))
            self.slices[name] = slice(offset, offset + size)
            self.shapes[name] = shape
            offset += size
        self.total = offset

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def view(self, flat: np.ndarray, name: str) -> np.ndarray:
        return flat[self.slices[name]].reshape(self.shapes[name])


def param_layout(config: ConvAttnConfig) -> ParamLayout:
    p, j, l = config.n_variables, config.n_filters, config.n_intervals
    h, c, k = config.hidden_nodes, config.n_classes, config.kernel_len
    entries = [("conv_kernels", (p, j, k))]
    if config.conv_bias:
        entries.append(("conv_biases", (p, j)))
    entries += [
        ("va_w1", (p,)),
        ("va_b1", (j,)),
        ("va_w2", (j, p)),
        ("va_b2", (p,)),
        ("ta_w1", (l,)),
        ("ta_b1", (j,)),
        ("ta_w2", (j, l)),
        ("ta_b2", (l,)),
        ("head_w1", (h, j)),
        ("head_b1", (h,)),
        ("head_w2", (c, h)),
        ("head_b2", (c,)),
    ]
    return ParamLayout(entries)


@dataclass
class ForwardTrace:
    """Cached intermediates of one forward pass (batch axis first).

    Attention score fields are None for ablated variants.
    """

    x_windows: np.ndarray          # (N, P, count, L)
    conv_pre: np.ndarray           # (N, P, count, J)
    features: np.ndarray           # (N, count, P, J)
    var_scores: np.ndarray | None  # (N, count, P)
    var_cache: AttentionCache | None
    context: np.ndarray            # (N, count, J)
    temporal_scores: np.ndarray | None  # (N, count)
    temp_cache: AttentionCache | None
    summary: np.ndarray            # (N, J)
    head_pre: np.ndarray           # (N, hidden)
    hidden: np.ndarray             # (N, hidden)
    logits: np.ndarray             # (N, C)
    probs: np.ndarray              # (N, C)


class ConvAttnModel:
    """Trainable classifier; parameters live in `params` (flat float64)."""

    def __init__(self, config: ConvAttnConfig, params: np.ndarray | None = None):
        self.config = config
        self.layout = param_layout(config)
        self.interval_layout = config.layout
        if params is None:
            params = _init_params(config, self.layout)
        else:
            params = np.ascontiguousarray(params, dtype=np.float64)
            if params.shape != (self.layout.total,):
                raise ValueError(
                    f"parameter vector must have length {self.layout.total}, got {params.shape}"
                )
        self.params = params

    # -- parameter views ------------------------------------------------

    def view(self, name: str) -> np.ndarray:
        return self.layout.view(self.params, name)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise ValueError("parameter vector length mismatch")
        self.params[:] = flat

    @property
    def n_params(self) -> int:
        return self.layout.total

    def _var_params(self) -> AttentionParams:
        c = self.config
        return AttentionParams(
            w1=self.view("va_w1"), b1=self.view("va_b1"),
            w2=self.view("va_w2"), b2=self.view("va_b2"),
            sigma1=c.sigma1, sigma2=c.sigma2,
        )

    def _temp_params(self) -> AttentionParams:
        c = self.config
        return AttentionParams(
            w1=self.view("ta_w1"), b1=self.view("ta_b1"),
            w2=self.view("ta_w2"), b2=self.view("ta_b2"),
            sigma1=c.sigma1, sigma2=c.sigma2,
        )

    def _regularized_names(self) -> list[str]:
        c = self.config
        names: list[str] = []
        if c.regularize_conv:
            names.append("conv_kernels")
            if c.conv_bias and c.regularize_biases:
                names.append("conv_biases")
        if c.uses_var_attention:
            names += ["va_w1", "va_w2"]
            if c.regularize_biases:
                names += ["va_b1", "va_b2"]
        if c.uses_temporal_attention:
            names += ["ta_w1", "ta_w2"]
            if c.regularize_biases:
                names += ["ta_b1", "ta_b2"]
        names += ["head_w1", "head_w2"]
        if c.regularize_biases:
            names += ["head_b1", "head_b2"]
        return names

    # -- forward ---------------------------------------------------------

    def forward_batch(self, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        """Class probabilities and trace for a batch x of shape (N, P, T)."""
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != c.n_variables or x.shape[2] != c.t_len:
            raise ValueError(
                f"expected batch of shape (N, {c.n_variables}, {c.t_len}), got {x.shape}"
            )
        if not np.isfinite(x).all():
            raise ValueError("input contains non-finite values")

        idx = window_indices(self.interval_layout)
        xw = x[:, :, idx]                                        # (N, P, count, L)
        pre = np.einsum("npml,pjl->npmj", xw, self.view("conv_kernels"))
        if c.conv_bias:
            pre = pre + self.view("conv_biases")[None, :, None, :]
        feats = apply_activation(c.conv_activation, pre)
        stacks = feats.transpose(0, 2, 1, 3)                     # (N, count, P, J)

        if c.uses_var_attention:
            var_scores, context, var_cache = attention_forward(stacks, self._var_params())
        else:
            var_scores, var_cache = None, None
            context = stacks.mean(axis=2)

        if c.uses_temporal_attention:
            temp_scores, summary, temp_cache = attention_forward(context, self._temp_params())
        else:
            temp_scores, temp_cache = None, None
            summary = context.mean(axis=1)

        head_pre = summary @ self.view("head_w1").T + self.view("head_b1")
        hidden = np.tanh(head_pre)
        logits = hidden @ self.view("head_w2").T + self.view("head_b2")
        probs = softmax(logits, axis=-1)

        trace = ForwardTrace(
            x_windows=xw, conv_pre=pre, features=stacks,
            var_scores=var_scores, var_cache=var_cache, context=context,
            temporal_scores=temp_scores, temp_cache=temp_cache, summary=summary,
            head_pre=head_pre, hidden=hidden, logits=logits, probs=probs,
        )
        return probs, trace

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        """Single instance (P, T); returns ((C,) probabilities, trace).

        The trace keeps its batch axis (of size 1).
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("instance must be a (P, T) matrix")
        probs, trace = self.forward_batch(x[None])
        return probs[0], trace

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        probs, _ = self.forward_batch(x)
        return probs.argmax(axis=-1)  # argmax takes the lowest index on ties

    def predict(self, x: np.ndarray) -> int:
        probs, _ = self.forward(np.asarray(x))
        return int(probs.argmax())

    # -- loss and gradients -----------------------------------------------

    def regularization(self) -> float:
        total = 0.0
        for name in self._regularized_names():
            v = self.view(name)
            total += float((v * v).sum())
        return self.config.reg_alpha * total

    def loss_batch(self, x: np.ndarray, y: np.ndarray) -> float:
        """Mean clamped cross-entropy plus the Frobenius penalty."""
        y = _check_labels(y, self.config.n_classes)
        if y.size == 0:
            raise ValueError("empty batch")
        probs, _ = self.forward_batch(x)
        picked = np.maximum(probs[np.arange(y.size), y], PROB_FLOOR)
        return float(-np.log(picked).mean()) + self.regularization()

    def backward_batch(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of loss_batch wrt the flat parameter vector.

        Derived through the fused softmax + cross-entropy form, which
        equals the gradient of the clamped loss whenever no probability
        hits the 1e-12 floor.
        """
        c = self.config
        y = _check_labels(y, c.n_classes)
        if y.size == 0:
            raise ValueError("empty batch")
        n = y.size
        probs, tr = self.forward_batch(x)

        grads = np.zeros_like(self.params)
        g = {name: self.layout.view(grads, name) for name in self.layout.names}

        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n

        g["head_w2"] += dlogits.T @ tr.hidden
        g["head_b2"] += dlogits.sum(axis=0)
        dhidden = dlogits @ self.view("head_w2")
        dhead_pre = dhidden * (1.0 - tr.hidden * tr.hidden)
        g["head_w1"] += dhead_pre.T @ tr.summary
        g["head_b1"] += dhead_pre.sum(axis=0)
        dsummary = dhead_pre @ self.view("head_w1")              # (N, J)

        count = c.n_intervals
        if c.uses_temporal_attention:
            tgrads, dcontext = attention_backward(dsummary, tr.temp_cache, self._temp_params())
            g["ta_w1"] += tgrads.w1
            g["ta_b1"] += tgrads.b1
            g["ta_w2"] += tgrads.w2
            g["ta_b2"] += tgrads.b2
        else:
            dcontext = np.broadcast_to(dsummary[:, None, :] / count, tr.context.shape).copy()

        if c.uses_var_attention:
            vgrads, dstacks = attention_backward(dcontext, tr.var_cache, self._var_params())
            g["va_w1"] += vgrads.w1
            g["va_b1"] += vgrads.b1
            g["va_w2"] += vgrads.w2
            g["va_b2"] += vgrads.b2
        else:
            p = c.n_variables
            dstacks = np.broadcast_to(dcontext[:, :, None, :] / p, tr.features.shape).copy()

        dfeats = dstacks.transpose(0, 2, 1, 3)                   # (N, P, count, J)
        dpre = dfeats * activation_derivative(c.conv_activation, tr.conv_pre)
        g["conv_kernels"] += np.einsum("npmj,npml->pjl", dpre, tr.x_windows)
        if c.conv_bias:
            g["conv_biases"] += dpre.sum(axis=(0, 2))

        for name in self._regularized_names():
            g[name] += 2.0 * c.reg_alpha * self.view(name)
        return grads

    # -- explanation -------------------------------------------------------

    def explain(self, x: np.ndarray) -> AttentionExplanation:
        """Joint (variable x interval) attention map for one instance."""
        if self.config.ablation != "full":
            raise UnsupportedOperationError(
                f"explanations need both attention modules; model is ablated ({self.config.ablation})"
            )
        _, trace = self.forward(np.asarray(x))
        variable_scores = trace.var_scores[0].T.copy()           # (P, count)
        temporal_scores = trace.temporal_scores[0].copy()        # (count,)
        joint = joint_attention(variable_scores, temporal_scores)
        return AttentionExplanation(
            variable_scores=variable_scores,
            temporal_scores=temporal_scores,
            joint=joint,
            layout=self.interval_layout,
        )


def _check_labels(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be 1-d")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y


def _init_params(config: ConvAttnConfig, layout: ParamLayout) -> np.ndarray:
    """Seeded init, filled in layout order.

    Conv kernels uniform +-1/sqrt(L) with zero biases; attention arrays
    uniform +-0.1; head weights uniform +-1/sqrt(fan_in) with zero
    biases. Zero-initialised groups consume no draws.
    """
    c = config
    rng = SeededRng(derive_seed(c.seed, _INIT_STREAM))
    flat = np.zeros(layout.total, dtype=np.float64)

    def fill(name: str, bound: float) -> None:
        view = layout.view(flat, name)
        view[...] = rng.uniform_array(view.shape, -bound, bound)

    fill("conv_kernels", 1.0 / np.sqrt(c.kernel_len))
    for name in ("va_w1", "va_b1", "va_w2", "va_b2", "ta_w1", "ta_b1", "ta_w2", "ta_b2"):
        fill(name, 0.1)
    fill("head_w1", 1.0 / np.sqrt(c.n_filters))
    fill("head_w2", 1.0 / np.sqrt(c.hidden_nodes))
    return flat


# -- serialization ----------------------------------------------------------


def serialize(model: ConvAttnModel) -> bytes:
    """Versioned JSON checkpoint; round-trips parameters bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "params": model.params.tolist(),
    }
    return (json.dumps(doc, sort_keys=True) + "\n").encode("utf-8")


def deserialize(data: bytes) -> ConvAttnModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError("not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {doc.get('version')!r}")
    cfg_doc = doc.get("config")
    if not isinstance(cfg_doc, dict):
        raise FormatError("checkpoint missing config object")
    known = {f.name for f in fields(ConvAttnConfig)}
    unknown = set(cfg_doc) - known
    if unknown:
        raise FormatError(f"unknown config fields: {sorted(unknown)}")
    missing = known - set(cfg_doc)
    if missing:
        raise FormatError(f"missing config fields: {sorted(missing)}")
    try:
        config = ConvAttnConfig(**cfg_doc)
    except ValueError as exc:
        raise FormatError(f"invalid config: {exc}") from exc
    raw = doc.get("params")
    if raw is None:
        return ConvAttnModel(config)  # config-only checkpoint: fresh seeded init
    params = np.asarray(raw, dtype=np.float64)
    expected = param_layout(config).total
    if params.ndim != 1 or params.size != expected:
        raise FormatError(f"expected {expected} parameters, got {params.size}")
    if not np.isfinite(params).all():
        raise FormatError("checkpoint parameters contain non-finite values")
    return ConvAttnModel(config, params)


def save_model(model: ConvAttnModel, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path: str) -> ConvAttnModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def config_for_dataset(dataset, **overrides) -> ConvAttnConfig:
    """Config with shape fields taken from a dataset."""
    return ConvAttnConfig(
        n_variables=dataset.p, t_len=dataset.t_len, n_classes=dataset.class_count, **overrides
    )
