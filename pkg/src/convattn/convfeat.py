"""Per-variable 1-d convolution over sliding time intervals.

Each variable gets its own kernel bank; a kernel of length L slides over
the T time points with stride s, producing one J-dimensional feature
vector per interval. Trailing points that do not fill a complete window
are discarded, so the interval count is floor((T - L) / s) + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng, activation_derivative, apply_activation


def interval_count(t_len: int, kernel_len: int, stride: int) -> int:
    """Number of full kernel windows over a length-t_len axis."""
    if kernel_len < 1 or stride < 1:
        raise ValueError("kernel length and stride must be >= 1")
    if stride > kernel_len:
        raise ValueError(f"stride {stride} larger than kernel length {kernel_len}")
    if t_len < kernel_len:
        raise ValueError(f"series length {t_len} shorter than kernel length {kernel_len}")
    return (t_len - kernel_len) // stride + 1


def stride_from_kernel(kernel_len: int) -> int:
    """Stride at half the kernel length, floored, clamped to >= 1."""
    if kernel_len < 1:
        raise ValueError("kernel length must be >= 1")
    return max(1, kernel_len // 2)


@dataclass(frozen=True)
class IntervalLayout:
    """Window geometry shared by features, attention, and explanations."""

    t_len: int
    kernel_len: int
    stride: int

    def __post_init__(self):
        interval_count(self.t_len, self.kernel_len, self.stride)

    @property
    def count(self) -> int:
        return interval_count(self.t_len, self.kernel_len, self.stride)

    @property
    def starts(self) -> np.ndarray:
        return np.arange(self.count, dtype=np.int64) * self.stride

    def window_spans(self) -> list[tuple[int, int]]:
        """[start, end) time span of every interval."""
        return [(int(s), int(s) + self.kernel_len) for s in self.starts]


@dataclass(frozen=True)
class ConvSpec:
    kernel_len: int
    stride: int
    filters: int
    activation: str = "relu"

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("filters must be >= 1")
        if self.stride < 1 or self.stride > self.kernel_len:
            raise ValueError("need 1 <= stride <= kernel_len")


def window_indices(layout: IntervalLayout) -> np.ndarray:
    """(count, kernel_len) gather indices into the time axis."""
    return layout.starts[:, None] + np.arange(layout.kernel_len)


def init_conv_params(n_variables: int, filters: int, kernel_len: int, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    """Kernels uniform in [-1/sqrt(L), 1/sqrt(L)], biases zero."""
    bound = 1.0 / np.sqrt(kernel_len)
    kernels = rng.uniform_array((n_variables, filters, kernel_len), -bound, bound)
    biases = np.zeros((n_variables, filters), dtype=np.float64)
    return kernels, biases


@dataclass
class ConvCache:
    windows: np.ndarray  # (count, L)
    pre: np.ndarray      # (count, J) pre-activation values
    activation: str


def conv_forward(
    x: np.ndarray,
    kernels: np.ndarray,
    bias: np.ndarray | None,
    layout: IntervalLayout,
    activation: str = "relu",
) -> tuple[np.ndarray, ConvCache]:
    """Features for one variable: row t = act(kernels @ window_t + bias).

    x: (t_len,) series, kernels: (J, L), bias: (J,) or None.
    Returns ((count, J) features, cache for the backward pass).
    """
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 1 or x.size != layout.t_len:
        raise ValueError(f"expected series of length {layout.t_len}, got shape {x.shape}")
    if kernels.ndim != 2 or kernels.shape[1] != layout.kernel_len:
        raise ValueError(f"kernels must be (J, {layout.kernel_len}), got {kernels.shape}")
    windows = x[window_indices(layout)]
    pre = windows @ kernels.T
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (kernels.shape[0],):
            raise ValueError(f"bias must be ({kernels.shape[0]},), got {bias.shape}")
        pre = pre + bias
    features = apply_activation(activation, pre)
    return features, ConvCache(windows=windows, pre=pre, activation=activation)


def conv_backward(grad_features: np.ndarray, cache: ConvCache) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the conv + activation composition for one variable.

    Returns (d kernels (J, L), d bias (J,)). Input gradients are not
    needed anywhere (the conv is the first layer) and are not computed.
    """
    grad_features = np.asarray(grad_features, dtype=np.float64)
    if grad_features.shape != cache.pre.shape:
        raise RuntimeError(
            f"upstream gradient shape {grad_features.shape} does not match cache {cache.pre.shape}"
        )
    dpre = grad_features * activation_derivative(cache.activation, cache.pre)
    dkernels = dpre.T @ cache.windows
    dbias = dpre.sum(axis=0)
    return dkernels, dbias
