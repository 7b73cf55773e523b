"""Shared numeric kernels: softmax, cross-entropy, activations, a
finite-difference gradient oracle, and a portable seeded RNG.

Everything is 64-bit floating point; matrices are plain row-major numpy
float64 arrays. Gradient checks at 1e-4 relative tolerance are not
reliable in 32-bit, so no lower precision is used anywhere.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_XORSHIFT_MULT = 0x2545F4914F6CDD1D

PROB_FLOOR = 1e-12

ACTIVATIONS = ("tanh", "relu", "identity")


def splitmix64(x: int) -> int:
    """One splitmix64 output for the 64-bit input x.

    z = x + 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)          (all mod 2**64)
    """
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Deterministic sub-seed for an independent named stream."""
    return splitmix64((splitmix64(seed & MASK64) + (stream & MASK64)) & MASK64)


class SeededRng:
    """xorshift64* pseudorandom generator.

    State update per draw (64-bit wrapping arithmetic):

        x ^= x >> 12
        x ^= x << 25
        x ^= x >> 27
        output = (x * 0x2545F4914F6CDD1D) mod 2**64

    The state is seeded with splitmix64(seed), remapping the (measure
    zero) all-zero state. Equal seeds give bit-identical integer and
    uniform sequences on every platform; normal() additionally goes
    through libm log/cos/sin, so it is bit-stable per platform.

    Instances are single-owner mutable state; do not share one across
    threads.
    """

    def __init__(self, seed: int):
        state = splitmix64(seed & MASK64)
        self._state = state if state != 0 else _GOLDEN
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * _XORSHIFT_MULT) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], both ends inclusive."""
        if high < low:
            raise ValueError("empty range")
        return low + self.randbelow(high - low + 1)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Standard Box-Muller transform; the second draw of each pair
        is cached and returned by the next call."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
        else:
            u1 = self.random()
            if u1 <= 0.0:
                u1 = 2.0**-53
            u2 = self.random()
            r = math.sqrt(-2.0 * math.log(u1))
            theta = 2.0 * math.pi * u2
            z = r * math.cos(theta)
            self._spare_normal = r * math.sin(theta)
        return mu + sigma * z

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def uniform_array(self, shape: Sequence[int] | int, low: float, high: float) -> np.ndarray:
        """Array of uniform draws, filled in flat row-major order."""
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = self.uniform(low, high)
        return out.reshape(shape)

    def normal_array(self, shape: Sequence[int] | int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = self.normal(mu, sigma)
        return out.reshape(shape)


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction) along `axis`."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log probability of `label`, with the probability clamped
    below at 1e-12 before the log."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("probs must be a 1-d probability vector")
    if not 0 <= label < p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    return -math.log(max(float(p[label]), PROB_FLOOR))


def apply_activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "identity":
        return np.asarray(x, dtype=np.float64)
    raise ValueError(f"unknown activation {kind!r}")


def activation_derivative(kind: str, x: np.ndarray) -> np.ndarray:
    """Elementwise derivative at pre-activation x; relu'(0) is 0."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if kind == "relu":
        return (x > 0.0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(x)
    raise ValueError(f"unknown activation {kind!r}")


def finite_diff_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate (f(x+h*e_i) - f(x-h*e_i)) / 2h.

    Independent of any analytic backward pass; used as the gradient
    oracle throughout the test suite.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    work = x.copy()
    grad = np.zeros_like(work)
    for i in range(work.size):
        orig = work.flat[i]
        work.flat[i] = orig + h
        fp = float(f(work))
        work.flat[i] = orig - h
        fm = float(f(work))
        work.flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError("non-finite function value in finite differences")
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())
