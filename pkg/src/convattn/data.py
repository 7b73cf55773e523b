"""Dataset container, text file format, stratified splitting, and the
synthetic square-wave benchmark generator.

File format (UTF-8, LF newlines). Line 1 is a JSON header
`{"n":..., "p":..., "t":..., "classes":..., "var_names":[...]}`. Each
instance follows as one label line `label <int>`, optionally extended
with ` mask <var_csv>:<span_csv>` (spans are `start-end`, end
exclusive), and then P lines of T comma-separated decimal floats
written with 17 significant digits so values round-trip exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError
from .numerics import SeededRng, derive_seed

_SPLIT_STREAM = 0x57A7
_SYNTH_T = 50


@dataclass(frozen=True)
class GroundTruthMask:
    """Relevant (variable, time span) region of one instance."""

    variables: tuple[int, ...]
    spans: tuple[tuple[int, int], ...]  # [start, end) in time points

    def __post_init__(self):
        if not self.variables or not self.spans:
            raise ValueError("mask needs at least one variable and one span")
        for s, e in self.spans:
            if s < 0 or e <= s:
                raise ValueError(f"bad span [{s}, {e})")


@dataclass
class MtsDataset:
    """N instances of P synchronized series over T time points."""

    instances: np.ndarray          # (N, P, T) float64
    labels: np.ndarray             # (N,) int
    class_count: int
    var_names: list[str]
    masks: list[GroundTruthMask | None] | None = None

    def __post_init__(self):
        self.instances = np.ascontiguousarray(self.instances, dtype=np.float64)
        if self.instances.ndim != 3:
            raise ValueError("instances must be (N, P, T)")
        if not np.isfinite(self.instances).all():
            raise ValueError("instances contain non-finite values")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.n,):
            raise ValueError("labels must be one per instance")
        if self.class_count < 1:
            raise ValueError("class_count must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if len(self.var_names) != self.p:
            raise ValueError("need one name per variable")
        if self.masks is not None:
            if len(self.masks) != self.n:
                raise ValueError("need one mask slot per instance")
            for m in self.masks:
                if m is None:
                    continue
                if max(m.variables) >= self.p or min(m.variables) < 0:
                    raise ValueError("mask variable out of range")
                for s, e in m.spans:
                    if e > self.t_len:
                        raise ValueError(f"mask span [{s}, {e}) exceeds series length {self.t_len}")

    @property
    def n(self) -> int:
        return self.instances.shape[0]

    @property
    def p(self) -> int:
        return self.instances.shape[1]

    @property
    def t_len(self) -> int:
        return self.instances.shape[2]

    def subset(self, indices) -> "MtsDataset":
        idx = list(indices)
        return MtsDataset(
            instances=self.instances[idx].copy(),
            labels=self.labels[idx].copy(),
            class_count=self.class_count,
            var_names=list(self.var_names),
            masks=None if self.masks is None else [self.masks[i] for i in idx],
        )


@dataclass(frozen=True)
class SynthParams:
    """Square-wave benchmark knobs; the wave parameters themselves are
    drawn uniformly at random per positive instance."""

    n: int = 1000
    noise_sigma: float = 0.1
    len_min: int = 5
    len_max: int = 15
    mag_min: float = 1.0
    mag_max: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two instances")
        if not 1 <= self.len_min <= self.len_max <= _SYNTH_T:
            raise ValueError(f"need 1 <= len_min <= len_max <= {_SYNTH_T}")
        if self.mag_min <= 0 or self.mag_max < self.mag_min:
            raise ValueError("need 0 < mag_min <= mag_max")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def generate_synthetic(params: SynthParams) -> MtsDataset:
    """Three base series cos(2*pi*t), sin(2*pi*t), exp(t) on 50 equally
    spaced points in [0, 1] plus i.i.d. Gaussian noise. Exactly n//2
    seeded-random instances get a square wave (uniform start so it fits,
    integer length in [len_min, len_max], magnitude in [mag_min,
    mag_max]) added to variable 1 and are labelled 1; the mask records
    that variable and span.

    Draw order (one rng): per instance the 3 x 50 noise values (variable
    major), then the positive-index shuffle, then per positive instance
    length, start, magnitude.
    """
    rng = SeededRng(params.seed)
    t = np.linspace(0.0, 1.0, _SYNTH_T)
    base = np.stack([np.cos(2.0 * np.pi * t), np.sin(2.0 * np.pi * t), np.exp(t)])

    x = np.empty((params.n, 3, _SYNTH_T), dtype=np.float64)
    for i in range(params.n):
        noise = rng.normal_array((3, _SYNTH_T), 0.0, 1.0)
        x[i] = base + params.noise_sigma * noise

    order = list(range(params.n))
    rng.shuffle(order)
    positives = sorted(order[: params.n // 2])

    labels = np.zeros(params.n, dtype=np.int64)
    masks: list[GroundTruthMask | None] = [None] * params.n
    for i in positives:
        length = rng.randint(params.len_min, params.len_max)
        start = rng.randbelow(_SYNTH_T - length + 1)
        magnitude = rng.uniform(params.mag_min, params.mag_max)
        x[i, 0, start : start + length] += magnitude
        labels[i] = 1
        masks[i] = GroundTruthMask(variables=(0,), spans=((start, start + length),))

    return MtsDataset(
        instances=x,
        labels=labels,
        class_count=2,
        var_names=["var_1", "var_2", "var_3"],
        masks=masks,
    )


# -- text format --------------------------------------------------------------


def _format_mask(mask: GroundTruthMask) -> str:
    vars_csv = ",".join(str(v) for v in mask.variables)
    spans_csv = ",".join(f"{s}-{e}" for s, e in mask.spans)
    return f"{vars_csv}:{spans_csv}"


def save_dataset(dataset: MtsDataset, path: str) -> None:
    header = {
        "n": dataset.n,
        "p": dataset.p,
        "t": dataset.t_len,
        "classes": dataset.class_count,
        "var_names": list(dataset.var_names),
    }
    lines = [json.dumps(header)]
    for i in range(dataset.n):
        label_line = f"label {int(dataset.labels[i])}"
        mask = dataset.masks[i] if dataset.masks is not None else None
        if mask is not None:
            label_line += f" mask {_format_mask(mask)}"
        lines.append(label_line)
        for p in range(dataset.p):
            lines.append(",".join(f"{v:.17g}" for v in dataset.instances[i, p]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_mask(token: str, lineno: int) -> GroundTruthMask:
    vars_part, sep, spans_part = token.partition(":")
    if not sep:
        raise FormatError(f"line {lineno}: mask must look like <vars>:<start>-<end>")
    try:
        variables = tuple(int(v) for v in vars_part.split(","))
        spans = []
        for span in spans_part.split(","):
            s_str, dash, e_str = span.partition("-")
            if not dash:
                raise ValueError(span)
            spans.append((int(s_str), int(e_str)))
        return GroundTruthMask(variables=variables, spans=tuple(spans))
    except ValueError as exc:
        raise FormatError(f"line {lineno}: bad mask {token!r}") from exc


def load_dataset(path: str) -> MtsDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("line 1: empty file")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"line 1: bad header JSON: {exc}") from exc
    if not isinstance(header, dict) or set(header) != {"n", "p", "t", "classes", "var_names"}:
        raise FormatError("line 1: header must have exactly the keys n, p, t, classes, var_names")
    n, p, t, classes = header["n"], header["p"], header["t"], header["classes"]
    var_names = header["var_names"]
    if not all(isinstance(v, int) and v >= 1 for v in (n, p, t, classes)):
        raise FormatError("line 1: n, p, t, classes must be positive integers")
    if not isinstance(var_names, list) or len(var_names) != p:
        raise FormatError(f"line 1: var_names must list {p} names")

    expected = 1 + n * (1 + p)
    if len(lines) != expected:
        raise FormatError(f"line {min(len(lines), expected) + 1}: expected {expected} lines, found {len(lines)}")

    instances = np.empty((n, p, t), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    masks: list[GroundTruthMask | None] = [None] * n
    lineno = 1
    for i in range(n):
        lineno += 1
        parts = lines[lineno - 1].split()
        if len(parts) not in (2, 4) or parts[0] != "label":
            raise FormatError(f"line {lineno}: expected 'label <int> [mask <spec>]'")
        try:
            label = int(parts[1])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: bad label {parts[1]!r}") from exc
        if not 0 <= label < classes:
            raise FormatError(f"line {lineno}: label {label} out of range for {classes} classes")
        labels[i] = label
        if len(parts) == 4:
            if parts[2] != "mask":
                raise FormatError(f"line {lineno}: unexpected token {parts[2]!r}")
            masks[i] = _parse_mask(parts[3], lineno)
        for v in range(p):
            lineno += 1
            row = lines[lineno - 1].split(",")
            if len(row) != t:
                raise FormatError(f"line {lineno}: expected {t} values, found {len(row)}")
            try:
                instances[i, v] = [float(cell) for cell in row]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: bad number: {exc}") from exc

    if all(m is None for m in masks):
        masks = None
    try:
        return MtsDataset(
            instances=instances, labels=labels, class_count=classes,
            var_names=list(var_names), masks=masks,
        )
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# -- splitting ----------------------------------------------------------------


def _largest_remainder(total: int, fractions) -> list[int]:
    targets = [total * f for f in fractions]
    counts = [math.floor(x) for x in targets]
    leftover = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda k: (-(targets[k] - counts[k]), k))
    for k in order[:leftover]:
        counts[k] += 1
    return counts


def stratified_split(dataset: MtsDataset, fractions, seed: int) -> tuple[list[int], list[int], list[int]]:
    """Seeded, stratified (train, val, test) index partition.

    Within each class the indices are shuffled and cut into contiguous
    train/val/test blocks; block sizes follow largest-remainder rounding
    constrained so the overall split sizes are exact. Per-class counts
    stay within one instance of the exact proportion.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ValueError("need exactly three split fractions")
    if any(f <= 0 for f in fractions):
        raise ValueError("all three split fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")

    n = dataset.n
    global_counts = _largest_remainder(n, fractions)
    running = [0, 0, 0]

    by_class: dict[int, list[int]] = {}
    for i, label in enumerate(dataset.labels):
        by_class.setdefault(int(label), []).append(i)

    plan: list[tuple[list[int], list[int]]] = []
    for label in sorted(by_class):
        idx = by_class[label]
        if len(idx) < 3:
            raise DataError(f"class {label} has {len(idx)} instances; need >= 3 to split")
        base = [math.floor(len(idx) * f) for f in fractions]
        for k in range(3):
            running[k] += base[k]
        plan.append((idx, base))

    # hand out per-class leftovers by largest remainder, never exceeding
    # the exact global split sizes
    for idx, base in plan:
        leftover = len(idx) - sum(base)
        remainders = [len(idx) * fractions[k] - base[k] for k in range(3)]
        order = sorted(range(3), key=lambda k: (-remainders[k], k))
        given = 0
        for k in order:
            if given == leftover:
                break
            if running[k] < global_counts[k]:
                base[k] += 1
                running[k] += 1
                given += 1
        if given != leftover:  # capacity always suffices; defensive
            raise DataError("could not balance stratified split")

    rng = SeededRng(derive_seed(seed, _SPLIT_STREAM))
    splits: tuple[list[int], list[int], list[int]] = ([], [], [])
    for idx, base in plan:
        shuffled = list(idx)
        rng.shuffle(shuffled)
        cursor = 0
        for k in range(3):
            splits[k].extend(shuffled[cursor : cursor + base[k]])
            cursor += base[k]
    return tuple(sorted(s) for s in splits)
