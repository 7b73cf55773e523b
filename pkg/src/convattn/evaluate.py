"""Classification metrics, the attention-allocation score, and heatmap
export.

The attention-allocation score of an explanation is the percentage of
joint-attention mass falling on cells (variable, interval) inside an
annotated ground-truth region. An interval counts as inside the region
when its window overlaps the region's time span by at least one point
(or, optionally, by at least half the window).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attention import AttentionExplanation
from .convfeat import IntervalLayout
from .data import GroundTruthMask


def accuracy(preds, labels) -> float:
    """Percent of matching entries."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError("prediction/label length mismatch")
    if preds.size == 0:
        raise ValueError("empty prediction list")
    return 100.0 * float((preds == labels).mean())


def confusion_matrix(preds, labels, n_classes: int) -> np.ndarray:
    """(C, C) counts; rows index the true class."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("prediction/label length mismatch")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(labels, preds):
        cm[t, p] += 1
    return cm


def per_class_precision_recall(cm: np.ndarray) -> list[dict]:
    """Precision/recall per class; 0 when the denominator is 0."""
    out = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        pred_c = float(cm[:, c].sum())
        true_c = float(cm[c, :].sum())
        out.append(
            {
                "class": c,
                "precision": tp / pred_c if pred_c else 0.0,
                "recall": tp / true_c if true_c else 0.0,
            }
        )
    return out


@dataclass(frozen=True)
class OverlapRule:
    """How much a window must overlap the region to count as inside."""

    mode: str = "one_point"  # or "half_window"

    def __post_init__(self):
        if self.mode not in ("one_point", "half_window"):
            raise ValueError(f"unknown overlap mode {self.mode!r}")


def _window_overlap(start: int, end: int, spans) -> int:
    return sum(max(0, min(end, e) - max(start, s)) for s, e in spans)


def intervals_in_region(layout: IntervalLayout, mask: GroundTruthMask, rule: OverlapRule = OverlapRule()) -> np.ndarray:
    """Boolean flag per interval: does its window overlap the mask's
    time spans enough under the rule?"""
    flags = np.zeros(layout.count, dtype=bool)
    threshold = 1 if rule.mode == "one_point" else (layout.kernel_len + 1) // 2
    for t, (s, e) in enumerate(layout.window_spans()):
        flags[t] = _window_overlap(s, e, mask.spans) >= threshold
    return flags


def allocation_score(
    explanation: AttentionExplanation, mask: GroundTruthMask, rule: OverlapRule = OverlapRule()
) -> float:
    """Percent of joint-attention mass inside the masked region.

    The joint matrix sums to 1 by construction but the denominator is
    computed explicitly anyway.
    """
    p = explanation.n_variables
    if max(mask.variables) >= p:
        raise ValueError("mask variable out of range for this explanation")
    flags = intervals_in_region(explanation.layout, mask, rule)
    rows = np.asarray(mask.variables, dtype=np.int64)
    numerator = float(explanation.joint[rows][:, flags].sum())
    denominator = float(explanation.joint.sum())
    if denominator <= 0:
        raise ValueError("explanation carries no attention mass")
    return 100.0 * numerator / denominator


def uniform_allocation_score(
    layout: IntervalLayout, mask: GroundTruthMask, n_variables: int, rule: OverlapRule = OverlapRule()
) -> float:
    """Allocation score of exactly uniform joint attention:
    100 * |region cells| / (P * count)."""
    if max(mask.variables) >= n_variables:
        raise ValueError("mask variable out of range")
    flags = intervals_in_region(layout, mask, rule)
    cells = len(mask.variables) * int(flags.sum())
    return 100.0 * cells / (n_variables * layout.count)


def export_heatmap(explanation: AttentionExplanation, path: str) -> str:
    """Write the joint-attention map as CSV plus a JSON sidecar.

    CSV header: interval_start,interval_end,var_1..var_P; one row per
    interval, values with 17 significant digits. The sidecar
    (`<path>.json`) carries the temporal scores and the per-interval
    variable scores. Returns the sidecar path.
    """
    p = explanation.n_variables
    spans = explanation.layout.window_spans()
    header = "interval_start,interval_end," + ",".join(f"var_{i + 1}" for i in range(p))
    lines = [header]
    for t, (s, e) in enumerate(spans):
        cells = ",".join(f"{explanation.joint[i, t]:.17g}" for i in range(p))
        lines.append(f"{s},{e},{cells}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = path + ".json"
    doc = {
        "interval_starts": [s for s, _ in spans],
        "interval_ends": [e for _, e in spans],
        "temporal_scores": explanation.temporal_scores.tolist(),
        "variable_scores": explanation.variable_scores.tolist(),
    }
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return sidecar


def evaluation_report(model, dataset, rule: OverlapRule = OverlapRule()) -> dict:
    """Accuracy, confusion counts, per-class precision/recall, and
    (when masks are present and the model has both attention modules)
    allocation-score statistics."""
    preds = model.predict_batch(dataset.instances)
    cm = confusion_matrix(preds, dataset.labels, dataset.class_count)
    report = {
        "n_instances": dataset.n,
        "accuracy": accuracy(preds, dataset.labels),
        "confusion_matrix": cm.tolist(),
        "per_class": per_class_precision_recall(cm),
    }
    if dataset.masks is not None and model.config.ablation == "full":
        scores = []
        baselines = []
        argmax_hits = 0
        masked = 0
        for i, mask in enumerate(dataset.masks):
            if mask is None:
                continue
            masked += 1
            explanation = model.explain(dataset.instances[i])
            scores.append(allocation_score(explanation, mask, rule))
            baselines.append(
                uniform_allocation_score(explanation.layout, mask, dataset.p, rule)
            )
            var_idx = int(np.unravel_index(explanation.joint.argmax(), explanation.joint.shape)[0])
            if var_idx in mask.variables:
                argmax_hits += 1
        if masked:
            report["allocation"] = {
                "mean_score": float(np.mean(scores)),
                "per_instance": scores,
                "mean_uniform_baseline": float(np.mean(baselines)),
                "argmax_on_mask_variable_pct": 100.0 * argmax_hits / masked,
                "n_masked": masked,
            }
    return report
