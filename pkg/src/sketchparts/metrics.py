"""Segmentation IOU and pose accuracy reports.

Per part: pwIOU_i = n_ii / (t_i + sum_j n_ji - n_ii), i.e. intersection
over union against everything predicted as i. A sketch averages pwIOU over
the ground truth's unique nonzero labels only (background is not a part);
categories average their sketches, and the grand score averages categories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .poses import MERGE4, POSE_INDEX, POSES

FOUR_WAY = ["N", "E", "S", "W"]


def sketch_iou(pred, gt):
    """(per-part pwIOU dict, sIOU) of one prediction against ground truth."""
    if pred.labels.shape != gt.labels.shape:
        raise ContractViolation(
            f"prediction {pred.labels.shape} vs ground truth {gt.labels.shape}"
        )
    per_part = {}
    for part in gt.ids():
        gt_mask = gt.labels == part
        pred_mask = pred.labels == part
        inter = int((gt_mask & pred_mask).sum())
        union = int(gt_mask.sum()) + int(pred_mask.sum()) - inter
        per_part[part] = inter / union if union else 0.0
    if not per_part:
        return per_part, 0.0
    return per_part, sum(per_part.values()) / len(per_part)


def category_aiou(sious):
    if len(sious) == 0:
        raise ContractViolation("cannot average an empty sIOU list")
    return float(np.mean(sious))


def grand_average(per_category):
    if len(per_category) == 0:
        raise ContractViolation("cannot average an empty aIOU list")
    return float(np.mean(list(per_category)))


@dataclass
class IouReport:
    per_sketch: list  # (category, sIOU)
    per_category: dict  # category -> aIOU
    grand: float
    part_means: dict  # category -> {part id -> mean pwIOU}

    def csv(self):
        lines = ["category,aiou"]
        for cat in sorted(self.per_category):
            lines.append(f"{cat},{self.per_category[cat]!r}")
        lines.append(f"GRAND,{self.grand!r}")
        return "\n".join(lines) + "\n"

    def table(self):
        width = max([len(c) for c in self.per_category] + [5])
        rows = [f"{'category':<{width}}  aIOU"]
        for cat in sorted(self.per_category):
            rows.append(f"{cat:<{width}}  {self.per_category[cat]:.4f}")
        rows.append(f"{'AVG':<{width}}  {self.grand:.4f}")
        return "\n".join(rows)


def iou_report(pairs):
    """Aggregate (category, pred, gt) triples into an IouReport."""
    per_sketch = []
    by_cat = {}
    parts_by_cat = {}
    for category, pred, gt in pairs:
        per_part, siou = sketch_iou(pred, gt)
        per_sketch.append((category, siou))
        by_cat.setdefault(category, []).append(siou)
        bucket = parts_by_cat.setdefault(category, {})
        for part, v in per_part.items():
            bucket.setdefault(part, []).append(v)
    per_category = {c: category_aiou(v) for c, v in by_cat.items()}
    part_means = {
        c: {p: float(np.mean(vs)) for p, vs in parts.items()}
        for c, parts in parts_by_cat.items()
    }
    return IouReport(per_sketch, per_category, grand_average(per_category.values()), part_means)


@dataclass
class PoseReport:
    matrix8: np.ndarray  # truth rows x prediction columns, POSES order
    accuracy8: float
    matrix4: np.ndarray | None  # FOUR_WAY order after merging, or None
    accuracy4: float | None

    def csv(self):
        lines = ["labels," + ",".join(POSES)]
        for i, p in enumerate(POSES):
            lines.append(p + "," + ",".join(str(int(v)) for v in self.matrix8[i]))
        lines.append(f"accuracy8,{self.accuracy8!r}")
        if self.matrix4 is not None:
            lines.append("labels4," + ",".join(FOUR_WAY))
            for i, p in enumerate(FOUR_WAY):
                lines.append(p + "," + ",".join(str(int(v)) for v in self.matrix4[i]))
            lines.append(f"accuracy4,{self.accuracy4!r}")
        return "\n".join(lines) + "\n"

    def table(self):
        head = "      " + "".join(f"{p:>5}" for p in POSES)
        rows = [head]
        for i, p in enumerate(POSES):
            rows.append(f"{p:>5} " + "".join(f"{int(v):>5}" for v in self.matrix8[i]))
        rows.append(f"8-way accuracy: {self.accuracy8:.4f}")
        if self.matrix4 is not None:
            rows.append("      " + "".join(f"{p:>5}" for p in FOUR_WAY))
            for i, p in enumerate(FOUR_WAY):
                rows.append(f"{p:>5} " + "".join(f"{int(v):>5}" for v in self.matrix4[i]))
            rows.append(f"4-way accuracy: {self.accuracy4:.4f}")
        return "\n".join(rows)


def pose_eval(preds, truths, merge=True):
    """Confusion matrices and accuracies; the merged view folds NE,SE into E
    and NW,SW into W on both sides before scoring."""
    if len(preds) != len(truths):
        raise ContractViolation(f"{len(preds)} predictions vs {len(truths)} truths")
    for label in list(preds) + list(truths):
        if label not in POSE_INDEX:
            raise ContractViolation(f"unknown pose label {label!r}")
    m8 = np.zeros((8, 8), dtype=np.int64)
    for p, t in zip(preds, truths):
        m8[POSE_INDEX[t], POSE_INDEX[p]] += 1
    acc8 = float(np.trace(m8) / len(preds)) if preds else 1.0
    if not merge:
        return PoseReport(m8, acc8, None, None)
    idx4 = {p: FOUR_WAY.index(MERGE4[p]) for p in POSES}
    m4 = np.zeros((4, 4), dtype=np.int64)
    for p, t in zip(preds, truths):
        m4[idx4[t], idx4[p]] += 1
    acc4 = float(np.trace(m4) / len(preds)) if preds else 1.0
    return PoseReport(m8, acc8, m4, acc4)
