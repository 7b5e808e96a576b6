"""End-to-end orchestration: route, parse, describe, evaluate."""

from __future__ import annotations

import numpy as np

from .describe import SketchSummary, describe
from .errors import CheckpointError, ContractViolation
from .imaging import connected_components
from .metrics import iou_report, pose_eval
from .model import infer
from .poses import POSES
from .router import classify_pooled

RECORD_VERSION = 1


def part_counts(labelmap, taxonomy, branch):
    """Connected-instance counts keyed by part name, in branch id order."""
    by_id = {}
    for comp in connected_components(labelmap):
        by_id[comp.part_id] = by_id.get(comp.part_id, 0) + 1
    names = taxonomy.part_names(branch)
    counts = {}
    for pid in sorted(by_id):
        if 1 <= pid <= len(names):
            counts[names[pid - 1]] = by_id[pid]
    return counts


def summarize(labelmap, taxonomy, branch, pose, category=None):
    return SketchSummary(
        supercategory=taxonomy.branch_names[branch],
        part_counts=part_counts(labelmap, taxonomy, branch),
        pose=pose,
        category=category,
    )


def infer_record(parser, router, sketch, force_branch=None, category=None):
    """Full inference for one sketch: route, parse, describe.

    Returns (record dict, predicted LabelMap). force_branch (a
    super-category name) bypasses the router, reproducing the perfect-router
    condition and unseen-category probes. The parser and router must have
    been built against the same taxonomy.
    """
    tax = parser.taxonomy
    if router is not None:
        if router.digest != tax.digest():
            raise CheckpointError(8, "router and parser were built for different taxonomies")
        routed, scores = classify_pooled(router, sketch)
    else:
        routed, scores = None, None
    if force_branch is not None:
        branch = tax.branch_index(force_branch)
    elif routed is not None:
        branch = routed
    else:
        raise ContractViolation("need a router or an explicit branch")

    labelmap, pose = infer(parser, branch, sketch)
    if category is not None and category not in tax.categories:
        category = None
    summary = summarize(labelmap, tax, branch, pose, category=category)
    record = {
        "format_version": RECORD_VERSION,
        "category": category,
        "supercategory": tax.branch_names[branch],
        "pose": pose,
        "part_counts": summary.part_counts,
        "description": describe(summary),
        "router_scores": None if scores is None else [float(s) for s in scores],
    }
    return record, labelmap


def evaluate_iou(parser, samples, force_branch=None, router=None):
    """IOU report over paired samples, routing by ground truth category
    unless a router or an explicit branch name is given."""
    tax = parser.taxonomy
    pairs = []
    for s in samples:
        if force_branch is not None:
            branch = tax.branch_index(force_branch)
        elif router is not None:
            branch, _ = classify_pooled(router, s.sketch)
        else:
            branch = tax.branch_of(s.category)
        pred, _ = infer(parser, branch, s.sketch)
        pairs.append((s.category, pred, s.labels))
    return iou_report(pairs)


def evaluate_pose(parser, samples, merge=True):
    """Pose confusion report, routing by ground-truth category."""
    tax = parser.taxonomy
    preds, truths = [], []
    for s in samples:
        _, pose = infer(parser, tax.branch_of(s.category), s.sketch)
        preds.append(pose)
        truths.append(s.pose)
    return pose_eval(preds, truths, merge=merge)
