"""Loss construction and the training loops.

Per-pixel cross-entropy is rebalanced by alpha_c = M / f_c, where f_c is a
label's average pixel mass over the images containing it and M the median
of those masses, so small parts weigh more. The combined objective adds
the pose cross-entropy scaled by lambda (grid-searched optimum 1.0). Both
loops are plain SGD with momentum 0.9 under polynomial rate decay,
mini-batch 1 for the parser.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import CLS_COMBOS, SEG_COMBOS, cls_variant, seg_variant
from .autograd import (
    Tape,
    add,
    backward,
    crop2d,
    make_rng,
    reshape,
    scale,
    softmax_ce,
    weighted_softmax_ce,
    zero_grads,
)
from .errors import ConfigError, ContractViolation
from .model import forward_branch, forward_shared, pad_to_stride, route, sketch_input
from .optim import ParamGroup, SgdMomentum
from .poses import POSE_INDEX
from .router import classify_pooled
from .router import forward as router_forward


@dataclass(frozen=True)
class ClassBalance:
    """Per-label loss weights for one branch; index = branch label id."""

    weights: np.ndarray

    @classmethod
    def uniform(cls, n_labels):
        return cls(np.ones(n_labels))


def compute_class_balance(samples, branch, taxonomy, balance_background=True):
    """alpha_c = M / f_c with f_c = (pixels of c) / (images containing c).

    Labels never seen in the branch's samples are a configuration error.
    Background (label 0) takes part in the balancing by default; with
    balance_background=False its weight is pinned to 1.
    """
    n_labels = taxonomy.n_parts(branch) + 1
    pixel_count = np.zeros(n_labels, dtype=np.float64)
    image_count = np.zeros(n_labels, dtype=np.int64)
    for s in samples:
        if taxonomy.branch_of(s.category) != branch:
            continue
        ids, counts = np.unique(s.labels.labels, return_counts=True)
        for i, c in zip(ids, counts):
            pixel_count[i] += c
            image_count[i] += 1
    start = 0 if balance_background else 1
    for label in range(start, n_labels):
        if image_count[label] == 0:
            name = "background" if label == 0 else taxonomy.part_names(branch)[label - 1]
            raise ConfigError(
                f"label {label} ({name}) of branch {branch} is absent from the dataset"
            )
    f = np.ones(n_labels)
    f[start:] = pixel_count[start:] / image_count[start:]
    median = np.median(f[start:])
    weights = np.ones(n_labels)
    weights[start:] = median / f[start:]
    return ClassBalance(weights)


def total_loss(seg_scores, labelmap, balance, pose_logits, pose_label, lam):
    """Weighted segmentation CE plus lam times the 8-way pose CE.

    Returns (taped scalar, seg value, pose value).
    """
    n_labels, h, w = seg_scores.shape
    if (h, w) != (labelmap.height, labelmap.width):
        raise ContractViolation(
            f"scores {w}x{h} vs labels {labelmap.width}x{labelmap.height}"
        )
    flat = reshape(seg_scores, (n_labels, h * w))
    seg = weighted_softmax_ce(flat, labelmap.labels.reshape(-1), balance.weights)
    if lam == 0.0:
        return seg, seg.data.item(), 0.0
    target = POSE_INDEX[pose_label] if isinstance(pose_label, str) else int(pose_label)
    pose = softmax_ce(pose_logits, target)
    total = add(seg, scale(pose, lam)) if lam != 1.0 else add(seg, pose)
    return total, seg.data.item(), pose.data.item()


@dataclass(frozen=True)
class TrainPlan:
    iterations: int = 3000
    lr_body: float = 5e-4
    lr_seg_head: float = 5e-3
    lr_pose_head: float = 2.5e-2
    momentum: float = 0.9
    poly_power: float = 0.9
    lam: float = 1.0
    seed: int = 0
    freeze: tuple = ()  # of {"shared", "branch_body", "seg_head", "pose_head"}
    class_balance: bool = True
    balance_background: bool = True
    clip_norm: float = 10.0  # global gradient norm cap; None disables
    augment: bool = True  # draw one of the 14 rotation/mirror variants per step

    def __post_init__(self):
        if self.iterations < 1 or min(self.lr_body, self.lr_seg_head, self.lr_pose_head) <= 0:
            raise ConfigError("iterations and learning rates must be positive")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")


def clip_gradients(params, max_norm):
    """Scale all gradients down so their joint L2 norm is at most max_norm."""
    if max_norm is None:
        return
    total = 0.0
    for t in params:
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for t in params:
            if t.grad is not None:
                t.grad = t.grad * factor


def _parser_groups(model, plan):
    p = model.params
    shared = [(n, p[n]) for n in model.params if n.startswith("shared.")]
    body = [
        (n, p[n])
        for n in model.params
        if n.startswith("branch") and ".seg." not in n and ".pose." not in n
    ]
    seg = [(n, p[n]) for n in model.params if ".seg." in n]
    pose = [(n, p[n]) for n in model.params if ".pose." in n]
    return [
        ParamGroup("shared", shared, plan.lr_body),
        ParamGroup("branch_body", body, plan.lr_body),
        ParamGroup("seg_head", seg, plan.lr_seg_head),
        ParamGroup("pose_head", pose, plan.lr_pose_head),
    ]


def train_parser(model, samples, plan):
    """Mini-batch-1 training over routed experts; returns the loss log.

    Log rows are dicts with iter, seg_loss, pose_loss, total, lr.
    """
    if not samples:
        raise ContractViolation("training set is empty")
    tax = model.taxonomy
    branches = [tax.branch_of(s.category) for s in samples]
    if plan.class_balance:
        balances = {
            b: compute_class_balance(samples, b, tax, plan.balance_background)
            for b in sorted(set(branches))
        }
    else:
        balances = {b: ClassBalance.uniform(tax.n_parts(b) + 1) for b in set(branches)}

    opt = SgdMomentum(
        _parser_groups(model, plan),
        momentum=plan.momentum,
        max_iterations=plan.iterations,
        power=plan.poly_power,
    )
    rng = make_rng((plan.seed, 0xC0FFEE))
    params = [t for _, t in model.parameters()]
    log = []
    order = []
    for it in range(plan.iterations):
        if not order:
            order = list(rng.permutation(len(samples)))
        idx = int(order.pop())
        sample, branch = samples[idx], branches[idx]
        if plan.augment:
            sample = seg_variant(sample, int(rng.integers(0, len(SEG_COMBOS))))
        padded = pad_to_stride(sample.sketch, model.config.stride)
        with Tape() as tape:
            feats = forward_shared(model, sketch_input(padded))
            routed = route([feats], [branch], model.num_branches)
            scores, pose_logits = forward_branch(model, branch, routed[branch][0])
            if (padded.height, padded.width) != (sample.sketch.height, sample.sketch.width):
                scores = crop2d(scores, sample.sketch.height, sample.sketch.width)
            loss, seg_v, pose_v = total_loss(
                scores, sample.labels, balances[branch], pose_logits, sample.pose, plan.lam
            )
        if not np.isfinite(loss.data.item()):
            raise RuntimeError(f"loss became non-finite at iteration {it}")
        backward(tape, loss)
        clip_gradients(params, plan.clip_norm)
        lr = opt.lr_factor() * plan.lr_body
        opt.step(frozen=plan.freeze)
        zero_grads(params)
        log.append(
            {
                "iter": it,
                "seg_loss": seg_v,
                "pose_loss": pose_v,
                "total": loss.data.item(),
                "lr": lr,
            }
        )
    return log


@dataclass(frozen=True)
class RouterPlan:
    iterations: int = 400
    lr: float = 7e-4
    batch_size: int = 32
    momentum: float = 0.9
    poly_power: float = 0.9
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.lr <= 0 or self.batch_size < 1:
            raise ConfigError("iterations, lr and batch size must be positive")


def train_router(net, labelled, plan):
    """Train the K-way classifier on (Raster, class index) pairs.

    With augment=True every draw applies one of the 70 classifier
    augmentations on the fly, which samples the expanded dataset uniformly
    without materializing it.
    """
    if not labelled:
        raise ContractViolation("training set is empty")
    for _, label in labelled:
        if not 0 <= label < net.num_classes:
            raise ContractViolation(f"class label {label} out of range [0, {net.num_classes})")
    groups = [ParamGroup("router", net.parameters(), plan.lr)]
    opt = SgdMomentum(
        groups, momentum=plan.momentum, max_iterations=plan.iterations, power=plan.poly_power
    )
    rng = make_rng((plan.seed, 0xB0A7))
    params = [t for _, t in net.parameters()]
    log = []
    for it in range(plan.iterations):
        picks = rng.integers(0, len(labelled), size=plan.batch_size)
        variants = (
            rng.integers(0, len(CLS_COMBOS), size=plan.batch_size)
            if plan.augment
            else np.zeros(plan.batch_size, dtype=int)
        )
        with Tape() as tape:
            batch_loss = None
            for pick, var in zip(picks, variants):
                sketch, label = labelled[int(pick)]
                view = cls_variant(sketch, int(var)) if plan.augment else sketch
                logits = router_forward(net, view, rng=rng, training=True)
                term = softmax_ce(logits, label)
                batch_loss = term if batch_loss is None else add(batch_loss, term)
            loss = scale(batch_loss, 1.0 / plan.batch_size)
        if not np.isfinite(loss.data.item()):
            raise RuntimeError(f"loss became non-finite at iteration {it}")
        backward(tape, loss)
        lr = opt.lr_factor() * plan.lr
        opt.step()
        zero_grads(params)
        log.append({"iter": it, "loss": loss.data.item(), "lr": lr})
    return log


def router_accuracy(net, labelled, pooled=True):
    """Fraction of (sketch, class) pairs the router classifies correctly."""
    hits = 0
    for sketch, label in labelled:
        pred, _ = classify_pooled(net, sketch, single_view=not pooled)
        hits += int(pred == label)
    return hits / len(labelled)
