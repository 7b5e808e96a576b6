"""The two-level parser: shared trunk, hard-routed expert branches, pose heads.

Level zero is a trunk shared by every category. Level one holds one expert
per super-category: the trunk's remaining blocks, a 1x1 segmentation head
with one output channel per branch part plus background, and a pose head
that reads the pre-softmax, pre-upsample segmentation scores. Routing is a
pure scatter by branch index; recombination restores mini-batch order, so
backpropagation through a routed batch matches an unrouted network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import (
    ConvSpec,
    Tensor,
    bilinear_upsample,
    conv2d,
    global_average_pool,
    he_normal,
    linear,
    make_rng,
    relu,
)
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import CheckpointError, ConfigError, ContractViolation
from .imaging import LabelMap, Raster
from .nets import init_stack, out_channels, run_stack, stride_product
from .poses import POSES

MODEL_MAGIC = b"SKPC"

DESK_TRUNK = (
    ConvSpec(3, 16, stride=2),
    ConvSpec(3, 32, stride=2),
    ConvSpec(3, 64, stride=2),
    ConvSpec(3, 64, dilation=2),
    ConvSpec(3, 128, dilation=2),
    ConvSpec(3, 128, dilation=2),
)


@dataclass(frozen=True)
class PoseHeadSpec:
    """Two dilated k=3 s=2 r=2 convs, one big k=11 template conv, FC to 8."""

    channels: tuple = (32, 32)
    template_filters: int = 32
    template_kernel: int = 11

    def stack(self):
        convs = [ConvSpec(3, ch, stride=2, dilation=2) for ch in self.channels]
        convs.append(ConvSpec(self.template_kernel, self.template_filters))
        return tuple(convs)


@dataclass(frozen=True)
class ModelConfig:
    trunk: tuple = DESK_TRUNK
    split_index: int = 5  # trunk[:split] is shared, trunk[split:] per branch
    pose: PoseHeadSpec = field(default_factory=PoseHeadSpec)

    def __post_init__(self):
        if not 0 < self.split_index <= len(self.trunk):
            raise ConfigError(
                f"split index {self.split_index} outside trunk of {len(self.trunk)} blocks"
            )

    @property
    def shared_stack(self):
        return self.trunk[: self.split_index]

    @property
    def branch_stack(self):
        return self.trunk[self.split_index :]

    @property
    def stride(self):
        return stride_product(self.trunk)


class Model:
    def __init__(self, config, taxonomy, params):
        self.config = config
        self.taxonomy = taxonomy
        self.params = params  # ordered name -> Tensor

    @property
    def num_branches(self):
        return self.taxonomy.num_branches

    def seg_channels(self, branch):
        return self.taxonomy.n_parts(branch) + 1

    def parameters(self):
        return list(self.params.items())

    def shared_names(self):
        return [n for n in self.params if n.startswith("shared.")]

    def branch_names_of(self, branch):
        return [n for n in self.params if n.startswith(f"branch{branch}.")]

    def group_names(self, name):
        """Parameter names by optimizer group: body / seg_head / pose_head."""
        if name == "seg_head":
            return [n for n in self.params if ".seg." in n]
        if name == "pose_head":
            return [n for n in self.params if ".pose." in n]
        if name == "body":
            return [n for n in self.params if ".seg." not in n and ".pose." not in n]
        raise ConfigError(f"unknown parameter group {name!r}")


def build_model(config, taxonomy, seed):
    """He-initialized model; identical seeds give identical parameters."""
    rng = make_rng(seed)
    params = {}
    ch = init_stack(rng, 1, config.shared_stack, "shared", params)
    branch_in = ch
    for b in range(taxonomy.num_branches):
        prefix = f"branch{b}"
        ch = init_stack(rng, branch_in, config.branch_stack, prefix, params)
        n_out = taxonomy.n_parts(b) + 1
        params[f"{prefix}.seg.w"] = he_normal(rng, (n_out, ch, 1, 1), fan_in=ch)
        params[f"{prefix}.seg.b"] = Tensor(np.zeros(n_out, dtype=np.float32))
        pose_in = n_out
        pose_stack = config.pose.stack()
        pose_in = init_stack(rng, pose_in, pose_stack, f"{prefix}.pose", params)
        params[f"{prefix}.pose.fc.w"] = he_normal(
            rng, (len(POSES), pose_in), fan_in=pose_in
        )
        params[f"{prefix}.pose.fc.b"] = Tensor(np.zeros(len(POSES), dtype=np.float32))
    return Model(config, taxonomy, params)


def sketch_input(sketch):
    """Raster -> float tensor in [0, 1], shape (1, H, W)."""
    return Tensor((sketch.pixels[None, :, :].astype(np.float32)) / 255.0)


def forward_shared(model, x):
    """Run the shared trunk on a (1, H, W) input tensor."""
    _, h, w = x.shape
    s = model.config.stride
    if h % s or w % s:
        raise ContractViolation(f"input {h}x{w} not divisible by trunk stride {s}")
    return run_stack(x, model.config.shared_stack, "shared", model.params)


def forward_branch(model, branch, features):
    """Expert forward: (upsampled part scores, pose logits).

    The pose head consumes the pre-softmax scores before upsampling.
    """
    if not 0 <= branch < model.num_branches:
        raise ContractViolation(f"branch {branch} out of range [0, {model.num_branches})")
    prefix = f"branch{branch}"
    p = model.params
    x = run_stack(features, model.config.branch_stack, prefix, p)
    seg_spec = ConvSpec(1, model.seg_channels(branch))
    scores = conv2d(x, p[f"{prefix}.seg.w"], p[f"{prefix}.seg.b"], seg_spec)

    y = scores
    for i, spec in enumerate(model.config.pose.stack()):
        y = relu(conv2d(y, p[f"{prefix}.pose.c{i}.w"], p[f"{prefix}.pose.c{i}.b"], spec))
    pooled = global_average_pool(y)
    pose_logits = linear(pooled, p[f"{prefix}.pose.fc.w"], p[f"{prefix}.pose.fc.b"])

    scores_up = bilinear_upsample(scores, model.config.stride)
    return scores_up, pose_logits


def route(items, branch_index_array, num_branches):
    """Scatter mini-batch items to per-branch lists, keeping relative order."""
    bia = list(branch_index_array)
    if len(items) != len(bia):
        raise ContractViolation(f"{len(items)} items vs {len(bia)} branch indices")
    out = [[] for _ in range(num_branches)]
    for item, b in zip(items, bia):
        if not 0 <= b < num_branches:
            raise ContractViolation(f"branch index {b} out of range [0, {num_branches})")
        out[b].append(item)
    return out


def recombine(branch_lists, branch_index_array):
    """Exact inverse of route: gather per-branch lists back to batch order."""
    iters = [iter(lst) for lst in branch_lists]
    out = []
    for b in branch_index_array:
        try:
            out.append(next(iters[b]))
        except StopIteration:
            raise ContractViolation("branch lists shorter than the index array") from None
    if any(next(it, None) is not None for it in iters):
        raise ContractViolation("branch lists longer than the index array")
    return out


def pad_to_stride(sketch, stride):
    h, w = sketch.height, sketch.width
    ph = (-h) % stride
    pw = (-w) % stride
    if ph == 0 and pw == 0:
        return sketch
    return Raster(np.pad(sketch.pixels, ((0, ph), (0, pw)), constant_values=0))


def infer(model, branch, sketch):
    """Parse one sketch through a chosen expert: (LabelMap, pose label).

    A deliberately mis-routed branch still yields a valid map in that
    branch's label space; that is the best-guess behaviour for unseen
    categories.
    """
    padded = pad_to_stride(sketch, model.config.stride)
    feats = forward_shared(model, sketch_input(padded))
    scores, pose_logits = forward_branch(model, branch, feats)
    pred = scores.data.argmax(axis=0).astype(np.uint8)
    pred = pred[: sketch.height, : sketch.width]
    pose = POSES[int(pose_logits.data.argmax())]
    return LabelMap(pred), pose


def save_checkpoint(model, path):
    write_checkpoint(path, MODEL_MAGIC, model.taxonomy.digest(), model.parameters())


def load_checkpoint(path, config, taxonomy):
    """Rebuild a model from a checkpoint; refuses a mismatched taxonomy."""
    digest, tensors = read_checkpoint(path, MODEL_MAGIC)
    if digest != taxonomy.digest():
        raise CheckpointError(
            8, "checkpoint was written for a different taxonomy (digest mismatch)"
        )
    model = build_model(config, taxonomy, seed=0)
    names = list(model.params)
    if names != list(tensors):
        missing = set(names) ^ set(tensors)
        raise CheckpointError(40, f"parameter names do not match config ({sorted(missing)[:4]})")
    for name in names:
        want = model.params[name].shape
        if tensors[name].shape != want:
            raise CheckpointError(40, f"{name}: shape {tensors[name].shape} != {want}")
        model.params[name] = Tensor(tensors[name])
    return model
