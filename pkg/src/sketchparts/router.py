"""K-way super-category sketch classifier with multi-crop pooled inference.

The net is a plain conv stack: 15x15/3 x64, pool, 5x5 x128, pool, three
3x3 x256, pool, 1x1 x512, dropout 0.7, then global average pooling and a
1x1 stage (a linear map on the pooled vector) down to K scores.
"""

from __future__ import annotations

import numpy as np

from .autograd import ConvSpec, Tensor, dropout, global_average_pool, he_normal, linear, make_rng, softmax
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import CheckpointError, ContractViolation
from .imaging import crops_and_pad, mirror_v
from .model import sketch_input
from .nets import init_stack, out_channels, run_stack

ROUTER_MAGIC = b"SKRC"

ROUTER_STACK = (
    ConvSpec(15, 64, stride=3),
    ("maxpool", 3, 2),
    ConvSpec(5, 128),
    ("maxpool", 3, 2),
    ConvSpec(3, 256),
    ConvSpec(3, 256),
    ConvSpec(3, 256),
    ("maxpool", 3, 2),
    ConvSpec(1, 512),
)

DROPOUT_P = 0.7


class RouterNet:
    def __init__(self, num_classes, params, digest=b"\x00" * 32):
        self.num_classes = num_classes
        self.params = params
        self.digest = digest

    def parameters(self):
        return list(self.params.items())


def build_router(num_classes, seed, digest=b"\x00" * 32):
    if num_classes < 2:
        raise ContractViolation(f"router needs at least 2 classes, got {num_classes}")
    rng = make_rng(seed)
    params = {}
    ch = init_stack(rng, 1, ROUTER_STACK, "stack", params)
    params["head.w"] = he_normal(rng, (num_classes, ch), fan_in=ch)
    params["head.b"] = Tensor(np.zeros(num_classes, dtype=np.float32))
    return RouterNet(num_classes, params, digest)


def forward(net, sketch, rng=None, training=False):
    """Logits for one sketch raster."""
    x = run_stack(
        sketch_input(sketch), ROUTER_STACK, "stack", net.params, rng=rng, training=training
    )
    x = dropout(x, DROPOUT_P, rng, training=training)
    pooled = global_average_pool(x)
    return linear(pooled, net.params["head.w"], net.params["head.b"])


def classify_pooled(net, sketch, crop_fraction=0.9, single_view=False):
    """Average post-softmax scores over 12 views: the six crop/pad views of
    the sketch and of its mirror image.

    Scores are accumulated per view pair, so mirroring the input permutes
    each pair only and the pooled result is bit-identical. single_view=True
    degenerates to a plain forward pass over the unmodified sketch.
    """
    if single_view:
        scores = softmax(forward(net, sketch)).data.astype(np.float64)
        return int(scores.argmax()), scores
    views = crops_and_pad(sketch, crop_fraction)
    mirrored = crops_and_pad(mirror_v(sketch), crop_fraction)
    total = np.zeros(net.num_classes, dtype=np.float64)
    for v, mv in zip(views, mirrored):
        pair = softmax(forward(net, v)).data.astype(np.float64) + softmax(
            forward(net, mv)
        ).data.astype(np.float64)
        total += pair
    scores = total / (2 * len(views))
    return int(scores.argmax()), scores


def save_router(net, path):
    write_checkpoint(path, ROUTER_MAGIC, net.digest, net.parameters())


def load_router(path, num_classes, expected_digest=None):
    digest, tensors = read_checkpoint(path, ROUTER_MAGIC)
    if expected_digest is not None and digest != expected_digest:
        raise CheckpointError(8, "router was trained against a different taxonomy")
    net = build_router(num_classes, seed=0, digest=digest)
    names = list(net.params)
    if names != list(tensors):
        raise CheckpointError(40, "parameter names do not match the router layout")
    for name in names:
        if tensors[name].shape != net.params[name].shape:
            raise CheckpointError(40, f"{name}: unexpected shape {tensors[name].shape}")
        net.params[name] = Tensor(tensors[name])
    return net
