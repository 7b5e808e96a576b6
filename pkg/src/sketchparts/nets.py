"""Building and running conv stacks from layer descriptors.

A stack is a sequence of ConvSpec entries (conv + relu) interleaved with
("maxpool", window, stride) and ("dropout", p) markers. Parameters live in
a flat name -> Tensor dict so checkpointing and optimizer grouping stay
trivial.
"""

from __future__ import annotations

from .autograd import ConvSpec, conv2d, dropout, he_normal, maxpool2d, relu
from .autograd import Tensor
from .errors import ConfigError

import numpy as np


def init_stack(rng, in_channels, stack, prefix, params):
    """Append He-initialized parameters for every conv in the stack."""
    ch = in_channels
    ci = 0
    for entry in stack:
        if isinstance(entry, ConvSpec):
            k = entry.kernel
            shape = (entry.out_channels, ch, k, k)
            params[f"{prefix}.c{ci}.w"] = he_normal(rng, shape, fan_in=ch * k * k)
            params[f"{prefix}.c{ci}.b"] = Tensor(np.zeros(entry.out_channels, dtype=np.float32))
            ch = entry.out_channels
            ci += 1
        elif entry[0] in ("maxpool", "dropout"):
            continue
        else:
            raise ConfigError(f"unknown stack entry {entry!r}")
    return ch


def run_stack(x, stack, prefix, params, rng=None, training=False):
    ci = 0
    for entry in stack:
        if isinstance(entry, ConvSpec):
            x = relu(conv2d(x, params[f"{prefix}.c{ci}.w"], params[f"{prefix}.c{ci}.b"], entry))
            ci += 1
        elif entry[0] == "maxpool":
            x = maxpool2d(x, entry[1], entry[2])
        elif entry[0] == "dropout":
            x = dropout(x, entry[1], rng, training=training)
        else:
            raise ConfigError(f"unknown stack entry {entry!r}")
    return x


def out_channels(stack, in_channels):
    ch = in_channels
    for entry in stack:
        if isinstance(entry, ConvSpec):
            ch = entry.out_channels
    return ch


def stride_product(stack):
    s = 1
    for entry in stack:
        if isinstance(entry, ConvSpec):
            s *= entry.stride
        elif entry[0] == "maxpool":
            s *= entry[2]
    return s
