"""Dense tensors with taped reverse-mode differentiation.

Small by design: exactly the primitives the parser, pose head and router
classifier need. Values are stored in float32 by default; every reduction
(convolution accumulate, sums, means, log-sum-exp) runs in float64 before
the result is cast back, so finite-difference checks stay tight. Tests may
construct float64 tensors to run the same code as a full-precision shadow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractViolation

DEFAULT_DTYPE = np.float32


def make_rng(seed):
    """Counter-based generator; same seed gives bit-identical streams."""
    return np.random.Generator(np.random.Philox(seed))


class Tensor:
    """N-d float array plus the gradient slot that backward() fills."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={tuple(self.data.shape)}, dtype={self.data.dtype.name})"


class Tape:
    """Ordered record of primitive ops, replayed exactly once in reverse.

    Use as a context manager around the forward pass; ops executed while a
    tape is active append themselves. A second backward() on the same tape
    raises, and every leaf reached from the loss receives exactly one
    accumulated gradient per pass.
    """

    def __init__(self):
        self.entries = []  # (output, inputs tuple, grad fn)
        self.consumed = False

    def record(self, output, inputs, grad_fn):
        self.entries.append((output, inputs, grad_fn))

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False


_ACTIVE: list[Tape] = []


def _record(output, inputs, grad_fn):
    if _ACTIVE:
        _ACTIVE[-1].record(output, inputs, grad_fn)


def _recording():
    return bool(_ACTIVE)


def backward(tape, loss):
    """Replay `tape` in reverse from scalar `loss`, filling leaf .grad slots."""
    if tape.consumed:
        raise ContractViolation("tape has already been replayed backward once")
    if loss.data.size != 1:
        raise ContractViolation(f"loss must be scalar, got shape {tuple(loss.shape)}")
    tape.consumed = True

    pending = {id(loss): np.ones_like(loss.data)}
    holders = {id(loss): loss}
    produced = {id(out) for out, _, _ in tape.entries}

    for out, inputs, grad_fn in reversed(tape.entries):
        g = pending.pop(id(out), None)
        holders.pop(id(out), None)
        if g is None:
            continue  # not on the path from loss
        for tensor, grad in zip(inputs, grad_fn(g)):
            if grad is None:
                continue
            tid = id(tensor)
            if tid in pending:
                pending[tid] = pending[tid] + grad
            else:
                pending[tid] = grad
                holders[tid] = tensor

    for tid, tensor in holders.items():
        if tid not in produced:
            tensor.grad = pending[tid].astype(tensor.dtype, copy=False).reshape(tensor.shape)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def _f64(a):
    return a if a.dtype == np.float64 else a.astype(np.float64)


def _cast(a, dtype):
    return a.astype(dtype, copy=False)


# ---------------------------------------------------------------------------
# convolution


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one conv layer: kernel width, stride, dilation rate, output
    channels, and the zero-pad margin (defaults to rate*(kernel-1)//2)."""

    kernel: int
    out_channels: int
    stride: int = 1
    dilation: int = 1
    pad: int = None

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.dilation < 1:
            raise ContractViolation(
                f"kernel/stride/dilation must be >= 1, got "
                f"{self.kernel}/{self.stride}/{self.dilation}"
            )

    @property
    def padding(self):
        if self.pad is not None:
            return self.pad
        return self.dilation * (self.kernel - 1) // 2

    def out_size(self, size):
        eff = self.dilation * (self.kernel - 1) + 1
        return (size + 2 * self.padding - eff) // self.stride + 1


def conv2d(x, w, b, spec):
    """Strided, dilated cross-correlation of x[C,H,W] with w[F,C,k,k] + b[F].

    Output spatial size is floor((S + 2p - r*(k-1) - 1)/s) + 1 per side.
    """
    C, H, W = x.shape
    F, Cw, kh, kw = w.shape
    if Cw != C or kh != spec.kernel or kw != spec.kernel or F != spec.out_channels:
        raise ContractViolation(
            f"conv2d shape mismatch: input {tuple(x.shape)} vs weights "
            f"{tuple(w.shape)} under spec {spec}"
        )
    if b.shape != (F,):
        raise ContractViolation(f"bias shape {tuple(b.shape)} != ({F},)")

    p, s, r, k = spec.padding, spec.stride, spec.dilation, spec.kernel
    Ho, Wo = spec.out_size(H), spec.out_size(W)
    if Ho < 1 or Wo < 1:
        raise ContractViolation(
            f"conv2d output would be empty for input {tuple(x.shape)} under {spec}"
        )

    xp = np.zeros((C, H + 2 * p, W + 2 * p), dtype=np.float64)
    xp[:, p : p + H, p : p + W] = x.data
    sc, sh, sw = xp.strides
    patches = as_strided(
        xp,
        shape=(C, k, k, Ho, Wo),
        strides=(sc, sh * r, sw * r, sh * s, sw * s),
        writeable=False,
    )
    out_data = np.tensordot(_f64(w.data), patches, axes=([1, 2, 3], [0, 1, 2]))
    out_data += _f64(b.data)[:, None, None]
    out = Tensor(_cast(out_data, x.dtype))

    if _recording():

        def grad_fn(g):
            g64 = _f64(g)
            db = g64.sum(axis=(1, 2))
            dw = np.tensordot(g64, patches, axes=([1, 2], [3, 4]))
            dxp = np.zeros_like(xp)
            w64 = _f64(w.data)
            for u in range(k):
                for v in range(k):
                    # (F,C) x (F,Ho,Wo) -> (C,Ho,Wo); strides never collide
                    # within a fixed (u,v) tap, so plain slice-add is exact.
                    contrib = np.tensordot(w64[:, :, u, v], g64, axes=(0, 0))
                    dxp[
                        :,
                        u * r : u * r + s * Ho : s,
                        v * r : v * r + s * Wo : s,
                    ] += contrib
            dx = dxp[:, p : p + H, p : p + W]
            return dx, dw, db

        _record(out, (x, w, b), grad_fn)
    return out


def maxpool2d(x, window, stride):
    """Max over window x window patches; right/bottom zero-padded so every
    window start inside ceil((S-w)/s)+1 positions is covered. Gradient goes
    to the first maximal element in scan order."""
    if window < 1 or stride < 1:
        raise ContractViolation(f"window/stride must be >= 1, got {window}/{stride}")
    C, H, W = x.shape
    Ho = max(0, -(-(H - window) // stride)) + 1
    Wo = max(0, -(-(W - window) // stride)) + 1
    Hp = (Ho - 1) * stride + window
    Wp = (Wo - 1) * stride + window

    xp = np.zeros((C, Hp, Wp), dtype=x.dtype)
    xp[:, :H, :W] = x.data
    sc, sh, sw = xp.strides
    wins = as_strided(
        xp,
        shape=(C, Ho, Wo, window, window),
        strides=(sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    ).reshape(C, Ho, Wo, window * window)
    flat_arg = wins.argmax(axis=3)
    out = Tensor(np.take_along_axis(wins, flat_arg[..., None], axis=3)[..., 0])

    if _recording():

        def grad_fn(g):
            dxp = np.zeros((C, Hp * Wp), dtype=np.float64)
            ci, hi, wi = np.indices((C, Ho, Wo))
            rows = hi * stride + flat_arg // window
            cols = wi * stride + flat_arg % window
            np.add.at(dxp, (ci.ravel(), (rows * Wp + cols).ravel()), _f64(g).ravel())
            return (dxp.reshape(C, Hp, Wp)[:, :H, :W],)

        _record(out, (x,), grad_fn)
    return out


# ---------------------------------------------------------------------------
# dense / pointwise layers


def linear(x, w, b):
    """Affine map w[O,D] @ x[D] + b[O]."""
    (D,) = x.shape
    O, Dw = w.shape
    if Dw != D or b.shape != (O,):
        raise ContractViolation(
            f"linear shape mismatch: input {tuple(x.shape)}, weights "
            f"{tuple(w.shape)}, bias {tuple(b.shape)}"
        )
    out = Tensor(_cast(_f64(w.data) @ _f64(x.data) + _f64(b.data), x.dtype))

    if _recording():

        def grad_fn(g):
            g64 = _f64(g)
            return _f64(w.data).T @ g64, np.outer(g64, _f64(x.data)), g64

        _record(out, (x, w, b), grad_fn)
    return out


def relu(x):
    out = Tensor(np.maximum(x.data, 0))
    if _recording():
        mask = x.data > 0
        _record(out, (x,), lambda g: (g * mask,))
    return out


def dropout(x, p, rng, training):
    """Inverted dropout: identity at inference, keeps mass at 1/(1-p) in training."""
    if not 0.0 <= p < 1.0:
        raise ContractViolation(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    out = Tensor(_cast(x.data * (keep * scale), x.dtype))
    if _recording():
        _record(out, (x,), lambda g: (g * (keep * scale),))
    return out


def global_average_pool(x):
    """Spatial mean of x[C,H,W] -> [C]."""
    C, H, W = x.shape
    out = Tensor(_cast(_f64(x.data).mean(axis=(1, 2)), x.dtype))
    if _recording():
        _record(out, (x,), lambda g: (np.broadcast_to(_f64(g)[:, None, None] / (H * W), x.shape),))
    return out


def _interp_matrix(n_out, n_in):
    # align-corners-false sample grid with clamped edges, mirror-symmetric
    # by construction so resampling commutes exactly with flips.
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range((n_out + 1) // 2):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        t = src - lo
        m[i, lo] += 1.0 - t
        m[i, hi] += t
        j = n_out - 1 - i
        if j != i:
            m[j, n_in - 1 - lo] += 1.0 - t
            m[j, n_in - 1 - hi] += t
    return m


def bilinear_upsample(x, factor):
    """Upsample x[C,H,W] by an integer factor (align-corners-false)."""
    if int(factor) != factor or factor < 1:
        raise ContractViolation(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return x
    C, H, W = x.shape
    wy = _interp_matrix(H * factor, H)
    wx = _interp_matrix(W * factor, W)
    t = np.tensordot(_f64(x.data), wy, axes=([1], [1]))  # (C, W, Hf)
    out_data = np.tensordot(t, wx, axes=([1], [1])).transpose(0, 2, 1)  # (C, Hf, Wf)
    out = Tensor(_cast(np.ascontiguousarray(out_data), x.dtype))

    if _recording():

        def grad_fn(g):
            t2 = np.tensordot(_f64(g), wy, axes=([1], [0]))  # (C, Wf, H)
            dx = np.tensordot(t2, wx, axes=([1], [0])).transpose(0, 2, 1)
            return (np.ascontiguousarray(dx),)

        _record(out, (x,), grad_fn)
    return out


def softmax(x):
    """Softmax over the last axis; output rows sum to one."""
    z = _f64(x.data)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(_cast(s, x.dtype))

    if _recording():

        def grad_fn(g):
            g64 = _f64(g)
            dot = (g64 * s).sum(axis=-1, keepdims=True)
            return (s * (g64 - dot),)

        _record(out, (x,), grad_fn)
    return out


# ---------------------------------------------------------------------------
# losses


def weighted_softmax_ce(logits, targets, weights):
    """Mean over positions of weights[target] * (-log softmax(logits)[target]).

    logits is [L, P]; targets is a length-P int sequence; weights is a
    length-L positive vector. Returns a scalar tensor.
    """
    L, P = logits.shape
    t = np.asarray(targets, dtype=np.intp).reshape(-1)
    if t.shape[0] != P:
        raise ContractViolation(f"{t.shape[0]} targets for {P} positions")
    bad = np.nonzero((t < 0) | (t >= L))[0]
    if bad.size:
        raise ContractViolation(
            f"target label {t[bad[0]]} out of range [0, {L}) at position {bad[0]}"
        )
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != L:
        raise ContractViolation(f"{w.shape[0]} weights for {L} labels")

    z = _f64(logits.data)
    z = z - z.max(axis=0, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=0))
    cols = np.arange(P)
    logp_t = z[t, cols] - logsumexp
    wt = w[t]
    loss = -(wt * logp_t).sum() / P
    out = Tensor(np.asarray(loss), dtype=logits.dtype)

    if _recording():

        def grad_fn(g):
            soft = np.exp(z - logsumexp[None, :])
            d = soft * wt[None, :]
            d[t, cols] -= wt
            return (g.item() / P * d,)

        _record(out, (logits,), grad_fn)
    return out


def softmax_ce(logits, target):
    """Plain cross-entropy of a logit vector against one class index."""
    (L,) = logits.shape
    flat = reshape(logits, (L, 1))
    return weighted_softmax_ce(flat, [target], np.ones(L))


# ---------------------------------------------------------------------------
# shape / arithmetic glue


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape))
    if _recording():
        _record(out, (x,), lambda g: (g.reshape(x.shape),))
    return out


def crop2d(x, height, width):
    """Keep the top-left height x width window of x[C,H,W]."""
    C, H, W = x.shape
    if height > H or width > W:
        raise ContractViolation(f"crop {height}x{width} exceeds input {H}x{W}")
    out = Tensor(np.ascontiguousarray(x.data[:, :height, :width]))
    if _recording():

        def grad_fn(g):
            dx = np.zeros((C, H, W), dtype=np.float64)
            dx[:, :height, :width] = g
            return (dx,)

        _record(out, (x,), grad_fn)
    return out


def add(x, y):
    if x.shape != y.shape:
        raise ContractViolation(f"add shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    out = Tensor(x.data + y.data)
    if _recording():
        _record(out, (x, y), lambda g: (g, g))
    return out


def scale(x, alpha):
    out = Tensor(_cast(x.data * float(alpha), x.dtype))
    if _recording():
        _record(out, (x,), lambda g: (g * float(alpha),))
    return out


def weighted_sum(x, weights):
    """Scalar dot of x with a constant array of the same shape."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.shape:
        raise ContractViolation(f"weighted_sum shape mismatch: {tuple(x.shape)} vs {w.shape}")
    out = Tensor(np.asarray((_f64(x.data) * w).sum()), dtype=x.dtype)
    if _recording():
        _record(out, (x,), lambda g: (g.item() * w,))
    return out


def tsum(x):
    """Sum of all entries as a taped scalar."""
    return weighted_sum(x, np.ones(x.shape))


def he_normal(rng, shape, fan_in, dtype=DEFAULT_DTYPE):
    """He fan-in init used for all conv/linear weights."""
    std = math.sqrt(2.0 / fan_in)
    return Tensor((rng.standard_normal(shape) * std).astype(dtype))
