"""Self-contained invariant checks: finite-difference gradients plus the
brute-force oracles behind `selfcheck`.

The gradient checker only ever calls forward evaluations, so it is an
independent oracle for the taped backward pass. Run it on float64 tensors;
float32 storage drowns the difference quotient in rounding noise. The
other oracles are deliberately written as plain loops, independent of the
vectorized production paths they validate.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .autograd import Tape, backward


def fd_gradients(fn, tensors, eps=1e-3):
    """Numeric gradients of scalar fn() w.r.t. each tensor, by central differences.

    fn must read the current .data of the given tensors; entries are
    perturbed in place one at a time.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data, dtype=np.float64)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = fn().data.item()
            flat[i] = keep - eps
            lo = fn().data.item()
            flat[i] = keep
            g.reshape(-1)[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    """max |a - n| / max(1, |a|, |n|) over all entries of all gradients."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def gradcheck(fn, tensors, eps=1e-3, tol=1e-4):
    """Tape fn(), backprop, and compare every tensor's grad to central differences.

    Returns the worst relative error; raises AssertionError above tol.
    """
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    numeric = fd_gradients(fn, tensors, eps=eps)
    err = max_rel_error(analytic, numeric)
    if err > tol:
        raise AssertionError(f"gradient mismatch: rel err {err:.3e} > {tol:.1e}")
    return err


# ---------------------------------------------------------------------------
# the selfcheck suite


def _t64(rng, shape):
    from .autograd import Tensor

    return Tensor(rng.standard_normal(shape))


def _probe(rng, op):
    from .autograd import weighted_sum

    w = rng.standard_normal(op().shape)
    return lambda: weighted_sum(op(), w)


def _check_gradients(rng):
    from .autograd import (
        ConvSpec,
        bilinear_upsample,
        conv2d,
        dropout,
        global_average_pool,
        linear,
        make_rng,
        maxpool2d,
        relu,
        softmax,
        weighted_softmax_ce,
    )

    x = _t64(rng, (2, 6, 6))
    w = _t64(rng, (3, 2, 3, 3))
    b = _t64(rng, (3,))
    spec = ConvSpec(kernel=3, out_channels=3, stride=2, dilation=2, pad=2)
    gradcheck(_probe(rng, lambda: conv2d(x, w, b, spec)), [x, w, b])

    pool_in = _t64(rng, (1, 6, 6))
    pool_in.data[:] = rng.permutation(36).reshape(1, 6, 6) * 0.1
    gradcheck(_probe(rng, lambda: maxpool2d(pool_in, 3, 2)), [pool_in], tol=1e-3)

    v = _t64(rng, (4,))
    lw = _t64(rng, (3, 4))
    lb = _t64(rng, (3,))
    gradcheck(_probe(rng, lambda: linear(v, lw, lb)), [v, lw, lb])
    gradcheck(_probe(rng, lambda: relu(x)), [x], tol=1e-3)
    gradcheck(_probe(rng, lambda: global_average_pool(x)), [x])
    gradcheck(_probe(rng, lambda: bilinear_upsample(x, 2)), [x])
    gradcheck(_probe(rng, lambda: softmax(v)), [v])

    logits = _t64(rng, (4, 6))
    targets = rng.integers(0, 4, size=6)
    weights = rng.random(4) + 0.5
    gradcheck(lambda: weighted_softmax_ce(logits, targets, weights), [logits])

    drop_rng_seed = int(rng.integers(1 << 30))
    gradcheck(
        _probe(rng, lambda: dropout(x, 0.4, make_rng(drop_rng_seed), training=True)), [x]
    )


def _check_route_identity(rng):
    from .model import recombine, route

    for _ in range(200):
        n = int(rng.integers(0, 10))
        k = int(rng.integers(1, 5))
        bia = [int(v) for v in rng.integers(0, k, size=n)]
        items = list(range(n))
        if recombine(route(items, bia, k), bia) != items:
            raise AssertionError(f"route/recombine broke on {bia}")


def _check_class_balance(rng):
    from .augment import PairedSample
    from .imaging import LabelMap, Raster
    from .taxonomy import load_taxonomy
    from .training import compute_class_balance

    tax = load_taxonomy("super S\ncat thing : a, b, c\n")
    for _ in range(10):
        arrays = []
        for _ in range(int(rng.integers(2, 5))):
            arr = (rng.random((8, 8)) * 4).astype(np.uint8)
            arr[0, :4] = [1, 2, 3, 1]
            arrays.append(arr)
        samples = [
            PairedSample(Raster(np.zeros_like(a)), LabelMap(a), "thing", "E") for a in arrays
        ]
        got = compute_class_balance(samples, 0, tax, balance_background=True)
        # plain dict-counting oracle
        pixels, images = {}, {}
        for a in arrays:
            seen = set()
            for v in a.reshape(-1):
                pixels[int(v)] = pixels.get(int(v), 0) + 1
                seen.add(int(v))
            for v in seen:
                images[v] = images.get(v, 0) + 1
        f = {c: pixels.get(c, 0) / images[c] for c in range(4)}
        fs = sorted(f.values())
        median = (fs[1] + fs[2]) / 2
        for c in range(4):
            want = median / f[c]
            if abs(got.weights[c] - want) > 1e-12:
                raise AssertionError(f"class balance differs at label {c}")


def _check_iou(rng):
    from .imaging import LabelMap
    from .metrics import sketch_iou

    for _ in range(20):
        gt = (rng.random((8, 8)) * 4).astype(np.uint8)
        pred = (rng.random((8, 8)) * 4).astype(np.uint8)
        got_parts, got_siou = sketch_iou(LabelMap(pred), LabelMap(gt))
        parts = sorted({int(v) for v in gt.reshape(-1) if v})
        want = {}
        for part in parts:
            inter = t = p = 0
            for r in range(8):
                for c in range(8):
                    t += gt[r, c] == part
                    p += pred[r, c] == part
                    inter += (gt[r, c] == part) and (pred[r, c] == part)
            union = t + p - inter
            want[part] = inter / union if union else 0.0
        if got_parts != want:
            raise AssertionError("sketch_iou differs from pixel-count oracle")
        siou = sum(want.values()) / len(want) if want else 0.0
        if abs(got_siou - siou) > 1e-15:
            raise AssertionError("sIOU differs from pixel-count oracle")


def _check_rrwm(rng):
    from .graphmatch import GLOBAL, AttributeGraph, LocalNode, build_affinity, rrwm_match

    for _ in range(10):
        n = int(rng.integers(2, 5))
        parts = sorted(int(p) for p in rng.choice([1, 2], size=n))
        cents = 0.2 + 0.6 * rng.random((n, 2))
        nodes = tuple(
            LocalNode(parts[i], 50, 1.0 / n, float(rng.uniform(0.2, 1.5)),
                      (float(cents[i, 0]), float(cents[i, 1])))
            for i in range(n)
        )
        anchors = {
            i: (math.hypot(c[0] - 0.5, c[1] - 0.5), math.atan2(c[0] - 0.5, c[1] - 0.5))
            for i, c in enumerate(cents)
        }
        hist = {}
        for p in parts:
            hist[p] = hist.get(p, 0) + 1
        g = AttributeGraph(hist, 0.5, nodes, {}, anchors)
        aff = build_affinity(g, g)
        result = rrwm_match(aff)
        # enumerate every constrained complete assignment
        groups = {}
        for i, node in enumerate(nodes):
            groups.setdefault(node.part_id, []).append(i)
        index = {pair: k for k, pair in enumerate(aff.candidates)}
        best, best_pairs = -1.0, None
        perms_per_group = [
            [list(zip(idxs, perm)) for perm in itertools.permutations(idxs)]
            for idxs in groups.values()
        ]
        for combo in itertools.product(*perms_per_group):
            pairs = [(GLOBAL, GLOBAL)] + [p for grp in combo for p in grp]
            x = np.zeros(len(aff.candidates))
            for pair in pairs:
                x[index[pair]] = 1.0
            s = float(x @ aff.matrix @ x)
            if s > best:
                best, best_pairs = s, dict(pairs)
        if result.pairs != best_pairs:
            raise AssertionError("rrwm disagrees with exhaustive enumeration")
        if result.pairs[GLOBAL] != GLOBAL:
            raise AssertionError("global constraint violated")


def _check_augmentation(rng):
    from .augment import augment_cls, augment_seg, PairedSample
    from .imaging import LabelMap, Raster

    arr = np.zeros((32, 32), dtype=np.uint8)
    arr[8:24, 8:24] = 255
    labels = np.zeros((32, 32), dtype=np.uint8)
    labels[8:24, 8:24] = 1
    sample = PairedSample(Raster(arr), LabelMap(labels), "thing", "E")
    if len(augment_seg(sample)) != 14:
        raise AssertionError("augment_seg cardinality is not 14")
    if len(augment_cls(Raster(arr))) != 70:
        raise AssertionError("augment_cls cardinality is not 70")


def run_selfcheck(seed=0):
    """Run every invariant check; returns a list of (name, passed, detail)."""
    from .autograd import make_rng

    checks = [
        ("gradients-vs-finite-differences", _check_gradients),
        ("route-recombine-identity", _check_route_identity),
        ("class-balance-oracle", _check_class_balance),
        ("iou-oracle", _check_iou),
        ("rrwm-permutation-oracle", _check_rrwm),
        ("augmentation-cardinalities", _check_augmentation),
    ]
    results = []
    for name, fn in checks:
        try:
            fn(make_rng((seed, len(name))))
            results.append((name, True, ""))
        except AssertionError as exc:
            results.append((name, False, str(exc)))
    return results
