import numpy as np
import pytest

from sketchparts.autograd import Tape, Tensor, backward, make_rng, tsum, weighted_sum
from sketchparts.errors import CheckpointError, ContractViolation
from sketchparts.imaging import LabelMap, Raster
from sketchparts.model import (
    ModelConfig,
    build_model,
    forward_branch,
    forward_shared,
    infer,
    load_checkpoint,
    pad_to_stride,
    recombine,
    route,
    save_checkpoint,
    sketch_input,
)
from sketchparts.taxonomy import load_taxonomy

TWO_BRANCH_TEXT = """
super Alpha
cat a1 : p1, p2, p3
super Beta
cat b1 : q1, q2, q3, q4, q5
"""

TAX2 = load_taxonomy(TWO_BRANCH_TEXT)
CFG = ModelConfig()


def random_sketch(rng, size=32):
    return Raster(np.where(rng.random((size, size)) < 0.15, 255, 0).astype(np.uint8))


class TestBuild:
    def test_head_channels_include_background(self):
        m = build_model(CFG, TAX2, seed=1)
        assert m.params["branch0.seg.w"].shape[0] == 4
        assert m.params["branch1.seg.w"].shape[0] == 6

    def test_same_seed_identical(self):
        a = build_model(CFG, TAX2, seed=9)
        b = build_model(CFG, TAX2, seed=9)
        assert list(a.params) == list(b.params)
        for n in a.params:
            assert np.array_equal(a.params[n].data, b.params[n].data)

    def test_pose_head_shape(self):
        m = build_model(CFG, TAX2, seed=1)
        # two dilated 3x3 stages, an 11x11 template stage with 32 filters,
        # and a fully-connected map to the 8 poses
        assert m.params["branch0.pose.c0.w"].shape[2:] == (3, 3)
        assert m.params["branch0.pose.c1.w"].shape[2:] == (3, 3)
        assert m.params["branch0.pose.c2.w"].shape == (32, 32, 11, 11)
        assert m.params["branch0.pose.fc.w"].shape == (8, 32)

    def test_forward_shapes(self):
        m = build_model(CFG, TAX2, seed=2)
        feats = forward_shared(m, sketch_input(random_sketch(make_rng(3), 128)))
        assert feats.shape == (128, 16, 16)
        scores, pose = forward_branch(m, 0, feats)
        assert scores.shape == (4, 128, 128)
        assert pose.shape == (8,)

    def test_blank_input_finite(self):
        m = build_model(CFG, TAX2, seed=2)
        feats = forward_shared(m, sketch_input(Raster(np.zeros((32, 32), dtype=np.uint8))))
        scores, pose = forward_branch(m, 1, feats)
        assert np.isfinite(scores.data).all()
        assert np.isfinite(pose.data).all()

    def test_indivisible_dims_rejected(self):
        m = build_model(CFG, TAX2, seed=2)
        with pytest.raises(ContractViolation, match="stride"):
            forward_shared(m, sketch_input(Raster(np.zeros((30, 30), dtype=np.uint8))))

    def test_forward_pure(self):
        m = build_model(CFG, TAX2, seed=4)
        s = random_sketch(make_rng(5))
        a = forward_shared(m, sketch_input(s))
        b = forward_shared(m, sketch_input(s))
        assert np.array_equal(a.data, b.data)


class TestRouting:
    def test_example_scatter(self):
        branches = route(["a", "b", "c"], [1, 0, 1], 2)
        assert branches == [["b"], ["a", "c"]]
        assert recombine(branches, [1, 0, 1]) == ["a", "b", "c"]

    def test_single_branch_passthrough(self):
        items = list(range(5))
        assert route(items, [0] * 5, 1) == [items]
        assert recombine([items], [0] * 5) == items

    def test_bad_branch_id(self):
        with pytest.raises(ContractViolation):
            route(["a"], [2], 2)

    def test_thousand_random_roundtrips(self):
        rng = make_rng(77)
        for _ in range(1000):
            n = int(rng.integers(0, 12))
            k = int(rng.integers(1, 5))
            bia = [int(b) for b in rng.integers(0, k, size=n)]
            items = [object() for _ in range(n)]
            assert recombine(route(items, bia, k), bia) == items


def tie_branches(model):
    for name in list(model.params):
        if name.startswith("branch1."):
            src = "branch0." + name[len("branch1.") :]
            model.params[name] = Tensor(model.params[src].data.copy())


class TestRoutedEquivalence:
    def test_weight_tied_matches_unrouted_reference(self):
        # identical part counts so branch1 can mirror branch0 exactly
        tax = load_taxonomy("super A\ncat a : p1, p2, p3\nsuper B\ncat b : p1, p2, p3\n")
        m = build_model(CFG, tax, seed=11)
        tie_branches(m)
        rng = make_rng(13)
        batch = [random_sketch(rng) for _ in range(6)]
        bia = [int(b) for b in rng.integers(0, 2, size=6)]
        probes = [rng.standard_normal((4, 32, 32)) for _ in batch]

        def run(route_by):
            with Tape() as tape:
                feats = [forward_shared(m, sketch_input(s)) for s in batch]
                routed = route(feats, route_by, 2)
                outs = [
                    [forward_branch(m, b, f)[0] for f in branch_feats]
                    for b, branch_feats in enumerate(routed)
                ]
                ordered = recombine([outs[0], outs[1]], route_by)
                total = None
                for out, p in zip(ordered, probes):
                    term = weighted_sum(out, p)
                    total = term if total is None else _add(total, term)
            backward(tape, total)
            shared_grads = {n: m.params[n].grad.copy() for n in m.shared_names()}
            outputs = [o.data.copy() for o in ordered]
            for _, t in m.parameters():
                t.grad = None
            return outputs, shared_grads

        routed_out, routed_grads = run(bia)
        ref_out, ref_grads = run([0] * len(batch))

        for a, b in zip(routed_out, ref_out):
            assert np.allclose(a, b, atol=1e-6)
        for n in routed_grads:
            assert np.allclose(routed_grads[n], ref_grads[n], atol=1e-6)


def _add(a, b):
    from sketchparts.autograd import add

    return add(a, b)


class TestInfer:
    def test_label_space_bound_even_misrouted(self):
        m = build_model(CFG, TAX2, seed=21)
        sketch = random_sketch(make_rng(23), 40)  # forces padding too
        for branch in (0, 1):
            lm, pose = infer(m, branch, sketch)
            assert (lm.height, lm.width) == (40, 40)
            assert max(lm.ids(), default=0) <= TAX2.n_parts(branch)
            assert pose in {"N", "NE", "E", "SE", "S", "SW", "W", "NW"}

    def test_deterministic(self):
        m = build_model(CFG, TAX2, seed=25)
        sketch = random_sketch(make_rng(27), 32)
        assert infer(m, 0, sketch) == infer(m, 0, sketch)

    def test_pad_to_stride(self):
        s = Raster(np.full((30, 33), 255, dtype=np.uint8))
        p = pad_to_stride(s, 8)
        assert (p.height, p.width) == (32, 40)
        assert (p.pixels[:30, :33] == 255).all()
        assert (p.pixels[30:, :] == 0).all()


class TestCheckpoint:
    def test_roundtrip_byte_identical(self, tmp_path):
        m = build_model(CFG, TAX2, seed=31)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(m, p1)
        loaded = load_checkpoint(p1, CFG, TAX2)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupt_header_rejected(self, tmp_path):
        m = build_model(CFG, TAX2, seed=33)
        p = tmp_path / "c.ckpt"
        save_checkpoint(m, p)
        blob = bytearray(p.read_bytes())
        blob[1] ^= 0xFF
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(p, CFG, TAX2)

    def test_taxonomy_mismatch_refused(self, tmp_path):
        m = build_model(CFG, TAX2, seed=35)
        p = tmp_path / "d.ckpt"
        save_checkpoint(m, p)
        other = load_taxonomy("super A\ncat a : p1, p2, p3\nsuper B\ncat b : q1, q2, q3, q4, q5\n")
        with pytest.raises(CheckpointError, match="taxonomy"):
            load_checkpoint(p, CFG, other)

    def test_truncation_names_offset(self, tmp_path):
        m = build_model(CFG, TAX2, seed=37)
        p = tmp_path / "e.ckpt"
        save_checkpoint(m, p)
        blob = p.read_bytes()[:100]
        p.write_bytes(blob)
        with pytest.raises(CheckpointError, match="byte"):
            load_checkpoint(p, CFG, TAX2)
