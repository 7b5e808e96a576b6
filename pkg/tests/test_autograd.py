import numpy as np
import pytest

from sketchparts.autograd import (
    ConvSpec,
    Tape,
    Tensor,
    backward,
    bilinear_upsample,
    conv2d,
    dropout,
    global_average_pool,
    linear,
    make_rng,
    maxpool2d,
    relu,
    softmax,
    softmax_ce,
    weighted_softmax_ce,
    weighted_sum,
)
from sketchparts.checks import gradcheck
from sketchparts.errors import ContractViolation


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def probe(rng, op):
    """Collapse an op's output to a scalar against a fixed random direction."""
    shape = op().shape
    w = rng.standard_normal(shape)
    return lambda: weighted_sum(op(), w)


def conv2d_loops(x, w, b, stride, dilation, pad):
    """Six-loop reference convolution; the oracle conv2d must match."""
    C, H, W = x.shape
    F, _, k, _ = w.shape
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=np.float64)
    xp[:, pad : pad + H, pad : pad + W] = x
    eff = dilation * (k - 1) + 1
    Ho = (H + 2 * pad - eff) // stride + 1
    Wo = (W + 2 * pad - eff) // stride + 1
    out = np.zeros((F, Ho, Wo))
    for f in range(F):
        for i in range(Ho):
            for j in range(Wo):
                acc = 0.0
                for c in range(C):
                    for u in range(k):
                        for v in range(k):
                            acc += (
                                xp[c, i * stride + u * dilation, j * stride + v * dilation]
                                * w[f, c, u, v]
                            )
                out[f, i, j] = acc + b[f]
    return out


class TestConv2d:
    def test_identity_size_kernel(self):
        out = conv2d(
            t64([[[3.0]]]), t64([[[[2.0]]]]), t64([0.0]), ConvSpec(kernel=1, out_channels=1)
        )
        assert out.data[0, 0, 0] == pytest.approx(6.0)

    def test_dilated_strided_output_size(self):
        out = conv2d(
            t64(np.zeros((1, 16, 16))),
            t64(np.zeros((4, 1, 3, 3))),
            t64(np.zeros(4)),
            ConvSpec(kernel=3, out_channels=4, stride=2, dilation=2, pad=2),
        )
        assert out.shape == (4, 8, 8)

    @pytest.mark.parametrize(
        "stride,dilation,pad", [(1, 1, 0), (1, 1, 1), (2, 1, 1), (1, 2, 2), (2, 2, 2), (3, 1, 0)]
    )
    def test_matches_loop_oracle(self, stride, dilation, pad):
        rng = make_rng(7 + stride * 10 + dilation * 100 + pad)
        x = rng.standard_normal((2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        spec = ConvSpec(kernel=3, out_channels=3, stride=stride, dilation=dilation, pad=pad)
        got = conv2d(t64(x), t64(w), t64(b), spec).data
        want = conv2d_loops(x, w, b, stride, dilation, pad)
        assert np.allclose(got, want, atol=1e-6)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ContractViolation, match=r"\(2, 4, 4\)"):
            conv2d(
                t64(np.zeros((2, 4, 4))),
                t64(np.zeros((3, 1, 3, 3))),
                t64(np.zeros(3)),
                ConvSpec(3, 3),
            )

    def test_gradcheck(self):
        rng = make_rng(11)
        x = t64(rng.standard_normal((2, 6, 6)))
        w = t64(rng.standard_normal((3, 2, 3, 3)))
        b = t64(rng.standard_normal(3))
        spec = ConvSpec(kernel=3, out_channels=3, stride=2, dilation=2, pad=2)
        gradcheck(probe(rng, lambda: conv2d(x, w, b, spec)), [x, w, b])


class TestMaxpool:
    def test_constant_image(self):
        out = maxpool2d(t64(np.full((1, 5, 5), 4.0)), window=3, stride=2)
        assert np.all(out.data == 4.0)

    def test_ramp_window_scan(self):
        ramp = t64(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
        out = maxpool2d(ramp, window=3, stride=2)
        assert np.array_equal(out.data[0], [[10, 11], [14, 15]])

    def test_nonpositive_window_raises(self):
        with pytest.raises(ContractViolation):
            maxpool2d(t64(np.zeros((1, 4, 4))), window=0, stride=1)

    def test_gradcheck(self):
        rng = make_rng(13)
        # distinct values so the argmax is stable under the fd perturbation
        vals = rng.permutation(36).astype(np.float64).reshape(1, 6, 6)
        x = t64(vals * 0.1)
        err = gradcheck(probe(rng, lambda: maxpool2d(x, 3, 2)), [x], tol=1e-3)
        assert err < 1e-3


class TestLinear:
    def test_identity(self):
        x = t64([1.0, -2.0, 3.0])
        out = linear(x, t64(np.eye(3)), t64(np.zeros(3)))
        assert np.allclose(out.data, x.data)

    def test_hand_computed(self):
        out = linear(t64([1.0, 2.0]), t64([[1.0, 1.0], [0.0, 3.0]]), t64([0.0, 1.0]))
        assert np.allclose(out.data, [3.0, 7.0])

    def test_mismatch_raises(self):
        with pytest.raises(ContractViolation):
            linear(t64([1.0, 2.0]), t64(np.zeros((2, 3))), t64(np.zeros(2)))

    def test_gradcheck(self):
        rng = make_rng(17)
        x = t64(rng.standard_normal(4))
        w = t64(rng.standard_normal((3, 4)))
        b = t64(rng.standard_normal(3))
        gradcheck(probe(rng, lambda: linear(x, w, b)), [x, w, b])


class TestPointwise:
    def test_relu_values(self):
        out = relu(t64([-1.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 2.0])

    def test_dropout_inference_is_identity(self):
        x = t64(np.linspace(-1, 1, 10))
        assert dropout(x, 0.7, make_rng(0), training=False) is x

    def test_dropout_p0_is_identity(self):
        x = t64(np.ones(5))
        assert dropout(x, 0.0, make_rng(0), training=True) is x

    def test_dropout_bad_p(self):
        with pytest.raises(ContractViolation):
            dropout(t64(np.ones(3)), 1.0, make_rng(0), training=True)

    def test_dropout_scales_kept_entries(self):
        x = t64(np.ones(1000))
        out = dropout(x, 0.5, make_rng(3), training=True)
        kept = out.data[out.data != 0]
        assert np.allclose(kept, 2.0)

    def test_softmax_simplex(self):
        rng = make_rng(19)
        for _ in range(5):
            s = softmax(t64(rng.standard_normal(7) * 10)).data
            assert np.all(s >= 0)
            assert abs(s.sum() - 1.0) < 1e-6

    def test_upsample_shapes_and_constant(self):
        x = t64(np.full((2, 4, 4), 3.0))
        out = bilinear_upsample(x, 2)
        assert out.shape == (2, 8, 8)
        assert np.allclose(out.data, 3.0)

    def test_gradchecks(self):
        rng = make_rng(23)
        x = t64(rng.standard_normal((2, 4, 4)))
        gradcheck(probe(rng, lambda: relu(x)), [x], tol=1e-3)
        gradcheck(probe(rng, lambda: global_average_pool(x)), [x])
        gradcheck(probe(rng, lambda: bilinear_upsample(x, 3)), [x])
        v = t64(rng.standard_normal(6))
        gradcheck(probe(rng, lambda: softmax(v)), [v])
        mask_rng_seed = 29

        def dropped():
            return dropout(x, 0.4, make_rng(mask_rng_seed), training=True)

        gradcheck(probe(rng, dropped), [x])


class TestWeightedCrossEntropy:
    def test_huge_margin_near_zero_loss(self):
        loss = weighted_softmax_ce(t64([[100.0, -100.0], [-100.0, 100.0]]), [0, 1], [1.0, 1.0])
        assert loss.data.item() == pytest.approx(0.0, abs=1e-6)

    def test_uniform_logits_ln4(self):
        logits = t64(np.zeros((4, 3)))
        loss = weighted_softmax_ce(logits, [0, 1, 2], np.ones(4))
        assert loss.data.item() == pytest.approx(np.log(4.0))

    def test_doubling_weight_doubles_contribution(self):
        rng = make_rng(31)
        logits = t64(rng.standard_normal((3, 2)))
        base = weighted_softmax_ce(logits, [0, 1], [1.0, 1.0, 1.0]).data.item()
        bumped = weighted_softmax_ce(logits, [0, 1], [2.0, 1.0, 1.0]).data.item()
        # pixel 0's term doubles, pixel 1's is untouched
        z = logits.data - logits.data.max(axis=0)
        logp = z - np.log(np.exp(z).sum(axis=0))
        pix0 = -logp[0, 0] / 2
        assert bumped - base == pytest.approx(pix0)

    def test_out_of_range_label_names_position(self):
        with pytest.raises(ContractViolation, match="position 1"):
            weighted_softmax_ce(t64(np.zeros((2, 3))), [0, 5, 1], [1.0, 1.0])

    def test_gradcheck(self):
        rng = make_rng(37)
        logits = t64(rng.standard_normal((4, 6)))
        targets = rng.integers(0, 4, size=6)
        weights = rng.random(4) + 0.5
        gradcheck(lambda: weighted_softmax_ce(logits, targets, weights), [logits])

    def test_softmax_ce_gradcheck(self):
        rng = make_rng(41)
        logits = t64(rng.standard_normal(8))
        gradcheck(lambda: softmax_ce(logits, 3), [logits])


class TestTape:
    def test_second_backward_raises(self):
        x = t64([1.0, 2.0])
        with Tape() as tape:
            loss = weighted_sum(relu(x), np.ones(2))
        backward(tape, loss)
        with pytest.raises(ContractViolation, match="already"):
            backward(tape, loss)

    def test_shared_input_accumulates_once(self):
        x = t64([1.0, 2.0])
        with Tape() as tape:
            a = relu(x)
            b = relu(x)
            loss = weighted_sum(a, np.ones(2))
            loss2 = weighted_sum(b, np.ones(2))
            from sketchparts.autograd import add

            total = add(loss, loss2)
        backward(tape, total)
        assert np.allclose(x.grad, [2.0, 2.0])

    def test_non_scalar_loss_rejected(self):
        x = t64([1.0, 2.0])
        with Tape() as tape:
            y = relu(x)
        with pytest.raises(ContractViolation, match="scalar"):
            backward(tape, y)

    def test_no_tape_records_nothing(self):
        tape = Tape()
        relu(t64([1.0]))
        assert tape.entries == []


class TestDeterminism:
    def test_same_seed_same_stream(self):
        a = make_rng(99).standard_normal(16)
        b = make_rng(99).standard_normal(16)
        assert np.array_equal(a, b)

    def test_dropout_mask_reproducible(self):
        x = t64(np.ones(64))
        o1 = dropout(x, 0.5, make_rng(5), training=True)
        o2 = dropout(x, 0.5, make_rng(5), training=True)
        assert np.array_equal(o1.data, o2.data)
