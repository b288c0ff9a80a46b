import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from structprompt import autodiff as ad


def leaf(tape, value, name=None):
    return tape.leaf(value, trainable=name is not None, name=name)


class TestMatmul:
    def test_identity(self, rng):
        tape = ad.Tape()
        b = rng.normal(size=(3, 4))
        out = ad.matmul(tape.constant(np.eye(3)), tape.constant(b))
        assert np.array_equal(out.value, b)

    def test_zero(self, rng):
        tape = ad.Tape()
        out = ad.matmul(tape.constant(rng.normal(size=(2, 3))), tape.constant(np.zeros((3, 5))))
        assert out.shape == (2, 5)
        assert not out.value.any()

    def test_hand_product(self):
        tape = ad.Tape()
        out = ad.matmul(tape.constant([[1, 2], [3, 4]]), tape.constant([[5], [6]]))
        assert out.value.tolist() == [[17.0], [39.0]]

    def test_mismatch_names_both_shapes(self):
        tape = ad.Tape()
        with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))

    def test_backward_rules(self, rng):
        a0, b0 = rng.normal(size=(2, 3)), rng.normal(size=(3, 4))
        tape = ad.Tape()
        a, b = leaf(tape, a0, "a"), leaf(tape, b0, "b")
        grads = tape.backward(ad.sum_all(ad.matmul(a, b)))
        dc = np.ones((2, 4))
        np.testing.assert_allclose(grads["a"], dc @ b0.T, rtol=1e-14)
        np.testing.assert_allclose(grads["b"], a0.T @ dc, rtol=1e-14)


class TestShapeOps:
    def test_add_zero_is_identity(self, rng):
        tape = ad.Tape()
        a = rng.normal(size=(3, 2))
        assert np.array_equal(ad.add(tape.constant(a), tape.constant(np.zeros((3, 2)))).value, a)

    def test_scale_one_is_identity(self, rng):
        tape = ad.Tape()
        a = rng.normal(size=(3, 2))
        assert np.array_equal(ad.scale(tape.constant(a), 1.0).value, a)

    def test_concat_cols_shape(self):
        tape = ad.Tape()
        out = ad.concat_cols(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 4))))
        assert out.shape == (2, 7)

    @pytest.mark.parametrize("op", [ad.add, ad.sub])
    def test_elementwise_mismatch(self, op):
        tape = ad.Tape()
        with pytest.raises(ad.ShapeError):
            op(tape.constant(np.ones((2, 3))), tape.constant(np.ones((3, 2))))

    def test_concat_row_mismatch(self):
        tape = ad.Tape()
        with pytest.raises(ad.ShapeError):
            ad.concat_cols(tape.constant(np.ones((2, 3))), tape.constant(np.ones((3, 3))))

    def test_add_row_broadcast_mismatch(self):
        tape = ad.Tape()
        with pytest.raises(ad.ShapeError):
            ad.add_row(tape.constant(np.ones((2, 3))), tape.constant(np.ones((1, 2))))


class TestSoftmax:
    def test_uniform(self):
        tape = ad.Tape()
        assert ad.softmax_row(tape.constant([[0, 0, 0, 0]])).value.tolist() == [[0.25] * 4]

    def test_singleton(self):
        tape = ad.Tape()
        assert ad.softmax_row(tape.constant([[3.7]])).value.tolist() == [[1.0]]

    def test_two_way_closed_form(self):
        tape = ad.Tape()
        out = ad.softmax_row(tape.constant([[2.0, 0.0]])).value[0]
        first = 1.0 / (1.0 + math.exp(-2.0))
        assert out[0] == pytest.approx(first, abs=1e-15)
        assert out[1] == pytest.approx(1.0 - first, abs=1e-15)
        assert out[0] == pytest.approx(0.8807970779778823, abs=1e-15)

    def test_empty_input(self):
        tape = ad.Tape()
        with pytest.raises(ad.ShapeError):
            ad.softmax_row(tape.constant(np.zeros((1, 0))))

    def test_large_logits_stay_finite(self):
        tape = ad.Tape()
        out = ad.softmax_row(tape.constant([[1000.0, 0.0, -1000.0]])).value
        assert np.isfinite(out).all()
        assert out[0, 0] == 1.0

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 12)),
                  elements=st.floats(-50, 50, allow_nan=False)))
    def test_rows_are_distributions(self, x):
        tape = ad.Tape()
        y = ad.softmax_rows(tape.constant(x)).value
        assert ((y >= 0) & (y <= 1)).all()
        assert np.abs(y.sum(axis=1) - 1.0).max() <= 1e-12


class TestCrossEntropy:
    def test_perfect_prediction(self):
        tape = ad.Tape()
        loss = ad.cross_entropy(tape.constant([[0.0, 1.0, 0.0]]), 1).item()
        assert loss == pytest.approx(0.0, abs=1e-11)

    @pytest.mark.parametrize("gold", range(4))
    def test_uniform(self, gold):
        tape = ad.Tape()
        loss = ad.cross_entropy(tape.constant([[0.25] * 4]), gold).item()
        assert loss == pytest.approx(math.log(4), abs=1e-11)
        assert loss == pytest.approx(1.38629, abs=1e-5)

    def test_direct_log(self):
        tape = ad.Tape()
        loss = ad.cross_entropy(tape.constant([[0.7, 0.3]]), 1).item()
        assert loss == pytest.approx(-math.log(0.3), abs=1e-11)
        assert loss == pytest.approx(1.20397, abs=1e-5)

    @pytest.mark.parametrize("gold", [-1, 2])
    def test_gold_out_of_range(self, gold):
        tape = ad.Tape()
        with pytest.raises(IndexError):
            ad.cross_entropy(tape.constant([[0.5, 0.5]]), gold)


class TestBackward:
    def test_sum_gives_ones(self, rng):
        tape = ad.Tape()
        a = leaf(tape, rng.normal(size=(3, 5)), "a")
        grads = tape.backward(ad.sum_all(a))
        assert np.array_equal(grads["a"], np.ones((3, 5)))

    def test_disconnected_param_gets_zero(self, rng):
        tape = ad.Tape()
        a = leaf(tape, rng.normal(size=(2, 2)), "a")
        b = leaf(tape, rng.normal(size=(4, 1)), "b")
        grads = tape.backward(ad.sum_all(ad.square(a)))
        assert np.array_equal(grads["b"], np.zeros((4, 1)))

    def test_constants_receive_no_gradient(self, rng):
        tape = ad.Tape()
        a = leaf(tape, rng.normal(size=(2, 2)), "a")
        c = tape.constant(rng.normal(size=(2, 2)))
        grads = tape.backward(ad.sum_all(ad.matmul(a, c)))
        assert set(grads) == {"a"}

    def test_softmax_cross_entropy_closed_form(self):
        w0 = np.array([[0.3, -1.2, 2.0, 0.5]])
        tape = ad.Tape()
        w = leaf(tape, w0, "w")
        probs = ad.softmax_row(w)
        loss = ad.mean_all(ad.cross_entropy(probs, 2))
        grads = tape.backward(loss)
        onehot = np.array([[0.0, 0.0, 1.0, 0.0]])
        np.testing.assert_allclose(grads["w"], probs.value - onehot, atol=1e-11)

        def f(tape, nodes):
            return ad.mean_all(ad.cross_entropy(ad.softmax_row(nodes["w"]), 2))

        assert ad.grad_check(f, {"w": w0}) < 1e-6

    def test_second_backward_is_rejected(self):
        tape = ad.Tape()
        a = leaf(tape, [[1.0]], "a")
        root = ad.sum_all(a)
        tape.backward(root)
        with pytest.raises(ad.TapeError):
            tape.backward(root)

    def test_root_from_other_tape(self):
        t1, t2 = ad.Tape(), ad.Tape()
        leaf(t1, [[1.0]], "a")
        other = ad.sum_all(leaf(t2, [[1.0]], "b"))
        with pytest.raises(ad.TapeError):
            t1.backward(other)

    def test_non_scalar_root(self):
        tape = ad.Tape()
        a = leaf(tape, np.ones((2, 2)), "a")
        with pytest.raises(ad.ShapeError):
            tape.backward(ad.square(a))

    def test_mixing_tapes_rejected(self):
        t1, t2 = ad.Tape(), ad.Tape()
        with pytest.raises(ad.TapeError):
            ad.add(t1.constant([[1.0]]), t2.constant([[1.0]]))

    def test_fan_out_accumulates(self):
        tape = ad.Tape()
        a = leaf(tape, [[3.0]], "a")
        root = ad.sum_all(ad.add(a, ad.scale(a, 2.0)))
        assert tape.backward(root)["a"].tolist() == [[3.0]]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_result_raises(self):
        tape = ad.Tape()
        with pytest.raises(ad.NumericError):
            ad.scale(tape.constant([[1e308]]), 10.0)


class TestGradCheck:
    def test_quadratic(self, rng):
        def f(tape, nodes):
            return ad.scale(ad.sum_all(ad.square(nodes["x"])), 0.5)

        x = rng.normal(size=(3, 4))
        tape = ad.Tape()
        node = tape.leaf(x, trainable=True, name="x")
        np.testing.assert_allclose(tape.backward(f(tape, {"x": node}))["x"], x, rtol=1e-15)
        assert ad.grad_check(f, {"x": x}) < 1e-6

    def test_constant_function(self, rng):
        def f(tape, nodes):
            return tape.constant([[4.2]])

        assert ad.grad_check(f, {"x": rng.normal(size=(2, 2))}) == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_function(self):
        def f(tape, nodes):
            return ad.scale(ad.sum_all(nodes["x"]), 1e308)

        with pytest.raises(ad.NumericError):
            ad.grad_check(f, {"x": [[10.0]]})

    @pytest.mark.parametrize("op", ["row_normalize", "pairwise_sqdist", "relu_hinge", "pick", "concat"])
    def test_op_gradients(self, rng, op):
        def f(tape, nodes):
            a, b = nodes["a"], nodes["b"]
            if op == "row_normalize":
                out = ad.row_normalize(a)
            elif op == "pairwise_sqdist":
                out = ad.pairwise_sqdist(a, b)
            elif op == "relu_hinge":
                out = ad.relu(ad.shift(ad.scale(ad.pairwise_sqdist(a, b), -1.0), 6.0))
            elif op == "pick":
                out = ad.pick(ad.matmul(a, ad.transpose(b)), [1, 0, 2])
            else:
                out = ad.concat_cols(a, ad.transpose(ad.matmul(b, ad.transpose(a))))
            weights = tape.constant(np.linspace(-1, 1, out.value.size).reshape(out.shape))
            return ad.sum_all(ad.mul_const(ad.square(out), weights.value))

        params = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(3, 4))}
        assert ad.grad_check(f, params) < 1e-6
