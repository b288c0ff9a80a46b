import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structprompt import autodiff as ad
from structprompt.labels import (
    LabelConfigError,
    LabelSpace,
    alignment_loss,
    build_label_space,
    label_embeddings,
    logits,
    project,
    project_values,
    score,
    score_values,
)

from .conftest import naive_matmul


def space_with(E, W):
    """LabelSpace whose embeddings equal E exactly (Q = I)."""
    C = E.shape[0]
    return LabelSpace([f"l{i}" for i in range(C)], [f"l{i}" for i in range(C)], np.eye(C), E, W)


def align_value(u, E, gold, mode="contrastive", margin=1.0):
    tape = ad.Tape()
    return alignment_loss(tape.constant(u), tape.constant(E), gold, mode, margin).value


class TestBuild:
    def test_no_attributes_is_identity(self):
        space = build_label_space(["a", "b", "c", "d"], seed=1, d_e=5, d_z=3)
        assert np.array_equal(space.Q, np.eye(4))
        assert np.array_equal(space.E, space.M)
        assert space.M.shape == (4, 5) and space.W.shape == (5, 3)

    def test_attribute_normalization(self):
        space = build_label_space(
            ["sports", "business", "tech"],
            {"sports": ["events"], "business": ["money"], "tech": ["science", "money"]},
            d_e=4, d_z=4,
        )
        assert space.attribute_vocab == ["events", "money", "science"]
        assert space.Q.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0.5, 0.5]]

    def test_shared_attributes_give_identical_rows(self, rng):
        space = build_label_space(["x", "y", "z"], {"x": ["p", "q"], "y": ["q", "p"], "z": ["r"]})
        E = space.E
        assert np.array_equal(E[0], E[1])
        z = rng.normal(size=(5, space.d_z))
        probs = score_values(z, space)
        assert np.array_equal(probs[:, 0], probs[:, 1])

    def test_empty_attribute_list_is_error(self):
        with pytest.raises(LabelConfigError, match="'b'"):
            build_label_space(["a", "b"], {"a": ["x"], "b": []})

    def test_missing_label_in_mapping_is_error(self):
        with pytest.raises(LabelConfigError):
            build_label_space(["a", "b"], {"a": ["x"]})

    def test_needs_two_labels(self):
        with pytest.raises(LabelConfigError):
            build_label_space(["a"])

    def test_rows_of_Q_sum_to_one(self):
        space = build_label_space(["a", "b", "c"], {"a": ["x", "y", "z"], "b": ["y"], "c": ["z", "w"]})
        np.testing.assert_array_equal(space.Q.sum(axis=1), 1.0)
        assert (space.Q > 0).any(axis=1).all()

    def test_seeded(self):
        a = build_label_space(["a", "b"], seed=4)
        b = build_label_space(["a", "b"], seed=4)
        assert np.array_equal(a.M, b.M) and np.array_equal(a.W, b.W)

    def test_Q_is_frozen(self):
        space = build_label_space(["a", "b"])
        with pytest.raises(ValueError):
            space.Q[0, 0] = 2.0


class TestProjectAndScore:
    def test_identity_projection(self, rng):
        z = rng.normal(size=(2, 4))
        space = space_with(rng.normal(size=(3, 4)), np.eye(4))
        assert np.array_equal(project_values(z, space), z)

    def test_zero_input(self, rng):
        space = space_with(rng.normal(size=(3, 4)), rng.normal(size=(4, 6)))
        assert not project_values(np.zeros((1, 6)), space).any()

    def test_matches_triple_loop(self, rng):
        z, W = rng.normal(size=(1, 6)), rng.normal(size=(4, 6))
        u = project_values(z, space_with(np.ones((2, 4)), W))
        assert np.array_equal(u, naive_matmul(z.tolist(), W.T.tolist()))

    def test_width_mismatch(self, rng):
        tape = ad.Tape()
        with pytest.raises(ad.ShapeError):
            project(tape.constant(np.ones((1, 5))), tape.constant(np.ones((4, 6))))

    def test_identity_alignment_prefers_class(self):
        space = space_with(np.eye(4), np.eye(4))
        probs = score_values(np.array([[1.0, 0.0, 0.0, 0.0]]), space)[0]
        assert probs[0] > probs[1:].max()

    def test_zero_z_is_uniform(self, rng):
        space = space_with(rng.normal(size=(5, 3)), rng.normal(size=(3, 4)))
        np.testing.assert_array_equal(score_values(np.zeros((1, 4)), space), 0.2)

    def test_two_class_closed_form(self):
        # E = [[1], [0]], W = [[2]], z = [[1]] -> logits [2, 0]
        space = space_with(np.array([[1.0], [0.0]]), np.array([[2.0]]))
        probs = score_values(np.array([[1.0]]), space)[0]
        assert probs[0] == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-15)
        assert probs[1] == pytest.approx(0.11920292202211755, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(-50, 50))
    def test_distribution_and_shift_invariance(self, seed, shift):
        r = np.random.default_rng(seed)
        space = space_with(r.normal(size=(4, 3)), r.normal(size=(3, 5)))
        z = r.normal(size=(3, 5))
        probs = score_values(z, space)
        assert np.abs(probs.sum(axis=1) - 1).max() <= 1e-12
        tape = ad.Tape()
        lg = logits(project(tape.constant(z), tape.constant(space.W)), tape.constant(space.E)).value
        shifted = ad.softmax_rows(tape.constant(lg + shift)).value
        assert np.array_equal(shifted.argmax(axis=1), probs.argmax(axis=1))


class TestAlignment:
    def test_contrastive_zero_at_gold_with_far_negatives(self):
        E = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, -3.0]])
        # d(u, e_i) = 9 / 2 >= margin 1 for the negatives
        assert align_value(np.array([[0.0, 0.0]]), E, 0).tolist() == [[0.0]]

    def test_contrastive_zero_margin_is_pull_only(self, rng):
        u, E = rng.normal(size=(1, 3)), rng.normal(size=(4, 3))
        expected = float(((u[0] - E[2]) ** 2).sum() / 3)
        assert align_value(u, E, 2, margin=0.0)[0, 0] == pytest.approx(expected, rel=1e-14)

    def test_contrastive_hinge_by_hand(self):
        E = np.array([[0.0], [0.5], [2.0]])
        # u = 0, gold 0: pull 0; d to others = 0.25, 4 -> hinges (1 - 0.25), 0 -> mean 0.375
        assert align_value(np.zeros((1, 1)), E, 0)[0, 0] == pytest.approx(0.375, abs=1e-15)

    def test_literal_direct(self):
        E = np.array([[1.0], [-1.0]])
        assert align_value(np.zeros((1, 1)), E, 0, mode="literal")[0, 0] == 2.0

    def test_gold_out_of_range(self):
        with pytest.raises(IndexError):
            align_value(np.zeros((1, 2)), np.ones((3, 2)), 3)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            align_value(np.zeros((1, 2)), np.ones((3, 2)), 0, mode="cosine")

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(["literal", "contrastive"]), st.floats(0, 5))
    def test_non_negative(self, seed, mode, margin):
        r = np.random.default_rng(seed)
        out = align_value(r.normal(size=(4, 3)), r.normal(size=(3, 3)), r.integers(0, 3, size=4), mode, margin)
        assert (out >= 0).all()

    @pytest.mark.parametrize("mode", ["literal", "contrastive"])
    def test_gradients(self, rng, mode):
        space = build_label_space(["a", "b", "c"], {"a": ["x"], "b": ["x", "y"], "c": ["z"]}, seed=1, d_e=4, d_z=5)
        z = rng.normal(size=(3, 5)) * 2
        gold = [0, 2, 1]

        def f(tape, nodes):
            E = label_embeddings(tape.constant(space.Q), nodes["M"])
            u = project(tape.constant(z), nodes["W"])
            ce = ad.mean_all(ad.cross_entropy(score(tape.constant(z), E, nodes["W"]), gold))
            return ad.add(ce, ad.mean_all(alignment_loss(u, E, gold, mode, 1.5)))

        assert ad.grad_check(f, space.params()) < 1e-4
