import numpy as np
import pytest

from dncc.errors import ConfigurationError, DimensionError
from dncc.model import BackboneSpec, EnsembleConfig, EnsembleModel, ensemble_probabilities


def build(D=6, widths=(16, 16), M=4, K=3, mode="split", depth=0, seed=0):
    return EnsembleModel(BackboneSpec(D, widths, branch_depth=depth), EnsembleConfig(M, K, mode, seed))


def closed_form_counts(D, widths, M, K, mode, depth):
    """Independent parameter-count oracle: returns (shared, total)."""
    L = len(widths)
    dense = lambda a, b: a * b + b
    dims = [D, *widths]
    shared = sum(dense(dims[q], dims[q + 1]) for q in range(L - depth))
    slice_w = widths[-1] // M if mode == "split" else widths[-1]
    per_head = 0
    for q in range(L - depth, L):
        out = slice_w if (q == L - 1 and mode == "split") else dims[q + 1]
        per_head += dense(dims[q], out)
    if mode == "expand_split":
        per_head += dense(widths[-1], slice_w)
    per_head += dense(slice_w, K)
    return shared, shared + M * per_head


class TestConstruction:
    def test_same_seed_bitwise(self):
        a, b = build(seed=3), build(seed=3)
        for (ka, ta), (kb, tb) in zip(a.parameters(), b.parameters()):
            assert ka == kb and ta.data.tobytes() == tb.data.tobytes()

    def test_different_seed_differs(self):
        assert not np.array_equal(build(seed=0).params["head0.out.W"].data,
                                  build(seed=1).params["head0.out.W"].data)

    def test_slice_width(self):
        m = build(widths=(64,), M=8)
        assert m.slice_width == 8
        assert all(W.shape == (3, 8) for W in m.head_weight_matrices())

    def test_divisibility_error_names_divisor(self):
        with pytest.raises(ConfigurationError, match="num_heads=3"):
            build(widths=(16,), M=3)

    def test_expand_split_allows_any_width(self):
        m = build(widths=(10,), M=3, mode="expand_split")
        assert m.slice_width == 10
        assert len(m.forward(np.zeros((2, 6)))) == 3

    @pytest.mark.parametrize("bad", [dict(M=0), dict(K=1), dict(mode="tree"), dict(depth=3)])
    def test_invalid_config(self, bad):
        with pytest.raises(ConfigurationError):
            build(**bad)

    def test_weight_matrix_shapes(self):
        m = build(widths=(16,), M=2, K=3)
        assert [W.shape for W in m.head_weight_matrices()] == [(3, 8), (3, 8)]


class TestParamCount:
    @pytest.mark.parametrize("mode", ["split", "expand_split"])
    @pytest.mark.parametrize("widths", [(16,), (16, 16), (8, 24, 16)])
    @pytest.mark.parametrize("M", [1, 2, 4, 8])
    def test_closed_form(self, mode, widths, M):
        for depth in range(len(widths) + 1):
            m = build(widths=widths, M=M, K=5, mode=mode, depth=depth)
            shared, total = closed_form_counts(6, widths, M, 5, mode, depth)
            assert m.shared_param_count() == shared
            assert m.param_count() == total

    def test_fraction_zero_when_fully_branched(self):
        assert build(depth=2).shared_param_fraction() == 0.0

    def test_fraction_decreases_with_depth(self):
        fr = [build(widths=(16, 16, 16), depth=d).shared_param_fraction() for d in range(4)]
        assert all(a > b for a, b in zip(fr, fr[1:]))

    def test_single_trivial_head_fraction_near_one(self):
        m = build(D=20, widths=(256, 256), M=1, K=2)
        assert m.shared_param_fraction() > 0.99


class TestForward:
    def test_shapes(self):
        out = build(M=4, K=3).forward(np.random.default_rng(0).normal(size=(4, 6)))
        assert [o.shape for o in out] == [(4, 3)] * 4

    def test_zero_input_zero_logits(self):
        out = build().forward(np.zeros((3, 6)))
        assert all(np.all(o.data == 0) for o in out)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            build().forward(np.zeros((3, 5)))

    def test_forced_symmetry(self):
        m = build(widths=(8,), M=2)
        # give both heads the same slice by making the shared layer's halves equal
        W = m.params["shared.0.W"].data
        W[:, 4:] = W[:, :4]
        m.params["head1.out.W"].data = m.params["head0.out.W"].data.copy()
        out = m.forward(np.random.default_rng(1).normal(size=(5, 6)))
        np.testing.assert_array_equal(out[0].data, out[1].data)

    def test_slices_are_disjoint(self):
        m = build(widths=(8,), M=2)
        x = np.random.default_rng(2).normal(size=(3, 6))
        logits = m.forward(x)
        # perturbing head 1's slice of the shared output leaves head 0 untouched
        m.params["shared.0.W"].data[:, 4:] += 1.0
        after = m.forward(x)
        np.testing.assert_array_equal(logits[0].data, after[0].data)
        assert not np.array_equal(logits[1].data, after[1].data)

    def test_branched_forward_gradients_reach_every_parameter(self):
        m = build(depth=1, mode="expand_split")
        out = m.forward(np.random.default_rng(3).normal(size=(4, 6)))
        total = out[0].sum()
        for o in out[1:]:
            total = total + (o * o).sum()
        total.backward()
        missing = [k for k, t in m.parameters() if t.grad is None]
        assert not missing


class TestPredict:
    def test_hand_average(self):
        logits = [np.log([[0.6, 0.4]]), np.log([[0.2, 0.8]])]
        np.testing.assert_allclose(ensemble_probabilities(logits), [[0.4, 0.6]], atol=1e-15)

    def test_tie_goes_to_lowest_index(self):
        m = build(M=1, K=2)
        labels, probs = m.predict(np.zeros((1, 6)))
        np.testing.assert_array_equal(probs, [[0.5, 0.5]])
        assert labels[0] == 0

    def test_single_head_matches_argmax(self):
        m = build(M=1, K=3)
        x = np.random.default_rng(4).normal(size=(20, 6))
        labels, _ = m.predict(x)
        np.testing.assert_array_equal(labels, m.forward(x)[0].data.argmax(axis=1))


def test_state_round_trip():
    a, b = build(seed=0), build(seed=1)
    b.load_state_arrays(a.state_arrays())
    x = np.random.default_rng(5).normal(size=(3, 6))
    for la, lb in zip(a.forward(x), b.forward(x)):
        assert la.data.tobytes() == lb.data.tobytes()


def test_description_round_trip():
    a = build(mode="expand_split", depth=1, seed=9)
    b = EnsembleModel.from_description(a.describe())
    assert a.describe() == b.describe()
    assert all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)
