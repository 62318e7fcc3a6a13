import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpproxy.data import ApiLedger, Dataset, Example
from gpproxy.ensemble import (
    combine_logits,
    ensemble_predictor,
    evaluate,
    predict_ensemble,
    proxy_predictor,
    softmax,
)
from gpproxy.errors import DimensionMismatch, EmptySplit, NonFiniteInput

finite_vecs = st.lists(
    st.floats(-100, 100, allow_nan=False), min_size=2, max_size=6
)


class TestCombineLogits:
    def test_alpha_zero_is_identity(self):
        s_plus = np.array([1.0, 2.0, -0.5])
        out = combine_logits(s_plus, np.array([9.0, 9.0, 9.0]), np.array([3.0, 1.0, 0.0]), 0.0)
        assert np.array_equal(out, s_plus)

    def test_equal_large_and_minus_cancel(self):
        s_plus = np.array([1.0, 2.0])
        s_shared = np.array([4.0, -1.0])
        out = combine_logits(s_plus, s_shared, s_shared, 0.8)
        assert np.array_equal(out, s_plus)

    def test_direct_evaluation(self):
        out = combine_logits(
            np.array([1.0, 2.0]), np.array([2.0, 2.0]), np.array([3.0, 1.0]), 0.8
        )
        assert out == pytest.approx([1.8, 1.2], rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            combine_logits(np.zeros(2), np.zeros(3), np.zeros(2), 1.0)

    def test_alpha_one_matches_plain_shift_rule(self):
        # The alpha=1 special case is literally s_plus + (s_large - s_minus).
        rng = np.random.default_rng(2)
        for _ in range(100):
            sp, sm, sl = rng.standard_normal((3, 5))
            assert np.array_equal(combine_logits(sp, sm, sl, 1.0), sp + (sl - sm))

    @given(finite_vecs, st.floats(-10, 10, allow_nan=False))
    @settings(max_examples=150, deadline=None)
    def test_common_shift_moves_output_by_c_and_keeps_argmax(self, vals, c):
        rng = np.random.default_rng(abs(int(c * 1000)) % 1000)
        v = len(vals)
        sp = np.array(vals)
        sm = rng.standard_normal(v)
        sl = rng.standard_normal(v)
        base = combine_logits(sp, sm, sl, 0.8)
        shifted = combine_logits(sp + c, sm + c, sl + c, 0.8)
        assert shifted == pytest.approx(base + c, abs=1e-9)
        assert int(np.argmax(shifted)) == int(np.argmax(base))
        assert softmax(shifted) == pytest.approx(softmax(base), abs=1e-9)

    def test_argmax_piecewise_constant_in_alpha(self):
        # Combined logits are affine in alpha: at most V-1 argmax breakpoints.
        rng = np.random.default_rng(4)
        for _ in range(20):
            v = int(rng.integers(2, 6))
            sp, sm, sl = rng.standard_normal((3, v))
            grid = np.linspace(-3.0, 3.0, 601)
            argmaxes = [int(np.argmax(combine_logits(sp, sm, sl, a))) for a in grid]
            changes = sum(a != b for a, b in zip(argmaxes, argmaxes[1:]))
            assert changes <= v - 1


class TestSoftmax:
    def test_uniform_for_equal_logits(self):
        assert np.array_equal(softmax(np.zeros(4)), np.full(4, 0.25))

    def test_shift_invariance(self):
        x = np.array([0.1, -2.0, 3.3])
        assert softmax(x + 1234.5) == pytest.approx(softmax(x), abs=1e-12)

    def test_analytic_normalization(self):
        probs = softmax(np.log(np.array([1.0, 2.0, 3.0])))
        assert probs == pytest.approx([1 / 6, 2 / 6, 3 / 6], rel=1e-12)

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteInput):
            softmax(np.array([1.0, np.nan]))
        with pytest.raises(NonFiniteInput):
            softmax(np.array([1.0, np.inf]))

    def test_sums_to_one_on_random_vectors(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            v = int(rng.integers(2, 12))
            probs = softmax(rng.standard_normal(v) * 10.0)
            assert abs(probs.sum() - 1.0) <= 1e-9
            assert np.all(probs >= 0)


class TestPredictEnsemble:
    def test_fields_are_consistent(self):
        rng = np.random.default_rng(6)
        pred = predict_ensemble(*rng.standard_normal((3, 4)), alpha=0.8)
        assert pred.predicted_class == int(np.argmax(pred.combined_logits))
        assert pred.probabilities == pytest.approx(softmax(pred.combined_logits))


class TestEvaluate:
    def test_perfect_predictor(self, blob_dataset):
        result = evaluate(lambda ex: ex.label, blob_dataset)
        assert result.accuracy == 1.0

    def test_adversarial_predictor(self, blob_dataset):
        v = blob_dataset.V
        result = evaluate(lambda ex: (ex.label + 1) % v, blob_dataset)
        assert result.accuracy == 0.0

    def test_three_example_split_with_one_error(self):
        examples = [
            Example(id=f"e{i}", embedding=np.zeros(2), label=i % 2) for i in range(3)
        ]
        ds = Dataset(examples=examples, V=2, d=2)
        result = evaluate(lambda ex: ex.label if ex.id != "e2" else 1 - ex.label, ds)
        assert round(result.accuracy, 4) == pytest.approx(0.6667, abs=1e-9)

    def test_empty_split_rejected(self):
        ds = Dataset(examples=[], V=2, d=2)
        with pytest.raises(EmptySplit):
            evaluate(lambda ex: 0, ds)

    def test_ensemble_predictor_counts_one_query_per_example(self, blob_dataset):
        from gpproxy.oracle import make_synthetic_teacher
        from gpproxy.training import init_proxy

        teacher = make_synthetic_teacher(blob_dataset, capacity=8, epochs=5, seed=0)
        plus = init_proxy("linear_softmax", d=blob_dataset.d, v=blob_dataset.V, seed=1)
        minus = init_proxy("linear_softmax", d=blob_dataset.d, v=blob_dataset.V, seed=2)
        ledger = ApiLedger(len(blob_dataset))
        predictor = ensemble_predictor(plus, minus, teacher, ledger, 0.8)
        result = evaluate(predictor, blob_dataset, ledger=ledger)
        assert result.ledger_unique_delta == len(blob_dataset)
        assert ledger.unique_count == len(blob_dataset)

    def test_proxy_predictor_needs_no_oracle(self, blob_dataset):
        from gpproxy.training import init_proxy

        params = init_proxy("linear_softmax", d=blob_dataset.d, v=blob_dataset.V, seed=3)
        ledger = ApiLedger(len(blob_dataset))
        result = evaluate(proxy_predictor(params), blob_dataset, ledger=ledger)
        assert result.ledger_unique_delta == 0
        assert len(result.predictions) == len(blob_dataset)
