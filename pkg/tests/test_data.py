import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpproxy.data import (
    ApiLedger,
    Dataset,
    Example,
    LogitMapPair,
    LogitMapSet,
    load_dataset,
    save_dataset,
    usage_fraction,
)
from gpproxy.errors import (
    BudgetExceeded,
    DimensionMismatch,
    LabelOutOfRange,
    ParseError,
    ZeroDenominator,
)


class TestUsageFraction:
    def test_partial_usage(self):
        ledger = ApiLedger(denominator=2000)
        for i in range(28):
            ledger.record(f"id-{i}")
        assert usage_fraction(ledger) == pytest.approx(0.0140, abs=1e-12)
        assert ledger.export()["fraction"] == 0.0140

    def test_zero_usage(self):
        assert usage_fraction(ApiLedger(denominator=500)) == 0.0

    def test_full_sweep_is_exactly_one(self):
        ledger = ApiLedger(denominator=100)
        for i in range(100):
            ledger.record(f"id-{i}")
        assert usage_fraction(ledger) == 1.0

    def test_zero_denominator(self):
        with pytest.raises(ZeroDenominator):
            usage_fraction(ApiLedger(denominator=0))


class TestApiLedger:
    def test_rerecording_never_decreases_or_grows_unique(self):
        ledger = ApiLedger(denominator=10)
        assert ledger.record("a") is True
        before = ledger.unique_count
        assert ledger.record("a") is False
        assert ledger.unique_count == before == 1
        assert ledger.total_requests == 2

    def test_unique_bounded_by_total(self):
        ledger = ApiLedger(denominator=10)
        for key in ["a", "b", "a", "c", "b"]:
            ledger.record(key)
        assert ledger.unique_count == 3
        assert ledger.total_requests == 5
        assert ledger.unique_count <= ledger.total_requests

    def test_budget_cap_blocks_new_ids_only(self):
        ledger = ApiLedger(denominator=10)
        ledger.record("a", budget_cap=1)
        ledger.record("a", budget_cap=1)  # seen id passes
        with pytest.raises(BudgetExceeded):
            ledger.record("b", budget_cap=1)
        assert ledger.unique_count == 1

    def test_concurrent_records_never_double_count(self):
        ledger = ApiLedger(denominator=100)
        ids = [f"id-{i % 20}" for i in range(400)]

        def worker(chunk):
            for key in chunk:
                ledger.record(key)

        threads = [threading.Thread(target=worker, args=(ids[i::8],)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert ledger.unique_count == 20
        assert ledger.total_requests == 400

    def test_export_schema(self):
        ledger = ApiLedger(denominator=3)
        ledger.record("x")
        blob = ledger.export()
        assert set(blob) == {"unique", "total", "denominator", "fraction"}
        assert blob == {"unique": 1, "total": 1, "denominator": 3, "fraction": 0.3333}

    def test_timeline_records_new_ids_in_order(self):
        ledger = ApiLedger(denominator=5)
        for key in ["a", "b", "a", "c"]:
            ledger.record(key)
        assert [ex_id for _, ex_id in ledger.timeline()] == ["a", "b", "c"]


class TestLoadDataset:
    def test_three_row_jsonl(self, tmp_path):
        path = tmp_path / "tiny.jsonl"
        rows = [
            {"id": "a", "features": [0.0, 1.0], "label": 0},
            {"id": "b", "features": [1.0, 0.0], "label": 1},
            {"id": "c", "features": [0.5, 0.5], "label": 1},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        ds = load_dataset(path)
        assert (len(ds), ds.d, ds.V) == (3, 2, 2)

    def test_ragged_features_rejected(self, tmp_path):
        path = tmp_path / "ragged.jsonl"
        path.write_text(
            json.dumps({"id": "a", "features": [0.0, 1.0], "label": 0})
            + "\n"
            + json.dumps({"id": "b", "features": [1.0, 0.0, 2.0], "label": 1})
        )
        with pytest.raises(DimensionMismatch):
            load_dataset(path)

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "features": [0.0], "label": 0}\nnot json\n')
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_label_above_declared_v(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps({"V": 2, "d": 1})
            + "\n"
            + json.dumps({"id": "a", "features": [0.0], "label": 5})
        )
        with pytest.raises(LabelOutOfRange):
            load_dataset(path)

    def test_negative_label(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"id": "a", "features": [0.0], "label": -1}))
        with pytest.raises(LabelOutOfRange):
            load_dataset(path)

    def test_csv_header_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(ParseError):
            load_dataset(path)

    @pytest.mark.parametrize("fmt", ["jsonl", "csv"])
    def test_round_trip_bit_exact_random_datasets(self, tmp_path, fmt):
        # Round-trip oracle: every float must survive save -> load unchanged.
        rng = np.random.default_rng(42)
        for trial in range(100):
            n = int(rng.integers(1, 12))
            d = int(rng.integers(1, 5))
            v = int(rng.integers(2, 5))
            examples = [
                Example(
                    id=f"r{trial}-{i}",
                    embedding=rng.standard_normal(d) * 10.0 ** rng.integers(-3, 4),
                    label=int(i % v) if i < v else int(rng.integers(v)),
                )
                for i in range(max(n, v))
            ]
            ds = Dataset(examples=examples, V=v, d=d)
            path = tmp_path / f"ds-{trial}.{fmt}"
            save_dataset(ds, path)
            loaded = load_dataset(path)
            assert (loaded.V, loaded.d, len(loaded)) == (ds.V, ds.d, len(ds))
            for orig, back in zip(ds.examples, loaded.examples):
                assert orig.id == back.id
                assert orig.label == back.label
                assert np.array_equal(orig.embedding, back.embedding)


class TestDatasetInvariants:
    def test_duplicate_ids_rejected(self):
        ex = Example(id="a", embedding=np.zeros(2), label=0)
        with pytest.raises(ParseError):
            Dataset(examples=[ex, ex], V=1, d=2)

    def test_label_out_of_range_rejected(self):
        ex = Example(id="a", embedding=np.zeros(2), label=3)
        with pytest.raises(LabelOutOfRange):
            Dataset(examples=[ex], V=2, d=2)

    @given(st.integers(min_value=1, max_value=30))
    @settings(max_examples=20, deadline=None)
    def test_features_matrix_matches_examples(self, n):
        rng = np.random.default_rng(n)
        examples = [
            Example(id=f"e{i}", embedding=rng.standard_normal(3), label=int(i % 2))
            for i in range(n)
        ]
        ds = Dataset(examples=examples, V=2, d=3)
        assert ds.features.shape == (n, 3)
        assert np.array_equal(ds.features[n - 1], examples[n - 1].embedding)


class TestApplyEmbedder:
    def test_identity_embedder_preserves_everything(self):
        rng = np.random.default_rng(1)
        examples = [
            Example(id=f"e{i}", embedding=rng.standard_normal(3), label=i % 2) for i in range(5)
        ]
        ds = Dataset(examples=examples, V=2, d=3)
        from gpproxy.data import apply_embedder

        same = apply_embedder(ds, lambda feats: feats)
        assert np.array_equal(same.features, ds.features)
        assert [ex.id for ex in same] == [ex.id for ex in ds]

    def test_projection_changes_dimension(self):
        rng = np.random.default_rng(2)
        examples = [
            Example(id=f"e{i}", embedding=rng.standard_normal(4), label=0) for i in range(6)
        ]
        ds = Dataset(examples=examples, V=1, d=4)
        from gpproxy.data import apply_embedder

        projected = apply_embedder(ds, lambda feats: feats[:, :2])
        assert projected.d == 2
        assert projected.features.shape == (6, 2)

    def test_wrong_row_count_rejected(self):
        ds = Dataset(
            examples=[Example(id="a", embedding=np.zeros(2), label=0)], V=1, d=2
        )
        from gpproxy.data import apply_embedder

        with pytest.raises(DimensionMismatch):
            apply_embedder(ds, lambda feats: np.zeros((3, 2)))


class TestLogitMapSet:
    def test_duplicate_ids_rejected(self):
        pair = LogitMapPair(example_id="a", embedding=np.zeros(2), oracle_logits=np.zeros(3))
        with pytest.raises(ParseError):
            LogitMapSet(pairs=[pair, pair])

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        pairs = [
            LogitMapPair(
                example_id=f"p{i}",
                embedding=rng.standard_normal(4),
                oracle_logits=rng.standard_normal(3),
            )
            for i in range(7)
        ]
        original = LogitMapSet(pairs=pairs)
        path = tmp_path / "pairs.jsonl"
        original.save(path)
        loaded = LogitMapSet.load(path)
        assert loaded.M == original.M
        assert np.array_equal(loaded.inputs(), original.inputs())
        assert np.array_equal(loaded.targets(), original.targets())
