import numpy as np
import pytest

from graphrec.attributes import (AttributeSchema, apply_update, encode,
                                 init_missing, load_attributes, load_schema, mask)
from graphrec.toy import write_toy_files


def schema_single_multi():
    return AttributeSchema([("gender", "single", ["m", "f"]),
                            ("genre", "multi", ["a", "b", "c", "d"])])


class TestSchema:
    def test_offsets_contiguous(self):
        s = schema_single_multi()
        assert s.fields[0].offset == 0
        assert s.fields[1].offset == 2
        assert s.total_dim == 6

    def test_single_needs_two_categories(self):
        with pytest.raises(ValueError, match="single-label"):
            AttributeSchema([("x", "single", ["only"])])

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            AttributeSchema([("x", "ordinal", ["a", "b"])])

    def test_duplicate_names(self):
        with pytest.raises(ValueError, match="duplicate"):
            AttributeSchema([("x", "single", ["a", "b"]), ("x", "single", ["c", "d"])])

    def test_dict_round_trip(self):
        s = schema_single_multi()
        s2 = AttributeSchema.from_dict(s.to_dict())
        assert [f.name for f in s2] == ["gender", "genre"]
        assert s2.total_dim == s.total_dim


class TestEncode:
    def test_one_hot(self):
        s = AttributeSchema([("gender", "single", ["m", "f"])])
        t = encode([{"gender": 0}], s)
        assert t.values.tolist() == [[1.0, 0.0]]

    def test_multi_hot(self):
        s = AttributeSchema([("genre", "multi", ["a", "b", "c", "d"])])
        t = encode([{"genre": [0, 2]}], s)
        assert t.values.tolist() == [[1.0, 0.0, 1.0, 0.0]]

    def test_concatenated_blocks(self):
        s = AttributeSchema([("f", "single", ["a", "b"]), ("g", "multi", ["x", "y", "z"])])
        t = encode([{"f": 1, "g": [0]}], s)
        assert t.values.tolist() == [[0.0, 1.0, 1.0, 0.0, 0.0]]

    def test_indicator_and_truth(self):
        s = schema_single_multi()
        t = encode([{"gender": 1}, {"genre": [3]}], s)
        assert t.indicator[0].tolist() == [1, 1, 0, 0, 0, 0]
        assert t.indicator[1].tolist() == [0, 0, 1, 1, 1, 1]
        assert np.array_equal(t.ground_truth, t.values)

    def test_unknown_field(self):
        s = schema_single_multi()
        with pytest.raises(ValueError, match="unknown field"):
            encode([{"age": 0}], s)

    def test_category_out_of_range(self):
        s = schema_single_multi()
        with pytest.raises(ValueError, match="entity 0.*gender"):
            encode([{"gender": 5}], s)


class TestMask:
    def test_alpha_zero_is_noop(self):
        s = schema_single_multi()
        t = encode([{"gender": 0, "genre": [1]}] * 4, s)
        m = mask(t, 0.0, seed=1)
        assert np.array_equal(m.values, t.values)
        assert m.masked == []

    def test_floor_count_and_determinism(self):
        s = AttributeSchema([("f", "single", ["a", "b"])])
        t = encode([{"f": i % 2} for i in range(10)], s)
        m1 = mask(t, 0.9, seed=42)
        m2 = mask(t, 0.9, seed=42)
        assert len(m1.masked) == 9
        assert m1.masked == m2.masked
        assert np.array_equal(m1.values, m2.values)

    def test_per_field_independence(self):
        s = AttributeSchema([("f", "single", ["a", "b"]), ("g", "single", ["c", "d"])])
        t = encode([{"f": 0, "g": 1}] * 4, s)
        m = mask(t, 0.5, seed=3)
        per_field = {}
        for e, f_idx in m.masked:
            per_field.setdefault(f_idx, set()).add(e)
        assert len(per_field[0]) == 2
        assert len(per_field[1]) == 2

    def test_ground_truth_preserved(self):
        s = schema_single_multi()
        t = encode([{"gender": 0, "genre": [1, 2]}] * 6, s)
        m = mask(t, 0.5, seed=9)
        assert np.array_equal(m.ground_truth, t.values)
        # unmasking via ground_truth restores the encode output exactly
        restored = m.values * m.indicator + m.ground_truth * (1 - m.indicator)
        assert np.array_equal(restored, t.values)

    def test_indicator_field_granular(self):
        s = schema_single_multi()
        t = encode([{"gender": 0, "genre": [1]}] * 8, s)
        m = mask(t, 0.5, seed=4)
        for f in s:
            blk = m.indicator[:, f.block]
            assert np.all((blk == blk[:, :1]))

    def test_alpha_out_of_range(self):
        s = schema_single_multi()
        t = encode([{"gender": 0}], s)
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError, match="alpha"):
                mask(t, bad, seed=0)


class TestInitMissing:
    def test_all_observed_passthrough(self):
        s = AttributeSchema([("f", "single", ["a", "b"])])
        t = encode([{"f": 0}, {"f": 1}], s)
        assert np.array_equal(init_missing(t), t.values)

    def test_observed_mean_fills_missing(self):
        s = AttributeSchema([("f", "single", ["a", "b"])])
        t = encode([{"f": 0}, {"f": 1}, {"f": 0}, {}], s)
        X0 = init_missing(t)
        # dim 0 observed values {1,0,1} -> missing entry = 2/3
        assert X0[3, 0] == pytest.approx(2.0 / 3.0)
        assert X0[3, 1] == pytest.approx(1.0 / 3.0)

    def test_all_zero_dimension(self):
        s = AttributeSchema([("g", "multi", ["x", "y"])])
        t = encode([{"g": [0]}, {"g": [0]}, {}], s)
        X0 = init_missing(t)
        assert X0[2, 1] == 0.0  # mean of observed zeros

    def test_unobserved_dimension_errors(self):
        s = AttributeSchema([("f", "single", ["a", "b"])])
        t = encode([{}, {}], s)
        with pytest.raises(ValueError, match="dimension 0"):
            init_missing(t)
        X0 = init_missing(t, fallback=0.0)
        assert np.all(X0 == 0.0)

    def test_observed_positions_unchanged(self):
        s = schema_single_multi()
        t = mask(encode([{"gender": i % 2, "genre": [i % 4]} for i in range(10)], s),
                 0.5, seed=2)
        X0 = init_missing(t)
        obs = t.indicator == 1
        assert np.array_equal(X0[obs], t.values[obs])


class TestApplyUpdate:
    def setup_method(self):
        s = AttributeSchema([("f", "single", ["a", "b"])])
        self.table = encode([{"f": 0}, {}], s)

    def test_all_observed_keeps_current(self):
        t = self.table
        t.indicator[:] = 1.0
        cur = np.array([[1.0, 0.0], [0.5, 0.5]])
        inf = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert np.array_equal(apply_update(cur, inf, t), cur)

    def test_all_missing_takes_inferred(self):
        t = self.table
        t.indicator[:] = 0.0
        cur = np.zeros((2, 2))
        inf = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert np.array_equal(apply_update(cur, inf, t), inf)

    def test_elementwise_mix(self):
        t = self.table
        t.indicator[:] = np.array([[1.0, 1.0], [0.0, 0.0]])
        cur = np.array([[1.0, 0.0], [0.5, 0.5]])
        inf = np.array([[0.9, 0.1], [0.2, 0.8]])
        out = apply_update(cur, inf, t)
        assert out.tolist() == [[1.0, 0.0], [0.2, 0.8]]

    def test_idempotence(self):
        rng = np.random.default_rng(3)
        t = self.table
        t.indicator[:] = rng.integers(0, 2, size=(2, 2)).astype(float)
        cur = rng.random((2, 2))
        inf = rng.random((2, 2))
        once = apply_update(cur, inf, t)
        twice = apply_update(once, inf, t)
        assert np.array_equal(once, twice)
        obs = t.indicator == 1
        assert np.array_equal(once[obs], cur[obs])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            apply_update(np.zeros((2, 2)), np.zeros((3, 2)), self.table)


class TestFileFormats:
    def test_toy_files_round_trip(self, tmp_path):
        paths = write_toy_files(tmp_path, num_users=10, num_items=8, seed=1)
        schema = load_schema(paths["user_schema"])
        assert [f.name for f in schema] == ["group", "tags"]
        id_map = {f"u{a}": a for a in range(10)}
        table = load_attributes(paths["user_attrs"], schema, 10, id_map, side="user")
        assert table.values.shape == (10, 5)
        assert np.all(table.indicator == 1.0)
        # single-label blocks are exactly one-hot
        assert np.all(table.values[:, :2].sum(axis=1) == 1.0)

    def test_bad_category_value(self, tmp_path):
        sp = tmp_path / "schema.tsv"
        sp.write_text("color\tsingle\tred|blue\n")
        ap = tmp_path / "attrs.tsv"
        ap.write_text("e0\tcolor=green\n")
        schema = load_schema(sp)
        with pytest.raises(ValueError, match="color"):
            load_attributes(ap, schema, 1, {"e0": 0})

    def test_empty_schema(self, tmp_path):
        sp = tmp_path / "schema.tsv"
        sp.write_text("\n")
        with pytest.raises(ValueError, match="empty"):
            load_schema(sp)
