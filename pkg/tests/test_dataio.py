import numpy as np
import pytest

from cqrsgd.core import Dataset
from cqrsgd.dataio import (
    ColumnSpec,
    RowError,
    SchemaError,
    TabularSchema,
    load_csv,
    save_csv,
    split,
    standardize,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestSchema:
    def test_label_must_differ(self):
        with pytest.raises(ValueError):
            TabularSchema((ColumnSpec("a", "continuous"),), "a")

    def test_needs_features(self):
        with pytest.raises(ValueError):
            TabularSchema((), "y")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ColumnSpec("a", "ordinal")


class TestLoadCsv:
    def test_continuous_roundtrip(self, tmp_path):
        path = write(tmp_path, "a,b,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n0.5,0.25,0.125\n")
        data = load_csv(path, TabularSchema.continuous(["a", "b"], "y"))
        assert data.n == 3 and data.d == 2
        assert data.x[1].tolist() == [4.0, 5.0]
        assert data.y.tolist() == [3.0, 6.0, 0.125]

    def test_categorical_one_hot(self, tmp_path):
        path = write(tmp_path, "a,c,y\n1,red,0\n2,green,0\n3,blue,0\n4,red,0\n")
        schema = TabularSchema(
            (ColumnSpec("a", "continuous"), ColumnSpec("c", "categorical")), "y"
        )
        data = load_csv(path, schema)
        assert data.d == 4  # one continuous + 3 one-hot levels
        # Levels encode in lexicographic order: blue, green, red.
        assert data.x[0, 1:].tolist() == [0.0, 0.0, 1.0]
        assert data.x[1, 1:].tolist() == [0.0, 1.0, 0.0]
        assert data.x[2, 1:].tolist() == [1.0, 0.0, 0.0]

    def test_boolean_encoding(self, tmp_path):
        path = write(tmp_path, "flag,y\ntrue,1\n0,2\nFalse,3\n1,4\n")
        schema = TabularSchema((ColumnSpec("flag", "boolean"),), "y")
        data = load_csv(path, schema)
        assert data.x[:, 0].tolist() == [1.0, 0.0, 0.0, 1.0]

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "a,y\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path, TabularSchema.continuous(["a", "b"], "y"))

    def test_malformed_cell_cites_line(self, tmp_path):
        # Header is file line 1; the bad cell sits on file line 7.
        text = "\n".join(["a,y", "1,1", "2,1", "3,1", "4,1", "5,1", "abc,1"]) + "\n"
        path = write(tmp_path, text)
        with pytest.raises(RowError) as err:
            load_csv(path, TabularSchema.continuous(["a"], "y"))
        assert err.value.line == 7
        assert "line 7" in str(err.value)

    def test_empty_file(self, tmp_path):
        path = write(tmp_path, "")
        with pytest.raises(ValueError):
            load_csv(path, TabularSchema.continuous(["a"], "y"))

    def test_header_only(self, tmp_path):
        path = write(tmp_path, "a,y\n")
        with pytest.raises(ValueError):
            load_csv(path, TabularSchema.continuous(["a"], "y"))

    def test_row_count_preserved(self, tmp_path):
        n = 137
        text = "a,y\n" + "".join(f"{i},{2*i}\n" for i in range(n))
        data = load_csv(write(tmp_path, text), TabularSchema.continuous(["a"], "y"))
        assert data.n == n

    def test_save_load_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = Dataset(rng.normal(size=(20, 3)), rng.normal(size=20))
        path = tmp_path / "out.csv"
        save_csv(data, path)
        again = load_csv(path, TabularSchema.continuous(["x1", "x2", "x3"], "y"))
        assert np.array_equal(again.x, data.x)
        assert np.array_equal(again.y, data.y)


class TestSplit:
    def make_data(self, n=100):
        return Dataset(np.arange(n, dtype=float).reshape(-1, 1), np.arange(n, dtype=float))

    def test_documented_sizes(self):
        # fractions (test, train, cal) = (0.2, 0.6, 0.1) on 100 rows:
        # floor gives 20 test, 10 cal, floor(0.1*100) -> 9 unused in binary
        # float arithmetic, and the train part absorbs the remaining 61.
        train, cal, test = split(self.make_data(), (0.2, 0.6, 0.1), seed=0)
        assert (len(train), len(cal), len(test)) == (61, 10, 20)

    def test_deterministic(self):
        a = split(self.make_data(), (0.2, 0.6, 0.2), seed=5)
        b = split(self.make_data(), (0.2, 0.6, 0.2), seed=5)
        for u, v in zip(a, b):
            assert np.array_equal(u.y, v.y)

    def test_disjoint(self):
        train, cal, test = split(self.make_data(), (0.25, 0.5, 0.25), seed=9)
        ids = np.concatenate([train.y, cal.y, test.y])
        assert len(np.unique(ids)) == len(ids) == 100

    def test_rejects_oversubscription(self):
        with pytest.raises(ValueError):
            split(self.make_data(), (0.5, 0.5, 0.5), seed=0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            split(self.make_data(), (0.0, 0.5, 0.2), seed=0)


class TestStandardize:
    def test_train_moments(self):
        rng = np.random.default_rng(3)
        train = Dataset(rng.normal(5.0, 3.0, size=(500, 4)), rng.normal(size=500))
        scaled, scaler = standardize(train)
        assert np.max(np.abs(scaled.x.mean(axis=0))) <= 1e-12
        assert np.max(np.abs(scaled.x.var(axis=0) - 1)) <= 1e-9

    def test_constant_feature_zeroed(self):
        x = np.column_stack([np.full(50, 7.0), np.arange(50, dtype=float)])
        train = Dataset(x, np.zeros(50))
        scaled, scaler = standardize(train)
        assert np.all(scaled.x[:, 0] == 0.0)

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        train = Dataset(rng.normal(size=(100, 3)) * 10 + 2, rng.normal(size=100))
        scaled, scaler = standardize(train)
        back = scaler.inverse(scaled)
        assert np.max(np.abs(back.x - train.x)) <= 1e-9

    def test_no_leakage(self):
        # The map comes from the training split only: a shifted second
        # dataset does not end up centered.
        rng = np.random.default_rng(5)
        train = Dataset(rng.normal(0.0, 1.0, size=(400, 2)), rng.normal(size=400))
        shifted = Dataset(train.x + 10.0, train.y)
        train_s, shifted_s, scaler = standardize(train, shifted)
        assert np.max(np.abs(train_s.x.mean(axis=0))) <= 1e-12
        assert np.min(shifted_s.x.mean(axis=0)) > 5.0

    def test_labels_untouched(self):
        rng = np.random.default_rng(6)
        train = Dataset(rng.normal(size=(50, 2)), rng.normal(size=50))
        scaled, _ = standardize(train)
        assert np.array_equal(scaled.y, train.y)
