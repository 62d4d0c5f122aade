# coding:utf-8
import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.common.exception_handler import ContractViolation, CsvParseError, DataError, SchemaError
from app.services.data_service import (SYNTHETIC_MEANS, ColumnKind, ColumnSpec, FeatureSchema, TabularPreprocessor,
                                       encoded_feature_names, fit_transform, inverse_transform, inverse_transform_row,
                                       load_breast_cancer, load_csv, load_schema_declaration, split, split_indices,
                                       split_table, synthetic_gaussian_3class, synthetic_gaussian_raw, transform,
                                       validate_encoded_rows)

from conftest import warnings_of


def _declaration(label_classes=()):
    return FeatureSchema(
        (ColumnSpec("age", ColumnKind.CONTINUOUS), ColumnSpec("color", ColumnKind.CATEGORICAL, ("a", "b", "c"))),
        "y",
        label_classes,
    )


def _table():
    return pd.DataFrame({"age": [0.0, 5.0, 10.0], "color": ["a", "b", "c"], "y": ["no", "yes", "no"]})


@pytest.fixture
def csvFile(tmp_path):
    def write(text, name="rows.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write


def test_load_csv_types_columns(csvFile):
    table = load_csv(csvFile("age,color,y\n1.5,a,no\n2,b,yes\n3,c,no\n"), _declaration())
    assert len(table) == 3
    assert table["age"].dtype == np.float64
    assert table["color"].tolist() == ["a", "b", "c"]


def test_load_csv_header_only(csvFile):
    table = load_csv(csvFile("age,color,y\n"), _declaration())
    assert len(table) == 0


def test_load_csv_reports_row_and_column(csvFile):
    with pytest.raises(CsvParseError) as info:
        load_csv(csvFile("age,color,y\n1,a,no\nabc,b,yes\n"), _declaration())
    assert (info.value.row, info.value.column) == (2, "age")
    assert "abc" in str(info.value)


def test_load_csv_header_mismatch(csvFile):
    with pytest.raises(CsvParseError) as info:
        load_csv(csvFile("age,colour,y\n1,a,no\n"), _declaration())
    assert info.value.row == 0


def test_load_csv_missing_value(csvFile):
    with pytest.raises(CsvParseError) as info:
        load_csv(csvFile("age,color,y\n1,,no\n"), _declaration())
    assert info.value.column == "color"


def test_load_csv_without_label_when_allowed(csvFile):
    table = load_csv(csvFile("age,color\n1,a\n"), _declaration(), requireLabel=False)
    assert "y" not in table.columns


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", _declaration())


def test_schema_declaration_file(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text('{"label": "y", "columns": [{"name": "age", "kind": "continuous"}]}', encoding="utf-8")
    schema = load_schema_declaration(path)
    assert schema.width == 1 and schema.label == "y"

    path.write_text('{"label": "y", "columns": [{"name": "age", "kind": "ordinal"}]}', encoding="utf-8")
    with pytest.raises(SchemaError):
        load_schema_declaration(path)


@pytest.mark.parametrize("columns, label", [
    ((), "y"),
    ((ColumnSpec("a", ColumnKind.CONTINUOUS), ColumnSpec("a", ColumnKind.CONTINUOUS)), "y"),
    ((ColumnSpec("y", ColumnKind.CONTINUOUS),), "y"),
    ((ColumnSpec("a", ColumnKind.CATEGORICAL, ()),), "y"),
    ((ColumnSpec("a", ColumnKind.CATEGORICAL, ("u", "u")),), "y"),
    ((ColumnSpec("a", ColumnKind.CONTINUOUS, min=2.0, max=1.0),), "y"),
])
def test_inconsistent_schema_is_rejected(columns, label):
    with pytest.raises(SchemaError):
        FeatureSchema(columns, label)


def test_fit_transform_scales_and_encodes():
    dataset = fit_transform(_table(), _declaration())
    np.testing.assert_allclose(dataset.examples[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(dataset.examples[1, 1:], [0.0, 1.0, 0.0])
    assert dataset.one_hot_spans == ((1, 4),)
    assert dataset.schema.label_classes == ("no", "yes")
    assert dataset.labels.tolist() == [0, 1, 0]
    assert dataset.schema.isFitted
    assert encoded_feature_names(dataset.schema) == ["age", "color=a", "color=b", "color=c"]


def test_constant_column_is_scaled_to_half(logRecords):
    table = _table().assign(age=[3.0, 3.0, 3.0])
    dataset = fit_transform(table, _declaration())
    np.testing.assert_array_equal(dataset.examples[:, 0], [0.5, 0.5, 0.5])
    assert any("constant" in m for m in warnings_of(logRecords))
    assert inverse_transform(dataset.examples, dataset.schema)["age"].tolist() == [3.0, 3.0, 3.0]


def test_transform_clamps_out_of_range_values(logRecords):
    schema = fit_transform(_table(), _declaration()).schema
    test = transform(pd.DataFrame({"age": [-5.0, 20.0], "color": ["a", "a"], "y": ["no", "no"]}), schema)
    np.testing.assert_array_equal(test.examples[:, 0], [0.0, 1.0])
    assert any("clamped" in m for m in warnings_of(logRecords))


def test_scaling_rounding_stays_in_unit_interval(logRecords):
    table, declaration = load_breast_cancer()
    dataset = fit_transform(table, declaration, name="breast_cancer")
    assert dataset.examples.min() >= 0.0 and dataset.examples.max() <= 1.0

    small = synthetic_gaussian_3class(9, seed=3)
    assert small.examples.min() >= 0.0 and small.examples.max() <= 1.0

    again = transform(table, dataset.schema)
    np.testing.assert_array_equal(again.examples, dataset.examples)
    assert not any("clamped" in m for m in warnings_of(logRecords))


def test_unclamped_transform_rejects_values_outside_the_fitted_range():
    pre = TabularPreprocessor(_declaration())
    pre.fit(_table())
    examples, clamped = pre.transform(_table(), clamp=False)
    assert clamped == 0 and examples.max() <= 1.0
    with pytest.raises(DataError):
        pre.transform(pd.DataFrame({"age": [11.0], "color": ["a"], "y": ["no"]}), clamp=False)


def test_transform_rejects_unknown_category_and_label():
    schema = fit_transform(_table(), _declaration()).schema
    with pytest.raises(CsvParseError):
        transform(pd.DataFrame({"age": [1.0], "color": ["z"], "y": ["no"]}), schema)
    with pytest.raises(CsvParseError):
        transform(pd.DataFrame({"age": [1.0], "color": ["a"], "y": ["maybe"]}), schema)


def test_transform_without_labels():
    schema = fit_transform(_table(), _declaration()).schema
    assert transform(pd.DataFrame({"age": [1.0], "color": ["a"]}), schema).labels is None


def test_inverse_transform_examples():
    schema = FeatureSchema(
        (ColumnSpec("age", ColumnKind.CONTINUOUS, min=0.0, max=10.0),
         ColumnSpec("color", ColumnKind.CATEGORICAL, ("a", "b", "c"))),
        "y", ("no", "yes"))
    row = inverse_transform_row(np.array([0.5, 0.0, 1.0, 0.0]), schema)
    assert row["age"] == pytest.approx(5.0)
    assert row["color"] == "b"

    with pytest.raises(ContractViolation):
        inverse_transform(np.array([0.5, 0.0, 0.6, 0.4]), schema)
    with pytest.raises(ContractViolation):
        inverse_transform(np.array([0.5, 0.0, 1.0]), schema)


def test_breast_cancer_round_trip():
    table, declaration = load_breast_cancer()
    dataset = fit_transform(table, declaration, name="breast_cancer")
    assert (dataset.n, dataset.p) == (569, 30)
    assert dataset.one_hot_spans == ()
    assert validate_encoded_rows(dataset.examples, dataset.schema)

    restored = inverse_transform(dataset.examples, dataset.schema)
    original = table.drop(columns=[declaration.label])
    np.testing.assert_allclose(restored.to_numpy(), original.to_numpy(), rtol=0, atol=1e-9)


def test_schema_survives_serialization():
    schema = fit_transform(_table(), _declaration()).schema
    again = FeatureSchema.from_dict(schema.to_dict())
    assert again == schema
    assert again.hash() == schema.hash()
    assert fit_transform(_table().assign(age=[1.0, 5.0, 10.0]), _declaration()).schema.hash() != schema.hash()


@pytest.mark.parametrize("rows", [
    [[0.5, 1.0, 1.0, 0.0]],
    [[0.5, 0.0, 0.0, 0.0]],
    [[1.5, 1.0, 0.0, 0.0]],
    [[np.nan, 1.0, 0.0, 0.0]],
])
def test_validator_rejects_malformed_rows(rows):
    with pytest.raises(ContractViolation):
        validate_encoded_rows(np.array(rows), [(1, 4)])


def test_split_sizes_and_determinism():
    train, test = split_indices(100, 0.25, seed=5)
    assert (len(train), len(test)) == (75, 25)

    first = split_indices(4, 0.25, seed=1)
    second = split_indices(4, 0.25, seed=1)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


def test_split_of_a_single_row(logRecords):
    train, test = split_indices(1, 0.25)
    assert (len(train), len(test)) == (1, 0)
    assert warnings_of(logRecords)


def test_split_rejects_bad_fraction():
    with pytest.raises(ContractViolation):
        split_indices(10, 1.0)


@given(st.integers(0, 300), st.floats(0.01, 0.99), st.integers(0, 2 ** 32 - 1))
def test_split_is_a_partition(n, fraction, seed):
    train, test = split_indices(n, fraction, seed)
    assert np.intersect1d(train, test).size == 0
    np.testing.assert_array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
    if n >= 2:
        assert abs(len(test) - n * fraction) <= 1


def test_split_dataset_and_table_agree():
    dataset = fit_transform(_table(), _declaration())
    train, test = split(dataset, 0.34, seed=2)
    trainTable, testTable = split_table(_table(), 0.34, seed=2)
    assert (train.n, test.n) == (len(trainTable), len(testTable))


def test_synthetic_equal_allocation():
    dataset = synthetic_gaussian_3class(9, seed=3)
    assert np.bincount(dataset.labels).tolist() == [3, 3, 3]
    assert dataset.schema.n_classes == 3
    assert validate_encoded_rows(dataset.examples, dataset.schema)


def test_synthetic_is_deterministic():
    np.testing.assert_array_equal(synthetic_gaussian_3class(30, seed=7).examples,
                                  synthetic_gaussian_3class(30, seed=7).examples)


def test_synthetic_class_means():
    n = 10000
    table = synthetic_gaussian_raw(n, seed=0)
    class0 = table.loc[table["class"] == "0"].drop(columns=["class"]).to_numpy()
    bound = 4.0 / np.sqrt(n / 3)
    assert np.all(np.abs(class0.mean(axis=0) - SYNTHETIC_MEANS[0]) < bound)

    means = SYNTHETIC_MEANS
    assert np.linalg.norm(means[0] - means[1]) < np.linalg.norm(means[0] - means[2])
    assert np.linalg.norm(means[0] - means[1]) < np.linalg.norm(means[1] - means[2])


def test_synthetic_needs_three_rows():
    with pytest.raises(ContractViolation):
        synthetic_gaussian_raw(2)
