# file: services/data_service.py
# coding:utf-8
"""
数据服务：表格数据读取、预处理 (one-hot + min-max)、逆变换、切分以及合成高斯数据
"""
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.datasets import load_breast_cancer as _sklearn_breast_cancer
from sklearn.preprocessing import MinMaxScaler, OneHotEncoder

from ..common.exception_handler import ContractViolation, CsvParseError, DataError, SchemaError
from ..common.logger import Logger
from ..common.setting import UNIT_RANGE_TOL
from ..common.utils import sha256Of
from ..components.activations import span_mask

logger = Logger("data")

Span = Tuple[int, int]


class ColumnKind(Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSpec:
    """
    单列描述

    Attributes
    ----------
    name : str
    kind : ColumnKind
    categories : 类别列的有序类别
    min, max : 连续列在训练集上拟合得到的范围 (未拟合时为 None)
    """

    name: str
    kind: ColumnKind
    categories: Tuple[str, ...] = ()
    min: Optional[float] = None
    max: Optional[float] = None

    @property
    def width(self) -> int:
        return 1 if self.kind is ColumnKind.CONTINUOUS else len(self.categories)

    @property
    def isConstant(self) -> bool:
        return self.kind is ColumnKind.CONTINUOUS and self.min == self.max

    def to_dict(self) -> Dict[str, Any]:
        data = {"name": self.name, "kind": self.kind.value}
        if self.kind is ColumnKind.CATEGORICAL:
            data["categories"] = list(self.categories)
        elif self.min is not None:
            data["min"] = self.min
            data["max"] = self.max
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ColumnSpec":
        try:
            kind = ColumnKind(data["kind"])
            name = str(data["name"])
        except (KeyError, ValueError, TypeError) as e:
            raise SchemaError(f"bad column declaration {data!r}: {e}") from e

        categories = tuple(str(c) for c in data.get("categories", ()))
        lo, hi = data.get("min"), data.get("max")
        return cls(name, kind, categories,
                   None if lo is None else float(lo),
                   None if hi is None else float(hi))


@dataclass(frozen=True)
class FeatureSchema:
    """
    列角色、类别顺序、拟合后的缩放状态以及标签列

    编码后的宽度 p = 连续列数 + 各类别列的类别数之和
    """

    columns: Tuple[ColumnSpec, ...]
    label: str
    label_classes: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "label_classes", tuple(str(c) for c in self.label_classes))
        self.check()

    def check(self):
        names = [c.name for c in self.columns]
        if not names:
            raise SchemaError("schema declares no feature columns")
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if self.label in names:
            raise SchemaError(f"label column '{self.label}' is also declared as a feature")
        for column in self.columns:
            if column.kind is ColumnKind.CATEGORICAL:
                if not column.categories:
                    raise SchemaError(f"categorical column '{column.name}' has no categories")
                if len(set(column.categories)) != len(column.categories):
                    raise SchemaError(f"categorical column '{column.name}' has duplicate categories")
            elif column.min is not None and (column.max is None or column.max < column.min):
                raise SchemaError(f"column '{column.name}' has max < min")
        if len(set(self.label_classes)) != len(self.label_classes):
            raise SchemaError("duplicate label classes")

    @property
    def width(self) -> int:
        return sum(c.width for c in self.columns)

    @property
    def n_classes(self) -> int:
        return len(self.label_classes)

    @property
    def continuous(self) -> List[ColumnSpec]:
        return [c for c in self.columns if c.kind is ColumnKind.CONTINUOUS]

    @property
    def categorical(self) -> List[ColumnSpec]:
        return [c for c in self.columns if c.kind is ColumnKind.CATEGORICAL]

    @property
    def isFitted(self) -> bool:
        return bool(self.label_classes) and all(c.min is not None for c in self.continuous)

    def offsets(self) -> List[int]:
        """ first encoded position of every column """
        out, pos = [], 0
        for column in self.columns:
            out.append(pos)
            pos += column.width
        return out

    @property
    def one_hot_spans(self) -> Tuple[Span, ...]:
        return tuple(
            (start, start + column.width)
            for start, column in zip(self.offsets(), self.columns)
            if column.kind is ColumnKind.CATEGORICAL
        )

    @property
    def continuous_positions(self) -> List[int]:
        return [start for start, column in zip(self.offsets(), self.columns)
                if column.kind is ColumnKind.CONTINUOUS]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "label_classes": list(self.label_classes),
            "columns": [c.to_dict() for c in self.columns],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureSchema":
        if not isinstance(data, dict) or "columns" not in data or "label" not in data:
            raise SchemaError("schema must be an object with 'columns' and 'label'")
        return cls(
            tuple(ColumnSpec.from_dict(c) for c in data["columns"]),
            str(data["label"]),
            tuple(data.get("label_classes", ())),
        )

    def hash(self) -> str:
        return sha256Of(self.to_dict())


@dataclass(frozen=True, eq=False)
class PreprocessedDataset:
    """ 编码后的样本矩阵 [n, p]，取值在 [0, 1]；labels 为类别下标 (无标签时为 None) """

    examples: np.ndarray
    labels: Optional[np.ndarray]
    schema: FeatureSchema
    name: str = "dataset"

    def __post_init__(self):
        examples = np.asarray(self.examples, dtype=np.float64).reshape(-1, self.schema.width)
        object.__setattr__(self, "examples", examples)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != examples.shape[0]:
                raise ContractViolation(f"{labels.shape[0]} labels for {examples.shape[0]} examples")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.examples.shape[0]

    @property
    def n(self) -> int:
        return self.examples.shape[0]

    @property
    def p(self) -> int:
        return self.schema.width

    @property
    def one_hot_spans(self) -> Tuple[Span, ...]:
        return self.schema.one_hot_spans

    def subset(self, indices) -> "PreprocessedDataset":
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return PreprocessedDataset(self.examples[indices], labels, self.schema, self.name)


# ---------------------------------------------------------------- ingestion

def load_schema_declaration(path) -> FeatureSchema:
    """读取 JSON 格式的 schema 声明文件"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"schema file does not exist: {path}")
    try:
        return FeatureSchema.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise SchemaError(f"schema file {path} is not valid JSON: {e}") from e


def _typedFrame(frame: pd.DataFrame, declaration: FeatureSchema, requireLabel: bool) -> pd.DataFrame:
    expected = [c.name for c in declaration.columns]
    header = list(frame.columns)
    allowed = set(expected) | {declaration.label}
    missing = [name for name in expected if name not in header]
    if requireLabel and declaration.label not in header:
        missing.append(declaration.label)
    extra = [name for name in header if name not in allowed]
    if missing or extra:
        raise CsvParseError(f"header mismatch: missing {missing}, unexpected {extra}", row=0)

    typed = {}
    for column in declaration.columns:
        values = frame[column.name].astype(str).str.strip()
        empty = np.flatnonzero((values == "").to_numpy())
        if empty.size:
            raise CsvParseError("missing value", row=int(empty[0]) + 1, column=column.name)

        if column.kind is ColumnKind.CONTINUOUS:
            numeric = pd.to_numeric(values, errors="coerce").astype(np.float64)
            bad = np.flatnonzero((numeric.isna() | ~np.isfinite(numeric)).to_numpy())
            if bad.size:
                i = int(bad[0])
                raise CsvParseError(f"cannot parse '{values.iloc[i]}' as a number",
                                    row=i + 1, column=column.name)
            typed[column.name] = numeric.astype(np.float64)
        else:
            typed[column.name] = values

    if declaration.label in header:
        labels = frame[declaration.label].astype(str).str.strip()
        empty = np.flatnonzero((labels == "").to_numpy())
        if empty.size:
            raise CsvParseError("missing label", row=int(empty[0]) + 1, column=declaration.label)
        typed[declaration.label] = labels

    return pd.DataFrame(typed, index=pd.RangeIndex(len(frame)))


def load_csv(path, declaration: FeatureSchema, requireLabel: bool = True) -> pd.DataFrame:
    """
    读取 CSV (UTF-8，逗号分隔，必须有表头)，按 schema 声明转换类型

    连续列转为 float64，类别列与标签列保持字符串；出错时报告行号 (从 1 开始的数据行) 和列名
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file does not exist: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise CsvParseError("file has no header row", row=0) from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise CsvParseError(f"malformed CSV: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    table = _typedFrame(frame, declaration, requireLabel)
    logger.info(f"loaded {path.name}: {len(table)} rows x {len(table.columns)} columns")
    return table


def load_breast_cancer() -> Tuple[pd.DataFrame, FeatureSchema]:
    """内置 Breast Cancer 数据表 (569 行，30 个连续特征 + 二分类标签)"""
    bunch = _sklearn_breast_cancer(as_frame=True)
    frame = bunch.data.astype(np.float64).copy()
    frame.columns = [str(c) for c in frame.columns]
    classes = tuple(str(c) for c in bunch.target_names)
    frame["diagnosis"] = [classes[int(t)] for t in bunch.target]

    declaration = FeatureSchema(
        tuple(ColumnSpec(c, ColumnKind.CONTINUOUS) for c in frame.columns if c != "diagnosis"),
        "diagnosis",
        classes,
    )
    return frame, declaration


# ------------------------------------------------------------ preprocessing

class TabularPreprocessor:
    """
    min-max (连续列) + one-hot (类别列)，编码顺序与 schema 中的列顺序一致

    拟合状态全部记录在 FeatureSchema 中，`from_schema` 可以精确重建
    """

    def __init__(self, schema: FeatureSchema):
        self.schema = schema
        self.scaler: Optional[MinMaxScaler] = None
        self.encoder: Optional[OneHotEncoder] = None

    @classmethod
    def from_schema(cls, schema: FeatureSchema) -> "TabularPreprocessor":
        if not schema.isFitted:
            raise SchemaError("schema has not been fitted")

        pre = cls(schema)
        continuous = schema.continuous
        if continuous:
            bounds = np.array([[c.min for c in continuous], [c.max for c in continuous]])
            pre.scaler = MinMaxScaler().fit(bounds)
        pre.encoder = pre._makeEncoder()
        return pre

    def _makeEncoder(self) -> Optional[OneHotEncoder]:
        categorical = self.schema.categorical
        if not categorical:
            return None
        encoder = OneHotEncoder(categories=[list(c.categories) for c in categorical],
                                handle_unknown="error", sparse_output=False, dtype=np.float64)
        # 类别已显式给定，用每列第一个类别拟合即可
        seed = pd.DataFrame({c.name: [c.categories[0]] for c in categorical})
        return encoder.fit(seed)

    def fit(self, table: pd.DataFrame) -> FeatureSchema:
        if len(table) == 0:
            raise DataError("cannot fit preprocessing on an empty table")
        if self.schema.label not in table.columns:
            raise DataError(f"label column '{self.schema.label}' is missing")

        continuous = self.schema.continuous
        fitted = {}
        if continuous:
            self.scaler = MinMaxScaler().fit(table[[c.name for c in continuous]].to_numpy(np.float64))
            for column, lo, hi in zip(continuous, self.scaler.data_min_, self.scaler.data_max_):
                fitted[column.name] = replace(column, min=float(lo), max=float(hi))
                if lo == hi:
                    logger.warning(f"column '{column.name}' is constant ({lo}), scaled to 0.5")

        columns = tuple(fitted.get(c.name, c) for c in self.schema.columns)
        classes = self.schema.label_classes or tuple(sorted(table[self.schema.label].astype(str).unique()))
        self.schema = FeatureSchema(columns, self.schema.label, classes)
        self.encoder = self._makeEncoder()
        return self.schema

    def transform(self, table: pd.DataFrame, clamp: bool = True) -> Tuple[np.ndarray, int]:
        """ 返回 (编码矩阵, 超出拟合范围而被截断的单元格数)；clamp=False 时超出范围直接报错 """
        n = len(table)
        out = np.zeros((n, self.schema.width))
        offsets = dict(zip((c.name for c in self.schema.columns), self.schema.offsets()))

        clamped = 0
        continuous = self.schema.continuous
        if continuous and n:
            scaled = self.scaler.transform(table[[c.name for c in continuous]].to_numpy(np.float64))
            for j, column in enumerate(continuous):
                if column.isConstant:
                    scaled[:, j] = 0.5
            # 缩放的舍入误差会产生 1.0000000000000002 之类的值
            outside = (scaled < -UNIT_RANGE_TOL) | (scaled > 1.0 + UNIT_RANGE_TOL)
            clamped = int(outside.sum())
            if clamped and not clamp:
                raise DataError(f"{clamped} value(s) fall outside the fitted range")
            scaled = np.clip(scaled, 0.0, 1.0)
            for j, column in enumerate(continuous):
                out[:, offsets[column.name]] = scaled[:, j]

        categorical = self.schema.categorical
        if categorical and n:
            frame = table[[c.name for c in categorical]].astype(str)
            for column in categorical:
                unknown = ~frame[column.name].isin(column.categories)
                if unknown.any():
                    i = int(np.flatnonzero(unknown.to_numpy())[0])
                    raise CsvParseError(f"unknown category '{frame[column.name].iloc[i]}'",
                                        row=i + 1, column=column.name)
            encoded = self.encoder.transform(frame)
            pos = 0
            for column in categorical:
                start = offsets[column.name]
                out[:, start:start + column.width] = encoded[:, pos:pos + column.width]
                pos += column.width

        return out, clamped

    def labels(self, table: pd.DataFrame) -> Optional[np.ndarray]:
        if self.schema.label not in table.columns:
            return None
        index = {c: i for i, c in enumerate(self.schema.label_classes)}
        values = table[self.schema.label].astype(str)
        unknown = ~values.isin(list(index))
        if unknown.any():
            i = int(np.flatnonzero(unknown.to_numpy())[0])
            raise CsvParseError(f"unknown label '{values.iloc[i]}'", row=i + 1, column=self.schema.label)
        return values.map(index).to_numpy(np.int64)

    def inverse_transform(self, rows: np.ndarray) -> pd.DataFrame:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.schema.width:
            raise ContractViolation(f"row width {rows.shape[1]} != encoded width {self.schema.width}")

        offsets = self.schema.offsets()
        values: Dict[str, Any] = {}
        continuous = self.schema.continuous
        if continuous:
            positions = self.schema.continuous_positions
            restored = self.scaler.inverse_transform(rows[:, positions])
            for j, column in enumerate(continuous):
                values[column.name] = np.full(len(rows), column.min) if column.isConstant else restored[:, j]

        for start, column in zip(offsets, self.schema.columns):
            if column.kind is not ColumnKind.CATEGORICAL:
                continue
            block = rows[:, start:start + column.width]
            isOneHot = np.isin(block, (0.0, 1.0)).all(axis=1) & (block.sum(axis=1) == 1.0)
            if not isOneHot.all():
                bad = int(np.flatnonzero(~isOneHot)[0])
                raise ContractViolation(
                    f"span of column '{column.name}' in row {bad} is not exactly one-hot")
            values[column.name] = [column.categories[k] for k in block.argmax(axis=1)]

        return pd.DataFrame({c.name: values[c.name] for c in self.schema.columns})


def fit_transform(table: pd.DataFrame, declaration: FeatureSchema, name: str = "dataset") -> PreprocessedDataset:
    """
    在给定 (训练) 表上拟合缩放/编码并返回编码后的数据集，拟合状态写入 schema
    """
    pre = TabularPreprocessor(declaration)
    schema = pre.fit(table)
    examples, _ = pre.transform(table, clamp=False)
    dataset = PreprocessedDataset(examples, pre.labels(table), schema, name)
    logger.info(f"fitted '{name}': n={dataset.n}, p={schema.width}, "
                f"{len(schema.one_hot_spans)} one-hot spans, {schema.n_classes} classes")
    return dataset


def transform(table: pd.DataFrame, schema: FeatureSchema, name: str = "dataset") -> PreprocessedDataset:
    """
    用已拟合的 schema 编码新数据 (如测试集)；超出 [0, 1] 的值被截断并计数告警
    """
    pre = TabularPreprocessor.from_schema(schema)
    examples, clamped = pre.transform(table, clamp=True)
    if clamped:
        logger.warning(f"'{name}': {clamped} value(s) outside the training range clamped to [0, 1]")
    return PreprocessedDataset(examples, pre.labels(table), schema, name)


def inverse_transform(rows: np.ndarray, schema: FeatureSchema) -> pd.DataFrame:
    """编码行 -> 原始单位 (连续列回到 [min, max]，one-hot 回到类别名)"""
    return TabularPreprocessor.from_schema(schema).inverse_transform(rows)


def inverse_transform_row(row: np.ndarray, schema: FeatureSchema) -> Dict[str, Any]:
    record = inverse_transform(np.asarray(row)[None, :], schema).iloc[0]
    return {k: (v.item() if hasattr(v, "item") else v) for k, v in record.items()}


def validate_encoded_rows(rows: np.ndarray, schema_or_spans: Union[FeatureSchema, Sequence[Span]],
                          width: Optional[int] = None) -> bool:
    """
    校验编码行：每个 one-hot 区间恰好一个 1、其余为 0；其他位置在 [0, 1] 内

    不满足时抛出 ContractViolation
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if isinstance(schema_or_spans, FeatureSchema):
        spans, width = schema_or_spans.one_hot_spans, schema_or_spans.width
    else:
        spans = tuple(schema_or_spans)
        width = rows.shape[1] if width is None else width

    if rows.shape[1] != width:
        raise ContractViolation(f"row width {rows.shape[1]} != encoded width {width}")
    if not np.isfinite(rows).all():
        raise ContractViolation("encoded rows contain non-finite values")

    covered = span_mask(spans, width)
    for start, stop in spans:
        block = rows[:, start:stop]
        if not (np.isin(block, (0.0, 1.0)).all() and (block.sum(axis=1) == 1.0).all()):
            raise ContractViolation(f"one-hot span ({start}, {stop}) is not exactly one-hot")

    rest = rows[:, ~covered]
    if ((rest < 0.0) | (rest > 1.0)).any():
        raise ContractViolation("continuous entries must lie in [0, 1]")
    return True


def encoded_feature_names(schema: FeatureSchema) -> List[str]:
    names = []
    for column in schema.columns:
        if column.kind is ColumnKind.CONTINUOUS:
            names.append(column.name)
        else:
            names.extend(f"{column.name}={c}" for c in column.categories)
    return names


# -------------------------------------------------------------------- split

def split_indices(n: int, test_fraction: float = 0.25, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """种子固定的随机切分；测试集大小为 round(n * fraction)，且训练集至少保留一行"""
    if not 0.0 < test_fraction < 1.0:
        raise ContractViolation(f"test_fraction must lie in (0, 1), got {test_fraction}")

    order = np.random.default_rng(seed).permutation(n)
    nTest = int(math.floor(n * test_fraction + 0.5))
    nTest = min(nTest, max(n - 1, 0))
    if n and nTest == 0:
        logger.warning(f"split of {n} row(s) leaves an empty test set")

    return np.sort(order[nTest:]), np.sort(order[:nTest])


def split(dataset: PreprocessedDataset, test_fraction: float = 0.25, seed: int = 0):
    """-> (train, test)"""
    trainIdx, testIdx = split_indices(dataset.n, test_fraction, seed)
    return dataset.subset(trainIdx), dataset.subset(testIdx)


def split_table(table: pd.DataFrame, test_fraction: float = 0.25, seed: int = 0):
    trainIdx, testIdx = split_indices(len(table), test_fraction, seed)
    return (table.iloc[trainIdx].reset_index(drop=True),
            table.iloc[testIdx].reset_index(drop=True))


# ---------------------------------------------------------------- synthetic

SYNTHETIC_DIM = 8
SYNTHETIC_MEANS = np.array([
    [0.0] * SYNTHETIC_DIM,
    [2.0] + [0.0] * (SYNTHETIC_DIM - 1),
    [5.0, 5.0] + [0.0] * (SYNTHETIC_DIM - 2),
])


def synthetic_gaussian_raw(n: int = 10000, seed: int = 0) -> pd.DataFrame:
    """三个单位协方差的 8 维高斯类，类别 0 与 1 相互靠近、类别 2 较远；各类样本数相等 (余数依次分给前面的类)"""
    if n < 3:
        raise ContractViolation(f"synthetic dataset needs n >= 3, got {n}")

    rng = np.random.default_rng(seed)
    k = len(SYNTHETIC_MEANS)
    counts = [n // k + (1 if c < n % k else 0) for c in range(k)]
    blocks = [rng.standard_normal((m, SYNTHETIC_DIM)) + SYNTHETIC_MEANS[c] for c, m in enumerate(counts)]
    labels = np.repeat(np.arange(k), counts)

    order = rng.permutation(n)
    frame = pd.DataFrame(np.vstack(blocks)[order], columns=[f"x{j}" for j in range(SYNTHETIC_DIM)])
    frame["class"] = labels[order].astype(str)
    return frame


def synthetic_declaration() -> FeatureSchema:
    return FeatureSchema(
        tuple(ColumnSpec(f"x{j}", ColumnKind.CONTINUOUS) for j in range(SYNTHETIC_DIM)),
        "class",
        tuple(str(c) for c in range(len(SYNTHETIC_MEANS))),
    )


def synthetic_gaussian_3class(n: int = 10000, seed: int = 0) -> PreprocessedDataset:
    return fit_transform(synthetic_gaussian_raw(n, seed), synthetic_declaration(), name="synthetic")
