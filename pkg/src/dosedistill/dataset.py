"""Patient dataset loading, validation, encoding, standardization, and splits.

The on-disk format is a plain CSV with a header row plus a sidecar schema
JSON declaring, per column, the feature category and kind::

    {
      "target": "weekly_dose_mg",
      "id": "patient_id",              # optional id column
      "target_unit": "weekly",         # or "daily" (converted by x7)
      "features": [
        {"name": "weight_kg", "category": "background", "kind": "numeric"},
        {"name": "race", "category": "demographic", "kind": "categorical"},
        ...
      ]
    }

Categorical labels are mapped to integer factor codes in sorted label order,
then every encoded column is shifted to zero mean and scaled to unit
variance. Targets stay in natural dose units (mg/week).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

KIND_CATEGORICAL = "categorical"
KIND_NUMERIC = "numeric"


class FeatureCategory(IntEnum):
    """Patient data categories, in fixed iteration order."""

    DEMOGRAPHIC = 0
    BACKGROUND = 1
    PHENOTYPIC = 2
    GENOTYPIC = 3

    @classmethod
    def from_label(cls, label: str) -> "FeatureCategory":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise DataError(f"unknown feature category {label!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Feature:
    """One declared column: its category, kind, and (if categorical) codes."""

    name: str
    category: FeatureCategory
    kind: str
    encoding_map: Mapping[str, int] | None = None

    def __post_init__(self):
        if self.kind not in (KIND_CATEGORICAL, KIND_NUMERIC):
            raise DataError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == KIND_CATEGORICAL:
            if not self.encoding_map:
                raise DataError(f"feature {self.name!r}: categorical without labels")
            codes = sorted(self.encoding_map.values())
            if codes != list(range(len(codes))):
                raise DataError(
                    f"feature {self.name!r}: encoding map is not a bijection onto "
                    f"0..{len(codes) - 1}"
                )
        elif self.encoding_map is not None:
            raise DataError(f"feature {self.name!r}: numeric feature with encoding map")

    def encode(self, label: str) -> int:
        assert self.encoding_map is not None
        try:
            return self.encoding_map[label]
        except KeyError:
            raise DataError(
                f"feature {self.name!r}: unseen label {label!r} (catalog is closed "
                f"after fitting; known labels: {sorted(self.encoding_map)})"
            ) from None

    def decode(self, code: int) -> str:
        assert self.encoding_map is not None
        for label, c in self.encoding_map.items():
            if c == code:
                return label
        raise DataError(f"feature {self.name!r}: no label for code {code}")


@dataclass(frozen=True)
class FeatureCatalog:
    """Ordered feature declarations; order defines encoded column order."""

    features: tuple[Feature, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate feature names: {dupes}")

    @property
    def d(self) -> int:
        return len(self.features)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def indices_for(self, category: FeatureCategory) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.features) if f.category == category)

    def categories_present(self) -> tuple[FeatureCategory, ...]:
        return tuple(c for c in FeatureCategory if self.indices_for(c))


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column shift/scale fitted on the training cohort."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        if self.means.shape != self.stds.shape or self.means.ndim != 1:
            raise DataError("standardization means/stds must be equal-length vectors")
        if not np.all(np.isfinite(self.means)) or not np.all(np.isfinite(self.stds)):
            raise DataError("standardization parameters must be finite")
        if np.any(self.stds <= 0):
            bad = np.flatnonzero(self.stds <= 0).tolist()
            raise DataError(f"zero-variance column(s) at index {bad}")

    def transform(self, m: np.ndarray) -> np.ndarray:
        return (m - self.means) / self.stds


@dataclass(frozen=True)
class PatientRecord:
    """One patient: encoded+standardized features and the weekly dose target."""

    id: str
    x: np.ndarray
    y: float

    def __post_init__(self):
        if self.x.ndim != 1:
            raise DataError(f"record {self.id}: feature vector must be 1-D")
        if not np.all(np.isfinite(self.x)) or not np.isfinite(self.y):
            raise DataError(f"record {self.id}: non-finite value")
        if self.y <= 0:
            raise DataError(f"record {self.id}: dose must be positive, got {self.y}")


@dataclass(frozen=True)
class Cohort:
    """Immutable set of encoded records sharing a catalog and standardizer."""

    records: tuple[PatientRecord, ...]
    catalog: FeatureCatalog
    standardizer: StandardizationParams

    def __post_init__(self):
        for r in self.records:
            if len(r.x) != self.catalog.d:
                raise DataError(
                    f"record {r.id}: dimension {len(r.x)} != catalog d {self.catalog.d}"
                )

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    def subset(self, indices: Sequence[int]) -> "Cohort":
        return Cohort(
            tuple(self.records[i] for i in indices), self.catalog, self.standardizer
        )


@dataclass(frozen=True)
class RawRecord:
    """One unencoded row: categorical labels as strings, numerics as floats."""

    id: str
    values: Mapping[str, str | float]
    y: float


def _parse_schema(schema_path: str | Path) -> dict:
    path = Path(schema_path)
    try:
        schema = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"schema {path} is not valid JSON: {exc}") from None
    if "target" not in schema or not isinstance(schema["target"], str):
        raise DataError(f"schema {path}: missing string key 'target'")
    feats = schema.get("features")
    if not isinstance(feats, list) or not feats:
        raise DataError(f"schema {path}: 'features' must be a non-empty list")
    for f in feats:
        for key in ("name", "category", "kind"):
            if key not in f:
                raise DataError(f"schema {path}: feature entry missing {key!r}: {f}")
    unit = schema.get("target_unit", "weekly")
    if unit not in ("weekly", "daily"):
        raise DataError(f"schema {path}: target_unit must be 'weekly' or 'daily'")
    return schema


def load_and_validate(
    data_path: str | Path, schema_path: str | Path
) -> tuple[FeatureCatalog, list[RawRecord]]:
    """Read a CSV against its schema manifest.

    Rows with a missing target or missing feature values are dropped (the
    counts are logged); a non-positive or unparseable cell is an error that
    names the offending row and column. The catalog's categorical encoding
    maps are built from the labels observed in surviving rows, in sorted
    label order, and are closed afterwards.
    """
    schema = _parse_schema(schema_path)
    target_col = schema["target"]
    id_col = schema.get("id")
    dose_scale = 7.0 if schema.get("target_unit", "weekly") == "daily" else 1.0
    declared = [(f["name"], FeatureCategory.from_label(f["category"]), f["kind"]) for f in schema["features"]]
    for name, _, kind in declared:
        if kind not in (KIND_CATEGORICAL, KIND_NUMERIC):
            raise DataError(f"schema: feature {name!r} has unknown kind {kind!r}")
    feature_names = [name for name, _, _ in declared]
    if target_col in feature_names:
        raise DataError(f"target column {target_col!r} also declared as a feature")

    path = Path(data_path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None

    expected = set(feature_names) | {target_col} | ({id_col} if id_col else set())
    records: list[RawRecord] = []
    dropped_target = 0
    dropped_missing = 0
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file (no header row)")
        present = set(reader.fieldnames)
        unknown = sorted(present - expected)
        if unknown:
            raise DataError(f"{path}: unknown column(s) not in schema: {unknown}")
        missing = sorted(expected - present)
        if missing:
            raise DataError(f"{path}: column(s) declared in schema but missing: {missing}")

        for lineno, row in enumerate(reader, start=2):
            raw_target = (row.get(target_col) or "").strip()
            if not raw_target:
                dropped_target += 1
                continue
            try:
                y = float(raw_target)
            except ValueError:
                raise DataError(
                    f"{path}: row {lineno}, column {target_col!r}: "
                    f"unparseable number {raw_target!r}"
                ) from None
            if not math.isfinite(y):
                raise DataError(
                    f"{path}: row {lineno}, column {target_col!r}: "
                    f"non-finite value {raw_target!r}"
                )
            if y <= 0:
                raise DataError(
                    f"{path}: row {lineno}, column {target_col!r}: "
                    f"dose must be positive, got {raw_target}"
                )
            values: dict[str, str | float] = {}
            complete = True
            for name, _, kind in declared:
                cell = (row.get(name) or "").strip()
                if not cell:
                    complete = False
                    break
                if kind == KIND_NUMERIC:
                    try:
                        parsed = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {lineno}, column {name!r}: "
                            f"unparseable number {cell!r}"
                        ) from None
                    if not math.isfinite(parsed):
                        raise DataError(
                            f"{path}: row {lineno}, column {name!r}: "
                            f"non-finite value {cell!r}"
                        )
                    values[name] = parsed
                else:
                    values[name] = cell
            if not complete:
                dropped_missing += 1
                continue
            rec_id = (row.get(id_col) or "").strip() if id_col else ""
            records.append(RawRecord(rec_id or f"row{lineno}", values, y * dose_scale))

    if dropped_target or dropped_missing:
        log.info(
            "%s: dropped %d row(s) with missing target, %d with missing features",
            path, dropped_target, dropped_missing,
        )
    if not records:
        raise DataError(f"{path}: no usable rows after validation")

    features = []
    for name, category, kind in declared:
        if kind == KIND_CATEGORICAL:
            labels = sorted({str(r.values[name]) for r in records})
            encoding = {label: code for code, label in enumerate(labels)}
            features.append(Feature(name, category, kind, encoding))
        else:
            features.append(Feature(name, category, kind))
    return FeatureCatalog(tuple(features)), records


def encode_records(records: Sequence[RawRecord], catalog: FeatureCatalog) -> np.ndarray:
    """Map raw records to the unstandardized numeric matrix (n x d)."""
    if not records:
        raise DataError("cannot encode an empty record list")
    m = np.empty((len(records), catalog.d))
    for i, rec in enumerate(records):
        for j, feat in enumerate(catalog.features):
            if feat.name not in rec.values:
                raise DataError(f"record {rec.id}: missing feature {feat.name!r}")
            v = rec.values[feat.name]
            if feat.kind == KIND_CATEGORICAL:
                m[i, j] = feat.encode(str(v))
            else:
                m[i, j] = float(v)
    if not np.all(np.isfinite(m)):
        raise DataError("encoded matrix contains non-finite values")
    return m


def fit_standardizer(
    m: np.ndarray, catalog: FeatureCatalog, fit_on: Sequence[bool] | None = None
) -> StandardizationParams:
    rows = m if fit_on is None else m[np.asarray(fit_on, dtype=bool)]
    if rows.shape[0] == 0:
        raise DataError("standardizer fit subset is empty")
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)  # population std
    zero = np.flatnonzero(stds <= 0)
    if zero.size:
        names = [catalog.features[j].name for j in zero]
        raise DataError(f"zero-variance column(s): {names}")
    return StandardizationParams(means, stds)


def encode_and_standardize(
    records: Sequence[RawRecord],
    catalog: FeatureCatalog,
    fit_on: Sequence[bool] | None = None,
    params: StandardizationParams | None = None,
) -> tuple[Cohort, StandardizationParams]:
    """Encode labels through the catalog and shift/scale every column.

    Parameters are fit on the rows flagged by ``fit_on`` (all rows when
    omitted) unless ready-made ``params`` are supplied, e.g. to transform a
    validation cohort with training-cohort statistics.
    """
    m = encode_records(records, catalog)
    if params is None:
        params = fit_standardizer(m, catalog, fit_on)
    x = params.transform(m)
    encoded = tuple(
        PatientRecord(rec.id, x[i], rec.y) for i, rec in enumerate(records)
    )
    return Cohort(encoded, catalog, params), params


def split_cohorts(
    records: Sequence[RawRecord],
    catalog: FeatureCatalog,
    ratio: float,
    seed: int,
) -> tuple[Cohort, Cohort]:
    """Uniform random train/validation partition, deterministic under seed.

    ``round(ratio * n)`` records go to training; the standardizer is fit on
    the training part only and applied to both cohorts.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(records)
    if n < 2:
        raise DataError(f"need at least 2 records to split, got {n}")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    valid_idx = np.sort(perm[n_train:])
    train, params = encode_and_standardize([records[i] for i in train_idx], catalog)
    valid, _ = encode_and_standardize(
        [records[i] for i in valid_idx], catalog, params=params
    )
    return train, valid


def cohort_to_csv(cohort: Cohort, path: str | Path) -> None:
    """Dump the encoded, standardized matrix for inspection."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", *cohort.catalog.names, "weekly_dose_mg"])
        for rec in cohort.records:
            writer.writerow([rec.id, *(f"{v:.10g}" for v in rec.x), f"{rec.y:.10g}"])
