"""Datasets: in-memory model, CSV ingestion, the synthetic football
generator, the UCI heart-disease reader, and z-score preprocessing.

Missing values are an explicit per-cell boolean mask in memory; sentinel
numbers (-9, "?") exist only at ingestion and relabeling boundaries.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

CLEVELAND_FEATURES = (
    "age",
    "sex",
    "cp",
    "trestbps",
    "chol",
    "fbs",
    "restecg",
    "thalach",
    "exang",
    "oldpeak",
    "slope",
    "ca",
    "thal",
)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Samples with a per-cell observation mask and integer class labels.

    Arrays are stored read-only; derive modified datasets instead of
    mutating. Masked cells hold NaN so accidental use is loud.
    """

    samples: np.ndarray  # (S, D) float64, NaN where not present
    present: np.ndarray  # (S, D) bool
    labels: np.ndarray  # (S,) int64 in 0..C-1
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        samples = _readonly(np.asarray(self.samples, dtype=np.float64))
        present = _readonly(np.asarray(self.present, dtype=bool))
        labels = _readonly(np.asarray(self.labels, dtype=np.int64))
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError(f"samples must be a nonempty 2-D array, got {samples.shape}")
        if present.shape != samples.shape:
            raise ValueError("present mask shape differs from samples")
        if labels.shape != (samples.shape[0],):
            raise ValueError("labels length differs from sample count")
        if len(self.feature_names) != samples.shape[1]:
            raise ValueError("feature_names length differs from dimension count")
        if labels.min() < 0 or labels.max() >= len(self.class_names):
            raise ValueError("labels outside 0..C-1 for the declared classes")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def fully_observed(self) -> bool:
        return bool(self.present.all())

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices)
        return LabeledDataset(
            self.samples[idx],
            self.present[idx],
            self.labels[idx],
            self.feature_names,
            self.class_names,
        )


def make_dataset(samples, labels, present=None, feature_names=None, class_names=None):
    """Convenience constructor filling masks and names with defaults."""
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if present is None:
        present = ~np.isnan(samples)
    if feature_names is None:
        feature_names = tuple(f"f{i + 1}" for i in range(samples.shape[1]))
    if class_names is None:
        n = int(labels.max()) + 1 if labels.size else 0
        class_names = tuple(str(c) for c in range(n))
    return LabeledDataset(samples, present, labels, feature_names, class_names)


# ---------------------------------------------------------------------------
# Synthetic football data


def football_function(points) -> np.ndarray:
    """Pattern value 2 sinh(5 x1 x2 x3) for an (n, 3) array of points."""
    points = np.asarray(points, dtype=np.float64)
    return 2.0 * np.sinh(5.0 * points.prod(axis=-1))


def generate_football(n: int, seed: int) -> LabeledDataset:
    """n points uniform on [-1, 1]^3, class 1 where 2 sinh(5 x1 x2 x3) > 0.5."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(n, 3))
    labels = (football_function(points) > 0.5).astype(np.int64)
    return LabeledDataset(
        points,
        np.ones_like(points, dtype=bool),
        labels,
        ("x1", "x2", "x3"),
        ("0", "1"),
    )


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class CsvSchema:
    """Shape of a labeled CSV: which column is the label, which classes exist.

    ``class_names=None`` infers classes from the label column (sorted
    numerically when all labels parse as numbers, else lexicographically).
    """

    label_column: str = "label"
    feature_columns: tuple[str, ...] | None = None
    class_names: tuple[str, ...] | None = None


def parse_csv(text: str, schema: CsvSchema | None = None) -> LabeledDataset:
    schema = schema or CsvSchema()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty CSV: no header row") from None
    header = [h.strip() for h in header]
    if schema.label_column not in header:
        raise FormatError(f"label column {schema.label_column!r} not in header {header}")
    label_pos = header.index(schema.label_column)
    if schema.feature_columns is None:
        feature_names = tuple(h for i, h in enumerate(header) if i != label_pos)
    else:
        for name in schema.feature_columns:
            if name not in header:
                raise FormatError(f"feature column {name!r} not in header")
        feature_names = tuple(schema.feature_columns)
    feature_pos = [header.index(name) for name in feature_names]

    rows, masks, raw_labels = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(
                f"row {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        values = np.empty(len(feature_pos))
        mask = np.empty(len(feature_pos), dtype=bool)
        for j, pos in enumerate(feature_pos):
            cell = row[pos].strip()
            if cell in ("", "?"):
                values[j] = np.nan
                mask[j] = False
                continue
            try:
                values[j] = float(cell)
            except ValueError:
                raise FormatError(
                    f"row {lineno}, column {header[pos]!r}: non-numeric cell {cell!r}"
                ) from None
            mask[j] = True
        label_cell = row[label_pos].strip()
        if label_cell in ("", "?"):
            raise FormatError(f"row {lineno}: missing label")
        rows.append(values)
        masks.append(mask)
        raw_labels.append(label_cell)
    if not rows:
        raise FormatError("CSV contains no data rows")

    if schema.class_names is not None:
        class_names = tuple(schema.class_names)
    else:
        uniq = sorted(set(raw_labels))
        try:
            uniq.sort(key=float)
        except ValueError:
            pass
        class_names = tuple(uniq)
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, cell in enumerate(raw_labels):
        if cell not in index:
            raise FormatError(
                f"row {i + 2}: label {cell!r} outside declared classes {class_names}"
            )
        labels[i] = index[cell]
    return LabeledDataset(np.array(rows), np.array(masks), labels, feature_names, class_names)


def load_csv(path, schema: CsvSchema | None = None) -> LabeledDataset:
    return parse_csv(Path(path).read_text(), schema)


def save_csv(dataset: LabeledDataset, path) -> None:
    """Write a dataset as CSV; missing cells become '?'."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(dataset.feature_names) + ["label"])
        for values, mask, label in zip(dataset.samples, dataset.present, dataset.labels):
            row = [repr(float(v)) if m else "?" for v, m in zip(values, mask)]
            row.append(dataset.class_names[label])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Cleveland heart disease


def parse_cleveland(text: str) -> LabeledDataset:
    """Parse the UCI processed-Cleveland record format.

    14 comma-separated fields per line: 13 features ('?' marks a missing
    cell) and a 0-4 condition grade as the last field.
    """
    rows, masks, labels = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 14:
            raise FormatError(f"row {lineno}: expected 14 fields, got {len(fields)}")
        values = np.empty(13)
        mask = np.empty(13, dtype=bool)
        for j, cell in enumerate(fields[:13]):
            if cell == "?":
                values[j] = np.nan
                mask[j] = False
                continue
            try:
                values[j] = float(cell)
            except ValueError:
                raise FormatError(
                    f"row {lineno}, field {j + 1}: non-numeric cell {cell!r}"
                ) from None
            mask[j] = True
        try:
            grade = float(fields[13])
        except ValueError:
            raise FormatError(f"row {lineno}: non-numeric target {fields[13]!r}") from None
        if not grade.is_integer() or not 0 <= grade <= 4:
            raise FormatError(f"row {lineno}: target {fields[13]!r} outside 0..4")
        rows.append(values)
        masks.append(mask)
        labels.append(int(grade))
    if not rows:
        raise FormatError("no data rows")
    return LabeledDataset(
        np.array(rows),
        np.array(masks),
        np.array(labels, dtype=np.int64),
        CLEVELAND_FEATURES,
        ("0", "1", "2", "3", "4"),
    )


def load_cleveland(path) -> LabeledDataset:
    return parse_cleveland(Path(path).read_text())


def relabel(dataset: LabeledDataset, mode: str, missing_policy: str = "to-missing"):
    """Derive the binary or five-class heart-disease setup.

    Binary mode merges grades 1-4 into one disease class. The missing
    policy either keeps the mask ('to-missing') or writes the literal -9.0
    convention into unobserved cells ('keep-minus-nine').
    """
    if mode not in ("binary", "five-class"):
        raise ValueError(f"unknown mode {mode!r}")
    if missing_policy not in ("keep-minus-nine", "to-missing"):
        raise ValueError(f"unknown missing_policy {missing_policy!r}")
    if mode == "binary":
        labels = (dataset.labels > 0).astype(np.int64)
        class_names = ("healthy", "disease")
    else:
        labels = dataset.labels
        class_names = dataset.class_names
    samples = dataset.samples
    present = dataset.present
    if missing_policy == "keep-minus-nine":
        samples = np.where(present, samples, -9.0)
        present = np.ones_like(present)
    return LabeledDataset(samples, present, labels, dataset.feature_names, class_names)


# ---------------------------------------------------------------------------
# z-score preprocessing


@dataclass(frozen=True)
class ZScoreParams:
    mean: np.ndarray
    std: np.ndarray


def zscore_fit(train: LabeledDataset) -> ZScoreParams:
    """Per-feature mean/std over observed cells; degenerate std becomes 1."""
    mean = np.empty(train.n_features)
    std = np.empty(train.n_features)
    for j in range(train.n_features):
        col = train.samples[train.present[:, j], j]
        if col.size == 0:
            mean[j], std[j] = 0.0, 1.0
            continue
        mean[j] = col.mean()
        s = col.std()
        std[j] = s if s > 1e-12 else 1.0
    return ZScoreParams(mean, std)


def zscore_apply(dataset: LabeledDataset, params: ZScoreParams) -> LabeledDataset:
    samples = np.where(dataset.present, (dataset.samples - params.mean) / params.std, np.nan)
    return LabeledDataset(
        samples, dataset.present, dataset.labels, dataset.feature_names, dataset.class_names
    )


def zscore_invert(dataset: LabeledDataset, params: ZScoreParams) -> LabeledDataset:
    samples = np.where(dataset.present, dataset.samples * params.std + params.mean, np.nan)
    return LabeledDataset(
        samples, dataset.present, dataset.labels, dataset.feature_names, dataset.class_names
    )


def class_balance_text(dataset: LabeledDataset) -> str:
    counts = dataset.class_counts()
    parts = [
        f"{name}: {count} ({count / dataset.n_samples:.1%})"
        for name, count in zip(dataset.class_names, counts)
    ]
    return ", ".join(parts)
