"""Stratified cross-validation, classification metrics, eigenvalue
relevance profiles, and the experiment harness.

The harness runs fold x run x config cells: per cell it fits the z-score
on the training split, applies it to both splits, oversamples the training
split only (after z-scoring), trains, and records train/test metrics plus
eigenvalue profiles. Aggregates report both the std over all cells and the
fold-std averaged over runs.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import resampling
from .data import LabeledDataset, zscore_apply, zscore_fit
from .errors import ClassTooSmall
from .model import PrototypeModel, TrainingConfig, Variant, train

REPORT_FORMAT_VERSION = 1

# Eigenvalues and relevances below this fraction of the trace do not count
# toward the effective rank.
EFFECTIVE_RANK_THRESHOLD = 0.01


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class FoldSplit:
    assignments: np.ndarray  # (S,) fold index per sample
    k: int
    stratified: bool
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(dataset: LabeledDataset, k: int, seed: int) -> FoldSplit:
    """Per-class shuffled round-robin assignment; class fold counts differ
    by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = dataset.class_counts()
    for c, count in enumerate(counts):
        if count < k:
            raise ClassTooSmall(
                f"class {dataset.class_names[c]!r} has {count} samples, fewer "
                f"than k={k} folds"
            )
    rng = np.random.default_rng(seed)
    assignments = np.empty(dataset.n_samples, dtype=np.int64)
    for c in range(dataset.n_classes):
        rows = np.flatnonzero(dataset.labels == c)
        rows = rng.permutation(rows)
        assignments[rows] = np.arange(rows.size) % k
    return FoldSplit(assignments, k, True, seed)


@dataclass(frozen=True)
class Metrics:
    error: float
    sensitivity: float  # pooled exact recall over the positive classes
    specificity: float  # pooled exact recall over the remaining classes
    classwise_accuracy: np.ndarray  # per-class recall, NaN when undefined
    confusion: np.ndarray  # (C, C) counts, true class in rows

    def as_dict(self) -> dict:
        return {
            "error": self.error,
            "sensitivity": _none_if_nan(self.sensitivity),
            "specificity": _none_if_nan(self.specificity),
            "classwise_accuracy": [_none_if_nan(v) for v in self.classwise_accuracy],
            "confusion": self.confusion.tolist(),
        }


def _none_if_nan(v):
    v = float(v)
    return None if math.isnan(v) else v


def _pooled_recall(confusion, counts, classes) -> float:
    total = sum(counts[c] for c in classes)
    if total == 0:
        return float("nan")
    hit = sum(confusion[c, c] for c in classes)
    return hit / total


def compute_metrics(predictions, labels, n_classes, positive_classes=None) -> Metrics:
    """Error, pooled sensitivity/specificity, per-class recall, confusion.

    ``positive_classes`` defaults to every class except 0 (the healthy /
    background convention). Undefined rates are NaN, never silently 0.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if positive_classes is None:
        positive_classes = tuple(range(1, n_classes))
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    counts = confusion.sum(axis=1)
    classwise = np.array(
        [confusion[c, c] / counts[c] if counts[c] else float("nan") for c in range(n_classes)]
    )
    positive = tuple(positive_classes)
    negative = tuple(c for c in range(n_classes) if c not in positive)
    return Metrics(
        error=1.0 - confusion.trace() / labels.size,
        sensitivity=_pooled_recall(confusion, counts, positive),
        specificity=_pooled_recall(confusion, counts, negative),
        classwise_accuracy=classwise,
        confusion=confusion,
    )


@dataclass(frozen=True)
class EigenProfile:
    eigenvalues: np.ndarray  # descending, normalized to sum 1
    effective_rank: int

    def as_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "effective_rank": self.effective_rank,
        }


def _relevance_blocks(model: PrototypeModel) -> dict[str, np.ndarray]:
    """Named positive semidefinite relevance matrices of a model."""
    blocks: dict[str, np.ndarray] = {}
    names = model.class_names or tuple(str(c) for c in range(model.n_classes))
    if model.variant.has_omega:
        blocks["global"] = model.omega.T @ model.omega
    if model.variant.has_psi:
        for slot in range(model.psi.shape[0]):
            label = (
                f"prototype:{slot}"
                if model.psi_attachment == "prototype"
                else f"class:{names[slot]}"
            )
            t = model.psi[slot] @ model.omega if model.variant.psi_square else model.psi[slot]
            blocks[label] = t.T @ t
    return blocks


def eigen_relevance(model: PrototypeModel) -> dict[str, EigenProfile]:
    """Eigenvalue profile of every relevance matrix, descending and
    normalized to unit trace; effective rank at the 1% threshold."""
    if model.omega is None and model.psi is None:
        raise ValueError("model has no adaptive matrices")
    profiles = {}
    for name, lam in _relevance_blocks(model).items():
        eig = np.linalg.eigvalsh(lam)[::-1]
        eig = np.clip(eig, 0.0, None)
        total = eig.sum()
        if total > 0:
            eig = eig / total
        profiles[name] = EigenProfile(
            eigenvalues=eig,
            effective_rank=int((eig > EFFECTIVE_RANK_THRESHOLD).sum()),
        )
    return profiles


def feature_relevances(model: PrototypeModel) -> dict[str, np.ndarray]:
    """Per-matrix relevance profile diag(Lambda), normalized to sum 1."""
    if model.omega is None and model.psi is None:
        raise ValueError("model has no adaptive matrices")
    out = {}
    for name, lam in _relevance_blocks(model).items():
        diag = np.clip(np.diag(lam), 0.0, None)
        total = diag.sum()
        out[name] = diag / total if total > 0 else diag
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: LabeledDataset
    variant: Variant | str
    configs: tuple[TrainingConfig, ...]
    folds: int = 5
    runs: int = 1
    oversample: str = "none"  # none | smote | smoteg
    smote_k: int = 3
    zscore: bool = True
    positive_classes: tuple[int, ...] | None = None
    attachment: str = "class"
    seed: int = 0
    backend: str | None = None

    def __post_init__(self):
        if self.oversample not in ("none", "smote", "smoteg"):
            raise ValueError(f"unknown oversample mode {self.oversample!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.configs:
            raise ValueError("at least one training config is required")


@dataclass(frozen=True)
class CVCell:
    config_index: int
    run: int
    fold: int
    train_metrics: Metrics
    test_metrics: Metrics
    eigen: dict[str, EigenProfile] | None
    relevances: dict[str, np.ndarray] | None


@dataclass(frozen=True)
class ConfigSummary:
    config_index: int
    mean: dict[str, float]
    std: dict[str, float]  # over all fold x run cells (ddof=1)
    std_folds: dict[str, float]  # fold std within a run, averaged over runs
    median_effective_rank: dict[str, float]


@dataclass(frozen=True)
class CVReport:
    variant: str
    folds: int
    runs: int
    oversample: str
    smote_k: int
    zscore: bool
    seed: int
    configs: tuple[TrainingConfig, ...]
    cells: tuple[CVCell, ...]
    summaries: tuple[ConfigSummary, ...]
    best_config_index: int

    def cells_for(self, config_index: int):
        return [c for c in self.cells if c.config_index == config_index]

    def to_document(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "kind": "lvqkit-cv-report",
            "variant": self.variant,
            "folds": self.folds,
            "runs": self.runs,
            "oversample": self.oversample,
            "smote_k": self.smote_k,
            "zscore": self.zscore,
            "preprocessing_order": "zscore-then-oversample",
            "seed": self.seed,
            "configs": [_config_dict(c) for c in self.configs],
            "best_config_index": self.best_config_index,
            "summaries": [_sanitize(dataclasses.asdict(s)) for s in self.summaries],
            "cells": [
                {
                    "config_index": c.config_index,
                    "run": c.run,
                    "fold": c.fold,
                    "train": c.train_metrics.as_dict(),
                    "test": c.test_metrics.as_dict(),
                    "eigen": None
                    if c.eigen is None
                    else {k: v.as_dict() for k, v in c.eigen.items()},
                    "relevances": None
                    if c.relevances is None
                    else {k: v.tolist() for k, v in c.relevances.items()},
                }
                for c in self.cells
            ],
        }

    def cells_csv(self, class_names=None) -> str:
        """Flat per-cell table, one row per fold x run x config."""
        n_classes = self.cells[0].test_metrics.classwise_accuracy.size
        names = class_names or [str(c) for c in range(n_classes)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["config_index", "beta", "rank", "prototypes_per_class", "run", "fold",
             "train_error", "test_error", "sensitivity", "specificity"]
            + [f"recall_{n}" for n in names]
        )
        for c in self.cells:
            cfg = self.configs[c.config_index]
            writer.writerow(
                [c.config_index, cfg.beta, cfg.rank, cfg.prototypes_per_class,
                 c.run, c.fold,
                 repr(c.train_metrics.error), repr(c.test_metrics.error),
                 repr(float(c.test_metrics.sensitivity)),
                 repr(float(c.test_metrics.specificity))]
                + [repr(float(v)) for v in c.test_metrics.classwise_accuracy]
            )
        return buf.getvalue()


def _config_dict(cfg: TrainingConfig) -> dict:
    return dataclasses.asdict(cfg)


def _sanitize(obj):
    """NaN -> None recursively so documents stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _cell_scalars(cell: CVCell) -> dict[str, float]:
    out = {
        "train_error": cell.train_metrics.error,
        "test_error": cell.test_metrics.error,
        "sensitivity": float(cell.test_metrics.sensitivity),
        "specificity": float(cell.test_metrics.specificity),
    }
    for c, v in enumerate(cell.test_metrics.classwise_accuracy):
        out[f"recall_{c}"] = float(v)
    return out


def _nan_mean(v) -> float:
    good = v[~np.isnan(v)]
    return float(good.mean()) if good.size else float("nan")


def _nan_std(v) -> float:
    good = v[~np.isnan(v)]
    return float(good.std(ddof=1)) if good.size > 1 else 0.0


def _aggregate(cells: list[CVCell], config_index: int, runs: int) -> ConfigSummary:
    keys = _cell_scalars(cells[0]).keys()
    values = {k: np.array([_cell_scalars(c)[k] for c in cells]) for k in keys}
    mean = {k: _nan_mean(v) for k, v in values.items()}
    std = {k: _nan_std(v) for k, v in values.items()}
    std_folds = {}
    for k, v in values.items():
        per_run = []
        for run in range(runs):
            rows = np.array([i for i, c in enumerate(cells) if c.run == run])
            if rows.size > 1:
                per_run.append(_nan_std(v[rows]))
        std_folds[k] = float(np.mean(per_run)) if per_run else 0.0

    ranks: dict[str, list[int]] = {}
    for c in cells:
        if c.eigen:
            for name, profile in c.eigen.items():
                ranks.setdefault(name, []).append(profile.effective_rank)
    median_rank = {name: float(np.median(v)) for name, v in ranks.items()}
    return ConfigSummary(config_index, mean, std, std_folds, median_rank)


def run_experiment(spec: ExperimentSpec) -> CVReport:
    """Cross-validate every config over fold x run cells.

    Deterministic under the spec seed: splits vary per run, training seeds
    per (run, fold) cell, and all configs share the same cells so their
    aggregates are comparable. Model selection picks the config with the
    best mean training error, ties broken by lower test-error std.
    """
    dataset = spec.dataset
    variant = Variant.parse(spec.variant)
    # validate fold feasibility before any training
    stratified_kfold(dataset, spec.folds, seed=0)

    cells: list[CVCell] = []
    for run in range(spec.runs):
        split = stratified_kfold(dataset, spec.folds, _derived_seed(spec.seed, 10, run))
        for fold in range(spec.folds):
            train_ds = dataset.subset(split.train_indices(fold))
            test_ds = dataset.subset(split.test_indices(fold))
            if spec.zscore:
                params = zscore_fit(train_ds)
                train_ds = zscore_apply(train_ds, params)
                test_ds = zscore_apply(test_ds, params)
            if spec.oversample != "none":
                overcfg = resampling.OversampleConfig(
                    k=spec.smote_k, seed=_derived_seed(spec.seed, 20, run, fold)
                )
                sampler = (
                    resampling.smote_geodesic
                    if spec.oversample == "smoteg"
                    else resampling.smote
                )
                train_ds = sampler(train_ds, overcfg)
            cell_seed = _derived_seed(spec.seed, 30, run, fold)
            for ci, cfg in enumerate(spec.configs):
                model, _ = train(
                    train_ds,
                    dataclasses.replace(cfg, seed=cell_seed),
                    variant,
                    backend=spec.backend,
                    attachment=spec.attachment,
                )
                has_matrices = model.omega is not None or model.psi is not None
                cells.append(
                    CVCell(
                        config_index=ci,
                        run=run,
                        fold=fold,
                        train_metrics=_evaluate(model, train_ds, spec.positive_classes),
                        test_metrics=_evaluate(model, test_ds, spec.positive_classes),
                        eigen=eigen_relevance(model) if has_matrices else None,
                        relevances=feature_relevances(model) if has_matrices else None,
                    )
                )

    summaries = tuple(
        _aggregate([c for c in cells if c.config_index == ci], ci, spec.runs)
        for ci in range(len(spec.configs))
    )
    best = min(
        range(len(summaries)),
        key=lambda ci: (
            round(summaries[ci].mean["train_error"], 12),
            round(summaries[ci].std["test_error"], 12),
            ci,
        ),
    )
    return CVReport(
        variant=variant.value,
        folds=spec.folds,
        runs=spec.runs,
        oversample=spec.oversample,
        smote_k=spec.smote_k,
        zscore=spec.zscore,
        seed=spec.seed,
        configs=tuple(spec.configs),
        cells=tuple(cells),
        summaries=summaries,
        best_config_index=best,
    )


def _evaluate(model: PrototypeModel, ds: LabeledDataset, positive_classes) -> Metrics:
    predictions = model.predict_batch(ds.samples, present=ds.present)
    return compute_metrics(predictions, ds.labels, ds.n_classes, positive_classes)
