"""Prototype models: initialization, the margin cost, stochastic-gradient
training for all six dissimilarity variants, prediction, and a versioned
JSON document format.

The per-sample update loop is delegated to a backend kernel (compiled
extension when available, numpy fallback otherwise); see ``backends``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import backends, geometry
from .data import LabeledDataset
from .errors import (
    EmptyClass,
    FormatError,
    MissingNotSupported,
    NonFinite,
    ZeroDenominator,
)

MODEL_FORMAT_VERSION = 1


class Variant(str, Enum):
    """The six dissimilarity variants; short codes follow the CLI."""

    EUCLID_GLOBAL = "euclid-global"
    EUCLID_LOCAL = "euclid-local"
    EUCLID_TWOMATRIX = "euclid-2matrix"
    ANGLE_GLOBAL = "angle-global"
    ANGLE_LOCAL = "angle-local"
    ANGLE_TWOMATRIX = "angle-2matrix"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        value = str(value).strip().lower()
        for variant in cls:
            if value in (variant.value, variant.short):
                return variant
        raise ValueError(f"unknown variant {value!r}; expected one of "
                         f"{[v.short for v in cls]} or {[v.value for v in cls]}")

    @property
    def short(self) -> str:
        return _SHORT[self]

    @property
    def is_angle(self) -> bool:
        return self.value.startswith("angle")

    @property
    def has_omega(self) -> bool:
        return self in (
            Variant.EUCLID_GLOBAL,
            Variant.EUCLID_TWOMATRIX,
            Variant.ANGLE_GLOBAL,
            Variant.ANGLE_TWOMATRIX,
        )

    @property
    def has_psi(self) -> bool:
        return self in (
            Variant.EUCLID_LOCAL,
            Variant.EUCLID_TWOMATRIX,
            Variant.ANGLE_LOCAL,
            Variant.ANGLE_TWOMATRIX,
        )

    @property
    def psi_square(self) -> bool:
        """Local matrices live in the reduced space (M x M) for 2-matrix variants."""
        return self in (Variant.EUCLID_TWOMATRIX, Variant.ANGLE_TWOMATRIX)

    @property
    def code(self) -> int:
        """Integer code shared with the backend kernels."""
        return _CODES[self]


_SHORT = {
    Variant.EUCLID_GLOBAL: "eg",
    Variant.EUCLID_LOCAL: "el",
    Variant.EUCLID_TWOMATRIX: "e2m",
    Variant.ANGLE_GLOBAL: "ag",
    Variant.ANGLE_LOCAL: "al",
    Variant.ANGLE_TWOMATRIX: "a2m",
}

_CODES = {
    Variant.EUCLID_GLOBAL: 0,
    Variant.EUCLID_LOCAL: 1,
    Variant.EUCLID_TWOMATRIX: 2,
    Variant.ANGLE_GLOBAL: 3,
    Variant.ANGLE_LOCAL: 4,
    Variant.ANGLE_TWOMATRIX: 5,
}


@dataclass(frozen=True)
class TrainingConfig:
    prototypes_per_class: int = 1
    epochs: int = 300
    lr_prototype: float = 0.05
    lr_matrix: float = 0.005
    lr_decay: str = "inverse"  # lr / (1 + epoch/epochs); or "constant"
    beta: float = 1.0
    rank: int | None = None  # projection rank M; None = full rank D
    seed: int = 0
    normalize_every: int = 1

    def __post_init__(self):
        if self.prototypes_per_class < 1:
            raise ValueError("prototypes_per_class must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr_prototype < 0 or self.lr_matrix < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.lr_matrix > self.lr_prototype:
            raise ValueError("lr_matrix must not exceed lr_prototype")
        if self.lr_decay not in ("inverse", "constant"):
            raise ValueError(f"unknown lr_decay {self.lr_decay!r}")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.normalize_every < 1:
            raise ValueError("normalize_every must be >= 1")

    def lr_at(self, epoch: int, variant=None) -> tuple[float, float]:
        """Step sizes for an epoch.

        Angle variants divide by beta: the margin chain rule carries a
        factor of order beta (g' ~ -beta g), so this keeps the effective
        step size comparable across the beta grid.
        """
        if self.lr_decay == "constant":
            decay = 1.0
        else:
            decay = 1.0 / (1.0 + epoch / self.epochs)
        if variant is not None and Variant.parse(variant).is_angle:
            decay /= self.beta
        return self.lr_prototype * decay, self.lr_matrix * decay


@dataclass
class PrototypeModel:
    variant: Variant
    prototypes: np.ndarray  # (W, D)
    proto_labels: np.ndarray  # (W,) int64
    omega: np.ndarray | None = None  # (M, D)
    psi: np.ndarray | None = None  # (K, M, D) or (K, M, M)
    psi_attachment: str | None = None  # "class" or "prototype"
    beta: float | None = None
    feature_names: tuple[str, ...] | None = None
    class_names: tuple[str, ...] | None = None
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        self.prototypes = np.ascontiguousarray(self.prototypes, dtype=np.float64)
        self.proto_labels = np.ascontiguousarray(self.proto_labels, dtype=np.int64)
        if self.omega is not None:
            self.omega = np.ascontiguousarray(self.omega, dtype=np.float64)
        if self.psi is not None:
            self.psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        if self.variant.is_angle and (self.beta is None or self.beta <= 0):
            raise ValueError("angle variants need a positive beta")

    @property
    def n_prototypes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def n_features(self) -> int:
        return self.prototypes.shape[1]

    @property
    def n_classes(self) -> int:
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.proto_labels.max()) + 1

    @property
    def rank(self) -> int:
        if self.omega is not None:
            return self.omega.shape[0]
        if self.psi is not None:
            return self.psi.shape[1]
        return self.n_features

    def psi_index(self) -> np.ndarray:
        """Per-prototype index into the local matrix stack."""
        if self.psi is None:
            return np.zeros(self.n_prototypes, dtype=np.int64)
        if self.psi_attachment == "prototype":
            return np.arange(self.n_prototypes, dtype=np.int64)
        return self.proto_labels.copy()

    def dissimilarities(self, x, present=None) -> np.ndarray:
        """Dissimilarity of one sample to every prototype (reference path)."""
        x = np.asarray(x, dtype=np.float64)
        if present is None and np.isnan(x).any():
            present = ~np.isnan(x)
        v = self.variant
        if not v.is_angle and present is not None and not np.all(present):
            raise MissingNotSupported(
                f"{v.value} does not support samples with missing dimensions"
            )
        idx = self.psi_index()
        out = np.empty(self.n_prototypes)
        for r, w in enumerate(self.prototypes):
            if v is Variant.EUCLID_GLOBAL:
                out[r] = geometry.euclid_quadform(x, w, omega=self.omega)
            elif v is Variant.EUCLID_LOCAL:
                out[r] = geometry.euclid_quadform(x, w, psi=self.psi, idx=idx[r])
            elif v is Variant.EUCLID_TWOMATRIX:
                out[r] = geometry.euclid_quadform(
                    x, w, omega=self.omega, psi=self.psi, idx=idx[r]
                )
            elif v is Variant.ANGLE_GLOBAL:
                b = geometry.angle_global(x, w, self.omega, present=present)
                out[r] = geometry.g_beta(b, self.beta)
            elif v is Variant.ANGLE_LOCAL:
                b = geometry.angle_local(x, w, self.psi, idx[r], present=present)
                out[r] = geometry.g_beta(b, self.beta)
            else:
                b = geometry.angle_twomatrix(
                    x, w, self.omega, self.psi, idx[r], present=present
                )
                out[r] = geometry.g_beta(b, self.beta)
        return out

    def predict(self, x, present=None) -> int:
        """Label of the nearest prototype; ties break to the lowest index."""
        d = self.dissimilarities(x, present=present)
        return int(self.proto_labels[int(np.argmin(d))])

    def predict_batch(self, X, present=None, backend=None) -> np.ndarray:
        d = dissimilarity_matrix(self, X, present=present, backend=backend)
        return self.proto_labels[np.argmin(d, axis=1)]

    def copy(self) -> "PrototypeModel":
        return PrototypeModel(
            variant=self.variant,
            prototypes=self.prototypes.copy(),
            proto_labels=self.proto_labels.copy(),
            omega=None if self.omega is None else self.omega.copy(),
            psi=None if self.psi is None else self.psi.copy(),
            psi_attachment=self.psi_attachment,
            beta=self.beta,
            feature_names=self.feature_names,
            class_names=self.class_names,
            training_meta=dict(self.training_meta),
        )


@dataclass(frozen=True)
class MarginTerms:
    d_correct: float
    d_wrong: float
    correct_index: int
    wrong_index: int

    @property
    def mu(self) -> float:
        return (self.d_correct - self.d_wrong) / (self.d_correct + self.d_wrong)


@dataclass(frozen=True)
class TrainTrace:
    """Per-epoch summed margin cost and training error rate."""

    cost: np.ndarray
    error: np.ndarray


def _kernel_inputs(dataset: LabeledDataset):
    X = np.where(dataset.present, dataset.samples, 0.0)
    X = np.ascontiguousarray(X, dtype=np.float64)
    mask = np.ascontiguousarray(dataset.present, dtype=np.uint8)
    return X, mask


def dissimilarity_matrix(model: PrototypeModel, X, present=None, backend=None):
    """(S, W) dissimilarities of a batch to every prototype."""
    X = np.asarray(X, dtype=np.float64)
    if present is None:
        present = ~np.isnan(X)
    present = np.asarray(present, dtype=bool)
    if not model.variant.is_angle and not present.all():
        raise MissingNotSupported(
            f"{model.variant.value} does not support samples with missing dimensions"
        )
    kern = backends.get(backend)
    return kern.dissim_matrix(
        np.ascontiguousarray(np.where(present, X, 0.0)),
        np.ascontiguousarray(present, dtype=np.uint8),
        model.prototypes,
        model.omega,
        model.psi,
        model.psi_index(),
        model.variant.code,
        0.0 if model.beta is None else float(model.beta),
    )


def init_model(
    dataset: LabeledDataset,
    cfg: TrainingConfig,
    variant,
    attachment: str = "class",
) -> PrototypeModel:
    """Prototypes at noisy per-class observed means; matrices at the
    normalized truncated identity. Deterministic given cfg.seed."""
    variant = Variant.parse(variant)
    if attachment not in ("class", "prototype"):
        raise ValueError(f"unknown attachment {attachment!r}")
    counts = dataset.class_counts()
    for c, count in enumerate(counts):
        if count == 0:
            raise EmptyClass(f"class {dataset.class_names[c]!r} has no samples")
    d = dataset.n_features
    n_classes = dataset.n_classes
    rank = cfg.rank if cfg.rank is not None else d
    if rank > d:
        raise ValueError(f"rank {rank} exceeds dimension {d}")

    observed = dataset.present
    values = np.where(observed, dataset.samples, 0.0)
    obs_per_dim = observed.sum(axis=0)
    global_mean = np.where(obs_per_dim > 0, values.sum(axis=0) / np.maximum(obs_per_dim, 1), 0.0)
    sq = np.where(observed, (dataset.samples - global_mean) ** 2, 0.0)
    global_std = np.sqrt(np.where(obs_per_dim > 0, sq.sum(axis=0) / np.maximum(obs_per_dim, 1), 0.0))

    class_means = np.empty((n_classes, d))
    for c in range(n_classes):
        rows = dataset.labels == c
        cnt = observed[rows].sum(axis=0)
        tot = values[rows].sum(axis=0)
        class_means[c] = np.where(cnt > 0, tot / np.maximum(cnt, 1), global_mean)

    rng = np.random.default_rng(cfg.seed)
    per_class = cfg.prototypes_per_class
    protos = np.repeat(class_means, per_class, axis=0)
    protos = protos + rng.uniform(-0.01, 0.01, size=protos.shape) * global_std
    proto_labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    if variant.is_angle:
        # angle dissimilarities are scale-free in the prototype; unit length
        # keeps the cosine gradients well scaled (training maintains this)
        norms = np.linalg.norm(protos, axis=1, keepdims=True)
        protos = np.where(norms > 1e-12, protos / np.maximum(norms, 1e-12), protos)

    omega = None
    psi = None
    psi_attachment = None
    if variant.has_omega:
        omega = np.eye(rank, d) / np.sqrt(rank)
    if variant.has_psi:
        n_local = protos.shape[0] if attachment == "prototype" else n_classes
        base = np.eye(rank) if variant.psi_square else np.eye(rank, d)
        psi = np.broadcast_to(base / np.sqrt(rank), (n_local, *base.shape)).copy()
        psi_attachment = attachment

    return PrototypeModel(
        variant=variant,
        prototypes=protos,
        proto_labels=proto_labels,
        omega=omega,
        psi=psi,
        psi_attachment=psi_attachment,
        beta=cfg.beta if variant.is_angle else None,
        feature_names=dataset.feature_names,
        class_names=dataset.class_names,
    )


def margin_terms(model: PrototypeModel, x, label: int, present=None) -> MarginTerms:
    """Closest correct and closest wrong prototype dissimilarities."""
    same = model.proto_labels == label
    if not same.any():
        raise EmptyClass(f"model has no prototype labeled {label}")
    if same.all():
        raise EmptyClass("model has no prototype with a different label")
    d = model.dissimilarities(x, present=present)
    jdx = int(np.flatnonzero(same)[np.argmin(d[same])])
    kdx = int(np.flatnonzero(~same)[np.argmin(d[~same])])
    return MarginTerms(float(d[jdx]), float(d[kdx]), jdx, kdx)


def gamma_weights(terms: MarginTerms) -> tuple[float, float]:
    """Chain-rule weights of the margin: positive for the attracting
    prototype, negative for the repelling one."""
    denom = terms.d_correct + terms.d_wrong
    if denom <= 1e-12:
        raise ZeroDenominator(
            "both winning prototypes coincide with the sample (dJ + dK ~ 0)"
        )
    return 2.0 * terms.d_wrong / denom**2, -2.0 * terms.d_correct / denom**2


def cost(model: PrototypeModel, dataset: LabeledDataset) -> float:
    """Summed relative-distance margin over the dataset (lower is better)."""
    total = 0.0
    for i in range(dataset.n_samples):
        t = margin_terms(
            model, dataset.samples[i], int(dataset.labels[i]), present=dataset.present[i]
        )
        total += t.mu
    return total


def sgd_step(
    model: PrototypeModel,
    x,
    label: int,
    cfg: TrainingConfig,
    epoch: int = 0,
    present=None,
) -> PrototypeModel:
    """One stochastic update for a single sample; returns the updated model.

    The training loop runs the same update inside the backend kernel; this
    entry point is the single-step reference used by tests and callers.
    """
    from . import _pykernels

    updated = model.copy()
    x = np.asarray(x, dtype=np.float64)
    if present is None:
        present = ~np.isnan(x)
    present = np.asarray(present, dtype=bool)
    if not model.variant.is_angle and not present.all():
        raise MissingNotSupported(
            f"{model.variant.value} does not support samples with missing dimensions"
        )
    lr_p, lr_m = cfg.lr_at(epoch, variant=model.variant)
    _pykernels.update_one(
        np.where(present, x, 0.0),
        present,
        int(label),
        updated.prototypes,
        updated.proto_labels,
        updated.omega,
        updated.psi,
        updated.psi_index(),
        updated.variant.code,
        0.0 if updated.beta is None else updated.beta,
        lr_p,
        lr_m,
        normalize=(cfg.normalize_every == 1),
    )
    return updated


def train(
    dataset: LabeledDataset,
    cfg: TrainingConfig,
    variant,
    backend=None,
    attachment: str = "class",
) -> tuple[PrototypeModel, TrainTrace]:
    """Stochastic-gradient training over seeded shuffles.

    Returns the trained model and the per-epoch cost/error trace.
    Deterministic for fixed (dataset, cfg, variant, backend).
    """
    variant = Variant.parse(variant)
    if not variant.is_angle and not dataset.fully_observed:
        raise MissingNotSupported(
            f"{variant.value} cannot train on data with missing cells"
        )
    if np.unique(dataset.labels).size < 2:
        raise EmptyClass("training requires samples from at least two classes")
    model = init_model(dataset, cfg, variant, attachment=attachment)
    kern = backends.get(backend)
    X, mask = _kernel_inputs(dataset)
    labels = dataset.labels
    psi_index = model.psi_index()
    n = dataset.n_samples

    rng = np.random.default_rng(cfg.seed)
    cost_trace = np.empty(cfg.epochs)
    error_trace = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n).astype(np.int64)
        lr_p, lr_m = cfg.lr_at(epoch, variant=variant)
        cost_sum, err_count = kern.train_epoch(
            X,
            mask,
            labels,
            model.prototypes,
            model.proto_labels,
            model.omega,
            model.psi,
            psi_index,
            variant.code,
            0.0 if model.beta is None else model.beta,
            lr_p,
            lr_m,
            order,
            cfg.normalize_every,
            epoch * n,
        )
        cost_trace[epoch] = cost_sum
        error_trace[epoch] = err_count / n
        if not np.isfinite(model.prototypes).all():
            raise NonFinite(f"prototypes became non-finite in epoch {epoch}")
        if model.omega is not None and not np.isfinite(model.omega).all():
            raise NonFinite(f"omega became non-finite in epoch {epoch}")
        if model.psi is not None and not np.isfinite(model.psi).all():
            raise NonFinite(f"local matrices became non-finite in epoch {epoch}")

    model.training_meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "lr_prototype": cfg.lr_prototype,
        "lr_matrix": cfg.lr_matrix,
        "lr_decay": cfg.lr_decay,
        "prototypes_per_class": cfg.prototypes_per_class,
        "rank": model.rank,
        "normalize_every": cfg.normalize_every,
        "backend": kern.name,
    }
    return model, TrainTrace(cost_trace, error_trace)


def predict(model: PrototypeModel, x, present=None) -> int:
    return model.predict(x, present=present)


# ---------------------------------------------------------------------------
# Model documents


def serialize(model: PrototypeModel) -> dict:
    """Versioned, self-describing document; arrays nested row-major."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "lvqkit-model",
        "variant": model.variant.value,
        "beta": model.beta,
        "prototypes": model.prototypes.tolist(),
        "proto_labels": model.proto_labels.tolist(),
        "omega": None if model.omega is None else model.omega.tolist(),
        "psi": None if model.psi is None else model.psi.tolist(),
        "psi_attachment": model.psi_attachment,
        "feature_names": None if model.feature_names is None else list(model.feature_names),
        "class_names": None if model.class_names is None else list(model.class_names),
        "training_meta": model.training_meta,
    }


def deserialize(doc: dict) -> PrototypeModel:
    if not isinstance(doc, dict):
        raise FormatError("model document is not a JSON object")
    if doc.get("kind") != "lvqkit-model":
        raise FormatError(f"not a model document (kind={doc.get('kind')!r})")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {doc.get('format_version')!r}")
    try:
        variant = Variant.parse(doc["variant"])
        prototypes = np.asarray(doc["prototypes"], dtype=np.float64)
        proto_labels = np.asarray(doc["proto_labels"], dtype=np.int64)
        omega = doc.get("omega")
        psi = doc.get("psi")
        model = PrototypeModel(
            variant=variant,
            prototypes=prototypes,
            proto_labels=proto_labels,
            omega=None if omega is None else np.asarray(omega, dtype=np.float64),
            psi=None if psi is None else np.asarray(psi, dtype=np.float64),
            psi_attachment=doc.get("psi_attachment"),
            beta=doc.get("beta"),
            feature_names=None
            if doc.get("feature_names") is None
            else tuple(doc["feature_names"]),
            class_names=None
            if doc.get("class_names") is None
            else tuple(doc["class_names"]),
            training_meta=doc.get("training_meta") or {},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc
    _validate_shapes(model)
    return model


def _validate_shapes(model: PrototypeModel):
    if model.prototypes.ndim != 2:
        raise FormatError("prototypes must be a 2-D array")
    w, d = model.prototypes.shape
    if model.proto_labels.shape != (w,):
        raise FormatError("proto_labels length differs from prototype count")
    if model.variant.has_omega:
        if model.omega is None or model.omega.ndim != 2 or model.omega.shape[1] != d:
            raise FormatError(f"variant {model.variant.value} needs an (M, {d}) omega")
    if model.variant.has_psi:
        if model.psi is None or model.psi.ndim != 3:
            raise FormatError(f"variant {model.variant.value} needs a local matrix stack")
        m = model.omega.shape[0] if model.variant.psi_square else model.psi.shape[1]
        expected = (m, m) if model.variant.psi_square else (model.psi.shape[1], d)
        if model.psi.shape[1:] != expected:
            raise FormatError(
                f"local matrices have shape {model.psi.shape[1:]}, expected {expected}"
            )
        n_slots = model.psi.shape[0]
        needed = w if model.psi_attachment == "prototype" else int(model.proto_labels.max()) + 1
        if n_slots < needed:
            raise FormatError(f"local matrix stack has {n_slots} slots, needs {needed}")


def save_model(model: PrototypeModel, path) -> None:
    Path(path).write_text(json.dumps(serialize(model), indent=1) + "\n")


def load_model(path) -> PrototypeModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from exc
    return deserialize(doc)


def replace_config(cfg: TrainingConfig, **changes) -> TrainingConfig:
    return dataclasses.replace(cfg, **changes)
