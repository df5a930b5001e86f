"""Decision-boundary export in the reduced classification space.

Grid directions on the unit circle (rank 2) or unit sphere (rank 3) are
classified as synthetic reduced-space samples against the prototypes'
reduced images, which is the classification the spherical boundary plots
depict. Supported for the variants with one shared reduced space:
angle-global (plain cosine after projection) and angle-2matrix (cosine
under the class-local square matrices).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .data import LabeledDataset
from .errors import DegenerateVector, RankUnsupported, UnsupportedVariant
from .model import PrototypeModel, Variant

EXPORT_FORMAT_VERSION = 1


def circle_grid(count: int) -> np.ndarray:
    """count unit directions evenly spaced on the circle."""
    angles = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(angles), np.sin(angles)])


def fibonacci_sphere(count: int) -> np.ndarray:
    """count quasi-uniform unit directions on the 2-sphere."""
    i = np.arange(count)
    z = 1.0 - 2.0 * (i + 0.5) / count
    radius = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * i
    return np.column_stack([radius * np.cos(phi), radius * np.sin(phi), z])


@dataclass(frozen=True)
class SphereExport:
    variant: str
    rank: int
    resolution: int
    beta: float
    grid_directions: np.ndarray  # (G, M) unit vectors
    grid_classes: np.ndarray  # (G,)
    prototypes_projected: np.ndarray  # (W, M) unit vectors
    proto_labels: np.ndarray  # (W,)
    class_names: tuple[str, ...] | None
    data_projected: np.ndarray | None = None  # (S, M) unit vectors
    data_labels: np.ndarray | None = None
    data_correct: np.ndarray | None = None

    def to_document(self) -> dict:
        doc = {
            "format_version": EXPORT_FORMAT_VERSION,
            "kind": "lvqkit-sphere-export",
            "variant": self.variant,
            "rank": self.rank,
            "resolution": self.resolution,
            "beta": self.beta,
            "class_names": None if self.class_names is None else list(self.class_names),
            "grid_directions": self.grid_directions.tolist(),
            "grid_classes": self.grid_classes.tolist(),
            "prototypes_projected": self.prototypes_projected.tolist(),
            "proto_labels": self.proto_labels.tolist(),
        }
        if self.data_projected is None:
            doc["data"] = None
        else:
            doc["data"] = {
                "directions": self.data_projected.tolist(),
                "labels": self.data_labels.tolist(),
                "correct": self.data_correct.tolist(),
            }
        return doc


def _reduced_dissims(model: PrototypeModel, directions, images) -> np.ndarray:
    """(G, W) dissimilarities between unit directions and reduced images."""
    psi_index = model.psi_index()
    out = np.empty((directions.shape[0], images.shape[0]))
    for r in range(images.shape[0]):
        w = images[r]
        if model.variant is Variant.ANGLE_GLOBAL:
            nw = np.linalg.norm(w)
            if nw < 1e-12:
                raise DegenerateVector(f"prototype {r} has a degenerate reduced image")
            b = np.clip(directions @ w / nw, -1.0, 1.0)
        else:
            psi_c = model.psi[psi_index[r]]
            lam = psi_c.T @ psi_c
            wn = float(w @ lam @ w)
            if wn < 1e-24:
                raise DegenerateVector(f"prototype {r} has a degenerate reduced image")
            un = np.einsum("gm,mn,gn->g", directions, lam, directions)
            b = (directions @ lam @ w) / np.sqrt(un * wn)
            b = np.clip(b, -1.0, 1.0)
        out[:, r] = geometry.g_beta(b, model.beta)
    return out


def export_sphere(
    model: PrototypeModel, resolution: int, data: LabeledDataset | None = None
) -> SphereExport:
    """Classify a quasi-uniform grid of resolution^2 unit directions in the
    model's reduced space; optionally project a dataset alongside."""
    if model.variant not in (Variant.ANGLE_GLOBAL, Variant.ANGLE_TWOMATRIX):
        raise UnsupportedVariant(
            f"sphere export needs a shared reduced space; variant "
            f"{model.variant.value} does not have one"
        )
    rank = model.rank
    if rank not in (2, 3):
        raise RankUnsupported(f"sphere export supports rank 2 or 3, model has {rank}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")

    grid = circle_grid(resolution**2) if rank == 2 else fibonacci_sphere(resolution**2)
    images = model.prototypes @ model.omega.T
    norms = np.linalg.norm(images, axis=1)
    if (norms < 1e-12).any():
        raise DegenerateVector("a prototype has a degenerate reduced image")
    dissims = _reduced_dissims(model, grid, images)
    grid_classes = model.proto_labels[np.argmin(dissims, axis=1)]

    data_projected = data_labels = data_correct = None
    if data is not None:
        filled = np.where(data.present, data.samples, 0.0)
        projected = filled @ model.omega.T
        pnorms = np.linalg.norm(projected, axis=1)
        if (pnorms < 1e-12).any():
            raise DegenerateVector("a data sample has a degenerate reduced image")
        data_projected = projected / pnorms[:, None]
        data_labels = data.labels.copy()
        predictions = model.predict_batch(data.samples, present=data.present)
        data_correct = predictions == data.labels

    return SphereExport(
        variant=model.variant.value,
        rank=rank,
        resolution=resolution,
        beta=float(model.beta),
        grid_directions=grid,
        grid_classes=grid_classes,
        prototypes_projected=images / norms[:, None],
        proto_labels=model.proto_labels.copy(),
        class_names=model.class_names,
        data_projected=data_projected,
        data_labels=data_labels,
        data_correct=data_correct,
    )


def boundary_crossings(export: SphereExport, n_circles: int = 8, samples: int = 360):
    """Class-change counts along sampled great circles (rank 3) or around
    the circle (rank 2); a linear boundary yields at most 2 per circle."""
    model_like = export
    if export.rank == 2:
        order = np.argsort(np.arctan2(*export.grid_directions.T[::-1]))
        labels = export.grid_classes[order]
        changes = int((labels != np.roll(labels, 1)).sum())
        return [changes]
    rng = np.random.default_rng(7)
    counts = []
    for _ in range(n_circles):
        # random great circle through two orthonormal directions
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        b = rng.normal(size=3)
        b -= (b @ a) * a
        b /= np.linalg.norm(b)
        angles = 2.0 * np.pi * np.arange(samples) / samples
        circle = np.outer(np.cos(angles), a) + np.outer(np.sin(angles), b)
        # classify circle points against the nearest grid direction's class
        nearest = np.argmax(circle @ model_like.grid_directions.T, axis=1)
        labels = model_like.grid_classes[nearest]
        counts.append(int((labels != np.roll(labels, 1)).sum()))
    return counts
