"""Minority-class oversampling: classic SMOTE and a geodesic variant that
interpolates along great-circle arcs on the hypersphere.

Both variants work on data with missing cells: neighbor distances use the
mutually observed dimensions, and a synthetic cell is observed only when
both parents observe it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import DegenerateVector, TooFewSamples

_EPS = 1e-12


@dataclass(frozen=True)
class OversampleConfig:
    k: int = 3
    target: int | None = None  # None: pad every class to the majority count
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.target is not None and self.target < 1:
            raise ValueError("target must be >= 1")


def _mutual_euclidean(values, present, i, j):
    """Euclidean distance over mutually observed dims, scaled by
    sqrt(D / observed); inf when nothing is mutually observed."""
    both = present[i] & present[j]
    n = both.sum()
    if n == 0:
        return np.inf
    diff = values[i, both] - values[j, both]
    return float(np.sqrt((diff @ diff) * values.shape[1] / n))


def _mutual_angle(values, present, i, j):
    """Angle over mutually observed dims; inf on degenerate sub-vectors."""
    both = present[i] & present[j]
    if both.sum() == 0:
        return np.inf
    a = values[i, both]
    b = values[j, both]
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < _EPS or nb < _EPS:
        return np.inf
    return float(np.arccos(np.clip(a @ b / (na * nb), -1.0, 1.0)))


def _neighbor_lists(values, present, rows, k, metric, class_name):
    """k nearest same-class neighbors (positions into rows) per sample."""
    n = len(rows)
    k_eff = min(k, n - 1)
    if k_eff < k:
        warnings.warn(
            f"class {class_name!r} has {n} samples; clamping k from {k} to {k_eff}",
            stacklevel=3,
        )
    dist = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            dist[a, b] = dist[b, a] = metric(values, present, rows[a], rows[b])
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k_eff]


def _interpolate_linear(x, nn, u):
    return x + u * (nn - x)


def slerp_with_magnitude(x, nn, u):
    """Spherical interpolation of directions with linear magnitude blend.

    Falls back to normalized linear interpolation when the parents span an
    angle below 1e-8 (slerp is unstable there).
    """
    x = np.asarray(x, dtype=np.float64)
    nn = np.asarray(nn, dtype=np.float64)
    nx = np.linalg.norm(x)
    nnn = np.linalg.norm(nn)
    if nx < _EPS or nnn < _EPS:
        raise DegenerateVector("cannot interpolate on the sphere from a zero vector")
    dx = x / nx
    dn = nn / nnn
    theta = float(np.arccos(np.clip(dx @ dn, -1.0, 1.0)))
    if theta < 1e-8:
        direction = (1.0 - u) * dx + u * dn
        direction /= np.linalg.norm(direction)
    else:
        direction = (np.sin((1.0 - u) * theta) * dx + np.sin(u * theta) * dn) / np.sin(theta)
    return direction * ((1.0 - u) * nx + u * nnn)


def oversample_with_provenance(
    dataset: LabeledDataset, cfg: OversampleConfig, geodesic: bool
):
    """Oversample and also return (parent_a, parent_b, u) per synthetic row,
    in output order, for property checks on the synthesis itself."""
    counts = dataset.class_counts()
    target = cfg.target if cfg.target is not None else int(counts.max())
    if (counts >= target).all():
        return dataset, []

    values = dataset.samples
    present = dataset.present
    metric = _mutual_angle if geodesic else _mutual_euclidean
    rng = np.random.default_rng(cfg.seed)

    new_rows, new_masks, new_labels, provenance = [], [], [], []
    for c in range(dataset.n_classes):
        need = target - counts[c]
        if need <= 0:
            continue
        if counts[c] < 2:
            raise TooFewSamples(
                f"class {dataset.class_names[c]!r} has {counts[c]} sample(s); "
                "need at least 2 to oversample"
            )
        rows = np.flatnonzero(dataset.labels == c)
        neighbors = _neighbor_lists(
            values, present, rows, cfg.k, metric, dataset.class_names[c]
        )
        k_eff = neighbors.shape[1]
        for _ in range(need):
            base = int(rng.integers(len(rows)))
            mate = int(neighbors[base, rng.integers(k_eff)])
            u = float(rng.random())
            i, j = rows[base], rows[mate]
            both = present[i] & present[j]
            if not both.any():
                raise DegenerateVector(
                    f"samples {i} and {j} share no observed dimension"
                )
            row = np.full(dataset.n_features, np.nan)
            if geodesic:
                row[both] = slerp_with_magnitude(values[i, both], values[j, both], u)
            else:
                row[both] = _interpolate_linear(values[i, both], values[j, both], u)
            new_rows.append(row)
            new_masks.append(both)
            new_labels.append(c)
            provenance.append((int(i), int(j), u))

    samples = np.vstack([values, np.array(new_rows)])
    masks = np.vstack([present, np.array(new_masks)])
    labels = np.concatenate([dataset.labels, np.array(new_labels, dtype=np.int64)])
    out = LabeledDataset(
        samples, masks, labels, dataset.feature_names, dataset.class_names
    )
    return out, provenance


def smote(dataset: LabeledDataset, cfg: OversampleConfig | None = None):
    """Pad minority classes with linear interpolations between same-class
    neighbor pairs."""
    return oversample_with_provenance(dataset, cfg or OversampleConfig(), False)[0]


def smote_geodesic(dataset: LabeledDataset, cfg: OversampleConfig | None = None):
    """Pad minority classes along great-circle arcs (direction slerp plus
    linear magnitude blend)."""
    return oversample_with_provenance(dataset, cfg or OversampleConfig(), True)[0]
