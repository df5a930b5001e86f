"""Shared helpers: finite-difference oracles and random problem instances."""

import os
from pathlib import Path

import numpy as np
import pytest

FD_STEP = 1e-6


def fd_gradient(f, x, h=FD_STEP):
    """Central finite difference of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.ravel()[i] += h
        xm.ravel()[i] -= h
        flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def random_instance(rng, d, m, masked=False):
    """A random (x, present, w, omega) tuple with nonsingular geometry."""
    x = rng.normal(size=d)
    w = rng.normal(size=d)
    omega = rng.normal(size=(m, d)) + 0.5 * np.eye(m, d)
    if masked:
        present = rng.random(d) < 0.7
        if not present.any():
            present[rng.integers(d)] = True
    else:
        present = np.ones(d, dtype=bool)
    return x, present, w, omega


def two_gaussian_dataset(n=120, d=2, separation=4.0, seed=0, masked=False):
    """Linearly separable two-class toy, also separable by direction so all
    angle variants can solve it; optionally with random missing cells."""
    from lvqkit.data import make_dataset

    rng = np.random.default_rng(seed)
    half = n // 2
    center_a = np.full(d, 2.0)
    center_a[0] += separation + 4.0
    center_b = np.full(d, 2.0)
    center_b[-1] += separation + 4.0
    a = rng.normal(0.0, 1.0, size=(half, d)) + center_a
    b = rng.normal(0.0, 1.0, size=(n - half, d)) + center_b
    samples = np.vstack([a, b])
    labels = np.array([0] * half + [1] * (n - half))
    if masked:
        present = rng.random(samples.shape) < 0.85
        present[:, 0] = True
        samples = np.where(present, samples, np.nan)
        return make_dataset(samples, labels, present=present)
    return make_dataset(samples, labels)


def random_model(rng, variant, n_classes=3, d=5, m=3, per_class=2, beta=5.0):
    """A fully random (untrained) model for oracle comparisons."""
    from lvqkit.model import PrototypeModel, Variant

    variant = Variant.parse(variant)
    w = n_classes * per_class
    omega = rng.normal(size=(m, d)) if variant.has_omega else None
    psi = None
    if variant.has_psi:
        shape = (n_classes, m, m) if variant.psi_square else (n_classes, m, d)
        psi = rng.normal(size=shape)
    return PrototypeModel(
        variant=variant,
        prototypes=rng.normal(size=(w, d)) + 3.0,
        proto_labels=np.repeat(np.arange(n_classes, dtype=np.int64), per_class),
        omega=omega,
        psi=psi,
        psi_attachment="class" if psi is not None else None,
        beta=beta if variant.is_angle else None,
    )


ALL_VARIANTS = ["eg", "el", "e2m", "ag", "al", "a2m"]


def cleveland_path():
    """Location of the real UCI file, when the user provided one."""
    env = os.environ.get("CLEVELAND_DATA")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parents[1] / "data" / "processed.cleveland.data")
    for path in candidates:
        if path.is_file():
            return path
    return None


requires_cleveland = pytest.mark.skipif(
    cleveland_path() is None,
    reason="UCI processed.cleveland.data not found (set CLEVELAND_DATA or put it in data/)",
)
