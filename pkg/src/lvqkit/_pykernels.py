"""Pure-numpy training and batch-dissimilarity kernels.

Fallback for the compiled extension, and the reference the extension is
tested against. The per-sample update is built directly on the geometry
gradients, so there is a single Python-side source of truth for the math.

Kernel calling convention (shared with ``_ckernels``): samples arrive
zero-filled on missing cells plus a uint8 observation mask; prototype and
matrix arrays are updated in place.
"""

from __future__ import annotations

import numpy as np

from . import geometry
from .errors import DegenerateVector, EmptyMask, NonFinite

name = "python"

_EPS = geometry.NORM_EPS


def _dissims_one(x, present, protos, omega, psi, psi_index, code, beta):
    n = protos.shape[0]
    out = np.empty(n)
    for r in range(n):
        w = protos[r]
        if code == 0:
            out[r] = geometry.euclid_quadform(x, w, omega=omega)
        elif code == 1:
            out[r] = geometry.euclid_quadform(x, w, psi=psi, idx=psi_index[r])
        elif code == 2:
            out[r] = geometry.euclid_quadform(x, w, omega=omega, psi=psi, idx=psi_index[r])
        elif code == 3:
            b = geometry.angle_global(x, w, omega, present=present)
            out[r] = geometry.g_beta(b, beta)
        elif code == 4:
            b = geometry.angle_local(x, w, psi, psi_index[r], present=present)
            out[r] = geometry.g_beta(b, beta)
        else:
            b = geometry.angle_twomatrix(x, w, omega, psi, psi_index[r], present=present)
            out[r] = geometry.g_beta(b, beta)
    return out


def _normalize_row(row):
    """Angle prototypes live on the unit sphere: the dissimilarity is
    scale-free in the prototype, and unit length keeps the cosine gradient
    (which scales as 1/norm) at a sane step size."""
    n = float(np.linalg.norm(row))
    if not np.isfinite(n):
        raise NonFinite("prototype norm overflowed; reduce the learning rate")
    if n < _EPS:
        raise DegenerateVector("prototype collapsed to zero norm")
    if abs(n - 1.0) > 1e-14:
        row /= n


def _normalize_frobenius(matrix, what):
    f = float(np.linalg.norm(matrix))
    if not np.isfinite(f):
        raise NonFinite(f"{what} norm overflowed; reduce the matrix learning rate")
    if f < _EPS:
        raise DegenerateVector(f"{what} collapsed to zero Frobenius norm")
    if abs(f - 1.0) > 1e-14:  # skip the no-op case so lr=0 is exactly stable
        matrix /= f


def update_one(
    x,
    present,
    label,
    protos,
    proto_labels,
    omega,
    psi,
    psi_index,
    code,
    beta,
    lr_p,
    lr_m,
    normalize=True,
):
    """One stochastic update in place. Returns (mu, updated).

    ``updated`` is False when the margin denominator is numerically zero;
    the sample is then skipped (its loss is undefined there).
    """
    present = np.asarray(present, dtype=bool)
    pr = None if present.all() else present
    d = _dissims_one(x, pr, protos, omega, psi, psi_index, code, beta)
    same = proto_labels == label
    j = int(np.flatnonzero(same)[np.argmin(d[same])])
    k = int(np.flatnonzero(~same)[np.argmin(d[~same])])

    if code < 3:
        dj, dk = float(d[j]), float(d[k])
        denom = dj + dk
        if denom <= _EPS:
            return 0.0, False
        mu = (dj - dk) / denom
        cj = 2.0 * dk / denom**2
        ck = -2.0 * dj / denom**2
        grads = []
        for r in (j, k):
            w = protos[r]
            if code == 0:
                gw, gm = geometry.euclid_quadform_grads(x, w, omega=omega)
                grads.append((gw, gm, None))
            elif code == 1:
                gw, gm = geometry.euclid_quadform_grads(x, w, psi=psi, idx=psi_index[r])
                grads.append((gw, None, gm))
            else:
                gw, go, gp = geometry.euclid_twomatrix_grads(x, w, omega, psi, psi_index[r])
                grads.append((gw, go, gp))
    else:
        # raw cosines and their gradients; the g_beta' slope is folded into
        # the stabilized margin coefficients
        grads = []
        b_raw = []
        for r in (j, k):
            w = protos[r]
            if code == 3:
                b, gw, gm = geometry._cosine_grads_single(x, w, omega, pr)
                grads.append((gw, gm, None))
            elif code == 4:
                b, gw, gm = geometry._cosine_grads_single(x, w, psi[psi_index[r]], pr)
                grads.append((gw, None, gm))
            else:
                b, gw, go, gp = geometry._cosine_grads_composed(
                    x, w, omega, psi[psi_index[r]], pr
                )
                grads.append((gw, go, gp))
            b_raw.append(b)
        cj, ck, mu, valid = geometry.margin_update_coefficients(
            b_raw[0], b_raw[1], beta
        )
        if not valid:
            return 0.0, False
        # the clamped dissimilarity is flat where the raw cosine leaves [-1, 1]
        if abs(b_raw[0]) >= 1.0:
            cj = 0.0
        if abs(b_raw[1]) >= 1.0:
            ck = 0.0

    for (gw, go, gp), coef, r in zip(grads, (cj, ck), (j, k)):
        protos[r] -= lr_p * coef * gw
        if code >= 3:
            _normalize_row(protos[r])
        if go is not None:
            omega -= lr_m * coef * go
        if gp is not None:
            psi[psi_index[r]] -= lr_m * coef * gp

    if normalize:
        if code in (0, 2, 3, 5):
            _normalize_frobenius(omega, "omega")
        if code in (1, 2, 4, 5):
            _normalize_frobenius(psi[psi_index[j]], "local matrix")
            _normalize_frobenius(psi[psi_index[k]], "local matrix")
    return mu, True


def train_epoch(
    X,
    mask,
    labels,
    protos,
    proto_labels,
    omega,
    psi,
    psi_index,
    code,
    beta,
    lr_p,
    lr_m,
    order,
    normalize_every,
    step_offset,
):
    """One pass over ``order``; returns (summed margin, error count)."""
    cost_sum = 0.0
    errors = 0
    step = step_offset
    for i in order:
        step += 1
        mu, _ = update_one(
            X[i],
            mask[i].astype(bool),
            int(labels[i]),
            protos,
            proto_labels,
            omega,
            psi,
            psi_index,
            code,
            beta,
            lr_p,
            lr_m,
            normalize=(step % normalize_every == 0),
        )
        cost_sum += mu
        if mu > 0:
            errors += 1
    return cost_sum, errors


def _sq_dists(z, p):
    d = (z**2).sum(axis=1)[:, None] + (p**2).sum(axis=1)[None, :] - 2.0 * (z @ p.T)
    return np.maximum(d, 0.0)


def dissim_matrix(X, mask, protos, omega, psi, psi_index, code, beta):
    """(S, W) dissimilarities for a zero-filled batch with observation mask."""
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    s, _ = X.shape
    w = protos.shape[0]
    out = np.empty((s, w))

    if code < 3:
        if code == 0:
            z = X @ omega.T
            out[:] = _sq_dists(z, protos @ omega.T)
        else:
            for slot in np.unique(psi_index):
                t = psi[slot] @ omega if code == 2 else psi[slot]
                sel = psi_index == slot
                out[:, sel] = _sq_dists(X @ t.T, protos[sel] @ t.T)
        return out

    if not mask.any(axis=1).all():
        raise EmptyMask("a sample has no observed dimension")

    def _slot_block(transform, proto_sel):
        a2 = ((X @ transform.T) ** 2).sum(axis=1)
        if (a2 < _EPS**2).any():
            raise DegenerateVector("restricted sample transform norm is degenerate")
        lam = transform.T @ transform
        num = ((X @ lam) * mask) @ protos[proto_sel].T
        om2 = ((protos[proto_sel] @ transform.T) ** 2).sum(axis=1)
        if (om2 < _EPS**2).any():
            raise DegenerateVector("prototype transform norm is degenerate")
        b = num / np.sqrt(a2[:, None] * om2[None, :])
        return geometry.g_beta(np.clip(b, -1.0, 1.0), beta)

    if code == 3:
        out[:] = _slot_block(omega, np.ones(w, dtype=bool))
    else:
        for slot in np.unique(psi_index):
            t = psi[slot] @ omega if code == 5 else psi[slot]
            sel = psi_index == slot
            out[:, sel] = _slot_block(t, sel)
    return out
