"""Dissimilarity measures and their analytic gradients.

Six measures are supported: squared Euclidean quadratic forms and bounded
angle dissimilarities, each with a global transform, class-local
transforms, or a shared projection composed with class-local square
matrices. Angle measures accept samples with missing dimensions via a
boolean ``present`` mask; Euclidean measures reject them.

Masking rule for the parameterized angles: a missing dimension removes the
corresponding matrix column from the numerator and from the sample-side
norm (equivalent to restricting the transform to observed columns), while
the prototype keeps its full-transform norm so that it stays well defined.
The plain cosine restricts both vectors to the observed dimensions.

All functions are pure and operate on 1-D float vectors / 2-D matrices;
gradients are exact derivatives of the masked expressions and are
validated against central finite differences in the test suite.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateVector, EmptyMask, MissingNotSupported

# Below this, a norm is considered numerically meaningless.
NORM_EPS = 1e-12


def g_beta(b, beta):
    """Map a cosine b in [-1, 1] into a dissimilarity in [0, 1].

    Strictly decreasing in b with g(1) = 0 and g(-1) = 1 exactly; ``beta``
    controls the slope (small beta is near linear).
    """
    return np.expm1(beta * (1.0 - b)) / np.expm1(2.0 * beta)


def g_beta_derivative(b, beta):
    """Derivative of :func:`g_beta` with respect to b (strictly negative)."""
    return -beta * np.exp(beta * (1.0 - b)) / np.expm1(2.0 * beta)


# Update coefficients are clipped at this multiple of beta; the bound only
# binds inside the singular corner where both winner dissimilarities
# approach zero together (see margin_update_coefficients).
MARGIN_COEF_CAP = 4.0


def margin_update_coefficients(b_correct, b_wrong, beta):
    """Stable gamma * g_beta' products for the two winning prototypes.

    The margin weights gamma = +-2 d_other / (dJ + dK)^2 and the slope
    g_beta' both live at exp(-beta)-ish scales for large beta; the naive
    product under/overflows although its value is moderate. Rewriting in
    terms of t = beta (1 - b) gives

        coef_J = -2 beta p_K (p_J + 1/S),   coef_K = +2 beta p_J (p_K + 1/S)

    with S = expm1(t_J) + expm1(t_K) and p_L = expm1(t_L)/S. The margin is
    mu = p_J - p_K. Near the genuine singularity (both dissimilarities at
    zero together) the coefficients are clipped at MARGIN_COEF_CAP * beta.

    Returns (coef_correct, coef_wrong, mu, valid); valid is False at the
    exact 0/0 corner where the sample must be skipped.
    """
    tj = beta * (1.0 - min(max(b_correct, -1.0), 1.0))
    tk = beta * (1.0 - min(max(b_wrong, -1.0), 1.0))
    ej = math.expm1(tj)
    ek = math.expm1(tk)
    total = ej + ek
    if not math.isfinite(total) or total <= 0.0:
        return 0.0, 0.0, 0.0, False
    inv = 1.0 / total
    pj = ej * inv
    pk = ek * inv
    cap = MARGIN_COEF_CAP * beta
    cj = -2.0 * beta * pk * (pj + inv)
    ck = 2.0 * beta * pj * (pk + inv)
    return max(cj, -cap), min(ck, cap), pj - pk, True


def _as_vector(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


def _observed_indices(present, d: int) -> np.ndarray | None:
    """Observed indices for a provided mask, None when no mask was given.

    A provided all-True mask still returns indices: the restricted path is
    taken whenever masking is in play so that masked evaluations equal the
    explicitly restricted computation bit for bit.
    """
    if present is None:
        return None
    present = np.asarray(present, dtype=bool)
    if present.shape != (d,):
        raise ValueError(f"present mask has shape {present.shape}, expected ({d},)")
    if not present.any():
        raise EmptyMask("sample has no observed dimension")
    return np.flatnonzero(present)


def _checked_norm(v: np.ndarray, what: str) -> float:
    n = float(np.linalg.norm(v))
    if n < NORM_EPS:
        raise DegenerateVector(f"{what} norm {n:.3e} below {NORM_EPS:.0e}")
    return n


def cosine_available(x, w, present=None) -> float:
    """Cosine of the angle between x and w over the observed dimensions.

    Both vectors are restricted to the dimensions marked present in x;
    the result is clamped to [-1, 1] against rounding.
    """
    x = _as_vector(x)
    w = _as_vector(w)
    obs = _observed_indices(present, x.shape[0])
    if obs is not None:
        x = x[obs]
        w = w[obs]
    nx = _checked_norm(x, "restricted sample")
    nw = _checked_norm(w, "restricted prototype")
    return float(np.clip(np.dot(x, w) / (nx * nw), -1.0, 1.0))


def _angle_parts(x, w, transform, present):
    """Shared value computation for the parameterized angles.

    Returns (b_raw, hx, hwm, hw, a, om, xt, wt) where hx / hwm are the
    transformed, column-restricted images of x and w, hw the full image of
    w, a and om the two denominator norms, and xt / wt the zero-filled
    restricted vectors (used by the gradient assembly).
    """
    x = _as_vector(x)
    w = _as_vector(w)
    d = x.shape[0]
    obs = _observed_indices(present, d)
    hw = transform @ w
    om = _checked_norm(hw, "prototype transform")
    if obs is None:
        xt, wt = x, w
        hx = transform @ x
        hwm = hw
    else:
        cols = transform[:, obs]
        hx = cols @ x[obs]
        hwm = cols @ w[obs]
        xt = np.zeros(d)
        xt[obs] = x[obs]
        wt = np.zeros(d)
        wt[obs] = w[obs]
    a = _checked_norm(hx, "restricted sample transform")
    b = float(np.dot(hx, hwm) / (a * om))
    return b, hx, hwm, hw, a, om, xt, wt


def angle_global(x, w, omega, present=None) -> float:
    """Cosine between x and w in the space transformed by a global matrix."""
    b = _angle_parts(x, w, np.asarray(omega, dtype=np.float64), present)[0]
    return float(np.clip(b, -1.0, 1.0))


def angle_local(x, w, psi, idx, present=None) -> float:
    """Cosine under the local matrix ``psi[idx]`` attached to a class/prototype."""
    psi = np.asarray(psi, dtype=np.float64)
    b = _angle_parts(x, w, psi[idx], present)[0]
    return float(np.clip(b, -1.0, 1.0))


def angle_twomatrix(x, w, omega, psi, idx, present=None) -> float:
    """Cosine under the composed transform psi[idx] @ omega."""
    omega = np.asarray(omega, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    b = _angle_parts(x, w, psi[idx] @ omega, present)[0]
    return float(np.clip(b, -1.0, 1.0))


def _present_vector(present, d: int) -> np.ndarray:
    if present is None:
        return np.ones(d, dtype=bool)
    return np.asarray(present, dtype=bool)


def _cosine_grads_single(x, w, transform, present):
    """Raw cosine and its gradients for one transform: (b, db_dw, db_dt).

    Internal helper shared by the public d-gradients and the training
    kernels (which weight db by a stabilized margin coefficient).
    """
    b, hx, hwm, hw, a, om, xt, wt = _angle_parts(x, w, transform, present)
    mask = _present_vector(present, xt.shape[0])

    db_dw = (transform.T @ hx) / (a * om)
    db_dw[~mask] = 0.0
    db_dw -= b * (transform.T @ hw) / om**2

    db_dt = (np.outer(hwm, xt) + np.outer(hx, wt)) / (a * om)
    db_dt -= b * (np.outer(hx, xt) / a**2 + np.outer(hw, _as_vector(w)) / om**2)
    return b, db_dw, db_dt


def angle_global_grads(x, w, omega, beta, present=None):
    """Gradients of d = g_beta(b_omega) with respect to w and omega.

    The x-side contributions vanish on missing dimensions; the term coming
    from the full prototype norm survives everywhere. Where the raw cosine
    leaves [-1, 1] (possible under masking) the clamped dissimilarity is
    locally flat and the gradients are zero.
    """
    omega = np.asarray(omega, dtype=np.float64)
    b, db_dw, db_domega = _cosine_grads_single(x, w, omega, present)
    if abs(b) >= 1.0:
        return np.zeros_like(db_dw), np.zeros_like(omega)
    gp = float(g_beta_derivative(b, beta))
    return gp * db_dw, gp * db_domega


def angle_local_grads(x, w, psi, idx, beta, present=None):
    """Gradients of d = g_beta(b_psi) with respect to w and the attached matrix.

    Only ``psi[idx]`` receives a gradient; all other local matrices are
    untouched by an update built from this result.
    """
    psi = np.asarray(psi, dtype=np.float64)
    return angle_global_grads(x, w, psi[idx], beta, present=present)


def _cosine_grads_composed(x, w, omega, psi_c, present):
    """Raw cosine and gradients under psi_c @ omega: (b, db_dw, db_domega,
    db_dpsi). Internal helper, see _cosine_grads_single."""
    w_full = _as_vector(w)
    transform = psi_c @ omega
    b, hx, hwm, hw, a, om, xt, wt = _angle_parts(x, w, transform, present)
    mask = _present_vector(present, xt.shape[0])

    db_dw = (transform.T @ hx) / (a * om)
    db_dw[~mask] = 0.0
    db_dw -= b * (transform.T @ hw) / om**2

    # Reduced-space images feeding the two matrix gradients.
    zx = omega @ xt  # omega with restricted columns applied to x
    zwm = omega @ wt
    zw = omega @ w_full

    db_domega = (np.outer(psi_c.T @ hwm, xt) + np.outer(psi_c.T @ hx, wt)) / (a * om)
    db_domega -= b * (
        np.outer(psi_c.T @ hx, xt) / a**2 + np.outer(psi_c.T @ hw, w_full) / om**2
    )

    db_dpsi = (np.outer(hwm, zx) + np.outer(hx, zwm)) / (a * om)
    db_dpsi -= b * (np.outer(hx, zx) / a**2 + np.outer(hw, zw) / om**2)
    return b, db_dw, db_domega, db_dpsi


def angle_twomatrix_grads(x, w, omega, psi, idx, beta, present=None):
    """Gradients of d = g_beta(b_2m) with respect to w, omega and psi[idx]."""
    omega = np.asarray(omega, dtype=np.float64)
    psi_c = np.asarray(psi, dtype=np.float64)[idx]
    b, db_dw, db_domega, db_dpsi = _cosine_grads_composed(x, w, omega, psi_c, present)
    if abs(b) >= 1.0:
        return np.zeros_like(db_dw), np.zeros_like(omega), np.zeros_like(psi_c)
    gp = float(g_beta_derivative(b, beta))
    return gp * db_dw, gp * db_domega, gp * db_dpsi


def _euclid_transform(omega, psi, idx):
    if psi is None:
        if omega is None:
            raise ValueError("euclid_quadform needs omega, psi, or both")
        return np.asarray(omega, dtype=np.float64)
    psi_c = np.asarray(psi, dtype=np.float64)[idx]
    if omega is None:
        return psi_c
    return psi_c @ np.asarray(omega, dtype=np.float64)


def _reject_missing(present, d: int):
    obs = _observed_indices(present, d) if present is not None else None
    if obs is not None:
        raise MissingNotSupported(
            "Euclidean dissimilarities do not support missing dimensions"
        )


def euclid_quadform(x, w, omega=None, psi=None, idx=None, present=None) -> float:
    """Squared Euclidean distance in the (composed) transformed space."""
    x = _as_vector(x)
    w = _as_vector(w)
    _reject_missing(present, x.shape[0])
    h = _euclid_transform(omega, psi, idx) @ (x - w)
    return float(np.dot(h, h))


def euclid_quadform_grads(x, w, omega=None, psi=None, idx=None, present=None):
    """Gradients of the single-transform quadratic form: (grad_w, grad_matrix)."""
    if omega is not None and psi is not None:
        raise ValueError("use euclid_twomatrix_grads for the composed transform")
    x = _as_vector(x)
    w = _as_vector(w)
    _reject_missing(present, x.shape[0])
    t = _euclid_transform(omega, psi, idx)
    u = x - w
    h = t @ u
    return -2.0 * (t.T @ h), 2.0 * np.outer(h, u)


def euclid_twomatrix_grads(x, w, omega, psi, idx, present=None):
    """Gradients of the composed quadratic form: (grad_w, grad_omega, grad_psi)."""
    x = _as_vector(x)
    w = _as_vector(w)
    _reject_missing(present, x.shape[0])
    omega = np.asarray(omega, dtype=np.float64)
    psi_c = np.asarray(psi, dtype=np.float64)[idx]
    u = x - w
    z = omega @ u
    h = psi_c @ z
    grad_w = -2.0 * (omega.T @ (psi_c.T @ h))
    grad_omega = 2.0 * np.outer(psi_c.T @ h, u)
    grad_psi = 2.0 * np.outer(h, z)
    return grad_w, grad_omega, grad_psi
