# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled training and batch-dissimilarity kernels.

Same contract as ``lvqkit._pykernels``; the sequential per-sample SGD loop
is the runtime hot spot, so it lives here as plain C loops. Samples arrive
zero-filled on missing cells plus a uint8 observation mask; the missing-
dimension rule matches the geometry module (matrix columns restricted for
the sample side, full prototype norm).

Both winners' gradients are evaluated on pre-update parameters: the step
copies the matrices a winner update reads (src) and applies writes to the
live arrays (dst), mirroring the numpy reference exactly.
"""

import numpy as np

from libc.math cimport exp, expm1, fabs, isfinite, sqrt

from .errors import DegenerateVector, EmptyMask, NonFinite

name = "compiled"

cdef double EPS = 1e-12

_EMPTY2D = np.empty((0, 0))
_EMPTY3D = np.empty((0, 0, 0))


cdef inline double _gb(double b, double beta) noexcept nogil:
    return expm1(beta * (1.0 - b)) / expm1(2.0 * beta)


cdef inline double _gbd(double b, double beta) noexcept nogil:
    return -beta * exp(beta * (1.0 - b)) / expm1(2.0 * beta)


cdef inline double _clamp(double b) noexcept nogil:
    if b > 1.0:
        return 1.0
    if b < -1.0:
        return -1.0
    return b


cdef _normalize(double[:, ::1] mat, str what):
    cdef Py_ssize_t i, j
    cdef double f = 0.0
    for i in range(mat.shape[0]):
        for j in range(mat.shape[1]):
            f += mat[i, j] * mat[i, j]
    f = sqrt(f)
    if not isfinite(f):
        raise NonFinite(f"{what} norm overflowed; reduce the matrix learning rate")
    if f < EPS:
        raise DegenerateVector(f"{what} collapsed to zero Frobenius norm")
    if fabs(f - 1.0) > 1e-14:  # skip the no-op case so lr=0 is exactly stable
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                mat[i, j] /= f


cdef double _euclid_value(const double[::1] x, const double[::1] w,
                          const double[:, ::1] omega, const double[:, ::1] psi_c,
                          int code, double[::1] z, double[::1] h) noexcept nogil:
    """Quadratic form; fills z = omega(x-w) (code 2 only) and h = T(x-w)."""
    cdef Py_ssize_t m, d, k
    cdef Py_ssize_t dim = x.shape[0]
    cdef double s, tot = 0.0
    if code == 2:
        for m in range(omega.shape[0]):
            s = 0.0
            for d in range(dim):
                s += omega[m, d] * (x[d] - w[d])
            z[m] = s
        for k in range(psi_c.shape[0]):
            s = 0.0
            for m in range(psi_c.shape[1]):
                s += psi_c[k, m] * z[m]
            h[k] = s
            tot += s * s
    elif code == 0:
        for m in range(omega.shape[0]):
            s = 0.0
            for d in range(dim):
                s += omega[m, d] * (x[d] - w[d])
            h[m] = s
            tot += s * s
    else:
        for m in range(psi_c.shape[0]):
            s = 0.0
            for d in range(dim):
                s += psi_c[m, d] * (x[d] - w[d])
            h[m] = s
            tot += s * s
    return tot


cdef int _angle_parts_single(const double[::1] x, const unsigned char[::1] mask,
                             const double[:, ::1] t, const double[::1] w,
                             double[::1] hx, double[::1] hw, double[::1] hwm,
                             double* a_out, double* om_out, double* b_out) noexcept nogil:
    """Raw cosine for one M x D transform; x is zero-filled so the plain
    matvec already restricts it. Returns 1 on a degenerate norm."""
    cdef Py_ssize_t m, d
    cdef Py_ssize_t rows = t.shape[0], dim = t.shape[1]
    cdef double sx, sw, swm, a2 = 0.0, om2 = 0.0, num = 0.0
    for m in range(rows):
        sx = 0.0
        sw = 0.0
        swm = 0.0
        for d in range(dim):
            sx += t[m, d] * x[d]
            sw += t[m, d] * w[d]
            if mask[d]:
                swm += t[m, d] * w[d]
        hx[m] = sx
        hw[m] = sw
        hwm[m] = swm
        a2 += sx * sx
        om2 += sw * sw
        num += sx * swm
    cdef double a = sqrt(a2), om = sqrt(om2)
    if a < EPS or om < EPS:
        return 1
    a_out[0] = a
    om_out[0] = om
    b_out[0] = num / (a * om)
    return 0


cdef int _angle_parts_composed(const double[::1] x, const unsigned char[::1] mask,
                               const double[:, ::1] omega, const double[:, ::1] psi_c,
                               const double[::1] w,
                               double[::1] zx, double[::1] zw, double[::1] zwm,
                               double[::1] hx, double[::1] hw, double[::1] hwm,
                               double* a_out, double* om_out, double* b_out) noexcept nogil:
    """Raw cosine under psi_c @ omega, keeping the reduced-space images."""
    cdef Py_ssize_t m, d, k
    cdef Py_ssize_t rows = omega.shape[0], dim = omega.shape[1]
    cdef double sx, sw, swm, a2 = 0.0, om2 = 0.0, num = 0.0
    for m in range(rows):
        sx = 0.0
        sw = 0.0
        swm = 0.0
        for d in range(dim):
            sx += omega[m, d] * x[d]
            sw += omega[m, d] * w[d]
            if mask[d]:
                swm += omega[m, d] * w[d]
        zx[m] = sx
        zw[m] = sw
        zwm[m] = swm
    for k in range(rows):
        sx = 0.0
        sw = 0.0
        swm = 0.0
        for m in range(rows):
            sx += psi_c[k, m] * zx[m]
            sw += psi_c[k, m] * zw[m]
            swm += psi_c[k, m] * zwm[m]
        hx[k] = sx
        hw[k] = sw
        hwm[k] = swm
        a2 += sx * sx
        om2 += sw * sw
        num += sx * swm
    cdef double a = sqrt(a2), om = sqrt(om2)
    if a < EPS or om < EPS:
        return 1
    a_out[0] = a
    om_out[0] = om
    b_out[0] = num / (a * om)
    return 0


cdef double MARGIN_COEF_CAP = 4.0


cdef int _margin_coefs(double b_correct, double b_wrong, double beta,
                       double* cj, double* ck, double* mu) noexcept nogil:
    """Stable gamma * g_beta' products for the two winners (see
    geometry.margin_update_coefficients). Returns 1 when the sample sits at
    the exact 0/0 margin corner and must be skipped."""
    cdef double tj = beta * (1.0 - _clamp(b_correct))
    cdef double tk = beta * (1.0 - _clamp(b_wrong))
    cdef double ej = expm1(tj)
    cdef double ek = expm1(tk)
    cdef double total = ej + ek
    if not isfinite(total) or total <= 0.0:
        return 1
    cdef double inv = 1.0 / total
    cdef double pj = ej * inv
    cdef double pk = ek * inv
    cdef double cap = MARGIN_COEF_CAP * beta
    cdef double cjv = -2.0 * beta * pk * (pj + inv)
    cdef double ckv = 2.0 * beta * pj * (pk + inv)
    if cjv < -cap:
        cjv = -cap
    if ckv > cap:
        ckv = cap
    cj[0] = cjv
    ck[0] = ckv
    mu[0] = pj - pk
    return 0


cdef _raise_proto_status(int status):
    if status == 1:
        raise DegenerateVector("prototype collapsed to zero norm")
    if status == 2:
        raise NonFinite("prototype norm overflowed; reduce the learning rate")


cdef double[:, ::1] _as2d(object obj):
    return _EMPTY2D if obj is None else obj


cdef double[:, :, ::1] _as3d(object obj):
    return _EMPTY3D if obj is None else obj


cdef Py_ssize_t _rank_of(double[:, ::1] omega, double[:, :, ::1] psi,
                         int code, Py_ssize_t dim):
    if code == 0 or code == 2 or code == 3 or code == 5:
        return omega.shape[0]
    if psi.shape[0] > 0:
        return psi.shape[1]
    return dim


def dissim_matrix(const double[:, ::1] X, const unsigned char[:, ::1] mask,
                  const double[:, ::1] protos, object omega_obj, object psi_obj,
                  const long[::1] psi_index, int code, double beta):
    """(S, W) dissimilarities of a zero-filled batch with observation mask."""
    cdef double[:, ::1] omega = _as2d(omega_obj)
    cdef double[:, :, ::1] psi = _as3d(psi_obj)
    cdef Py_ssize_t s = X.shape[0], wn = protos.shape[0], dim = X.shape[1]
    cdef Py_ssize_t rank = _rank_of(omega, psi, code, dim)
    out_arr = np.empty((s, wn))
    cdef double[:, ::1] out = out_arr
    scratch = np.empty((6, max(rank, 1)))
    cdef double[::1] zx = scratch[0], zw = scratch[1], zwm = scratch[2]
    cdef double[::1] hx = scratch[3], hw = scratch[4], hwm = scratch[5]
    cdef Py_ssize_t i, r, d
    cdef int status, observed
    cdef double a = 0.0, om = 0.0, b = 0.0

    for i in range(s):
        if code >= 3:
            observed = 0
            for d in range(dim):
                if mask[i, d]:
                    observed = 1
                    break
            if not observed:
                raise EmptyMask(f"sample {i} has no observed dimension")
        for r in range(wn):
            if code < 3:
                out[i, r] = _euclid_value(
                    X[i], protos[r], omega,
                    psi[psi_index[r]] if code != 0 else omega,
                    code, zx, hx,
                )
            else:
                if code == 3:
                    status = _angle_parts_single(X[i], mask[i], omega, protos[r],
                                                 hx, hw, hwm, &a, &om, &b)
                elif code == 4:
                    status = _angle_parts_single(X[i], mask[i], psi[psi_index[r]],
                                                 protos[r], hx, hw, hwm, &a, &om, &b)
                else:
                    status = _angle_parts_composed(X[i], mask[i], omega,
                                                   psi[psi_index[r]], protos[r],
                                                   zx, zw, zwm, hx, hw, hwm,
                                                   &a, &om, &b)
                if status:
                    raise DegenerateVector(
                        f"degenerate transform norm for sample {i}, prototype {r}"
                    )
                out[i, r] = _gb(_clamp(b), beta)
    return out_arr


cdef void _euclid_winner(const double[::1] x, double[:, ::1] protos,
                         const double[:, ::1] src_omega, const double[:, ::1] src_psi,
                         double[:, ::1] dst_omega, double[:, ::1] dst_psi,
                         int code, Py_ssize_t r, const double[::1] wc,
                         double coef_p, double coef_m,
                         double[::1] z, double[::1] h, double[::1] u1) noexcept nogil:
    """One Euclidean winner; gradients read the pre-update copies (src),
    the step is applied to the live arrays (dst). coef = lr * gamma."""
    cdef Py_ssize_t m, d, k
    cdef Py_ssize_t dim = x.shape[0]
    cdef double s
    _euclid_value(x, wc, src_omega, src_psi, code, z, h)
    if code == 0:
        for d in range(dim):
            s = 0.0
            for m in range(src_omega.shape[0]):
                s += src_omega[m, d] * h[m]
            protos[r, d] += coef_p * 2.0 * s  # grad_w = -2 omega^T h
        for m in range(src_omega.shape[0]):
            for d in range(dim):
                dst_omega[m, d] -= coef_m * 2.0 * h[m] * (x[d] - wc[d])
    elif code == 1:
        for d in range(dim):
            s = 0.0
            for m in range(src_psi.shape[0]):
                s += src_psi[m, d] * h[m]
            protos[r, d] += coef_p * 2.0 * s
        for m in range(src_psi.shape[0]):
            for d in range(dim):
                dst_psi[m, d] -= coef_m * 2.0 * h[m] * (x[d] - wc[d])
    else:
        for m in range(src_psi.shape[1]):
            s = 0.0
            for k in range(src_psi.shape[0]):
                s += src_psi[k, m] * h[k]
            u1[m] = s  # psi^T h
        for d in range(dim):
            s = 0.0
            for m in range(src_omega.shape[0]):
                s += src_omega[m, d] * u1[m]
            protos[r, d] += coef_p * 2.0 * s  # grad_w = -2 omega^T psi^T h
        for m in range(src_omega.shape[0]):
            for d in range(dim):
                dst_omega[m, d] -= coef_m * 2.0 * u1[m] * (x[d] - wc[d])
        for k in range(src_psi.shape[0]):
            for m in range(src_psi.shape[1]):
                dst_psi[k, m] -= coef_m * 2.0 * h[k] * z[m]


cdef int _normalize_proto_row(double[:, ::1] protos, Py_ssize_t r) noexcept nogil:
    """Angle prototypes live on the unit sphere: the dissimilarity is
    scale-free in the prototype and unit length keeps the cosine gradient
    (which scales as 1/norm) at a sane step size. 0 ok, 1 degenerate,
    2 non-finite."""
    cdef Py_ssize_t d
    cdef double n = 0.0
    for d in range(protos.shape[1]):
        n += protos[r, d] * protos[r, d]
    n = sqrt(n)
    if not isfinite(n):
        return 2
    if n < EPS:
        return 1
    if fabs(n - 1.0) > 1e-14:
        for d in range(protos.shape[1]):
            protos[r, d] /= n
    return 0


cdef int _angle_single_winner(const double[::1] x, const unsigned char[::1] mask,
                               double[:, ::1] protos,
                               const double[:, ::1] src_t, double[:, ::1] dst_t,
                               Py_ssize_t r, const double[::1] wc,
                               const double[::1] hx, const double[::1] hw,
                               const double[::1] hwm,
                               double a, double om, double b, double gp,
                               double coef_p, double coef_m) noexcept nogil:
    """One winner for the single-transform angle variants (shared omega or
    the winner's local slot)."""
    cdef Py_ssize_t m, d
    cdef Py_ssize_t rank = src_t.shape[0], dim = x.shape[0]
    cdef double c1 = 1.0 / (a * om)
    cdef double c2 = b / (a * a)
    cdef double c3 = b / (om * om)
    cdef double s1, s2, wt, db
    for d in range(dim):
        s1 = 0.0
        s2 = 0.0
        for m in range(rank):
            s1 += src_t[m, d] * hx[m]
            s2 += src_t[m, d] * hw[m]
        db = -s2 * c3
        if mask[d]:
            db += s1 * c1
        protos[r, d] -= coef_p * gp * db
    cdef int status = _normalize_proto_row(protos, r)
    if status:
        return status
    for m in range(rank):
        for d in range(dim):
            wt = wc[d] if mask[d] else 0.0
            db = (hwm[m] * x[d] + hx[m] * wt) * c1
            db -= hx[m] * x[d] * c2
            db -= hw[m] * wc[d] * c3
            dst_t[m, d] -= coef_m * gp * db
    return 0


cdef int _angle_composed_winner(const double[::1] x, const unsigned char[::1] mask,
                                 double[:, ::1] protos,
                                 const double[:, ::1] src_omega,
                                 const double[:, ::1] src_psi,
                                 double[:, ::1] dst_omega, double[:, ::1] dst_psi,
                                 Py_ssize_t r, const double[::1] wc,
                                 const double[::1] zx, const double[::1] zw,
                                 const double[::1] zwm,
                                 const double[::1] hx, const double[::1] hw,
                                 const double[::1] hwm,
                                 double a, double om, double b, double gp,
                                 double coef_p, double coef_m,
                                 double[::1] u1, double[::1] u2, double[::1] u3) noexcept nogil:
    """One winner for the composed (2-matrix) angle variant: updates the
    prototype row, the shared omega, and the winner's local slot."""
    cdef Py_ssize_t m, d, k
    cdef Py_ssize_t rank = src_omega.shape[0], dim = x.shape[0]
    cdef double c1 = 1.0 / (a * om)
    cdef double c2 = b / (a * a)
    cdef double c3 = b / (om * om)
    cdef double s1, s2, s3, wt, db
    for m in range(rank):
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        for k in range(rank):
            s1 += src_psi[k, m] * hx[k]
            s2 += src_psi[k, m] * hw[k]
            s3 += src_psi[k, m] * hwm[k]
        u1[m] = s1  # psi^T hx
        u2[m] = s2  # psi^T hw
        u3[m] = s3  # psi^T hwm
    for d in range(dim):
        s1 = 0.0
        s2 = 0.0
        for m in range(rank):
            s1 += src_omega[m, d] * u1[m]
            s2 += src_omega[m, d] * u2[m]
        db = -s2 * c3
        if mask[d]:
            db += s1 * c1
        protos[r, d] -= coef_p * gp * db
    cdef int status = _normalize_proto_row(protos, r)
    if status:
        return status
    for m in range(rank):
        for d in range(dim):
            wt = wc[d] if mask[d] else 0.0
            db = (u3[m] * x[d] + u1[m] * wt) * c1
            db -= u1[m] * x[d] * c2
            db -= u2[m] * wc[d] * c3
            dst_omega[m, d] -= coef_m * gp * db
    for k in range(rank):
        for m in range(rank):
            db = (hwm[k] * zx[m] + hx[k] * zwm[m]) * c1
            db -= hx[k] * zx[m] * c2
            db -= hw[k] * zw[m] * c3
            dst_psi[k, m] -= coef_m * gp * db
    return 0


def train_epoch(const double[:, ::1] X, const unsigned char[:, ::1] mask,
                const long[::1] labels,
                double[:, ::1] protos, const long[::1] proto_labels,
                object omega_obj, object psi_obj, const long[::1] psi_index,
                int code, double beta, double lr_p, double lr_m,
                const long[::1] order, long normalize_every, long step_offset):
    """One sequential pass over ``order``; updates parameters in place.

    Returns (summed margin, error count). Each sample's margin is evaluated
    on the parameters as they stand when it is visited, before its update.
    """
    cdef double[:, ::1] omega = _as2d(omega_obj)
    cdef double[:, :, ::1] psi = _as3d(psi_obj)
    cdef Py_ssize_t s = X.shape[0], wn = protos.shape[0], dim = X.shape[1]
    cdef Py_ssize_t rank = _rank_of(omega, psi, code, dim)
    cdef bint has_omega = omega.shape[0] > 0
    cdef bint has_psi = psi.shape[0] > 0

    d_prof_arr = np.empty(wn)
    cdef double[::1] d_prof = d_prof_arr
    scratch = np.empty((17, max(rank, 1)))
    cdef double[::1] zx = scratch[0]
    cdef double[::1] zwJ = scratch[1], zwmJ = scratch[2]
    cdef double[::1] hxJ = scratch[3], hwJ = scratch[4], hwmJ = scratch[5]
    cdef double[::1] zwK = scratch[6], zwmK = scratch[7]
    cdef double[::1] hxK = scratch[8], hwK = scratch[9], hwmK = scratch[10]
    cdef double[::1] u1 = scratch[11], u2 = scratch[12], u3 = scratch[13]
    cdef double[::1] zs = scratch[14], hs = scratch[15], us = scratch[16]
    wcopy = np.empty((2, dim))
    cdef double[::1] wJ = wcopy[0], wK = wcopy[1]
    # pre-update copies read by the winner updates
    om_copy_arr = np.empty((omega.shape[0], omega.shape[1])) if has_omega else _EMPTY2D
    psJ_copy_arr = np.empty((psi.shape[1], psi.shape[2])) if has_psi else _EMPTY2D
    psK_copy_arr = np.empty((psi.shape[1], psi.shape[2])) if has_psi else _EMPTY2D
    cdef double[:, ::1] om_copy = om_copy_arr
    cdef double[:, ::1] psJ_copy = psJ_copy_arr
    cdef double[:, ::1] psK_copy = psK_copy_arr

    cdef double cost_sum = 0.0
    cdef long errors = 0
    cdef Py_ssize_t pos, i, r, d, m, jdx, kdx, slotJ, slotK
    cdef long label, step
    cdef int status, observed
    cdef double a = 0.0, om = 0.0, b = 0.0
    cdef double dj, dk, denom, mu, gj, gk, best
    cdef double aJ = 0.0, omJ = 0.0, bJ = 0.0, gpJ
    cdef double aK = 0.0, omK = 0.0, bK = 0.0, gpK

    for pos in range(s):
        i = order[pos]
        step = step_offset + pos + 1
        label = labels[i]

        if code >= 3:
            observed = 0
            for d in range(dim):
                if mask[i, d]:
                    observed = 1
                    break
            if not observed:
                raise EmptyMask(f"sample {i} has no observed dimension")

        for r in range(wn):
            if code < 3:
                d_prof[r] = _euclid_value(
                    X[i], protos[r], omega,
                    psi[psi_index[r]] if code != 0 else omega,
                    code, zs, hs,
                )
            else:
                if code == 3:
                    status = _angle_parts_single(X[i], mask[i], omega, protos[r],
                                                 hxJ, hwJ, hwmJ, &a, &om, &b)
                elif code == 4:
                    status = _angle_parts_single(X[i], mask[i], psi[psi_index[r]],
                                                 protos[r], hxJ, hwJ, hwmJ, &a, &om, &b)
                else:
                    status = _angle_parts_composed(X[i], mask[i], omega,
                                                   psi[psi_index[r]], protos[r],
                                                   zx, zwJ, zwmJ, hxJ, hwJ, hwmJ,
                                                   &a, &om, &b)
                if status:
                    raise DegenerateVector(
                        f"degenerate transform norm for sample {i}, prototype {r}"
                    )
                d_prof[r] = _gb(_clamp(b), beta)

        jdx = -1
        kdx = -1
        best = 0.0
        for r in range(wn):
            if proto_labels[r] == label and (jdx < 0 or d_prof[r] < best):
                jdx = r
                best = d_prof[r]
        best = 0.0
        for r in range(wn):
            if proto_labels[r] != label and (kdx < 0 or d_prof[r] < best):
                kdx = r
                best = d_prof[r]

        for d in range(dim):
            wJ[d] = protos[jdx, d]
            wK[d] = protos[kdx, d]
        slotJ = psi_index[jdx]
        slotK = psi_index[kdx]
        if has_omega:
            om_copy[:, :] = omega
        if has_psi:
            psJ_copy[:, :] = psi[slotJ]
            psK_copy[:, :] = psi[slotK]

        if code < 3:
            dj = d_prof[jdx]
            dk = d_prof[kdx]
            denom = dj + dk
            if denom <= EPS:
                continue
            mu = (dj - dk) / denom
            cost_sum += mu
            if mu > 0:
                errors += 1
            gj = 2.0 * dk / (denom * denom)
            gk = -2.0 * dj / (denom * denom)
            _euclid_winner(X[i], protos, om_copy, psJ_copy, omega,
                           psi[slotJ] if has_psi else omega,
                           code, jdx, wJ, lr_p * gj, lr_m * gj, zs, hs, us)
            _euclid_winner(X[i], protos, om_copy, psK_copy, omega,
                           psi[slotK] if has_psi else omega,
                           code, kdx, wK, lr_p * gk, lr_m * gk, zs, hs, us)
        elif code == 3:
            _angle_parts_single(X[i], mask[i], om_copy, wJ, hxJ, hwJ, hwmJ,
                                &aJ, &omJ, &bJ)
            _angle_parts_single(X[i], mask[i], om_copy, wK, hxK, hwK, hwmK,
                                &aK, &omK, &bK)
            if _margin_coefs(bJ, bK, beta, &gj, &gk, &mu):
                continue
            cost_sum += mu
            if mu > 0:
                errors += 1
            gpJ = 0.0 if fabs(bJ) >= 1.0 else 1.0
            gpK = 0.0 if fabs(bK) >= 1.0 else 1.0
            status = _angle_single_winner(X[i], mask[i], protos, om_copy, omega,
                                           jdx, wJ, hxJ, hwJ, hwmJ, aJ, omJ, bJ,
                                           gpJ, lr_p * gj, lr_m * gj)
            if status:
                _raise_proto_status(status)
            status = _angle_single_winner(X[i], mask[i], protos, om_copy, omega,
                                           kdx, wK, hxK, hwK, hwmK, aK, omK, bK,
                                           gpK, lr_p * gk, lr_m * gk)
            if status:
                _raise_proto_status(status)
        elif code == 4:
            _angle_parts_single(X[i], mask[i], psJ_copy, wJ, hxJ, hwJ, hwmJ,
                                &aJ, &omJ, &bJ)
            _angle_parts_single(X[i], mask[i], psK_copy, wK, hxK, hwK, hwmK,
                                &aK, &omK, &bK)
            if _margin_coefs(bJ, bK, beta, &gj, &gk, &mu):
                continue
            cost_sum += mu
            if mu > 0:
                errors += 1
            gpJ = 0.0 if fabs(bJ) >= 1.0 else 1.0
            gpK = 0.0 if fabs(bK) >= 1.0 else 1.0
            status = _angle_single_winner(X[i], mask[i], protos, psJ_copy,
                                           psi[slotJ], jdx, wJ, hxJ, hwJ, hwmJ,
                                           aJ, omJ, bJ, gpJ, lr_p * gj, lr_m * gj)
            if status:
                _raise_proto_status(status)
            status = _angle_single_winner(X[i], mask[i], protos, psK_copy,
                                           psi[slotK], kdx, wK, hxK, hwK, hwmK,
                                           aK, omK, bK, gpK, lr_p * gk, lr_m * gk)
            if status:
                _raise_proto_status(status)
        else:
            _angle_parts_composed(X[i], mask[i], om_copy, psJ_copy, wJ,
                                  zx, zwJ, zwmJ, hxJ, hwJ, hwmJ, &aJ, &omJ, &bJ)
            _angle_parts_composed(X[i], mask[i], om_copy, psK_copy, wK,
                                  zx, zwK, zwmK, hxK, hwK, hwmK, &aK, &omK, &bK)
            if _margin_coefs(bJ, bK, beta, &gj, &gk, &mu):
                continue
            cost_sum += mu
            if mu > 0:
                errors += 1
            gpJ = 0.0 if fabs(bJ) >= 1.0 else 1.0
            gpK = 0.0 if fabs(bK) >= 1.0 else 1.0
            status = _angle_composed_winner(X[i], mask[i], protos, om_copy,
                                             psJ_copy, omega, psi[slotJ], jdx, wJ,
                                             zx, zwJ, zwmJ, hxJ, hwJ, hwmJ,
                                             aJ, omJ, bJ, gpJ, lr_p * gj,
                                             lr_m * gj, u1, u2, u3)
            if status:
                _raise_proto_status(status)
            status = _angle_composed_winner(X[i], mask[i], protos, om_copy,
                                             psK_copy, omega, psi[slotK], kdx, wK,
                                             zx, zwK, zwmK, hxK, hwK, hwmK,
                                             aK, omK, bK, gpK, lr_p * gk,
                                             lr_m * gk, u1, u2, u3)
            if status:
                _raise_proto_status(status)

        if step % normalize_every == 0:
            if code == 0 or code == 2 or code == 3 or code == 5:
                _normalize(omega, "omega")
            if code == 1 or code == 2 or code == 4 or code == 5:
                _normalize(psi[slotJ], "local matrix")
                _normalize(psi[slotK], "local matrix")

    return cost_sum, errors
