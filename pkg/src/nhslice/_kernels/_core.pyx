# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the implicit column solve.

Line-by-line transcription of the column algorithm in ``_ref.py``: a
tridiagonal Newton iteration per column for the implicit acoustic pair,
with the equation-of-state pressure re-diagnosed from phi at every
iterate.  Columns are processed serially for deterministic output.
"""

from libc.math cimport fabs, pow, INFINITY

import numpy as np

DEF MAX_BACKTRACK = 9


def solve_columns(const double[:, ::1] Theta, const double[:, ::1] dpids,
                  const double[:, ::1] w_star, const double[:, ::1] phi_star,
                  const double[::1] ds_mid, const double[::1] ds_int,
                  double gamma, double g, double Rgas, double p0,
                  double cpcv, double p_top,
                  double tol=1.0e-13, int max_iter=10):
    cdef Py_ssize_t ncol = Theta.shape[0]
    cdef Py_ssize_t n = Theta.shape[1]
    cdef double gg = gamma * g
    cdef double g2 = gg * gg

    w_out = np.empty((ncol, n + 1))
    phi_out = np.empty((ncol, n + 1))
    iters = np.zeros(ncol, dtype=np.int64)
    resid = np.full(ncol, np.inf)
    conv = np.zeros(ncol, dtype=np.uint8)

    cdef double[:, ::1] w_full = w_out
    cdef double[:, ::1] phi_full = phi_out
    cdef long[::1] it_v = iters
    cdef double[::1] res_v = resid
    cdef unsigned char[::1] cv_v = conv

    buf = np.empty((12, n + 1))
    cdef double[:, ::1] b = buf
    cdef double[::1] w = b[0]
    cdef double[::1] phi = b[1]
    cdef double[::1] p = b[2]
    cdef double[::1] alpha = b[3]
    cdef double[::1] mu = b[4]
    cdef double[::1] G = b[5]
    cdef double[::1] dx = b[6]
    cdef double[::1] sub = b[7]
    cdef double[::1] dia = b[8]
    cdef double[::1] sup = b[9]
    cdef double[::1] cp_ = b[10]
    cdef double[::1] xp = b[11]
    pdel_buf = np.empty(n)
    cdef double[::1] pdel = pdel_buf

    cdef Py_ssize_t j, m, k, it, bt
    cdef double dphids, res, wmax, scale, prev_res, beta, lam, den, den0
    cdef bint valid, ok, failed, converged

    for j in range(ncol):
        pdel[0] = dpids[j, 0]
        for k in range(1, n):
            pdel[k] = (dpids[j, k] * ds_mid[k] + dpids[j, k - 1] * ds_mid[k - 1]) \
                / (2.0 * ds_int[k])
        for k in range(n):
            w[k] = w_star[j, k]
        phi[n] = phi_star[j, n]
        prev_res = INFINITY
        failed = False
        converged = False

        for it in range(max_iter + 1):
            for m in range(n):
                phi[m] = phi_star[j, m] + gg * w[m]
            valid = True
            for m in range(n):
                dphids = (phi[m + 1] - phi[m]) / ds_mid[m]
                if dphids >= 0.0:
                    valid = False
                    break
                p[m] = p0 * pow(Rgas * Theta[j, m] / (-p0 * dphids), cpcv)
                alpha[m] = cpcv * p[m] / ((-dphids) * ds_mid[m])
            if not valid:
                failed = True
                break
            mu[0] = (p[0] - p_top) / (0.5 * ds_mid[0] * pdel[0])
            for k in range(1, n):
                mu[k] = (p[k] - p[k - 1]) / (ds_int[k] * pdel[k])
            res = 0.0
            wmax = 0.0
            for k in range(n):
                G[k] = w[k] - w_star[j, k] - gg * (mu[k] - 1.0)
                if fabs(G[k]) > res:
                    res = fabs(G[k])
                if fabs(w[k]) > wmax:
                    wmax = fabs(w[k])
            scale = 1.0 + wmax
            res_v[j] = res
            if res <= tol * scale:
                converged = True
                break
            if it >= 2 and res <= 1.0e-6 * scale and res >= 0.25 * prev_res:
                converged = True
                break
            if it == max_iter:
                break
            prev_res = res

            den0 = 0.5 * ds_mid[0] * pdel[0]
            sub[0] = 0.0
            dia[0] = 1.0 - g2 * (-alpha[0]) / den0
            sup[0] = -g2 * alpha[0] / den0
            for k in range(1, n):
                den = ds_int[k] * pdel[k]
                sub[k] = -g2 * alpha[k - 1] / den
                dia[k] = 1.0 - g2 * (-alpha[k] - alpha[k - 1]) / den
                sup[k] = -g2 * alpha[k] / den
            sup[n - 1] = 0.0

            beta = dia[0]
            cp_[0] = sup[0] / beta
            xp[0] = -G[0] / beta
            for k in range(1, n):
                beta = dia[k] - sub[k] * cp_[k - 1]
                cp_[k] = sup[k] / beta
                xp[k] = (-G[k] - sub[k] * xp[k - 1]) / beta
            dx[n - 1] = xp[n - 1]
            for k in range(n - 2, -1, -1):
                dx[k] = xp[k] - cp_[k] * dx[k + 1]

            lam = 1.0
            ok = False
            for bt in range(MAX_BACKTRACK + 1):
                valid = True
                phi[n] = phi_star[j, n]
                for m in range(n):
                    phi[m] = phi_star[j, m] + gg * (w[m] + lam * dx[m])
                for m in range(n):
                    if (phi[m + 1] - phi[m]) / ds_mid[m] >= 0.0:
                        valid = False
                        break
                if valid:
                    ok = True
                    break
                if bt < MAX_BACKTRACK:
                    lam = lam * 0.5
            if not ok:
                failed = True
                break
            for k in range(n):
                w[k] = w[k] + lam * dx[k]
            it_v[j] = it_v[j] + 1

        for k in range(n):
            w_full[j, k] = w[k]
            phi_full[j, k] = phi_star[j, k] + gg * w[k]
        w_full[j, n] = w_star[j, n]
        phi_full[j, n] = phi_star[j, n]
        cv_v[j] = 1 if (converged and not failed) else 0

    return w_out, phi_out, iters, resid, conv.astype(bool)
