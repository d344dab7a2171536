"""Pure-NumPy reference kernels for the implicit column solve.

Semantics reference for the compiled extension: the Cython kernel in
``_core.pyx`` is a line-by-line transcription of the column algorithm
below, so both backends perform the same arithmetic per column (the NumPy
version is vectorized across columns with masked updates).

The solve: per column, with gamma = dt * a_kk,

    w_k   - w*_k   = gamma * g * (mu_k(phi) - 1)     k = 0 .. n-1
    phi_k - phi*_k = gamma * g * w_k                 k = 0 .. n-1

with (w, phi) at the surface interface held fixed, and mu re-diagnosed
from phi through the closed-form equation of state.  Eliminating phi
leaves a tridiagonal Newton system in w (the dp/ds stencil couples at
most two neighbouring interfaces).
"""

from __future__ import annotations

import numpy as np

MAX_ITER = 10
MAX_BACKTRACK = 9
DEFAULT_TOL = 1.0e-13
STALL_CAP = 1.0e-6


def _pdel_int(dpids, ds_mid, ds_int):
    """avg_m2i(dpids) on the interface range 0..n-1 used by the solve."""
    ncol, n = dpids.shape
    pdel = np.empty((ncol, n))
    pdel[:, 0] = dpids[:, 0]
    pdel[:, 1:] = (
        dpids[:, 1:] * ds_mid[1:] + dpids[:, :-1] * ds_mid[:-1]
    ) / (2.0 * ds_int[1:-1])
    return pdel


def _midpoint_pressure(Theta, phi, ds_mid, Rgas, p0, cpcv):
    """Closed-form EOS pressure; returns (p, dphids, alpha, valid_mask).

    alpha_m = dp_m / dphi_{m+1} = cpcv * p_m / (-dphids_m * ds_m); the
    derivative with respect to phi_m is -alpha_m.
    """
    dphids = (phi[:, 1:] - phi[:, :-1]) / ds_mid
    valid = np.all(dphids < 0.0, axis=1)
    safe = np.where(dphids < 0.0, dphids, -1.0)
    p = p0 * (Rgas * Theta / (-p0 * safe)) ** cpcv
    alpha = cpcv * p / ((-safe) * ds_mid)
    return p, dphids, alpha, valid


def _mu_columns(p, pdel, ds_mid, ds_int, p_top):
    ncol, n = p.shape
    mu = np.empty((ncol, n))
    mu[:, 0] = (p[:, 0] - p_top) / (0.5 * ds_mid[0] * pdel[:, 0])
    mu[:, 1:] = (p[:, 1:] - p[:, :-1]) / (ds_int[1:-1] * pdel[:, 1:])
    return mu


def column_residual(Theta, dpids, w, w_star, phi_star, ds_mid, ds_int,
                    gamma, g, Rgas, p0, cpcv, p_top):
    """Newton residual G(w) for all columns (no validity handling)."""
    gg = gamma * g
    n = Theta.shape[1]
    phi = phi_star.copy()
    phi[:, :n] = phi_star[:, :n] + gg * w
    p, _, _, _ = _midpoint_pressure(Theta, phi, ds_mid, Rgas, p0, cpcv)
    pdel = _pdel_int(dpids, ds_mid, ds_int)
    mu = _mu_columns(p, pdel, ds_mid, ds_int, p_top)
    return w - w_star[:, :n] - gg * (mu - 1.0)


def column_jacobian(Theta, dpids, w, w_star, phi_star, ds_mid, ds_int,
                    gamma, g, Rgas, p0, cpcv, p_top):
    """Analytic tridiagonal Jacobian dG/dw as (sub, diag, sup) bands."""
    gg = gamma * g
    n = Theta.shape[1]
    phi = phi_star.copy()
    phi[:, :n] = phi_star[:, :n] + gg * w
    p, _, alpha, _ = _midpoint_pressure(Theta, phi, ds_mid, Rgas, p0, cpcv)
    pdel = _pdel_int(dpids, ds_mid, ds_int)
    return _jacobian_bands(alpha, pdel, ds_mid, ds_int, gg)


def _jacobian_bands(alpha, pdel, ds_mid, ds_int, gg):
    ncol, n = alpha.shape
    g2 = gg * gg
    sub = np.zeros((ncol, n))
    dia = np.ones((ncol, n))
    sup = np.zeros((ncol, n))
    den0 = 0.5 * ds_mid[0] * pdel[:, 0]
    dia[:, 0] = 1.0 - g2 * (-alpha[:, 0]) / den0
    if n > 1:
        sup[:, 0] = -g2 * alpha[:, 0] / den0
        den = ds_int[1:-1] * pdel[:, 1:]
        sub[:, 1:] = -g2 * alpha[:, :-1] / den
        dia[:, 1:] = 1.0 - g2 * (-alpha[:, 1:] - alpha[:, :-1]) / den
        # phi_{n} is fixed, so row n-1 has no superdiagonal entry.
        sup[:, 1:-1] = -g2 * alpha[:, 1:-1] / den[:, :-1]
    return sub, dia, sup


def _thomas(sub, dia, sup, rhs):
    """Vectorized Thomas elimination; same recurrence per column as the
    scalar kernel."""
    ncol, n = dia.shape
    cp = np.empty((ncol, n))
    xp = np.empty((ncol, n))
    beta = dia[:, 0].copy()
    cp[:, 0] = sup[:, 0] / beta
    xp[:, 0] = rhs[:, 0] / beta
    for k in range(1, n):
        beta = dia[:, k] - sub[:, k] * cp[:, k - 1]
        cp[:, k] = sup[:, k] / beta
        xp[:, k] = (rhs[:, k] - sub[:, k] * xp[:, k - 1]) / beta
    x = np.empty((ncol, n))
    x[:, -1] = xp[:, -1]
    for k in range(n - 2, -1, -1):
        x[:, k] = xp[:, k] - cp[:, k] * x[:, k + 1]
    return x


def solve_columns(Theta, dpids, w_star, phi_star, ds_mid, ds_int,
                  gamma, g, Rgas, p0, cpcv, p_top,
                  tol=DEFAULT_TOL, max_iter=MAX_ITER):
    """Newton solve of the implicit acoustic pair for every column.

    Returns (w, phi, iterations, residual, converged).  ``iterations``
    counts Newton updates; a column whose initial residual already meets
    the tolerance reports zero.  Convergence: scaled residual
    max|G| / (1 + max|w|) <= tol, or quadratic-phase detection: after at
    least two updates the residual stops contracting (>= 0.25 of the
    previous one) while small (<= 1e-6 scaled), meaning Newton has hit the
    roundoff floor of the residual evaluation.
    """
    Theta = np.asarray(Theta, dtype=np.float64)
    dpids = np.asarray(dpids, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    phi_star = np.asarray(phi_star, dtype=np.float64)
    ncol, n = Theta.shape
    gg = gamma * g

    w = w_star[:, :n].copy()
    pdel = _pdel_int(dpids, ds_mid, ds_int)
    iters = np.zeros(ncol, dtype=np.int64)
    resid = np.full(ncol, np.inf)
    converged = np.zeros(ncol, dtype=bool)
    failed = np.zeros(ncol, dtype=bool)
    prev_res = np.full(ncol, np.inf)

    phi = phi_star.copy()
    for it in range(max_iter + 1):
        phi[:, :n] = phi_star[:, :n] + gg * w
        p, dphids, alpha, valid = _midpoint_pressure(
            Theta, phi, ds_mid, Rgas, p0, cpcv
        )
        failed |= ~valid
        mu = _mu_columns(p, pdel, ds_mid, ds_int, p_top)
        G = w - w_star[:, :n] - gg * (mu - 1.0)
        res = np.max(np.abs(G), axis=1)
        scale = 1.0 + np.max(np.abs(w), axis=1)
        active = ~converged & ~failed
        resid[active] = res[active]
        hit = active & (res <= tol * scale)
        stall = active & (it >= 2) & (res <= STALL_CAP * scale) & (res >= 0.25 * prev_res)
        converged |= hit | stall
        active = ~converged & ~failed
        if it == max_iter or not active.any():
            break
        prev_res = np.where(active, res, prev_res)

        sub, dia, sup = _jacobian_bands(alpha, pdel, ds_mid, ds_int, gg)
        dx = _thomas(sub, dia, sup, -G)

        # Backtrack any column whose update breaks the phi ordering.
        lam = np.ones(ncol)
        trial = w + lam[:, None] * dx
        for _ in range(MAX_BACKTRACK):
            phi[:, :n] = phi_star[:, :n] + gg * trial
            dphids_t = (phi[:, 1:] - phi[:, :-1]) / ds_mid
            bad = active & np.any(dphids_t >= 0.0, axis=1)
            if not bad.any():
                break
            lam[bad] *= 0.5
            trial = np.where(bad[:, None], w + lam[:, None] * dx, trial)
        else:
            phi[:, :n] = phi_star[:, :n] + gg * trial
            dphids_t = (phi[:, 1:] - phi[:, :-1]) / ds_mid
            bad = active & np.any(dphids_t >= 0.0, axis=1)
            failed |= bad
            active &= ~bad
        w = np.where(active[:, None], trial, w)
        iters[active] += 1

    phi = phi_star.copy()
    phi[:, :n] = phi_star[:, :n] + gg * w
    w_full = np.empty_like(w_star)
    w_full[:, :n] = w
    w_full[:, n] = w_star[:, n]
    converged &= ~failed
    return w_full, phi, iters, resid, converged
