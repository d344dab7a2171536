"""Extended Simmons-Burridge vertical operator algebra on a Lorenz-staggered grid.

All operators act on the last axis of plain ndarrays, so a field may be a
single column of shape (n,) / (n+1,) or a stack of columns of shape
(ncol, nlev).  Midpoint fields have length n, interface fields length n+1.

The operator set is closed under a family of discrete identities that the
energy budgets rest on:

* averaging commutes with differentiation for interface fields,
* averaging-by-parts between the midpoint and primed-interface quadratures,
* integration-by-parts with an exact boundary term,
* pointwise product rules for both staggerings,
* the transport operators vanish for constant fields and for Sdot == 0.

Every identity is exact in exact arithmetic; the test suite checks them to
1e-13 relative on random nonuniform grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vcoord import LevelGrid

__all__ = [
    "MidBoundary",
    "avg_i2m",
    "avg_m2i",
    "ddn_i2m",
    "ddn_m2i",
    "vint_mid",
    "vint_int",
    "sb81_adv_mid",
    "sb81_adv_mid_flux",
    "sb81_adv_int",
    "sb81_adv_int_direct",
]


@dataclass(frozen=True)
class MidBoundary:
    """Top and surface boundary values for a midpoint field.

    Required by ddn_m2i, whose one-sided stencils at the model top and
    surface need the field's interface values there.  Entries may be scalars
    or per-column arrays.
    """

    top: object
    surf: object


def _check_mid(grid: LevelGrid, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != grid.n:
        raise ValueError(
            f"grid mismatch: midpoint field has length {p.shape[-1]}, grid has n={grid.n}"
        )
    return p


def _check_int(grid: LevelGrid, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[-1] != grid.n + 1:
        raise ValueError(
            f"grid mismatch: interface field has length {phi.shape[-1]}, "
            f"grid has n+1={grid.n + 1}"
        )
    return phi


def avg_i2m(grid: LevelGrid, phi) -> np.ndarray:
    """Average an interface field to midpoints: (phi_{i+1/2} + phi_{i-1/2})/2."""
    phi = _check_int(grid, phi)
    return 0.5 * (phi[..., 1:] + phi[..., :-1])


def avg_m2i(grid: LevelGrid, p) -> np.ndarray:
    """Thickness-weighted average (and boundary extrapolation) to interfaces.

    Interior: ((p ds)_{i+1} + (p ds)_i) / (2 ds_{i+1/2}); at the boundaries
    the adjacent midpoint value is copied, which is the extrapolation that
    makes the averaging-by-parts identity hold.
    """
    p = _check_mid(grid, p)
    out = np.empty(p.shape[:-1] + (grid.n + 1,))
    pw = p * grid.ds_mid
    out[..., 1:-1] = (pw[..., 1:] + pw[..., :-1]) / (2.0 * grid.ds_int[1:-1])
    out[..., 0] = p[..., 0]
    out[..., -1] = p[..., -1]
    return out


def ddn_i2m(grid: LevelGrid, phi) -> np.ndarray:
    """Vertical derivative of an interface field at midpoints."""
    phi = _check_int(grid, phi)
    return (phi[..., 1:] - phi[..., :-1]) / grid.ds_mid


def ddn_m2i(grid: LevelGrid, p, bc: MidBoundary) -> np.ndarray:
    """Vertical derivative of a midpoint field at interfaces.

    Interior interfaces use the centered difference over ds_{i+1/2}; the top
    and surface use one-sided differences against the supplied boundary
    values over half the adjacent layer thickness.
    """
    p = _check_mid(grid, p)
    if bc is None:
        raise ValueError("ddn_m2i requires boundary values (MidBoundary)")
    out = np.empty(p.shape[:-1] + (grid.n + 1,))
    out[..., 1:-1] = (p[..., 1:] - p[..., :-1]) / grid.ds_int[1:-1]
    out[..., 0] = (p[..., 0] - np.asarray(bc.top)) / (0.5 * grid.ds_mid[0])
    out[..., -1] = (np.asarray(bc.surf) - p[..., -1]) / (0.5 * grid.ds_mid[-1])
    return out


def vint_mid(grid: LevelGrid, p) -> np.ndarray:
    """Midpoint-rule vertical integral: sum_i p_i ds_i."""
    p = _check_mid(grid, p)
    return p @ grid.ds_mid


def vint_int(grid: LevelGrid, phi) -> np.ndarray:
    """Primed-sum vertical integral over interfaces (half weights at the ends)."""
    phi = _check_int(grid, phi)
    w = grid.ds_int.copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return phi @ w


def _check_sdot_endpoints(Sdot: np.ndarray) -> None:
    if np.any(Sdot[..., 0] != 0.0) or np.any(Sdot[..., -1] != 0.0):
        raise ValueError("contract violation: Sdot must vanish at the top and surface")


def sb81_adv_mid(grid: LevelGrid, Sdot, p, dpids) -> np.ndarray:
    """SB81 vertical advection [sdot dp/ds] of a midpoint field.

    Defined through

        (dpi/ds)_i [sdot dp/ds]_i = avg_i2m( Sdot * (dp/ds) * ds_int )_i / ds_i

    with the interior derivative stencil only; the Sdot = 0 endpoint
    condition closes the boundary terms.
    """
    Sdot = _check_int(grid, Sdot)
    p = _check_mid(grid, p)
    dpids = _check_mid(grid, dpids)
    _check_sdot_endpoints(Sdot)
    # X_{i+1/2} = Sdot * (p_{i+1} - p_i) at interior interfaces, zero at ends.
    X = np.zeros(Sdot.shape)
    X[..., 1:-1] = Sdot[..., 1:-1] * (p[..., 1:] - p[..., :-1])
    return (X[..., 1:] + X[..., :-1]) / (2.0 * dpids * grid.ds_mid)


def sb81_adv_mid_flux(grid: LevelGrid, Sdot, p, dpids) -> np.ndarray:
    """Flux-minus-dilatation form of sb81_adv_mid (algebraically equal)."""
    Sdot = _check_int(grid, Sdot)
    p = _check_mid(grid, p)
    dpids = _check_mid(grid, dpids)
    _check_sdot_endpoints(Sdot)
    # Unweighted interface average of p, with the boundary copy rule.
    pbar = np.empty(Sdot.shape)
    pbar[..., 1:-1] = 0.5 * (p[..., 1:] + p[..., :-1])
    pbar[..., 0] = p[..., 0]
    pbar[..., -1] = p[..., -1]
    flux = ddn_i2m(grid, Sdot * pbar)
    dil = p * ddn_i2m(grid, Sdot)
    return (flux - dil) / dpids


def sb81_adv_int(grid: LevelGrid, Sdot, w, dpids) -> np.ndarray:
    """SB81 vertical advection [sdot dw/ds] of an interface field.

    Canonical flux form

        avg_m2i(dpids) [sdot dw/ds] = d/ds( Sbar * wbar ) - w * d/ds Sbar

    with Sbar = avg_i2m(Sdot), wbar = avg_i2m(w), and zero boundary values
    for both d/ds operands (Sdot vanishes at the top and surface, so there
    are no phantom exterior contributions).
    """
    Sdot = _check_int(grid, Sdot)
    w = _check_int(grid, w)
    dpids = _check_mid(grid, dpids)
    _check_sdot_endpoints(Sdot)
    Sbar = avg_i2m(grid, Sdot)
    wbar = avg_i2m(grid, w)
    zero_bc = MidBoundary(0.0, 0.0)
    flux = ddn_m2i(grid, Sbar * wbar, zero_bc)
    dil = w * ddn_m2i(grid, Sbar, zero_bc)
    return (flux - dil) / avg_m2i(grid, dpids)


def sb81_adv_int_direct(grid: LevelGrid, Sdot, w, dpids) -> np.ndarray:
    """sb81_adv_int written without averages of averages.

    Expanding the flux form at interior interfaces gives the single-step
    stencil

        [sdot dw/ds]_{i+1/2} = [ (S_{i+3/2} + S_{i+1/2})(w_{i+3/2} - w_{i+1/2})
                               + (S_{i+1/2} + S_{i-1/2})(w_{i+1/2} - w_{i-1/2}) ]
                               / (4 ds_{i+1/2} avg_m2i(dpids)_{i+1/2})

    and the one-sided boundary closures S_{3/2}(w_{3/2} - w_{1/2}) / (2 ds_1)
    (top, per unit avg_m2i(dpids)) and its mirror at the surface.
    """
    Sdot = _check_int(grid, Sdot)
    w = _check_int(grid, w)
    dpids = _check_mid(grid, dpids)
    _check_sdot_endpoints(Sdot)
    pdel = avg_m2i(grid, dpids)
    out = np.empty(w.shape)
    dw = w[..., 1:] - w[..., :-1]
    up = (Sdot[..., 2:] + Sdot[..., 1:-1]) * dw[..., 1:]
    dn = (Sdot[..., 1:-1] + Sdot[..., :-2]) * dw[..., :-1]
    out[..., 1:-1] = (up + dn) / (4.0 * grid.ds_int[1:-1] * pdel[..., 1:-1])
    out[..., 0] = Sdot[..., 1] * dw[..., 0] / (2.0 * grid.ds_mid[0] * pdel[..., 0])
    out[..., -1] = Sdot[..., -2] * dw[..., -1] / (2.0 * grid.ds_mid[-1] * pdel[..., -1])
    return out


def _sb81_adv_int_avgavg(grid: LevelGrid, Sdot, w, dpids) -> np.ndarray:
    """Averages-of-averages form of sb81_adv_int (interior interfaces only).

    Kept for the identity tests; boundary entries are filled with the
    canonical flux-form values.
    """
    adv = sb81_adv_int(grid, Sdot, w, dpids)
    mid = avg_i2m(grid, Sdot) * ddn_i2m(grid, w)
    inner = avg_m2i(grid, mid) / avg_m2i(grid, dpids)
    adv[..., 1:-1] = inner[..., 1:-1]
    return adv
