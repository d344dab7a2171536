"""Staggered terrain-following vertical grid and hybrid mass-coordinate coefficients.

The vertical coordinate s increases downward from the model top to the
surface.  A column has n midpoint levels (index i = 1..n) and n+1 interface
levels (i+1/2, i = 0..n).  Midpoints are centered between their interfaces,
and the boundary interface thicknesses repeat the adjacent layer thickness,
which is what makes the discrete averaging and integration-by-parts
identities in :mod:`nhslice.vops` exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridError",
    "PhysicalConstants",
    "DRY_AIR",
    "LevelGrid",
    "HybridCoefficients",
    "build_uniform_grid",
    "grid_from_interfaces",
    "build_hybrid",
    "pi_interfaces",
    "save_levels",
    "load_levels",
]


class GridError(ValueError):
    """Raised for non-monotone or otherwise invalid vertical grids."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Dry-air constants used throughout the model.

    c_v and kappa are derived; construction fails unless c_v > 0.
    """

    g: float = 9.80616        # gravitational acceleration [m/s^2]
    R: float = 287.04         # ideal gas constant, dry air [J/(kg K)]
    cp: float = 1004.64       # specific heat at constant pressure [J/(kg K)]
    p0: float = 1.0e5         # reference pressure [Pa]
    f: float = 0.0            # Coriolis parameter [1/s]

    def __post_init__(self):
        if self.cp - self.R <= 0.0:
            raise ValueError(f"c_v = cp - R must be positive, got {self.cp - self.R}")
        if not (0.0 < self.R / self.cp < 1.0):
            raise ValueError("kappa = R/cp must lie in (0, 1)")

    @property
    def cv(self) -> float:
        return self.cp - self.R

    @property
    def kappa(self) -> float:
        return self.R / self.cp


DRY_AIR = PhysicalConstants()


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LevelGrid:
    """Staggered s-levels.

    Attributes
    ----------
    n : number of midpoint levels (>= 2).
    s_int : interface coordinates s_{i+1/2}, shape (n+1,), strictly increasing.
    s_mid : midpoint coordinates s_i = (s_{i+1/2} + s_{i-1/2})/2, shape (n,).
    ds_mid : layer thickness ds_i = s_{i+1/2} - s_{i-1/2}, shape (n,).
    ds_int : interface thickness ds_{i+1/2} = s_{i+1} - s_i for interior
        interfaces, with the boundary rule ds_{1/2} = ds_1 and
        ds_{n+1/2} = ds_n, shape (n+1,).
    """

    n: int
    s_int: np.ndarray
    s_mid: np.ndarray
    ds_mid: np.ndarray
    ds_int: np.ndarray

    @property
    def length(self) -> float:
        """Total s-extent s_{n+1/2} - s_{1/2}."""
        return float(self.s_int[-1] - self.s_int[0])


def grid_from_interfaces(s_int) -> LevelGrid:
    """Build a LevelGrid from explicit interface coordinates.

    The midpoints, layer thicknesses and boundary interface thicknesses are
    all derived, so every LevelGrid invariant holds by construction.
    """
    s_int = np.asarray(s_int, dtype=np.float64)
    if s_int.ndim != 1 or s_int.size < 3:
        raise GridError("need at least 3 interface levels (n >= 2)")
    if not np.all(np.diff(s_int) > 0.0):
        raise GridError("interface coordinates must be strictly increasing")
    n = s_int.size - 1
    s_mid = 0.5 * (s_int[1:] + s_int[:-1])
    ds_mid = s_int[1:] - s_int[:-1]
    ds_int = np.empty(n + 1)
    ds_int[1:-1] = s_mid[1:] - s_mid[:-1]
    ds_int[0] = ds_mid[0]
    ds_int[-1] = ds_mid[-1]
    return LevelGrid(
        n=n,
        s_int=_readonly(s_int),
        s_mid=_readonly(s_mid),
        ds_mid=_readonly(ds_mid),
        ds_int=_readonly(ds_int),
    )


def build_uniform_grid(n: int, s_top: float = 0.0, s_bot: float = 1.0) -> LevelGrid:
    """Uniformly spaced interfaces on [s_top, s_bot] with n layers."""
    if n < 2:
        raise GridError(f"need n >= 2 levels, got {n}")
    if not s_top < s_bot:
        raise GridError(f"require s_top < s_bot, got [{s_top}, {s_bot}]")
    return grid_from_interfaces(np.linspace(s_top, s_bot, n + 1))


@dataclass(frozen=True)
class HybridCoefficients:
    """Hybrid A/B coefficients at interfaces: pi = A*p0_ref + B*p_s.

    A_surf = 0 and B_surf = 1 (pi equals surface pressure at the surface);
    B_top = 0 so the model top is a constant-pressure surface with
    p_top = A_top * p0_ref.
    """

    A_int: np.ndarray
    B_int: np.ndarray
    p0_ref: float

    @property
    def p_top(self) -> float:
        return float(self.A_int[0] * self.p0_ref)


def build_hybrid(
    grid: LevelGrid,
    p_top: float,
    p0_ref: float = 1.0e5,
    exponent: float = 1.0,
) -> HybridCoefficients:
    """Generate hybrid coefficients with a one-parameter blending exponent.

    Uses the Laprise-Girard shape: with sigma the s coordinate normalized to
    [0, 1] and eta = eta_top + (1 - eta_top)*sigma,

        B = sigma**exponent,   A = eta - B,

    so that A_top*p0 = p_top, A_surf = 0, B_top = 0 and B_surf = 1.
    exponent = 1 gives a pure sigma coordinate; larger exponents push the
    levels near the top toward constant pressure.
    """
    if not 0.0 < p_top < p0_ref:
        raise GridError(f"require 0 < p_top < p0_ref, got p_top={p_top}, p0_ref={p0_ref}")
    if exponent < 1.0:
        raise GridError(f"blending exponent must be >= 1, got {exponent}")
    eta_top = p_top / p0_ref
    sigma = (grid.s_int - grid.s_int[0]) / grid.length
    eta = eta_top + (1.0 - eta_top) * sigma
    B = sigma**exponent
    A = eta - B
    # Pin the endpoint constraints exactly (roundoff in eta would otherwise leak).
    A[0] = eta_top
    B[0] = 0.0
    A[-1] = 0.0
    B[-1] = 1.0
    h = HybridCoefficients(A_int=_readonly(A), B_int=_readonly(B), p0_ref=float(p0_ref))
    # Admissible surface-pressure range: [0.5, 1.5] * p0_ref, with the lower
    # end kept above p_top for shallow domains.
    ps_lo = max(0.5 * p0_ref, p_top + 0.1 * (p0_ref - p_top))
    for ps in (ps_lo, p0_ref, 1.5 * p0_ref):
        dpi = np.diff(h.A_int * p0_ref + h.B_int * ps)
        if not np.all(dpi > 0.0):
            k = int(np.argmin(dpi))
            raise GridError(
                f"hybrid coefficients non-monotone at interface {k + 1} for "
                f"p_s = {ps:g} Pa (exponent {exponent})"
            )
    return h


def pi_interfaces(hybrid: HybridCoefficients, ps) -> np.ndarray:
    """Hydrostatic interface pressures pi_{i+1/2} = A*p0 + B*p_s.

    ps may be a scalar or an array of per-column surface pressures; the
    result has the interface axis last.  Raises GridError if the implied
    pi column is not strictly increasing.
    """
    ps = np.asarray(ps, dtype=np.float64)
    pi = hybrid.A_int * hybrid.p0_ref + np.multiply.outer(ps, hybrid.B_int)
    if not np.all(np.diff(pi, axis=-1) > 0.0):
        raise GridError("surface pressure too low: interface pressures not increasing")
    return pi


_LEVELS_HEADER = "# nhslice levels v1: i  s_interface  A  B  (p0_ref on next line)"


def save_levels(path, grid: LevelGrid, hybrid: HybridCoefficients) -> None:
    """Write the grid/hybrid table as plain text, one row per interface."""
    with open(path, "w") as f:
        f.write(_LEVELS_HEADER + "\n")
        f.write(f"# p0_ref {hybrid.p0_ref!r}\n")
        for k in range(grid.n + 1):
            f.write(
                f"{k} {float(grid.s_int[k])!r} {float(hybrid.A_int[k])!r} "
                f"{float(hybrid.B_int[k])!r}\n"
            )


def load_levels(path) -> tuple[LevelGrid, HybridCoefficients]:
    """Read back a table written by :func:`save_levels` (exact round trip)."""
    rows = []
    p0_ref = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line.startswith("# p0_ref"):
                p0_ref = float(line.split()[-1])
            elif not line or line.startswith("#"):
                continue
            else:
                _, s, a, b = line.split()
                rows.append((float(s), float(a), float(b)))
    if p0_ref is None or len(rows) < 3:
        raise GridError(f"malformed levels file: {path}")
    data = np.array(rows)
    grid = grid_from_interfaces(data[:, 0])
    hybrid = HybridCoefficients(
        A_int=_readonly(data[:, 1]), B_int=_readonly(data[:, 2]), p0_ref=p0_ref
    )
    return grid, hybrid
