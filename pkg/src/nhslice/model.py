"""Prognostic state, diagnostics and energy-consistent tendencies.

The prognostic set is (u, v, Theta, dpi/ds) at midpoints and (w, phi) at
interfaces, on a flat-bottom periodic vertical slice in a hybrid mass
coordinate.  Midpoint pressure is diagnosed from the equation of state in
closed form, the surface pressure from the requirement that the discrete
w equation holds at the surface with w_surf = 0, and (in Eulerian mode)
the cross-coordinate mass flux Sdot from the vertically integrated
continuity equation.

Every tendency term is exposed separately (``tendency_terms``) so the
energy budgets can be assembled from exactly the same stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hops, vops
from .vcoord import HybridCoefficients, LevelGrid, PhysicalConstants, DRY_AIR
from .vops import MidBoundary

__all__ = [
    "NonphysicalStateError",
    "UnsupportedFeatureError",
    "DegenerateStratificationError",
    "ModelConfig",
    "PrognosticState",
    "DiagnosticState",
    "SliceModel",
    "state_linear_comb",
]

EULERIAN = "eulerian"
LAGRANGIAN = "lagrangian"

PROGNOSTIC_FIELDS = ("u", "v", "w", "phi", "Theta", "dpids")


class NonphysicalStateError(ValueError):
    """State violates positivity/monotonicity requirements."""


class UnsupportedFeatureError(NotImplementedError):
    """Requested configuration outside the flat-bottom v1 feature set."""


class DegenerateStratificationError(ValueError):
    """Vanishing Exner vertical gradient; tilde averaging undefined."""


@dataclass
class ModelConfig:
    """Run-mode switches for the slice model."""

    vertical_mode: str = EULERIAN
    nu: float = 0.0                     # horizontal hyperviscosity [m^4/s]
    remap_interval: int = 3             # steps between remaps (Lagrangian only)
    constants: PhysicalConstants = field(default_factory=lambda: DRY_AIR)

    def __post_init__(self):
        if self.vertical_mode not in (EULERIAN, LAGRANGIAN):
            raise ValueError(f"unknown vertical mode {self.vertical_mode!r}")
        if self.vertical_mode == LAGRANGIAN and self.remap_interval < 1:
            raise ValueError("remap_interval must be >= 1 in Lagrangian mode")


@dataclass
class PrognosticState:
    """Prognostic fields, columns on axis 0 and levels on axis 1.

    u, v, Theta, dpids have shape (ncol, n); w, phi have shape (ncol, n+1).
    Also used as the container for tendencies.
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    Theta: np.ndarray
    dpids: np.ndarray
    t: float = 0.0

    def copy(self) -> "PrognosticState":
        return PrognosticState(
            *(getattr(self, name).copy() for name in PROGNOSTIC_FIELDS), t=self.t
        )

    @property
    def ncol(self) -> int:
        return self.u.shape[0]

    @property
    def nlev(self) -> int:
        return self.u.shape[1]


def zeros_like_state(state: PrognosticState) -> PrognosticState:
    return PrognosticState(
        *(np.zeros_like(getattr(state, name)) for name in PROGNOSTIC_FIELDS),
        t=state.t,
    )


def state_linear_comb(base: PrognosticState, terms, t: float | None = None) -> PrognosticState:
    """base + sum(coeff * tend) fieldwise, in the fixed given order."""
    out = {}
    for name in PROGNOSTIC_FIELDS:
        acc = getattr(base, name).copy()
        for coeff, tend in terms:
            if coeff != 0.0:
                acc += coeff * getattr(tend, name)
        out[name] = acc
    return PrognosticState(t=base.t if t is None else t, **out)


@dataclass
class DiagnosticState:
    """Fields diagnosed from a PrognosticState."""

    p: np.ndarray              # midpoint pressure [Pa]
    Pi: np.ndarray             # Exner pressure (p/p0)^kappa
    theta_v: np.ndarray        # virtual potential temperature [K]
    dphids: np.ndarray         # d(phi)/ds at midpoints (negative)
    rho: np.ndarray            # density [kg/m^3]
    pi_int: np.ndarray         # hydrostatic pressure at interfaces [Pa]
    pdel_int: np.ndarray       # avg_m2i(dpids) at interfaces
    dpds: np.ndarray           # dp/ds at interfaces incl. one-sided ends
    mu: np.ndarray             # (dp/ds) / avg_m2i(dpids)
    p_top: float               # constant A_top * p0 [Pa]
    p_surf: np.ndarray         # per-column surface pressure [Pa]
    Sdot: np.ndarray           # (dpi/ds) * sdot at interfaces, zero at ends
    sdot: np.ndarray           # coordinate velocity sdot at interfaces [1/s]
    u_tilde: np.ndarray        # mass-weighted interface u
    theta_v_tilde: np.ndarray | None   # special interface theta_v (Eulerian)
    adv_w: np.ndarray          # u_tilde*grad_x(w) + [sdot dw/ds] at interfaces


class SliceModel:
    """Discrete slice model binding the vertical grid, horizontal grid,
    hybrid coordinate and configuration."""

    def __init__(
        self,
        grid: LevelGrid,
        hgrid: hops.SEGrid1D,
        hybrid: HybridCoefficients,
        config: ModelConfig | None = None,
    ):
        self.grid = grid
        self.hgrid = hgrid
        self.hybrid = hybrid
        self.config = config if config is not None else ModelConfig()
        self.constants = self.config.constants

    # ------------------------------------------------------------------
    # validation

    def validate_state(self, state: PrognosticState) -> None:
        if state.u.shape != (self.hgrid.ncol, self.grid.n):
            raise ValueError(
                f"state shape {state.u.shape} does not match grid "
                f"({self.hgrid.ncol}, {self.grid.n})"
            )
        for name, arr in (("dpids", state.dpids), ("Theta", state.Theta)):
            if not np.all(arr > 0.0):
                j, k = np.unravel_index(int(np.argmin(arr)), arr.shape)
                raise NonphysicalStateError(
                    f"{name} <= 0 at column {j}, level {k + 1}"
                )
        dphi = np.diff(state.phi, axis=1)
        if not np.all(dphi < 0.0):
            j, k = np.unravel_index(int(np.argmax(dphi)), dphi.shape)
            raise NonphysicalStateError(
                f"phi not strictly decreasing at column {j}, layer {k + 1}"
            )

    def _check_flat_bottom(self, state: PrognosticState) -> None:
        spread = float(np.ptp(state.phi[:, -1]))
        if spread > 1.0e-6:
            raise UnsupportedFeatureError(
                "sloped bottom topography is not supported (surface phi varies "
                f"by {spread:g} m^2/s^2); v1 requires a flat bottom"
            )

    # ------------------------------------------------------------------
    # diagnostics

    def diagnose_eos(self, state: PrognosticState):
        """Closed-form equation of state at midpoints.

        Solves d(phi)/ds = -R Theta Pi / p together with Pi = (p/p0)^kappa
        for p, giving p = p0 (R Theta / (-p0 dphi/ds))^(cp/cv).
        """
        c = self.constants
        dphids = vops.ddn_i2m(self.grid, state.phi)
        if not np.all(dphids < 0.0):
            j, k = np.unravel_index(int(np.argmax(dphids)), dphids.shape)
            raise NonphysicalStateError(
                f"d(phi)/ds >= 0 at column {j}, level {k + 1}"
            )
        p = c.p0 * (c.R * state.Theta / (-c.p0 * dphids)) ** (c.cp / c.cv)
        Pi = (p / c.p0) ** c.kappa
        theta_v = state.Theta / state.dpids
        rho = -state.dpids / dphids
        return p, Pi, theta_v, dphids, rho

    def diagnose_sdot(self, state: PrognosticState, pdel_int=None):
        """Diagnostic vertical mass flux in the Eulerian mass coordinate.

        Sdot_{i+1/2} = B_{i+1/2} * sum_k div(dpids u)_k ds_k
                     - sum_{k<=i} div(dpids u)_k ds_k,
        with Sdot = 0 at the top and surface, and sdot = Sdot / avg_m2i(dpids).
        """
        if self.config.vertical_mode != EULERIAN:
            raise ValueError("Sdot is diagnosed only in the Eulerian mass mode")
        if pdel_int is None:
            pdel_int = vops.avg_m2i(self.grid, state.dpids)
        dvg = hops.div_x(self.hgrid, state.dpids * state.u)
        csum = np.cumsum(dvg * self.grid.ds_mid, axis=1)
        total = csum[:, -1:]
        Sdot = np.zeros((state.ncol, self.grid.n + 1))
        Sdot[:, 1:-1] = self.hybrid.B_int[1:-1] * total - csum[:, :-1]
        sdot = Sdot / pdel_int
        return Sdot, sdot

    def diagnose_tildes(self, state: PrognosticState, mu=None):
        """Interface averages needed for energy-neutral transport.

        u_tilde is the mass-weighted average; theta_v_tilde (Eulerian only)
        is chosen so the two internal-energy vertical-transport sums cancel:
        theta_v_tilde = -(mu/cp) avg_m2i(dphids) / ddn_m2i(Pi) at interior
        interfaces.  Boundary values are set to the adjacent midpoint
        theta_v; they multiply Sdot = 0 and are never used.
        """
        g = self.grid
        pdel_int = vops.avg_m2i(g, state.dpids)
        u_tilde = vops.avg_m2i(g, state.dpids * state.u) / pdel_int
        if self.config.vertical_mode != EULERIAN:
            return u_tilde, None
        p, Pi, theta_v, dphids, _ = self.diagnose_eos(state)
        if mu is None:
            mu = self.diagnose_pressure_bcs(state)[3]
        dPi = (Pi[:, 1:] - Pi[:, :-1]) / g.ds_int[1:-1]
        floor = 1.0e-12 * np.max(np.abs(Pi)) / g.length
        if np.any(np.abs(dPi) < floor):
            j, k = np.unravel_index(int(np.argmin(np.abs(dPi))), dPi.shape)
            raise DegenerateStratificationError(
                f"d(Pi)/ds vanishes at column {j}, interface {k + 1}"
            )
        adphids = vops.avg_m2i(g, dphids)
        tvt = np.empty_like(state.w)
        tvt[:, 1:-1] = -(mu[:, 1:-1] / self.constants.cp) * adphids[:, 1:-1] / dPi
        tvt[:, 0] = theta_v[:, 0]
        tvt[:, -1] = theta_v[:, -1]
        return u_tilde, tvt

    def diagnose_pressure_bcs(self, state: PrognosticState):
        """Boundary pressures and mu from the flat-bottom surface closure.

        p_top is the constant free-surface pressure A_top*p0.  p_surf is set
        per column so the discrete w equation holds at the surface with
        w_surf = 0: mu_surf = 1 + (u_tilde.grad(w) + [sdot dw/ds])_surf / g.
        """
        self._check_flat_bottom(state)
        p, Pi, theta_v, dphids, _ = self.diagnose_eos(state)
        pdel_int = vops.avg_m2i(self.grid, state.dpids)
        u_tilde = vops.avg_m2i(self.grid, state.dpids * state.u) / pdel_int
        if self.config.vertical_mode == EULERIAN:
            Sdot, _ = self.diagnose_sdot(state, pdel_int)
        else:
            Sdot = np.zeros_like(state.w)
        adv_w = u_tilde * hops.grad_x(self.hgrid, state.w) + vops.sb81_adv_int(
            self.grid, Sdot, state.w, state.dpids
        )
        p_top, p_surf, dpds, mu = self._pressure_closure(state, p, pdel_int, adv_w)
        return p_top, p_surf, dpds, mu

    def _pressure_closure(self, state, p, pdel_int, adv_w):
        c = self.constants
        p_top = self.hybrid.p_top
        mu_surf = 1.0 + adv_w[:, -1] / c.g
        p_surf = p[:, -1] + 0.5 * self.grid.ds_mid[-1] * mu_surf * pdel_int[:, -1]
        dpds = vops.ddn_m2i(self.grid, p, MidBoundary(p_top, p_surf))
        mu = dpds / pdel_int
        return p_top, p_surf, dpds, mu

    def diagnose(self, state: PrognosticState) -> DiagnosticState:
        """Full diagnostic sweep in dependency order."""
        self.validate_state(state)
        self._check_flat_bottom(state)
        g = self.grid
        p, Pi, theta_v, dphids, rho = self.diagnose_eos(state)
        pi_int = np.empty((state.ncol, g.n + 1))
        pi_int[:, 0] = self.hybrid.p_top
        pi_int[:, 1:] = self.hybrid.p_top + np.cumsum(
            state.dpids * g.ds_mid, axis=1
        )
        pdel_int = vops.avg_m2i(g, state.dpids)
        u_tilde = vops.avg_m2i(g, state.dpids * state.u) / pdel_int
        if self.config.vertical_mode == EULERIAN:
            Sdot, sdot = self.diagnose_sdot(state, pdel_int)
        else:
            Sdot = np.zeros_like(state.w)
            sdot = np.zeros_like(state.w)
        adv_w = u_tilde * hops.grad_x(self.hgrid, state.w) + vops.sb81_adv_int(
            g, Sdot, state.w, state.dpids
        )
        p_top, p_surf, dpds, mu = self._pressure_closure(state, p, pdel_int, adv_w)
        if self.config.vertical_mode == EULERIAN:
            _, theta_v_tilde = self.diagnose_tildes(state, mu)
        else:
            theta_v_tilde = None
        return DiagnosticState(
            p=p, Pi=Pi, theta_v=theta_v, dphids=dphids, rho=rho,
            pi_int=pi_int, pdel_int=pdel_int, dpds=dpds, mu=mu,
            p_top=p_top, p_surf=p_surf, Sdot=Sdot, sdot=sdot,
            u_tilde=u_tilde, theta_v_tilde=theta_v_tilde, adv_w=adv_w,
        )

    # ------------------------------------------------------------------
    # tendencies

    def tendency_terms(self, state: PrognosticState, diag: DiagnosticState | None = None):
        """Every tendency contribution as a separate named array.

        The energy module assembles its budgets from these terms so the
        sums use exactly the stencils the model integrates.
        """
        if diag is None:
            diag = self.diagnose(state)
        g, h, c = self.grid, self.hgrid, self.constants
        lagrangian = self.config.vertical_mode == LAGRANGIAN
        terms: dict[str, np.ndarray] = {}

        zeta = hops.grad_x(h, state.v)
        zeta_f = zeta + c.f
        w2bar = vops.avg_i2m(g, state.w * state.w)
        ke_h = 0.5 * (state.u**2 + state.v**2 + w2bar)
        grad_w = hops.grad_x(h, state.w)

        terms["u_rot"] = zeta_f * state.v
        terms["u_keh"] = -hops.grad_x(h, ke_h)
        terms["u_wgw"] = vops.avg_i2m(g, state.w * grad_w)
        terms["u_pgrad_pi"] = -c.cp * diag.theta_v * hops.grad_x(h, diag.Pi)
        terms["u_pgrad_phi"] = -vops.avg_i2m(g, diag.mu * hops.grad_x(h, state.phi))
        terms["v_rot"] = -zeta_f * state.u

        terms["w_hadv"] = -diag.u_tilde * grad_w
        terms["w_buoy"] = c.g * (diag.mu - 1.0)

        phibc = MidBoundary(state.phi[:, 0], state.phi[:, -1])
        dphibar = vops.ddn_m2i(g, vops.avg_i2m(g, state.phi), phibc)
        terms["phi_hadv"] = -diag.u_tilde * hops.grad_x(h, state.phi)
        terms["phi_gw"] = c.g * state.w

        terms["Theta_hflux"] = -hops.div_x(h, state.Theta * state.u)
        terms["mass_hflux"] = -hops.div_x(h, state.dpids * state.u)

        if lagrangian:
            terms["u_vadv"] = np.zeros_like(state.u)
            terms["v_vadv"] = np.zeros_like(state.v)
            terms["w_vadv"] = np.zeros_like(state.w)
            terms["phi_vadv"] = np.zeros_like(state.w)
            terms["Theta_vflux"] = np.zeros_like(state.Theta)
            terms["mass_vflux"] = np.zeros_like(state.dpids)
        else:
            terms["u_vadv"] = -vops.sb81_adv_mid(g, diag.Sdot, state.u, state.dpids)
            terms["v_vadv"] = -vops.sb81_adv_mid(g, diag.Sdot, state.v, state.dpids)
            terms["w_vadv"] = -vops.sb81_adv_int(g, diag.Sdot, state.w, state.dpids)
            terms["phi_vadv"] = -diag.sdot * dphibar
            terms["Theta_vflux"] = -vops.ddn_i2m(g, diag.theta_v_tilde * diag.Sdot)
            terms["mass_vflux"] = -vops.ddn_i2m(g, diag.Sdot)

        if self.config.nu > 0.0:
            nu = self.config.nu
            terms["u_hv"] = hops.hyperviscosity(h, state.u, nu)
            terms["v_hv"] = hops.hyperviscosity(h, state.v, nu)
            terms["w_hv"] = hops.hyperviscosity(h, state.w, nu)
            terms["Theta_hv"] = hops.hyperviscosity(h, state.Theta, nu)
        return terms, diag

    _EXPLICIT = {
        "u": ("u_rot", "u_keh", "u_wgw", "u_vadv", "u_pgrad_pi", "u_pgrad_phi", "u_hv"),
        "v": ("v_rot", "v_vadv", "v_hv"),
        "w": ("w_hadv", "w_vadv", "w_hv"),
        "phi": ("phi_hadv", "phi_vadv"),
        "Theta": ("Theta_hflux", "Theta_vflux", "Theta_hv"),
        "dpids": ("mass_hflux", "mass_vflux"),
    }
    _IMPLICIT = {"w": ("w_buoy",), "phi": ("phi_gw",)}

    @staticmethod
    def _sum_terms(terms, names):
        parts = [terms[n] for n in names if n in terms]
        acc = parts[0].copy()
        for p in parts[1:]:
            acc += p
        return acc

    def _assemble(self, state, terms, table):
        out = zeros_like_state(state)
        for fname, tnames in table.items():
            setattr(out, fname, self._sum_terms(terms, tnames))
        # Flat-bottom surface constraints: w_surf and phi_surf are held fixed.
        out.w[:, -1] = 0.0
        out.phi[:, -1] = 0.0
        return out

    def hevi_split(self, state: PrognosticState, diag: DiagnosticState | None = None):
        """(explicit, implicit) tendency pair; their sum is the full tendency.

        The implicit part is the column-local acoustic pair
        {w: g(mu - 1), phi: g w}; everything else is explicit.
        """
        terms, diag = self.tendency_terms(state, diag)
        explicit = self._assemble(state, terms, self._EXPLICIT)
        implicit = self._assemble(state, terms, self._IMPLICIT)
        return explicit, implicit, diag

    def tendency(self, state: PrognosticState, diag: DiagnosticState | None = None):
        explicit, implicit, diag = self.hevi_split(state, diag)
        full = state_linear_comb(explicit, [(1.0, implicit)])
        return full, diag

    def implicit_tendency(self, state: PrognosticState) -> PrognosticState:
        """Implicit-part tendency evaluated at the given state."""
        _, implicit, _ = self.hevi_split(state)
        return implicit

    # ------------------------------------------------------------------
    # implicit solve (delegates to the compiled/NumPy kernels)

    def solve_implicit(self, state_star: PrognosticState, gamma: float):
        """Solve w - w* = gamma g (mu(phi) - 1), phi - phi* = gamma g w.

        Per column, with the surface (w, phi) held fixed and pressure
        re-diagnosed from phi through the closed-form EOS.  Returns the
        updated state and a per-column solve report.
        """
        from . import _kernels
        from .timeint import ColumnSolveReport

        c = self.constants
        w, phi, iters, resid, ok = _kernels.solve_columns(
            state_star.Theta, state_star.dpids,
            state_star.w, state_star.phi,
            self.grid.ds_mid, self.grid.ds_int,
            float(gamma), c.g, c.R, c.p0, c.cp / c.cv, self.hybrid.p_top,
        )
        out = PrognosticState(
            u=state_star.u.copy(), v=state_star.v.copy(), w=w, phi=phi,
            Theta=state_star.Theta.copy(), dpids=state_star.dpids.copy(),
            t=state_star.t,
        )
        report = ColumnSolveReport(iterations=iters, residual=resid, converged=ok)
        return out, report


# ----------------------------------------------------------------------
# snapshot I/O
#
# Format (stable, v1): an ASCII header terminated by a blank line,
#
#     nhslice-state v1
#     n <levels> ncol <columns>
#     grid <16-hex-digit checksum>
#     time <float repr>
#     fields u v w phi Theta dpids
#
# followed by the fields as raw little-endian float64 in C order, in the
# listed order, with shapes (ncol, n) for midpoint and (ncol, n+1) for
# interface fields.


def grid_checksum(model: SliceModel) -> str:
    """Digest of everything that fixes the discretization."""
    import hashlib

    h = hashlib.sha256()
    h.update(model.grid.s_int.tobytes())
    h.update(model.hybrid.A_int.tobytes())
    h.update(model.hybrid.B_int.tobytes())
    h.update(np.float64(model.hybrid.p0_ref).tobytes())
    h.update(np.int64(model.hgrid.ne).tobytes())
    h.update(np.float64(model.hgrid.length).tobytes())
    return h.hexdigest()[:16]


def save_state(path, model: SliceModel, state: PrognosticState) -> None:
    n, ncol = state.nlev, state.ncol
    with open(path, "wb") as f:
        header = (
            "nhslice-state v1\n"
            f"n {n} ncol {ncol}\n"
            f"grid {grid_checksum(model)}\n"
            f"time {float(state.t)!r}\n"
            f"fields {' '.join(PROGNOSTIC_FIELDS)}\n"
            "\n"
        )
        f.write(header.encode("ascii"))
        for name in PROGNOSTIC_FIELDS:
            arr = np.ascontiguousarray(getattr(state, name), dtype="<f8")
            f.write(arr.tobytes())


def load_state(path) -> tuple[PrognosticState, dict]:
    with open(path, "rb") as f:
        raw = f.read()
    head, _, body = raw.partition(b"\n\n")
    lines = head.decode("ascii").splitlines()
    if lines[0] != "nhslice-state v1":
        raise ValueError(f"not an nhslice state snapshot: {path}")
    meta = {}
    toks = lines[1].split()
    meta["n"], meta["ncol"] = int(toks[1]), int(toks[3])
    meta["grid"] = lines[2].split()[1]
    meta["time"] = float(lines[3].split()[1])
    names = lines[4].split()[1:]
    n, ncol = meta["n"], meta["ncol"]
    arrays = {}
    off = 0
    for name in names:
        nlev = n + 1 if name in ("w", "phi") else n
        count = ncol * nlev
        arrays[name] = np.frombuffer(
            body, dtype="<f8", count=count, offset=off
        ).reshape(ncol, nlev).copy()
        off += count * 8
    return PrognosticState(t=meta["time"], **arrays), meta
