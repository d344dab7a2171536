"""Configuration, test-case initializers, run loop, sweeps and the CLI.

Verbs:

* ``run``                one integration: optional spin-up, then an
                         adiabatic audit window (nu forced to zero); writes
                         budget.txt, the final state snapshot and a manifest.
* ``sweep``              timestep-convergence harness: one spin-up, then the
                         same audit window over a list of dt values; writes
                         orders.txt with fitted convergence orders.
* ``validate-operators`` runs the discrete operator identity suite and
                         prints one pass/fail line per identity.
* ``print-config``       echoes the effective configuration.

Configuration is plain-text ``key value`` lines (# comments); command-line
flags override file values.  The environment variable NHSLICE_OUTPUT_DIR
overrides the output directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields as dc_fields, replace

import numpy as np

from . import energy, hops, remap, timeint, vops
from .model import (
    EULERIAN,
    LAGRANGIAN,
    ModelConfig,
    PrognosticState,
    SliceModel,
    grid_checksum,
    save_state,
)
from .timeint import NewtonConvergenceError
from .vcoord import DRY_AIR, PhysicalConstants, build_hybrid, build_uniform_grid, pi_interfaces

__all__ = [
    "RunConfig",
    "build_model",
    "init_hydrostatic_rest",
    "init_gravity_wave",
    "run",
    "convergence_sweep",
    "validate_operators",
    "main",
]


@dataclass
class RunConfig:
    """Everything that determines a run; echoed in full to the manifest."""

    ne: int = 16                   # spectral elements (3*ne columns)
    nlev: int = 30                 # vertical levels
    length: float = 1.0e6          # domain length [m]
    p_top: float = 1.0e4           # model top pressure [Pa]
    p0_ref: float = 1.0e5          # reference/initial surface pressure [Pa]
    t_ref: float = 300.0           # isothermal base temperature [K]
    hybrid_exponent: float = 1.4   # hybrid A/B blending exponent
    mode: str = EULERIAN           # eulerian | lagrangian
    dt: float = 20.0               # timestep [s]
    run_time: float = 3600.0       # audit window length [s]
    diag_interval: int = 1         # steps between budget rows
    case: str = "gravity_wave"     # rest | gravity_wave
    tableau: str = "ssp2-332"      # tableau name, or @path to a tableau file
    nu: float = 0.0                # hyperviscosity during spin-up [m^4/s]
    remap_interval: int = 3        # Lagrangian remap cadence [steps]
    spinup_time: float = 0.0       # spin-up length [s]
    spinup_dt: float = 0.0         # spin-up step; 0 means use dt
    theta_amp: float = 10.0        # gravity-wave theta perturbation [K]
    pert_width: float = 0.0        # perturbation half width [m]; 0: length/12
    wave_amp: float = 0.0          # slow internal-wave w amplitude [m/s]
    wave_mode: int = 4             # horizontal mode number of that wave
    spinup_plan: str = ""          # staged spin-up: "dt x steps @ nu, ..."
    coriolis_f: float = 0.0        # f-plane Coriolis parameter [1/s]
    output_dir: str = "out"

    def __post_init__(self):
        if self.ne < 2 or self.nlev < 2:
            raise ValueError("need ne >= 2 and nlev >= 2")
        if self.dt <= 0.0 or self.run_time < 0.0:
            raise ValueError("dt must be positive and run_time nonnegative")
        if self.diag_interval < 1:
            raise ValueError("diag_interval must be >= 1")
        if self.case not in ("rest", "gravity_wave"):
            raise ValueError(f"unknown test case {self.case!r}")
        if self.mode not in (EULERIAN, LAGRANGIAN):
            raise ValueError(f"unknown vertical mode {self.mode!r}")
        if self.pert_width == 0.0:
            self.pert_width = self.length / 12.0
        if self.spinup_dt == 0.0:
            self.spinup_dt = self.dt


ACCEPTANCE_SWEEP_DTS = (960.0, 480.0, 240.0, 120.0, 60.0)


def acceptance_config() -> RunConfig:
    """The frozen audit configuration used by the acceptance suite.

    A planetary-scale slice at paper-like grid spacing (so the resolved
    spectrum is slow enough for the residual diagnostics), spun up in
    stages of increasing dt to strip fast content, then enriched with a
    weak slow internal wave before a final settling stage.
    """
    return RunConfig(
        ne=16, nlev=30, length=2.0e7, p_top=1.0e4,
        theta_amp=10.0, pert_width=2.5e6,
        wave_amp=4.0e-3, wave_mode=4,
        spinup_plan="240x50@2e17,480x150@4e17,60x300@0",
        tableau="ssp2-332", dt=120.0, run_time=7200.0,
        nu=2.0e17,
    )


def load_config(path) -> RunConfig:
    """Parse a plain-text key/value config file."""
    values = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                key, val = line.split(None, 1)
            except ValueError:
                raise ValueError(f"{path}:{ln}: expected 'key value'") from None
            values[key] = val
    return config_from_dict(values)


def config_from_dict(values: dict) -> RunConfig:
    kwargs = {}
    by_name = {f.name: f for f in dc_fields(RunConfig)}
    for key, val in values.items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        typ = by_name[key].type
        if typ in ("int", int):
            kwargs[key] = int(val)
        elif typ in ("float", float):
            kwargs[key] = float(val)
        else:
            kwargs[key] = str(val)
    return RunConfig(**kwargs)


def config_lines(config: RunConfig):
    for f in dc_fields(RunConfig):
        yield f"{f.name} {getattr(config, f.name)}"


def build_model(config: RunConfig, mode: str | None = None, nu: float | None = None) -> SliceModel:
    grid = build_uniform_grid(config.nlev, 0.0, 1.0)
    hybrid = build_hybrid(grid, config.p_top, config.p0_ref, config.hybrid_exponent)
    hgrid = hops.build_se_grid(config.ne, config.length)
    constants = PhysicalConstants(
        g=DRY_AIR.g, R=DRY_AIR.R, cp=DRY_AIR.cp, p0=DRY_AIR.p0, f=config.coriolis_f
    )
    mconf = ModelConfig(
        vertical_mode=config.mode if mode is None else mode,
        nu=config.nu if nu is None else nu,
        remap_interval=config.remap_interval,
        constants=constants,
    )
    return SliceModel(grid, hgrid, hybrid, mconf)


# ----------------------------------------------------------------------
# initial states


def init_hydrostatic_rest(model: SliceModel, config: RunConfig) -> PrognosticState:
    """Discretely balanced isothermal rest state (mu = 1, zero tendency).

    Midpoint pressure is pinned to the interface average of the hydrostatic
    pi column, which makes dp/ds equal avg_m2i(dpids) identically (the
    averaging/differentiation commuting identity), hence mu = 1 at every
    interface, including the boundaries through the surface closure.
    """
    g = model.grid
    c = model.constants
    ncol = model.hgrid.ncol
    ps = np.full(ncol, config.p0_ref)
    pi = pi_interfaces(model.hybrid, ps)
    dpids = vops.ddn_i2m(g, pi)
    p = vops.avg_i2m(g, pi)
    Pi = (p / c.p0) ** c.kappa
    theta_v = config.t_ref / Pi
    Theta = dpids * theta_v
    dphids = -c.R * Theta * Pi / p
    phi = np.empty((ncol, g.n + 1))
    phi[:, -1] = 0.0
    for k in range(g.n - 1, -1, -1):
        phi[:, k] = phi[:, k + 1] - g.ds_mid[k] * dphids[:, k]
    zeros_m = np.zeros((ncol, g.n))
    return PrognosticState(
        u=zeros_m.copy(), v=zeros_m.copy(),
        w=np.zeros((ncol, g.n + 1)), phi=phi,
        Theta=Theta, dpids=dpids, t=0.0,
    )


def init_gravity_wave(model: SliceModel, config: RunConfig) -> PrognosticState:
    """Hydrostatic rest plus a compact compensated theta perturbation.

    A horizontally localized bump with a half-sine vertical structure,
    with the per-level horizontal mean removed so the net Theta anomaly is
    zero by construction.
    """
    state = init_hydrostatic_rest(model, config)
    if config.theta_amp == 0.0:
        return state
    g, h = model.grid, model.hgrid
    xc = 0.5 * h.length
    horiz = 1.0 / (1.0 + ((h.x - xc) / config.pert_width) ** 2)
    znorm = vops.avg_i2m(g, state.phi) / state.phi[:, :1]
    vert = np.sin(np.pi * znorm)
    dtheta = config.theta_amp * horiz[:, None] * vert
    anomaly = state.dpids * dtheta
    mean = hops.hint(h, anomaly) / hops.hint(h, state.dpids)
    state.Theta = state.Theta + anomaly - state.dpids * mean
    return state


def inject_internal_wave(model: SliceModel, state: PrognosticState,
                         amplitude: float, mode: int) -> PrognosticState:
    """Superpose a slow internal gravity wave (vertical mode 1).

    w gets a half-sine column structure times cos(kx); u carries the
    anelastic polarization du/dx = -dw/dz so the wave projects mainly onto
    a single low-frequency mode.  The surface w stays zero.
    """
    g = model.grid
    k = 2.0 * np.pi * mode / model.hgrid.length
    x = model.hgrid.x
    zeta_int = state.phi / state.phi[:, :1]
    zeta_mid = vops.avg_i2m(g, state.phi) / state.phi[:, :1]
    phi_top = float(np.mean(state.phi[:, 0]))
    grav = model.constants.g
    state.w = state.w + amplitude * np.sin(np.pi * (1.0 - zeta_int)) * np.cos(k * x)[:, None]
    state.w[:, -1] = 0.0
    state.u = state.u - (np.pi * grav * amplitude / (phi_top * k)) \
        * np.cos(np.pi * (1.0 - zeta_mid)) * np.sin(k * x)[:, None]
    return state


def parse_spinup_plan(plan: str):
    """Parse "dt x steps @ nu" stage list, e.g. "240x50@2e17,60x300@0"."""
    stages = []
    for item in plan.split(","):
        item = item.strip()
        if not item:
            continue
        head, _, nu = item.partition("@")
        dt, _, steps = head.partition("x")
        stages.append((float(dt), int(steps), float(nu) if nu else 0.0))
    return stages


def make_initial_state(model: SliceModel, config: RunConfig) -> PrognosticState:
    if config.case == "rest":
        return init_hydrostatic_rest(model, config)
    return init_gravity_wave(model, config)


def prepare_audit_state(config: RunConfig, tableau=None) -> PrognosticState:
    """Initial state plus the staged spin-up and optional wave enrichment.

    Stages run in order with their own dt/step-count/hyperviscosity; the
    slow internal wave (wave_amp > 0) is injected before the final stage so
    that stage can settle the injection's off-mode projection.
    """
    if tableau is None:
        tableau = get_tableau(config)
    model = build_model(config)
    state = make_initial_state(model, config)
    stages = parse_spinup_plan(config.spinup_plan)
    if not stages and config.spinup_time > 0.0:
        nspin = int(math.ceil(config.spinup_time / config.spinup_dt))
        stages = [(config.spinup_dt, nspin, config.nu)]
    for i, (dt, steps, nu) in enumerate(stages):
        if config.wave_amp != 0.0 and i == len(stages) - 1:
            state = inject_internal_wave(model, state, config.wave_amp, config.wave_mode)
        state = integrate(build_model(config, nu=nu), state, dt, steps, tableau).state
    if config.wave_amp != 0.0 and not stages:
        state = inject_internal_wave(model, state, config.wave_amp, config.wave_mode)
    return state


# ----------------------------------------------------------------------
# run loop


def get_tableau(config: RunConfig) -> timeint.IMEXTableau:
    if config.tableau.startswith("@"):
        return timeint.load_tableau(config.tableau[1:])
    return timeint.get_tableau(config.tableau)


@dataclass
class RunResult:
    state: PrognosticState
    budgets: list
    mass_drift: float          # max per-step relative global mass change
    theta_drift: float         # max per-step relative global Theta change
    newton_max_iter: int
    steps: int


def _global_mass_theta(model, state):
    g, h = model.grid, model.hgrid
    mass = float(hops.hint(h, vops.vint_mid(g, state.dpids)))
    theta = float(hops.hint(h, vops.vint_mid(g, state.Theta)))
    return mass, theta


def integrate(
    model: SliceModel,
    state: PrognosticState,
    dt: float,
    nsteps: int,
    tableau: timeint.IMEXTableau,
    diag_interval: int = 0,
    on_budget=None,
) -> RunResult:
    """Advance nsteps, tracking conservation, solver effort and budgets.

    Budget rows carry first-order residuals over each diagnostic interval;
    the row for a diagnostic time is completed when the next one is reached
    (the final row keeps NaN residuals).
    """
    lagrangian = model.config.vertical_mode == LAGRANGIAN
    budgets = []
    prev_budget = None
    mass0, theta0 = _global_mass_theta(model, state)
    mass_prev, theta_prev = mass0, theta0
    mass_drift = 0.0
    theta_drift = 0.0
    newton_max = 0

    def take_budget(st):
        nonlocal prev_budget
        b = energy.diagnose_budget(model, st)
        if prev_budget is not None:
            dtb = b.t - prev_budget.t
            budgets[-1] = energy.compute_residuals(prev_budget, b, dtb)
        budgets.append(b)
        prev_budget = b
        if on_budget is not None:
            on_budget(budgets)

    if diag_interval:
        take_budget(state)
    for step in range(1, nsteps + 1):
        state, report = timeint.ark_step(state, dt, tableau, model)
        if report.iterations.size:
            newton_max = max(newton_max, report.max_iterations)
        if lagrangian and step % model.config.remap_interval == 0:
            state = remap.remap_state(model, state)
        if not np.isfinite(state.u).all() or not np.isfinite(state.w).all():
            raise RuntimeError(f"non-finite state at step {step}")
        mass, theta = _global_mass_theta(model, state)
        mass_drift = max(mass_drift, abs(mass - mass_prev) / abs(mass0))
        theta_drift = max(theta_drift, abs(theta - theta_prev) / abs(theta0))
        mass_prev, theta_prev = mass, theta
        if diag_interval and step % diag_interval == 0:
            take_budget(state)
    return RunResult(
        state=state, budgets=budgets, mass_drift=mass_drift,
        theta_drift=theta_drift, newton_max_iter=newton_max, steps=nsteps,
    )


def _write_manifest(path, config: RunConfig, model: SliceModel, tableau, notes):
    from . import __version__

    with open(path, "w") as f:
        f.write("# nhslice run manifest v1\n")
        f.write(f"version {__version__}\n")
        for line in config_lines(config):
            f.write(line + "\n")
        f.write(f"grid_checksum {grid_checksum(model)}\n")
        f.write(f"tableau_checksum {timeint._tableau_checksum(tableau)}\n")
        from ._kernels import BACKEND

        f.write(f"kernel_backend {BACKEND}\n")
        for note in notes:
            f.write(f"note {note}\n")


def run(config: RunConfig, write_outputs: bool = True) -> RunResult:
    """Spin up (optional), then an adiabatic audit window with nu = 0."""
    out_dir = os.environ.get("NHSLICE_OUTPUT_DIR", config.output_dir)
    tableau = get_tableau(config)
    notes = []

    state = prepare_audit_state(config, tableau)
    if config.spinup_plan or config.spinup_time > 0.0:
        notes.append(f"spinup plan {config.spinup_plan or config.spinup_time}")

    audit_model = build_model(config, nu=0.0)
    nsteps = int(round(config.run_time / config.dt))
    try:
        result = integrate(
            audit_model, state, config.dt, nsteps, tableau,
            diag_interval=config.diag_interval,
        )
    except (NewtonConvergenceError, RuntimeError) as exc:
        if write_outputs:
            os.makedirs(out_dir, exist_ok=True)
            notes.append(f"ABORTED: {exc}")
            _write_manifest(os.path.join(out_dir, "manifest.txt"),
                            config, audit_model, tableau, notes)
        raise

    if write_outputs:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "budget.txt"), "w") as f:
            f.write(energy.BUDGET_HEADER)
            for b in result.budgets:
                f.write(energy.format_budget_row(b))
        save_state(os.path.join(out_dir, "state_final.dat"), audit_model, result.state)
        notes.append(f"audit {nsteps} steps at dt={config.dt}")
        notes.append(f"mass_drift {result.mass_drift:.3e}")
        notes.append(f"theta_drift {result.theta_drift:.3e}")
        notes.append(f"newton_max_iter {result.newton_max_iter}")
        _write_manifest(os.path.join(out_dir, "manifest.txt"),
                        config, audit_model, tableau, notes)
    return result


# ----------------------------------------------------------------------
# convergence sweep


@dataclass
class SweepEntry:
    dt: float
    dE_rel: float
    max_RP: float
    max_RI: float
    max_RK: float
    stable: bool
    newton_max_iter: int = 0


@dataclass
class SweepResult:
    entries: list
    order_dE: float
    order_RP: float
    order_RI: float

    def stable_entries(self):
        return [e for e in self.entries if e.stable]


def _fit_order(dts, vals):
    dts = np.asarray(dts)
    vals = np.asarray(vals)
    keep = vals > 0.0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(dts[keep]), np.log(vals[keep]), 1)[0])


def convergence_sweep(config: RunConfig, dts) -> SweepResult:
    """Audit-window runs over a dt list from one spun-up snapshot."""
    tableau = get_tableau(config)
    state = prepare_audit_state(config, tableau)
    audit_model = build_model(config, nu=0.0)
    entries = []
    for dt in dts:
        nsteps = max(1, int(round(config.run_time / dt)))
        try:
            res = integrate(
                audit_model, state.copy(), dt, nsteps, tableau, diag_interval=1
            )
            b0, b1 = res.budgets[0], res.budgets[-1]
            dE = abs(b1.E - b0.E) / abs(b0.E)
            rp = max(abs(b.R_P) for b in res.budgets[:-1])
            ri = max(abs(b.R_I) for b in res.budgets[:-1])
            rk = max(abs(b.R_K) for b in res.budgets[:-1])
            stable = np.isfinite(dE) and dE < 1.0e-2
            entries.append(SweepEntry(dt, dE, rp, ri, rk, stable,
                                      res.newton_max_iter))
        except Exception:
            # unstable member (solver failure, nonphysical state, overflow)
            entries.append(SweepEntry(dt, float("nan"), float("nan"),
                                      float("nan"), float("nan"), False))
    good = [e for e in entries if e.stable]
    result = SweepResult(
        entries=entries,
        order_dE=_fit_order([e.dt for e in good], [e.dE_rel for e in good]),
        order_RP=_fit_order([e.dt for e in good], [e.max_RP for e in good]),
        order_RI=_fit_order([e.dt for e in good], [e.max_RI for e in good]),
    )
    return result


def write_sweep(path, config: RunConfig, sweep: SweepResult) -> None:
    with open(path, "w") as f:
        f.write("# nhslice sweep v1\n")
        f.write("# dt |dE/E| max|R_P| max|R_I| max|R_K| stable newton_max_iter\n")
        for e in sweep.entries:
            f.write(
                f"{float(e.dt)!r} {e.dE_rel:.17e} {e.max_RP:.17e} {e.max_RI:.17e} "
                f"{e.max_RK:.17e} {int(e.stable)} {e.newton_max_iter}\n"
            )
        f.write(f"order_dE {sweep.order_dE:.6f}\n")
        f.write(f"order_RP {sweep.order_RP:.6f}\n")
        f.write(f"order_RI {sweep.order_RI:.6f}\n")


# ----------------------------------------------------------------------
# operator validation (shared by the CLI verb and the acceptance tests)


def random_level_grid(rng, n: int):
    """Nonuniform grid with successive thickness ratios within [0.2, 5]."""
    from .vcoord import grid_from_interfaces

    steps = np.exp(np.cumsum(rng.uniform(-1.6, 1.6, size=n)))
    s = np.concatenate([[0.0], np.cumsum(steps)])
    return grid_from_interfaces(s / s[-1])


def _rel(err, scale):
    return abs(err) / max(scale, 1.0e-30)


def _vertical_identity_sample(rng):
    from .vops import MidBoundary

    g = random_level_grid(rng, int(rng.integers(2, 129)))
    phi = rng.standard_normal(g.n + 1)
    psi = rng.standard_normal(g.n + 1)
    p = rng.standard_normal(g.n)
    q = rng.standard_normal(g.n)
    bc = MidBoundary(rng.standard_normal(), rng.standard_normal())
    Sdot = np.concatenate([[0.0], rng.standard_normal(g.n - 1), [0.0]])
    dpids = rng.uniform(0.5, 2.0, g.n)
    errs = {}

    lhs = vops.avg_m2i(g, vops.ddn_i2m(g, phi))
    rhs = vops.ddn_m2i(g, vops.avg_i2m(g, phi), MidBoundary(phi[0], phi[-1]))
    errs["commuting avg/ddn"] = _rel(np.max(np.abs(lhs - rhs)), np.max(np.abs(lhs)) + 1.0)

    lhs = vops.vint_int(g, vops.avg_m2i(g, p) * phi)
    rhs = vops.vint_mid(g, p * vops.avg_i2m(g, phi))
    errs["averaging by parts"] = _rel(lhs - rhs, abs(lhs) + abs(rhs) + 1e-3)

    lhs = vops.vint_int(g, phi * vops.ddn_m2i(g, p, bc)) \
        + vops.vint_mid(g, vops.ddn_i2m(g, phi) * p)
    rhs = phi[-1] * np.asarray(bc.surf) - phi[0] * np.asarray(bc.top)
    scale = vops.vint_int(g, np.abs(phi * vops.ddn_m2i(g, p, bc)))
    errs["integration by parts"] = _rel(lhs - rhs, scale + 1e-3)

    lhs = vops.ddn_i2m(g, phi * psi)
    rhs = vops.avg_i2m(g, psi) * vops.ddn_i2m(g, phi) \
        + vops.avg_i2m(g, phi) * vops.ddn_i2m(g, psi)
    errs["interface product rule"] = _rel(
        np.max(np.abs(lhs - rhs)), np.max(np.abs(lhs)) + 1.0)

    bcpq = MidBoundary(p[0] * q[0], p[-1] * q[-1])
    lhs = vops.ddn_m2i(g, p * q, bcpq)[1:-1]
    rhs = (
        vops.avg_m2i(g, q / g.ds_mid) * g.ds_int * vops.ddn_m2i(g, p, MidBoundary(p[0], p[-1]))
        + vops.avg_m2i(g, p / g.ds_mid) * g.ds_int * vops.ddn_m2i(g, q, MidBoundary(q[0], q[-1]))
    )[1:-1]
    errs["midpoint product rule"] = _rel(
        np.max(np.abs(lhs - rhs)), np.max(np.abs(lhs)) + 1.0)

    a = vops.sb81_adv_mid(g, Sdot, p, dpids)
    b = vops.sb81_adv_mid_flux(g, Sdot, p, dpids)
    errs["SB81 midpoint forms"] = _rel(np.max(np.abs(a - b)), np.max(np.abs(a)) + 1.0)

    a = vops.sb81_adv_int(g, Sdot, phi, dpids)
    b = vops.sb81_adv_int_direct(g, Sdot, phi, dpids)
    c = vops._sb81_adv_int_avgavg(g, Sdot, phi, dpids)
    err = max(np.max(np.abs(a - b)), np.max(np.abs((a - c)[1:-1])))
    errs["SB81 interface forms"] = _rel(err, np.max(np.abs(a)) + 1.0)
    return errs


def _horizontal_identity_sample(rng):
    h = hops.build_se_grid(int(rng.integers(4, 65)), float(rng.uniform(1.0, 1e6)))
    p = rng.standard_normal(h.ncol)
    u = rng.standard_normal(h.ncol)
    errs = {}
    lhs = hops.hint(h, p * hops.grad_x(h, u)) + hops.hint(h, u * hops.grad_x(h, p))
    scale = hops.hint(h, np.abs(p * hops.grad_x(h, u)))
    errs["horizontal IBP"] = _rel(lhs, scale + 1e-3)
    errs["gradient of constant"] = _rel(
        np.max(np.abs(hops.grad_x(h, np.full(h.ncol, 3.7)))),
        np.max(np.abs(hops.grad_x(h, u))) + 1.0)
    return errs


def validate_operators(samples: int = 1000, seed: int = 2024, tol: float = 1.0e-13):
    """Run the full identity suite; returns {identity: max relative error}."""
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(samples):
        for errs in (_vertical_identity_sample(rng), _horizontal_identity_sample(rng)):
            for k, v in errs.items():
                worst[k] = max(worst.get(k, 0.0), v)
    return worst, tol


# ----------------------------------------------------------------------
# command line


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="plain-text key/value config file")
    for f in dc_fields(RunConfig):
        typ = {"int": int, "float": float, "str": str}[f.type if isinstance(f.type, str) else f.type.__name__]
        p.add_argument(f"--{f.name.replace('_', '-')}", type=typ, dest=f.name)


def _effective_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in dc_fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    if overrides:
        config = replace(config, **overrides)
        config.__post_init__()
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nhslice",
        description="Energy-consistent nonhydrostatic slice dynamical core",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    _add_config_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="timestep convergence sweep")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--dts", required=True,
                         help="comma-separated dt list, e.g. 40,20,10,5,2.5")

    p_val = sub.add_parser("validate-operators",
                           help="run the discrete operator identity suite")
    p_val.add_argument("--samples", type=int, default=1000)
    p_val.add_argument("--seed", type=int, default=2024)

    p_cfg = sub.add_parser("print-config", help="echo the effective config")
    _add_config_flags(p_cfg)

    args = parser.parse_args(argv)

    if args.verb == "print-config":
        for line in config_lines(_effective_config(args)):
            print(line)
        return 0

    if args.verb == "validate-operators":
        worst, tol = validate_operators(args.samples, args.seed)
        bad = 0
        for name in sorted(worst):
            ok = worst[name] <= tol
            bad += not ok
            print(f"{'PASS' if ok else 'FAIL'} {name}: max rel err {worst[name]:.3e} "
                  f"(tol {tol:.0e}, {args.samples} samples)")
        return 1 if bad else 0

    config = _effective_config(args)
    if args.verb == "run":
        result = run(config)
        b0, b1 = result.budgets[0], result.budgets[-1]
        print(f"steps {result.steps}  E0 {b0.E:.10e}  E1 {b1.E:.10e}  "
              f"|dE/E| {abs(b1.E - b0.E) / abs(b0.E):.3e}")
        print(f"mass drift {result.mass_drift:.3e}  theta drift {result.theta_drift:.3e}  "
              f"newton max iters {result.newton_max_iter}")
        return 0

    if args.verb == "sweep":
        dts = [float(x) for x in args.dts.split(",")]
        sweep = convergence_sweep(config, dts)
        out_dir = os.environ.get("NHSLICE_OUTPUT_DIR", config.output_dir)
        os.makedirs(out_dir, exist_ok=True)
        write_sweep(os.path.join(out_dir, "orders.txt"), config, sweep)
        for e in sweep.entries:
            print(f"dt {e.dt:g}: |dE/E| {e.dE_rel:.3e}  R_P {e.max_RP:.3e}  "
                  f"R_I {e.max_RI:.3e}  R_K {e.max_RK:.3e}  stable {e.stable}")
        print(f"orders: dE {sweep.order_dE:.3f}  R_P {sweep.order_RP:.3f}  "
              f"R_I {sweep.order_RI:.3f}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
