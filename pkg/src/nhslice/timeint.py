"""HEVI additive IMEX Runge-Kutta time integration.

A single shared-weight additive tableau advances the explicit (horizontal
plus vertical-advection) and implicit (vertical-acoustic) parts together:

    Y_k = y_n + dt sum_{j<k} aE_kj F_E(Y_j) + dt sum_{j<=k} aI_kj F_I(Y_j)
    y_{n+1} = y_n + dt sum_k b_k (F_E(Y_k) + F_I(Y_k))

with the diagonally-implicit stage equations solved by the per-column
Newton kernel.  Ships an IMEX forward-backward Euler, a 2nd-order
ARS-type pair with gamma = 1 - 1/sqrt(2), an SSP RK3 baseline, and a
plain-text tableau loader.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .model import PrognosticState, SliceModel, state_linear_comb

__all__ = [
    "IMEXTableau",
    "ColumnSolveReport",
    "NewtonConvergenceError",
    "validate_tableau",
    "get_tableau",
    "load_tableau",
    "save_tableau",
    "ark_step",
    "explicit_rk_step",
    "newton_column_solve",
]

GAMMA_ARS = 1.0 - 1.0 / np.sqrt(2.0)


class NewtonConvergenceError(RuntimeError):
    """Raised when the implicit column solve fails to converge."""

    def __init__(self, message, column=None, residual=None):
        super().__init__(message)
        self.column = column
        self.residual = residual


@dataclass(frozen=True)
class IMEXTableau:
    """Additive Runge-Kutta coefficient pair with shared weights b."""

    name: str
    a_exp: np.ndarray
    a_imp: np.ndarray
    b: np.ndarray
    c_exp: np.ndarray
    c_imp: np.ndarray

    @property
    def stages(self) -> int:
        return self.b.size

    def __post_init__(self):
        s = self.b.size
        for nm, arr, shape in (
            ("a_exp", self.a_exp, (s, s)),
            ("a_imp", self.a_imp, (s, s)),
            ("c_exp", self.c_exp, (s,)),
            ("c_imp", self.c_imp, (s,)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{nm} has shape {arr.shape}, expected {shape}")
        if np.any(np.triu(self.a_exp) != 0.0):
            raise ValueError("a_exp must be strictly lower triangular")
        if np.any(np.triu(self.a_imp, 1) != 0.0):
            raise ValueError("a_imp must be lower triangular")


def _tableau(name, a_exp, a_imp, b, c_exp=None, c_imp=None) -> IMEXTableau:
    a_exp = np.asarray(a_exp, dtype=np.float64)
    a_imp = np.asarray(a_imp, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c_exp = a_exp.sum(axis=1) if c_exp is None else np.asarray(c_exp, dtype=np.float64)
    c_imp = a_imp.sum(axis=1) if c_imp is None else np.asarray(c_imp, dtype=np.float64)
    return IMEXTableau(name=name, a_exp=a_exp, a_imp=a_imp, b=b, c_exp=c_exp, c_imp=c_imp)


def _builtin_tableaux():
    out = {}
    # 1-stage IMEX Euler: implicit Euler stage, both parts combined with b=[1].
    out["imex-euler"] = _tableau("imex-euler", [[0.0]], [[1.0]], [1.0])
    # ARS-type 2nd-order pairs, gamma = 1 - 1/sqrt(2); first stage explicit.
    # ars232 (delta = -2 sqrt(2)/3) is the recommended HEVI scheme: the
    # ars222 variant (delta = 1 - 1/(2 gamma)) has a weak instability pocket
    # for coupled acoustic modes near omega*dt = 1.
    gam = GAMMA_ARS
    for name, delta in (
        ("ars232", -2.0 * np.sqrt(2.0) / 3.0),
        ("ars222", 1.0 - 1.0 / (2.0 * gam)),
    ):
        out[name] = _tableau(
            name,
            [[0.0, 0.0, 0.0], [gam, 0.0, 0.0], [delta, 1.0 - delta, 0.0]],
            [[0.0, 0.0, 0.0], [0.0, gam, 0.0], [0.0, 1.0 - gam, gam]],
            [0.0, 1.0 - gam, gam],
        )
    # Pareschi-Russo SSP2(3,3,2): stronger damping of marginally implicit
    # modes than the ARS pairs (every implicit stage diagonal is nonzero).
    out["ssp2-332"] = _tableau(
        "ssp2-332",
        [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.5, 0.5, 0.0]],
        [[0.25, 0.0, 0.0], [0.0, 0.25, 0.0],
         [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    )
    # Explicit SSP RK3 (zero implicit part), for baselines and cross checks.
    out["ssp3"] = _tableau(
        "ssp3",
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]],
        np.zeros((3, 3)),
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    )
    return out


_TABLEAUX = _builtin_tableaux()


def get_tableau(name: str) -> IMEXTableau:
    try:
        return _TABLEAUX[name]
    except KeyError:
        raise KeyError(
            f"unknown tableau {name!r}; available: {sorted(_TABLEAUX)}"
        ) from None


def validate_tableau(t: IMEXTableau, tol: float = 1.0e-12):
    """Check additive order conditions up to order 3.

    Returns (order, report) where report maps condition labels to their
    residuals.  With shared weights the coupling conditions reduce to the
    same sums over each tableau's abscissae.
    """
    b, s = t.b, t.stages
    cs = {"E": t.c_exp, "I": t.c_imp}
    As = {"E": t.a_exp, "I": t.a_imp}
    report = {}
    report["order1: sum(b)"] = float(b.sum() - 1.0)
    for nu, c in cs.items():
        report[f"order2: b.c^{nu}"] = float(b @ c - 0.5)
    for n1, c1 in cs.items():
        for n2, c2 in cs.items():
            if n1 <= n2:
                report[f"order3: b.(c^{n1} c^{n2})"] = float(b @ (c1 * c2) - 1.0 / 3.0)
    for n1, A in As.items():
        for n2, c in cs.items():
            report[f"order3: b.A^{n1}.c^{n2}"] = float(b @ (A @ c) - 1.0 / 6.0)
    order = 0
    if abs(report["order1: sum(b)"]) <= tol:
        order = 1
    if order == 1 and all(abs(v) <= tol for k, v in report.items() if k.startswith("order2")):
        order = 2
    if order == 2 and all(abs(v) <= tol for k, v in report.items() if k.startswith("order3")):
        order = 3
    return order, report


# ----------------------------------------------------------------------
# tableau file format: plain text with a content checksum.
#
#   nhslice-tableau v1
#   name <name>
#   stages <s>
#   A_exp   (s rows of s numbers)
#   A_imp   (s rows)
#   b       (1 row)
#   c_exp   (1 row)
#   c_imp   (1 row)
#   checksum <sha256 of the canonical %.17e rendering of all numbers>


def _tableau_checksum(t: IMEXTableau) -> str:
    nums = np.concatenate(
        [t.a_exp.ravel(), t.a_imp.ravel(), t.b, t.c_exp, t.c_imp]
    )
    text = " ".join(format(x, ".17e") for x in nums)
    return hashlib.sha256(text.encode()).hexdigest()


def save_tableau(path, t: IMEXTableau) -> None:
    def row(vals):
        return " ".join(repr(float(v)) for v in vals)

    with open(path, "w") as f:
        f.write("nhslice-tableau v1\n")
        f.write(f"name {t.name}\n")
        f.write(f"stages {t.stages}\n")
        f.write("A_exp\n")
        for r in t.a_exp:
            f.write(row(r) + "\n")
        f.write("A_imp\n")
        for r in t.a_imp:
            f.write(row(r) + "\n")
        f.write("b\n" + row(t.b) + "\n")
        f.write("c_exp\n" + row(t.c_exp) + "\n")
        f.write("c_imp\n" + row(t.c_imp) + "\n")
        f.write(f"checksum {_tableau_checksum(t)}\n")


def load_tableau(path) -> IMEXTableau:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != "nhslice-tableau v1":
        raise ValueError(f"not an nhslice tableau file: {path}")
    name = lines[1].split(None, 1)[1]
    s = int(lines[2].split()[1])
    idx = 3

    def block(label, rows):
        nonlocal idx
        if lines[idx] != label:
            raise ValueError(f"expected {label!r} at line {idx + 1} of {path}")
        idx += 1
        vals = []
        for _ in range(rows):
            vals.append([float(x) for x in lines[idx].split()])
            idx += 1
        return np.array(vals)

    a_exp = block("A_exp", s)
    a_imp = block("A_imp", s)
    b = block("b", 1)[0]
    c_exp = block("c_exp", 1)[0]
    c_imp = block("c_imp", 1)[0]
    t = _tableau(name, a_exp, a_imp, b, c_exp, c_imp)
    if not lines[idx].startswith("checksum"):
        raise ValueError(f"missing checksum line in {path}")
    stated = lines[idx].split()[1]
    actual = _tableau_checksum(t)
    if stated != actual:
        raise ValueError(f"tableau checksum mismatch in {path}: {stated} != {actual}")
    return t


# ----------------------------------------------------------------------
# stepping


@dataclass
class ColumnSolveReport:
    """Per-column Newton solve outcome for one implicit stage or step."""

    iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray

    @property
    def max_iterations(self) -> int:
        return int(self.iterations.max()) if self.iterations.size else 0

    @property
    def all_converged(self) -> bool:
        return bool(self.converged.all())

    def worst_column(self) -> int:
        return int(np.argmax(self.residual))

    @staticmethod
    def merge(reports):
        reports = list(reports)
        if not reports:
            return ColumnSolveReport(
                iterations=np.zeros(0, dtype=np.int64),
                residual=np.zeros(0),
                converged=np.ones(0, dtype=bool),
            )
        return ColumnSolveReport(
            iterations=np.max([r.iterations for r in reports], axis=0),
            residual=np.max([r.residual for r in reports], axis=0),
            converged=np.logical_and.reduce([r.converged for r in reports]),
        )


def newton_column_solve(model: SliceModel, state_star: PrognosticState, gamma: float):
    """Implicit stage solve; raises NewtonConvergenceError on failure."""
    out, report = model.solve_implicit(state_star, gamma)
    if not report.all_converged:
        j = report.worst_column()
        raise NewtonConvergenceError(
            f"implicit column solve failed to converge (worst column {j}, "
            f"residual {report.residual[j]:.3e})",
            column=j,
            residual=float(report.residual[j]),
        )
    return out, report


def ark_step(state: PrognosticState, dt: float, tableau: IMEXTableau, model: SliceModel):
    """One additive IMEX Runge-Kutta step.

    Stage diagnostics are recomputed from each stage state (no lagging);
    the implicit tendency is re-evaluated at the solved stage.  Returns the
    new state and the merged column-solve report.
    """
    s = tableau.stages
    f_exp: list[PrognosticState] = []
    f_imp: list[PrognosticState] = []
    reports = []
    for k in range(s):
        terms = []
        for j in range(k):
            if tableau.a_exp[k, j] != 0.0:
                terms.append((dt * tableau.a_exp[k, j], f_exp[j]))
            if tableau.a_imp[k, j] != 0.0:
                terms.append((dt * tableau.a_imp[k, j], f_imp[j]))
        rhs = state_linear_comb(state, terms)
        akk = tableau.a_imp[k, k]
        if akk != 0.0:
            yk, report = newton_column_solve(model, rhs, dt * akk)
            reports.append(report)
        else:
            yk = rhs
        ex, im, _ = model.hevi_split(yk)
        f_exp.append(ex)
        f_imp.append(im)
    terms = []
    for k in range(s):
        if tableau.b[k] != 0.0:
            terms.append((dt * tableau.b[k], f_exp[k]))
            terms.append((dt * tableau.b[k], f_imp[k]))
    new = state_linear_comb(state, terms, t=state.t + dt)
    return new, ColumnSolveReport.merge(reports)


def explicit_rk_step(state: PrognosticState, dt: float, model: SliceModel):
    """Classical 3-stage strong-stability-preserving RK on the full tendency."""
    f0, _ = model.tendency(state)
    y1 = state_linear_comb(state, [(dt, f0)])
    f1, _ = model.tendency(y1)
    y2 = state_linear_comb(state, [(0.25 * dt, f0), (0.25 * dt, f1)])
    f2, _ = model.tendency(y2)
    return state_linear_comb(
        state,
        [(dt / 6.0, f0), (dt / 6.0, f1), (2.0 * dt / 3.0, f2)],
        t=state.t + dt,
    )
