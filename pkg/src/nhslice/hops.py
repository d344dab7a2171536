"""1D periodic mimetic horizontal discretization.

Collocated spectral elements of degree 3 on Gauss-Lobatto-Legendre nodes
with a diagonal mass matrix.  Shared element-boundary nodes are assembled
by direct stiffness summation (quadrature-weighted averaging), which gives
the one property the energy proofs consume: an exact discrete
integration-by-parts identity on the periodic domain,

    hint(p * grad_x(u)) + hint(u * grad_x(p)) = 0.

Fields live on the ncol = 3*ne unique column nodes; operators act on the
first axis so a field may carry extra trailing (level) axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SEGrid1D", "build_se_grid", "grad_x", "div_x", "hint", "hyperviscosity"]

# Degree-3 GLL reference nodes and weights on [-1, 1].
_GLL_NODES = np.array([-1.0, -np.sqrt(0.2), np.sqrt(0.2), 1.0])
_GLL_WEIGHTS = np.array([1.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0, 1.0 / 6.0])


def lagrange_diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """Nodal differentiation matrix of the Lagrange basis on the given nodes."""
    nodes = np.asarray(nodes, dtype=np.float64)
    m = nodes.size
    bary = np.ones(m)
    for j in range(m):
        for k in range(m):
            if k != j:
                bary[j] /= nodes[j] - nodes[k]
    D = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                D[i, j] = (bary[j] / bary[i]) / (nodes[i] - nodes[j])
    # Diagonal from the constant-annihilation property (exact row sums zero).
    for i in range(m):
        D[i, i] = -np.sum(D[i, np.arange(m) != i])
    return D


@dataclass(frozen=True)
class SEGrid1D:
    """Periodic spectral-element line grid.

    Attributes
    ----------
    ne : element count.
    degree : polynomial degree (fixed 3).
    length : domain length [m].
    ncol : number of unique column nodes (3*ne).
    x : physical node coordinates, shape (ncol,).
    elem : global node indices per element, shape (ne, degree+1).
    weights : assembled quadrature weights per node [m], shape (ncol,).
    deriv : physical differentiation matrix per element [1/m], shape (4, 4).
    wq : per-element quadrature weights [m], shape (4,).
    """

    ne: int
    degree: int
    length: float
    ncol: int
    x: np.ndarray
    elem: np.ndarray
    weights: np.ndarray
    deriv: np.ndarray
    wq: np.ndarray


def build_se_grid(ne: int, length: float) -> SEGrid1D:
    if ne < 2:
        raise ValueError(f"need at least 2 elements, got {ne}")
    if length <= 0.0:
        raise ValueError(f"domain length must be positive, got {length}")
    degree = 3
    ncol = degree * ne
    h = length / ne
    jac = 0.5 * h
    elem = np.empty((ne, degree + 1), dtype=np.intp)
    for e in range(ne):
        elem[e] = [(degree * e + k) % ncol for k in range(degree + 1)]
    x = np.empty(ncol)
    for e in range(ne):
        xe = e * h + jac * (_GLL_NODES + 1.0)
        x[elem[e][:degree]] = xe[:degree]
    wq = _GLL_WEIGHTS * jac
    weights = np.zeros(ncol)
    np.add.at(weights, elem.ravel(), np.tile(wq, ne))
    deriv = lagrange_diff_matrix(_GLL_NODES) / jac
    for a in (x, elem, weights, deriv, wq):
        a.setflags(write=False)
    return SEGrid1D(
        ne=ne,
        degree=degree,
        length=float(length),
        ncol=ncol,
        x=x,
        elem=elem,
        weights=weights,
        deriv=deriv,
        wq=wq,
    )


def _check_field(grid: SEGrid1D, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != grid.ncol:
        raise ValueError(
            f"field has {f.shape[0]} columns, grid has ncol={grid.ncol}"
        )
    return f


def _assemble(grid: SEGrid1D, ge: np.ndarray) -> np.ndarray:
    """Quadrature-weighted average of per-element nodal values (DSS)."""
    out = np.zeros((grid.ncol,) + ge.shape[2:])
    wq = grid.wq.reshape((1, 4) + (1,) * (ge.ndim - 2))
    np.add.at(out, grid.elem.ravel(), (ge * wq).reshape((-1,) + ge.shape[2:]))
    return out / grid.weights.reshape((-1,) + (1,) * (ge.ndim - 2))


def grad_x(grid: SEGrid1D, f) -> np.ndarray:
    """Assembled derivative of a continuous nodal field."""
    f = _check_field(grid, f)
    fe = f[grid.elem]                       # (ne, 4, ...)
    ge = np.einsum("ab,eb...->ea...", grid.deriv, fe)
    return _assemble(grid, ge)


def div_x(grid: SEGrid1D, F) -> np.ndarray:
    """Divergence of a flux field; identical to grad_x in 1D but kept
    distinct for budget bookkeeping."""
    return grad_x(grid, F)


def hint(grid: SEGrid1D, f) -> np.ndarray:
    """Global quadrature sum_j weight_j f_j (fixed-order reduction)."""
    f = _check_field(grid, f)
    return np.tensordot(grid.weights, f, axes=(0, 0))


def _weak_laplacian(grid: SEGrid1D, f: np.ndarray) -> np.ndarray:
    fe = f[grid.elem]
    dfe = np.einsum("ab,eb...->ea...", grid.deriv, fe)
    # Stiffness application D^T diag(wq) D, assembled, divided by the mass.
    kfe = np.einsum("ba,eb...->ea...", grid.deriv, dfe * grid.wq.reshape((1, 4) + (1,) * (fe.ndim - 2)))
    out = np.zeros((grid.ncol,) + fe.shape[2:])
    np.add.at(out, grid.elem.ravel(), kfe.reshape((-1,) + fe.shape[2:]))
    return -out / grid.weights.reshape((-1,) + (1,) * (fe.ndim - 2))


def hyperviscosity(grid: SEGrid1D, f, nu: float) -> np.ndarray:
    """Tendency -nu * del^4 f via two assembled weak Laplacians."""
    if nu < 0.0:
        raise ValueError(f"hyperviscosity coefficient must be >= 0, got {nu}")
    f = _check_field(grid, f)
    if nu == 0.0:
        return np.zeros_like(f)
    return -nu * _weak_laplacian(grid, _weak_laplacian(grid, f))
