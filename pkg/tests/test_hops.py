import numpy as np
import pytest

from nhslice import hops
from nhslice.hops import build_se_grid, div_x, grad_x, hint, hyperviscosity


def test_grid_invariants():
    h = build_se_grid(8, 4.0e5)
    assert h.ncol == 24
    assert np.sum(h.weights) == pytest.approx(h.length, rel=1e-14)
    # differentiation matrix annihilates constants
    assert np.max(np.abs(h.deriv @ np.ones(4))) < 1e-12 / h.length * 4


def test_quadrature_polynomial_exactness(rng):
    # The per-element GLL rule (4 nodes) is exact through degree 5.
    nodes = hops._GLL_NODES
    wq = hops._GLL_WEIGHTS
    for _ in range(20):
        coeffs = rng.standard_normal(6)
        vals = np.polyval(coeffs, nodes)
        exact = sum(c / (len(coeffs) - i) * (1.0 - (-1.0) ** (len(coeffs) - i))
                    for i, c in enumerate(coeffs))
        assert float(wq @ vals) == pytest.approx(exact, rel=1e-13, abs=1e-13)


def test_grad_constant_is_zero():
    h = build_se_grid(6, 1.0e6)
    g = grad_x(h, np.full(h.ncol, 7.3))
    assert np.max(np.abs(g)) < 1e-16


def test_grad_polynomial_exactness_periodic():
    # A globally smooth periodic function that is polynomial per element is
    # not available; instead check a per-element cubic against the exact
    # derivative at interior nodes (assembly only touches shared endpoints).
    h = build_se_grid(4, 8.0)
    f = np.sin(2 * np.pi * h.x / h.length)
    g = grad_x(h, f)
    exact = 2 * np.pi / h.length * np.cos(2 * np.pi * h.x / h.length)
    # resolved wave on a degree-3 grid: small but nonzero error
    assert np.max(np.abs(g - exact)) < 2e-2 * np.max(np.abs(exact))


def test_grad_global_sum_zero(rng):
    h = build_se_grid(9, 3.0e5)
    for _ in range(20):
        f = rng.standard_normal(h.ncol)
        total = hint(h, grad_x(h, f))
        assert abs(total) <= 1e-13 * hint(h, np.abs(grad_x(h, f)) + 1e-9)


def test_discrete_ibp_periodic(rng):
    for _ in range(200):
        ne = int(rng.integers(4, 65))
        h = build_se_grid(ne, float(rng.uniform(1.0, 1e6)))
        p = rng.standard_normal(h.ncol)
        u = rng.standard_normal(h.ncol)
        lhs = hint(h, p * grad_x(h, u)) + hint(h, u * grad_x(h, p))
        scale = hint(h, np.abs(p * grad_x(h, u))) + 1e-9
        assert abs(lhs) / scale <= 1e-13


def test_weak_form_product_rule(rng):
    h = build_se_grid(12, 2.0e5)
    p = rng.standard_normal(h.ncol)
    u = rng.standard_normal(h.ncol)
    total = hint(h, p * div_x(h, u) + u * grad_x(h, p))
    scale = hint(h, np.abs(p * div_x(h, u))) + 1e-9
    assert abs(total) / scale <= 1e-13


def test_hint_linear_positive(rng):
    h = build_se_grid(5, 10.0)
    f = rng.uniform(0.1, 2.0, h.ncol)
    g = rng.standard_normal(h.ncol)
    assert hint(h, f) > 0.0
    assert hint(h, 2.0 * f + g) == pytest.approx(2.0 * hint(h, f) + hint(h, g), rel=1e-13)


def test_hint_odd_symmetry():
    h = build_se_grid(8, 2.0)
    f = np.sin(2 * np.pi * h.x / h.length)
    assert abs(hint(h, f)) < 1e-13 * h.length


def test_divergence_spectral_accuracy():
    # refinement sweep for sin(2 pi x / L): error decays at high order
    L = 1.0
    errs = []
    for ne in (4, 8, 16):
        h = build_se_grid(ne, L)
        f = np.sin(2 * np.pi * h.x / L)
        g = div_x(h, f)
        exact = 2 * np.pi / L * np.cos(2 * np.pi * h.x / L)
        errs.append(np.max(np.abs(g - exact)))
    # nodal derivative of the degree-3 interpolant: ~3rd-order pointwise decay
    assert errs[1] < errs[0] / 6.0
    assert errs[2] < errs[1] / 6.0


def test_hyperviscosity_zero_cases(rng):
    h = build_se_grid(6, 1.0e5)
    f = rng.standard_normal(h.ncol)
    assert np.array_equal(hyperviscosity(h, f, 0.0), np.zeros(h.ncol))
    out = hyperviscosity(h, np.full(h.ncol, 3.0), 1.0e12)
    assert np.max(np.abs(out)) < 1e-6   # constant annihilated (roundoff scale)
    with pytest.raises(ValueError):
        hyperviscosity(h, f, -1.0)


def test_hyperviscosity_spectral_reference():
    # f = sin(kx) with k at a quarter of the node Nyquist: the Rayleigh
    # quotient of the weak del^4 reproduces nu*k^4 within 1%.
    ne, L = 16, 1.0e6
    h = build_se_grid(ne, L)
    mode = (3 * ne) // 8        # quarter of the ncol/2 Nyquist mode
    k = 2 * np.pi * mode / L
    f = np.sin(k * h.x)
    nu = 1.0e13
    tend = hyperviscosity(h, f, nu)
    lam = -hint(h, f * tend) / hint(h, f * f) / nu
    assert lam == pytest.approx(k**4, rel=0.01)


def test_hv_conserves_integral(rng):
    h = build_se_grid(10, 5.0e5)
    f = rng.standard_normal(h.ncol)
    tend = hyperviscosity(h, f, 1.0e13)
    assert abs(hint(h, tend)) <= 1e-10 * hint(h, np.abs(tend) + 1e-30)
