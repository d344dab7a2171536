import os

import numpy as np
import pytest

from nhslice import vcoord
from nhslice.cli import random_level_grid
from nhslice.vcoord import (
    DRY_AIR,
    GridError,
    PhysicalConstants,
    build_hybrid,
    build_uniform_grid,
    grid_from_interfaces,
    load_levels,
    pi_interfaces,
    save_levels,
)


def test_constants_derived():
    assert DRY_AIR.cv == pytest.approx(DRY_AIR.cp - DRY_AIR.R)
    assert 0.0 < DRY_AIR.kappa < 1.0
    with pytest.raises(ValueError):
        PhysicalConstants(R=1000.0, cp=900.0)


def test_uniform_grid_n2():
    g = build_uniform_grid(2, 0.0, 1.0)
    np.testing.assert_allclose(g.s_int, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(g.s_mid, [0.25, 0.75])
    np.testing.assert_allclose(g.ds_mid, [0.5, 0.5])
    np.testing.assert_allclose(g.ds_int, [0.5, 0.5, 0.5])


def test_uniform_grid_n3_boundary_rule():
    g = build_uniform_grid(3, 0.0, 1.0)
    np.testing.assert_allclose(g.ds_int, [1 / 3, 1 / 3, 1 / 3, 1 / 3])


def test_stretched_grid_hand_values():
    # Hand evaluation of the definitions for interfaces [0, .1, .3, .6, 1].
    g = grid_from_interfaces([0.0, 0.1, 0.3, 0.6, 1.0])
    np.testing.assert_allclose(g.s_mid, [0.05, 0.2, 0.45, 0.8])
    np.testing.assert_allclose(g.ds_mid, [0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(g.ds_int, [0.1, 0.15, 0.25, 0.35, 0.4])


def test_grid_invariants_random(rng):
    for _ in range(50):
        n = int(rng.integers(2, 129))
        g = random_level_grid(rng, n)
        assert np.all(np.diff(g.s_int) > 0.0)
        assert np.all(g.ds_mid > 0.0) and np.all(g.ds_int > 0.0)
        # midpoint centering
        np.testing.assert_allclose(
            g.s_mid, 0.5 * (g.s_int[1:] + g.s_int[:-1]), rtol=0, atol=1e-15)
        # boundary thickness rule
        assert g.ds_int[0] == g.ds_mid[0]
        assert g.ds_int[-1] == g.ds_mid[-1]
        # both quadrature lengths equal the grid extent
        length = g.s_int[-1] - g.s_int[0]
        assert np.sum(g.ds_mid) == pytest.approx(length, rel=1e-13)
        primed = 0.5 * g.ds_int[0] + np.sum(g.ds_int[1:-1]) + 0.5 * g.ds_int[-1]
        assert primed == pytest.approx(length, rel=1e-13)


def test_grid_rejects_bad_input():
    with pytest.raises(GridError):
        build_uniform_grid(1)
    with pytest.raises(GridError):
        build_uniform_grid(5, 1.0, 0.0)
    with pytest.raises(GridError):
        grid_from_interfaces([0.0, 0.5, 0.4, 1.0])


def test_hybrid_endpoints_and_sigma_limit():
    g = build_uniform_grid(10)
    h = build_hybrid(g, p_top=100.0, p0_ref=1.0e5, exponent=1.0)
    assert h.A_int[-1] == 0.0 and h.B_int[-1] == 1.0
    assert h.B_int[0] == 0.0
    assert h.p_top == pytest.approx(100.0)
    # sigma limit: B equals the normalized s coordinate
    sigma = (g.s_int - g.s_int[0]) / g.length
    np.testing.assert_allclose(h.B_int, sigma, atol=1e-15)


def test_hybrid_monotone_scan():
    g = build_uniform_grid(10)
    h = build_hybrid(g, p_top=100.0, p0_ref=1.0e5, exponent=1.4)
    for ps in (5.0e4, 1.0e5, 1.5e5):
        pi = pi_interfaces(h, ps)
        assert np.all(np.diff(pi) > 0.0)
    with pytest.raises(GridError):
        build_hybrid(g, p_top=2.0e5, p0_ref=1.0e5)


def test_pi_interfaces_affine_in_ps():
    g = build_uniform_grid(8)
    h = build_hybrid(g, p_top=500.0, p0_ref=1.0e5, exponent=1.3)
    pi1 = pi_interfaces(h, 9.0e4)
    pi2 = pi_interfaces(h, 1.1e5)
    slope = (pi2 - pi1) / 2.0e4
    np.testing.assert_allclose(slope, h.B_int, rtol=0, atol=1e-12)
    # reference state hits p0 at the surface
    assert pi_interfaces(h, 1.0e5)[-1] == pytest.approx(1.0e5)


def test_pi_interfaces_rejects_low_ps():
    g = build_uniform_grid(6)
    h = build_hybrid(g, p_top=5.0e4, p0_ref=1.0e5, exponent=1.0)
    with pytest.raises(GridError):
        pi_interfaces(h, 1.0e4)   # below the model top pressure


def test_pi_interfaces_top_region_independent_of_ps():
    g = build_uniform_grid(6)
    h = build_hybrid(g, p_top=100.0, p0_ref=1.0e5, exponent=1.8)
    pi1 = pi_interfaces(h, 9.0e4)
    pi2 = pi_interfaces(h, 1.2e5)
    # B = 0 at the top interface: pi there is ps-independent
    assert pi1[0] == pi2[0] == pytest.approx(100.0)


def test_dpids_positive_random_ps(rng):
    g = build_uniform_grid(12)
    h = build_hybrid(g, p_top=100.0, p0_ref=1.0e5, exponent=1.4)
    for _ in range(20):
        ps = rng.uniform(0.6e5, 1.4e5)
        pi = pi_interfaces(h, ps)
        dpids = np.diff(pi) / g.ds_mid
        assert np.all(dpids > 0.0)


def test_levels_roundtrip(tmp_path, rng):
    g = random_level_grid(rng, 17)
    h = build_hybrid(g, p_top=300.0, p0_ref=1.0e5, exponent=1.7)
    path = os.path.join(tmp_path, "levels.txt")
    save_levels(path, g, h)
    g2, h2 = load_levels(path)
    np.testing.assert_array_equal(g.s_int, g2.s_int)
    np.testing.assert_array_equal(h.A_int, h2.A_int)
    np.testing.assert_array_equal(h.B_int, h2.B_int)
    assert h2.p0_ref == h.p0_ref
