import numpy as np
import pytest

from conftest import make_random_state
from nhslice import remap, vops
from nhslice.cli import RunConfig, build_model, init_hydrostatic_rest
from nhslice.remap import RemapError, build_plan, ppm_remap, remap_state


@pytest.fixture
def lag_model():
    return build_model(RunConfig(ne=4, nlev=12, length=3.0e5, mode="lagrangian"))


def column_totals(model, st):
    g = model.grid
    return (
        vops.vint_mid(g, st.dpids),
        vops.vint_mid(g, st.Theta),
        vops.vint_mid(g, st.dpids * st.u),
        vops.vint_mid(g, st.dpids * st.v),
    )


def displaced_state(model, rng, amp=0.15):
    """Valid state whose levels are displaced off the reference targets."""
    st = make_random_state(model, rng, u_scale=5.0, w_scale=0.5)
    n = model.grid.n
    bump = 1.0 + amp * np.sin(np.linspace(0.0, 2.5 * np.pi, n))
    st.dpids = st.dpids * bump
    st.Theta = st.Theta * bump
    return st


def test_identity_plan_and_identity_remap(lag_model):
    config = RunConfig(ne=4, nlev=12, length=3.0e5, mode="lagrangian")
    st = init_hydrostatic_rest(lag_model, config)
    plan = build_plan(lag_model, st)
    np.testing.assert_allclose(plan.pi_src, plan.pi_tgt, rtol=1e-12)
    out = remap_state(lag_model, st)
    for name in ("u", "v", "Theta", "dpids"):
        a, b = getattr(st, name), getattr(out, name)
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(st.phi, out.phi, rtol=1e-11)
    np.testing.assert_array_equal(st.w[:, -1], out.w[:, -1])


def test_plan_endpoints_match(lag_model, rng):
    st = displaced_state(lag_model, rng)
    plan = build_plan(lag_model, st)
    np.testing.assert_array_equal(plan.pi_src[:, 0], plan.pi_tgt[:, 0])
    np.testing.assert_array_equal(plan.pi_src[:, -1], plan.pi_tgt[:, -1])
    assert np.all(np.diff(plan.pi_src, axis=1) > 0.0)
    assert np.all(np.diff(plan.pi_tgt, axis=1) > 0.0)


def test_plan_rejects_crossed_levels(lag_model, rng):
    st = displaced_state(lag_model, rng)
    st.dpids[0, 3] = -1.0
    with pytest.raises(RemapError):
        build_plan(lag_model, st)


def test_overlap_weights_consistency(lag_model, rng):
    st = displaced_state(lag_model, rng)
    plan = build_plan(lag_model, st)
    W = plan.overlap_weights(2)
    np.testing.assert_allclose(W.sum(axis=1), np.diff(plan.pi_tgt[2]), rtol=1e-12)
    np.testing.assert_allclose(W.sum(axis=0), np.diff(plan.pi_src[2]), rtol=1e-12)


def test_ppm_constant_exact(rng):
    edges = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 2.0, 12))])
    tgt = np.linspace(edges[0], edges[-1], 13)
    out = ppm_remap(edges, np.full(12, 3.25), tgt)
    np.testing.assert_allclose(out, 3.25, rtol=1e-14)


def test_ppm_two_cell_hand_case():
    # means [2, 4] on unit cells; quadratic cumulative reconstruction gives
    # the linear profile 1..5; remap to edges [0, 1.5, 2]:
    # new = [2.5, 4.5] by hand integration.
    out = ppm_remap([0.0, 1.0, 2.0], [2.0, 4.0], [0.0, 1.5, 2.0], monotone=False)
    np.testing.assert_allclose(out, [2.5, 4.5], rtol=1e-13)


def test_ppm_conserves_total(rng):
    for _ in range(50):
        n = int(rng.integers(2, 40))
        edges = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 2.0, n))])
        means = rng.standard_normal(n)
        shift = rng.uniform(-0.3, 0.3, n - 1) * np.diff(edges)[:-1]
        tgt = edges.copy()
        tgt[1:-1] = np.sort(edges[1:-1] + shift)
        out = ppm_remap(edges, means, tgt, monotone=bool(rng.integers(2)))
        tot_in = float(np.sum(means * np.diff(edges)))
        tot_out = float(np.sum(out * np.diff(tgt)))
        scale = float(np.sum(np.abs(means) * np.diff(edges))) + 1e-12
        assert abs(tot_in - tot_out) / scale <= 1e-13


def test_ppm_monotone_bounds_sawtooth():
    n = 16
    edges = np.arange(n + 1, dtype=float)
    means = np.where(np.arange(n) % 2 == 0, 1.0, 5.0)
    tgt = edges.copy()
    tgt[1:-1] += 0.37
    out = ppm_remap(edges, means, tgt, monotone=True)
    assert out.min() >= 1.0 - 1e-12
    assert out.max() <= 5.0 + 1e-12


def test_remap_conservation_random_states(lag_model, rng):
    for _ in range(10):
        st = displaced_state(lag_model, rng)
        before = column_totals(lag_model, st)
        out = remap_state(lag_model, st)
        after = column_totals(lag_model, out)
        for b, a in zip(before, after):
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-10)


def test_remap_preserves_validity_and_surface(lag_model, rng):
    st = displaced_state(lag_model, rng)
    out = remap_state(lag_model, st)
    lag_model.validate_state(out)
    np.testing.assert_array_equal(out.w[:, -1], st.w[:, -1])
    np.testing.assert_array_equal(out.phi[:, -1], st.phi[:, -1])
    # levels back on the reference hybrid distribution
    plan = build_plan(lag_model, out)
    np.testing.assert_allclose(plan.pi_src, plan.pi_tgt, rtol=1e-10)


def test_remap_monotone_bounds_on_ratios(lag_model, rng):
    st = displaced_state(lag_model, rng, amp=0.3)
    theta_v = st.Theta / st.dpids
    out = remap_state(lag_model, st, monotone=True)
    tv_out = out.Theta / out.dpids
    pad = 1e-9 * np.max(np.abs(theta_v))
    assert tv_out.min() >= theta_v.min() - pad
    assert tv_out.max() <= theta_v.max() + pad
    assert out.u.min() >= st.u.min() - 1e-9
    assert out.u.max() <= st.u.max() + 1e-9
