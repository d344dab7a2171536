import numpy as np
import pytest

from nhslice import vops
from nhslice.cli import RunConfig, build_model, init_hydrostatic_rest, random_level_grid


def make_random_state(model, rng, u_scale=10.0, w_scale=1.0, t_ref=300.0):
    """Random valid state: perturbed hydrostatic base."""
    config = RunConfig(ne=model.hgrid.ne, nlev=model.grid.n, t_ref=t_ref)
    state = init_hydrostatic_rest(model, config)
    n = model.grid.n
    state.Theta = state.Theta * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, state.Theta.shape))
    state.u = u_scale * rng.standard_normal(state.u.shape)
    state.v = 0.5 * u_scale * rng.standard_normal(state.v.shape)
    state.w[:, :-1] = w_scale * rng.standard_normal((state.ncol, n))
    dphids = vops.ddn_i2m(model.grid, state.phi)
    dphids = dphids * (1.0 + 0.2 * rng.uniform(-1.0, 1.0, dphids.shape))
    for k in range(n - 1, -1, -1):
        state.phi[:, k] = state.phi[:, k + 1] - model.grid.ds_mid[k] * dphids[:, k]
    state.dpids = state.dpids * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, state.dpids.shape))
    return state


def random_sdot(model, rng, scale=1.0):
    """Admissible test mass flux: random interior values, zero endpoints."""
    S = np.zeros((model.hgrid.ncol, model.grid.n + 1))
    S[:, 1:-1] = scale * rng.standard_normal((model.hgrid.ncol, model.grid.n - 1))
    return S


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def small_model():
    config = RunConfig(ne=4, nlev=12, length=3.0e5)
    return build_model(config)


__all__ = ["make_random_state", "random_sdot", "random_level_grid"]
