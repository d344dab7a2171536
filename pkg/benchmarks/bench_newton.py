"""Benchmark: compiled Newton column kernel vs the pure-NumPy fallback.

The implicit column solve runs at every implicit Runge-Kutta stage, so it
is the hot inner loop of a HEVI integration.  This script times both
backends on the same column batches and a full model step with each
backend selected.

Run:  python3 benchmarks/bench_newton.py
"""

import time

import numpy as np

from nhslice._kernels import _ref
from nhslice.cli import RunConfig, build_model, init_gravity_wave
from nhslice.timeint import ark_step, get_tableau

try:
    from nhslice._kernels import _core
except ImportError:
    _core = None


def solver_args(model, st, gamma):
    c = model.constants
    return (st.Theta, st.dpids, st.w, st.phi,
            model.grid.ds_mid, model.grid.ds_int,
            gamma, c.g, c.R, c.p0, c.cp / c.cv, model.hybrid.p_top)


def time_call(fn, *args, repeat=50):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernel():
    print("implicit column solve (gamma = 0.3 dt, perturbed wave state)")
    print(f"{'ncol':>6} {'nlev':>6} {'numpy [ms]':>12} {'cython [ms]':>12} {'speedup':>9}")
    for ne, nlev in ((4, 20), (16, 30), (16, 60), (64, 30)):
        config = RunConfig(ne=ne, nlev=nlev, length=1.0e6, theta_amp=10.0)
        model = build_model(config)
        st = init_gravity_wave(model, config)
        rng = np.random.default_rng(0)
        st.w[:, :-1] += 0.5 * rng.standard_normal((st.ncol, nlev))
        args = solver_args(model, st, 6.0)
        t_ref = time_call(_ref.solve_columns, *args)
        row = f"{st.ncol:>6} {nlev:>6} {1e3 * t_ref:>12.3f}"
        if _core is not None:
            t_core = time_call(_core.solve_columns, *args)
            row += f" {1e3 * t_core:>12.3f} {t_ref / t_core:>8.1f}x"
        else:
            row += f" {'(not built)':>12} {'-':>9}"
        print(row)


def bench_step():
    from nhslice import _kernels

    print("\nfull IMEX step (ssp2-332, gravity-wave state)")
    config = RunConfig(ne=16, nlev=30, length=1.0e6, theta_amp=10.0)
    model = build_model(config)
    st = init_gravity_wave(model, config)
    tab = get_tableau("ssp2-332")
    for name, fn in (("numpy", _ref.solve_columns),) + (
        (("compiled", _core.solve_columns),) if _core is not None else ()
    ):
        _kernels.solve_columns = fn
        t = time_call(lambda: ark_step(st, 10.0, tab, model), repeat=20)
        print(f"  {name:>9}: {1e3 * t:.2f} ms/step")


if __name__ == "__main__":
    from nhslice._kernels import BACKEND

    print(f"default backend: {BACKEND}\n")
    bench_kernel()
    bench_step()
