"""Hot-kernel backend selection.

The compiled Cython extension is preferred when present; the pure-NumPy
reference implementation is the fallback.  Override with the environment
variable NHSLICE_KERNELS set to "compiled" (import error if missing) or
"python".  Both backends run the same column algorithm; see
``benchmarks/bench_newton.py`` for a timing comparison.
"""

from __future__ import annotations

import os

from . import _ref

_choice = os.environ.get("NHSLICE_KERNELS", "auto")

if _choice == "python":
    BACKEND = "python"
    solve_columns = _ref.solve_columns
elif _choice == "compiled":
    from . import _core

    BACKEND = "compiled"
    solve_columns = _core.solve_columns
elif _choice == "auto":
    try:
        from . import _core

        BACKEND = "compiled"
        solve_columns = _core.solve_columns
    except ImportError:
        BACKEND = "python"
        solve_columns = _ref.solve_columns
else:
    raise ImportError(
        f"NHSLICE_KERNELS must be 'auto', 'compiled' or 'python', got {_choice!r}"
    )

column_residual = _ref.column_residual
column_jacobian = _ref.column_jacobian

__all__ = ["BACKEND", "solve_columns", "column_residual", "column_jacobian"]
