"""Backend selection for the hot evaluation kernels.

The numba backend is used when importable; set SPLINE_OT_BACKEND=numpy to
force the pure-numpy fallback (SPLINE_OT_BACKEND=numba fails loudly if numba
is unavailable).  `splineot bench kernels` compares the two.
"""

import os
import warnings

_requested = os.environ.get("SPLINE_OT_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise RuntimeError(f"SPLINE_OT_BACKEND must be 'numpy' or 'numba', got {_requested!r}")

if _requested == "numpy":
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"
else:
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message=".*TBB.*")
            from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"

warnings.filterwarnings("ignore", message=".*TBB.*")

build_bins = _impl.build_bins
locate_points = _impl.locate_points
eval_derivs = _impl.eval_derivs
basis_rows = _impl.basis_rows
splat_accumulate = _impl.splat_accumulate
