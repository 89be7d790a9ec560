"""Kernel dispatch: numba-jitted fast path with a pure-numpy fallback.

The environment variable ``PSEUDOLABEL_NUMBA`` selects the path:

* unset or ``auto``: use numba when importable, else fall back silently;
* ``0`` / ``false`` / ``off``: force the pure-numpy path;
* ``1`` / ``true`` / ``on``: require numba, raise if unavailable.

``benchmarks/bench_kernels.py`` compares both paths on sized inputs.
"""

import os
from types import SimpleNamespace

from . import _kernels

_KERNEL_NAMES = (
    "pairwise_iou",
    "pairwise_giou",
    "roi_align_box",
    "solve_square_assignment",
)

# fallback set: vectorized numpy where it exists, loop kernels otherwise
numpy_kernels = SimpleNamespace(
    pairwise_iou=_kernels.pairwise_iou_numpy,
    pairwise_giou=_kernels.pairwise_giou_numpy,
    roi_align_box=_kernels.roi_align_box,
    solve_square_assignment=_kernels.solve_square_assignment,
)


def build_jit_kernels():
    """Compile the jitted kernel set; raises ImportError without numba."""
    from numba import njit

    wrap = njit(cache=True)
    return SimpleNamespace(
        **{name: wrap(getattr(_kernels, name)) for name in _KERNEL_NAMES}
    )


def _resolve(flag):
    flag = flag.strip().lower()
    if flag in ("0", "false", "off", "no"):
        return numpy_kernels, False
    try:
        kernels = build_jit_kernels()
        return kernels, True
    except ImportError:
        if flag in ("1", "true", "on", "yes"):
            raise RuntimeError(
                "PSEUDOLABEL_NUMBA=%s but numba is not importable" % flag
            )
        return numpy_kernels, False


jit_kernels = None
kernels, USING_NUMBA = _resolve(os.environ.get("PSEUDOLABEL_NUMBA", "auto"))
if USING_NUMBA:
    jit_kernels = kernels
