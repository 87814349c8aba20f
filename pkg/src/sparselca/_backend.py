"""Kernel backend selection.

Imports the compiled Cython kernels when available, otherwise the
pure-NumPy fallback. Set SPARSELCA_PURE_PYTHON=1 to force the fallback
(useful for benchmarking and for debugging the compiled path).
"""

from __future__ import annotations

import os

_force_py = os.environ.get("SPARSELCA_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

posterior_weights = _impl.posterior_weights
weighted_item_counts = _impl.weighted_item_counts
em_step = _impl.em_step


def active_backend() -> str:
    """Name of the kernel backend in use: 'cython' or 'python'."""
    return BACKEND
