"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``PHYTOCOLUMN_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the NumPy/SciPy fallback is used.
"""
from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)


def _want_pure() -> bool:
    return os.environ.get("PHYTOCOLUMN_PURE_PYTHON", "") not in ("", "0")


if _want_pure():
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # pragma: no cover - depends on build
        logger.warning("compiled kernels unavailable; using the pure-Python fallback")
        from . import _kernels_py as kernels

from . import _kernels_py as python_kernels  # noqa: E402

BACKEND: str = kernels.BACKEND

__all__ = ["kernels", "python_kernels", "BACKEND"]
