"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``DBCONTROL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _bisect_py

BACKEND = "python"
bisect_round_py = _bisect_py.bisect_round
bisect_round_ext = None

try:
    from ._bisect import bisect_round as bisect_round_ext  # type: ignore[no-redef]
except ImportError:  # extension not built
    pass

if bisect_round_ext is not None and os.environ.get("DBCONTROL_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
    bisect_round = bisect_round_ext
else:
    bisect_round = bisect_round_py
