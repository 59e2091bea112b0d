"""Hot numerical kernels with a compiled core and a NumPy fallback.

The compiled extension ``_native`` (Cython) is preferred when importable;
otherwise the package silently falls back to ``pure``.  Set the environment
variable ``OUPORTFOLIO_BACKEND=pure`` or ``=native`` to force a lane
(forcing ``native`` raises if the extension is missing).

Exposed kernels:

    cn_sweep       backward Crank-Nicolson sweep, time-independent operator
    ou_paths       exact Ornstein-Uhlenbeck path recursion
    ou_stop_stats  first-crossing scan of the running integral of Y**2
    thomas_pivots  pivot certification for tridiagonal systems
"""

from __future__ import annotations

import os

from . import pure as _pure

_FORCED = os.environ.get("OUPORTFOLIO_BACKEND", "").strip().lower()

if _FORCED == "pure":
    _impl = _pure
elif _FORCED == "native":
    from . import _native as _impl  # noqa: F401  (raises if not built)
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _pure

cn_sweep = _impl.cn_sweep
ou_paths = _impl.ou_paths
ou_stop_stats = _impl.ou_stop_stats
thomas_pivots = _impl.thomas_pivots


def backend_name() -> str:
    """Which lane is active: ``"native"`` or ``"pure"``."""
    return _impl.NAME


def available_backends() -> dict[str, object]:
    """Importable lanes keyed by name (used by the benchmark)."""
    lanes: dict[str, object] = {"pure": _pure}
    try:
        from . import _native
    except ImportError:
        pass
    else:
        lanes["native"] = _native
    return lanes


__all__ = [
    "cn_sweep",
    "ou_paths",
    "ou_stop_stats",
    "thomas_pivots",
    "backend_name",
    "available_backends",
]
