"""Selection between the compiled kernel extension and the NumPy fallback.

The compiled backend is preferred when importable.  Selection order:

1. explicit ``set_backend("compiled"|"python")`` call (tests, benchmarks)
2. ``ROADMEND_BACKEND`` environment variable (``compiled``, ``python``, ``auto``)
3. auto: compiled if the extension built, else the fallback

Both backends are bit-identical by construction; switching never changes
output bytes, only speed.
"""

import logging
import os

log = logging.getLogger(__name__)

_active = None
_forced = None


def _import_compiled():
    from . import _kernels_cy
    return _kernels_cy


def _import_python():
    from . import _kernels_py
    return _kernels_py


def set_backend(name):
    """Force a backend by name ("compiled", "python") or None for auto."""
    global _active, _forced
    if name not in (None, "compiled", "python", "auto"):
        raise ValueError(f"unknown backend {name!r}")
    _forced = None if name in (None, "auto") else name
    _active = None


def get_kernels():
    """Return the active kernel module, resolving it on first use."""
    global _active
    if _active is not None:
        return _active

    want = _forced or os.environ.get("ROADMEND_BACKEND", "auto").lower()
    if want == "python":
        _active = _import_python()
    elif want == "compiled":
        _active = _import_compiled()
    else:
        try:
            _active = _import_compiled()
        except ImportError:
            log.info("compiled kernels unavailable, using NumPy fallback")
            _active = _import_python()
    return _active


def backend_name():
    return get_kernels().BACKEND_NAME
