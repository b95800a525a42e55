"""Hot numeric kernels: compiled core with a pure numpy fallback.

The compiled extension is built from ``_core.pyx`` at install time. Backend
selection happens once at import: the compiled core when available, otherwise
the numpy fallback. Set ``OFCL_KERNELS=python`` or ``OFCL_KERNELS=compiled``
to force one (the latter raises if the extension is missing).
"""

import os

from . import _pure

NO_INDEX = _pure.NO_INDEX

_forced = os.environ.get("OFCL_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _pure
        BACKEND = "python"

pairwise_dist = _impl.pairwise_dist
dbscan_labels = _impl.dbscan_labels
detect_batch = _impl.detect_batch


def available_backends():
    names = ["python"]
    try:
        from . import _core  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return a backend module by name, for benchmarks and cross-checks."""
    if name == "python":
        return _pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown kernels backend: {name!r}")
