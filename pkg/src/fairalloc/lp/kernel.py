"""Backend selection for the simplex pivot loop.

The compiled ``_kernel`` extension is used when it was built; otherwise the
numpy fallback. Set ``FAIRALLOC_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernel_py

if os.environ.get("FAIRALLOC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernel_py
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernel_py

BACKEND = "compiled" if _impl is not _kernel_py else "python"

OPTIMAL = _kernel_py.OPTIMAL
UNBOUNDED = _kernel_py.UNBOUNDED
ITERATION_LIMIT = _kernel_py.ITERATION_LIMIT

iterate = _impl.iterate
pivot = _impl.pivot


def use(backend: str) -> None:
    """Switch backend at runtime ("compiled" or "python"); used by tests and benchmarks."""
    global _impl, BACKEND, iterate, pivot
    if backend == "python":
        _impl = _kernel_py
    elif backend == "compiled":
        from . import _kernel as compiled  # type: ignore[attr-defined]

        _impl = compiled
    else:
        raise ValueError(f"unknown backend {backend!r}")
    BACKEND = backend
    iterate = _impl.iterate
    pivot = _impl.pivot


def compiled_available() -> bool:
    try:
        from . import _kernel  # noqa: F401  # type: ignore[attr-defined]
    except ImportError:
        return False
    return True
