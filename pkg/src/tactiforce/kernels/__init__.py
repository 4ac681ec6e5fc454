"""Backend selection for the per-pixel hot kernels.

Two interchangeable implementations exist:

* ``compiled`` -- Cython extension ``tactiforce._fastkern`` (built at
  install time when a C compiler is available);
* ``numpy`` -- pure NumPy/SciPy reference in
  :mod:`tactiforce.kernels.reference`.

The compiled backend is preferred when importable.  Set the environment
variable ``TACTIFORCE_KERNELS=numpy`` (or ``compiled``) to force a choice;
forcing ``compiled`` when the extension is missing raises ImportError so a
silently slow build cannot masquerade as the fast one.

``tactiforce bench`` reports per-stage timings for whichever backends are
available, so the speedup is measurable rather than assumed.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import reference


def _load_compiled() -> ModuleType | None:
    try:
        from tactiforce import _fastkern
    except ImportError:
        return None
    return _fastkern


def available_backends() -> dict[str, ModuleType]:
    """Mapping of backend name -> kernel module, for benchmarking/tests."""
    backends: dict[str, ModuleType] = {"numpy": reference}
    compiled = _load_compiled()
    if compiled is not None:
        backends["compiled"] = compiled
    return backends


def _select() -> ModuleType:
    forced = os.environ.get("TACTIFORCE_KERNELS", "").strip().lower()
    if forced == "numpy":
        return reference
    if forced == "compiled":
        compiled = _load_compiled()
        if compiled is None:
            raise ImportError(
                "TACTIFORCE_KERNELS=compiled but tactiforce._fastkern is not "
                "built; reinstall with a C compiler or unset the variable"
            )
        return compiled
    if forced:
        raise ImportError(f"unknown TACTIFORCE_KERNELS value {forced!r}")
    return _load_compiled() or reference


_active = _select()

BACKEND: str = _active.NAME
median3x3 = _active.median3x3
shade = _active.shade
normals_from_depth = _active.normals_from_depth
normal_slopes = _active.normal_slopes
divergence = _active.divergence
normalize_rows_floor = _active.normalize_rows_floor


def use(name: str) -> str:
    """Switch the active backend at runtime (used by the benchmark).

    Returns the name of the now-active backend; unknown or unavailable
    names raise ImportError.
    """
    backends = available_backends()
    if name not in backends:
        raise ImportError(f"kernel backend {name!r} not available (have {sorted(backends)})")
    mod = backends[name]
    global _active, BACKEND, median3x3, shade, normals_from_depth
    global normal_slopes, divergence, normalize_rows_floor
    _active = mod
    BACKEND = mod.NAME
    median3x3 = mod.median3x3
    shade = mod.shade
    normals_from_depth = mod.normals_from_depth
    normal_slopes = mod.normal_slopes
    divergence = mod.divergence
    normalize_rows_floor = mod.normalize_rows_floor
    return BACKEND


__all__ = [
    "BACKEND",
    "available_backends",
    "use",
    "median3x3",
    "shade",
    "normals_from_depth",
    "normal_slopes",
    "divergence",
    "normalize_rows_floor",
]
