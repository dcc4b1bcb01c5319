"""Kernel backend selection.

The compiled extension is preferred when present; SPECTRE_KERNEL=fallback
forces the numpy implementation, SPECTRE_KERNEL=compiled insists on the
extension and fails loudly if it is missing.
"""

import os

from spectre._kernels import _reference

try:
    from spectre._kernels import _core as _compiled
except ImportError:
    _compiled = None

_choice = os.environ.get("SPECTRE_KERNEL", "auto")
if _choice not in ("auto", "compiled", "fallback"):
    raise RuntimeError(f"SPECTRE_KERNEL must be auto, compiled or fallback, got {_choice!r}")
if _choice == "compiled" and _compiled is None:
    raise RuntimeError("SPECTRE_KERNEL=compiled but the extension is not built")

_impl = _reference if (_choice == "fallback" or _compiled is None) else _compiled

HAVE_COMPILED = _compiled is not None
BACKEND = "compiled" if _impl is not _reference else "fallback"

rk4_evolve = _impl.rk4_evolve
modulated_scan = _impl.modulated_scan

__all__ = ["rk4_evolve", "modulated_scan", "BACKEND", "HAVE_COMPILED"]
