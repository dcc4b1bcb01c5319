"""JSON helpers: complex values as [re, im] pairs, canonical byte-stable dumps."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def complex_to_pair(z):
    z = complex(z)
    return [z.real, z.imag]


def pair_to_complex(obj, path="value"):
    """Accept a bare real number or an [re, im] pair."""
    from spectre.errors import ConfigurationError

    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return complex(obj)
    if (
        isinstance(obj, (list, tuple))
        and len(obj) == 2
        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in obj)
    ):
        return complex(obj[0], obj[1])
    raise ConfigurationError(f"{path}: expected a real number or an [re, im] pair, got {obj!r}")


def vector_to_pairs(v):
    return [complex_to_pair(z) for z in np.asarray(v).ravel()]


def matrix_to_pairs(a):
    a = np.asarray(a)
    return [[complex_to_pair(z) for z in row] for row in a]


def _default(obj):
    if isinstance(obj, complex):
        return complex_to_pair(obj)
    if isinstance(obj, (np.complexfloating,)):
        return complex_to_pair(complex(obj))
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return [_default(z) for z in obj.tolist()] if obj.ndim else complex_to_pair(obj[()])
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def canonical_dumps(obj) -> str:
    """Deterministic rendering: sorted keys, fixed separators, no NaN/inf."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, default=_default)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def format_float(x) -> str:
    # repr gives the shortest round-trip form; byte-stable for equal inputs
    return repr(float(x))
