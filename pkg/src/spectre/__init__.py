"""Numerical laboratory for time-domain spectral diagnostics.

Detects left-half-plane eigenvalues and positive embedded eigenvalues of a
linear operator from large-time averages of wave-equation trajectories, and
recovers limiting amplitudes of periodically forced solutions.  Every
time-domain verdict can be cross-checked against direct eigenstructure and
resolvent computations on the same operator.
"""

__version__ = "0.1.0"

from spectre.errors import SpectreError

__all__ = ["SpectreError", "__version__"]
