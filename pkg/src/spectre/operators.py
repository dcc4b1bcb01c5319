"""Operator construction and direct spectral ground truth.

Declarative recipes are turned into dense complex matrices; a brute-force
eigendecomposition supplies eigenvalues, spectral projections and defect
information.  That direct route is the reference against which all
trajectory-based detectors in the rest of the package are judged, so nothing
here looks at trajectories.

Supported recipe kinds:

``diagonal``
    ``params.eigenvalues``: list of complex entries (``[re, im]`` pairs or
    bare reals).
``dense``
    ``params.entries``: full complex matrix, rows of pairs/reals.
``schrodinger1d``
    Dirichlet finite-difference second-difference stencil on ``[-X, X]``
    with grid spacing ``h = 2X/(n+1)`` plus a sampled potential:
    ``params.n``, ``params.half_width``, ``params.potential``
    (``{"form": "zero"|"gaussian"|"box", "depth": ..., "width": ...}``),
    ``params.boundary`` (only ``"dirichlet"``).
``perturbed-random``
    A planted spectrum conjugated by a seeded random orthogonal (real
    spectrum) or unitary (complex spectrum) matrix, plus
    ``magnitude`` times a seeded Gaussian matrix.  ``magnitude: 0``
    plants the spectrum exactly, up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from spectre.errors import (
    ConfigurationError,
    OracleFailureError,
    UnsupportedOperatorError,
)
from spectre.serialize import matrix_to_pairs, pair_to_complex, vector_to_pairs

ORACLE_SIZE_CAP = 512
DEFAULT_TOL_PROJ = 1e-8
DEFAULT_TOL_GEN = 1e-10

_KINDS = ("diagonal", "dense", "schrodinger1d", "perturbed-random")


def real_tolerance(spectral_radius: float) -> float:
    """Scale-aware threshold below which imaginary parts count as zero."""
    return 1e-9 * max(1.0, spectral_radius)


@dataclass(frozen=True)
class OperatorSpec:
    """Declarative operator recipe, mirroring its JSON form."""

    kind: str
    params: dict

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise ConfigurationError(f"kind: unknown operator kind {self.kind!r}, expected one of {_KINDS}")
        if not isinstance(self.params, dict):
            raise ConfigurationError("params: expected an object")
        _VALIDATORS[self.kind](self.params)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": _params_to_json(self.kind, self.params)}

    @staticmethod
    def from_json(obj: dict, path: str = "operator") -> "OperatorSpec":
        if not isinstance(obj, dict):
            raise ConfigurationError(f"{path}: expected an object")
        unknown = set(obj) - {"kind", "params"}
        if unknown:
            raise ConfigurationError(f"{path}: unknown fields {sorted(unknown)}")
        if "kind" not in obj:
            raise ConfigurationError(f"{path}.kind: missing")
        spec = OperatorSpec(kind=obj["kind"], params=obj.get("params", {}))
        spec.validate()
        return spec


def _require(params: dict, name: str, kind: str):
    if name not in params:
        raise ConfigurationError(f"params.{name}: missing (required for kind {kind!r})")
    return params[name]


def _validate_diagonal(params: dict) -> None:
    eigs = _require(params, "eigenvalues", "diagonal")
    if not isinstance(eigs, (list, tuple)) or len(eigs) == 0:
        raise ConfigurationError("params.eigenvalues: expected a non-empty list")
    for i, z in enumerate(eigs):
        pair_to_complex(z, path=f"params.eigenvalues[{i}]")


def _validate_dense(params: dict) -> None:
    entries = _require(params, "entries", "dense")
    if not isinstance(entries, (list, tuple)) or len(entries) == 0:
        raise ConfigurationError("params.entries: expected a non-empty list of rows")
    n = len(entries)
    for i, row in enumerate(entries):
        if not isinstance(row, (list, tuple)) or len(row) != n:
            raise ConfigurationError(f"params.entries[{i}]: expected a row of length {n}")
        for j, z in enumerate(row):
            pair_to_complex(z, path=f"params.entries[{i}][{j}]")


_POTENTIAL_FORMS = ("zero", "gaussian", "box")


def _validate_potential(pot, path: str) -> None:
    if not isinstance(pot, dict):
        raise ConfigurationError(f"{path}: expected an object")
    form = pot.get("form")
    if form not in _POTENTIAL_FORMS:
        raise ConfigurationError(f"{path}.form: expected one of {_POTENTIAL_FORMS}, got {form!r}")
    if form == "zero":
        return
    for key in ("depth", "width"):
        val = pot.get(key)
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigurationError(f"{path}.{key}: expected a number")
    if pot["width"] <= 0:
        raise ConfigurationError(f"{path}.width: must be positive")


def _validate_schrodinger(params: dict) -> None:
    n = _require(params, "n", "schrodinger1d")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigurationError("params.n: expected a positive integer")
    half_width = _require(params, "half_width", "schrodinger1d")
    if not isinstance(half_width, (int, float)) or half_width <= 0:
        raise ConfigurationError("params.half_width: expected a positive number")
    _validate_potential(_require(params, "potential", "schrodinger1d"), "params.potential")
    boundary = params.get("boundary", "dirichlet")
    if boundary != "dirichlet":
        raise ConfigurationError(f"params.boundary: only 'dirichlet' is supported, got {boundary!r}")


def _validate_perturbed(params: dict) -> None:
    base = _require(params, "base_spectrum", "perturbed-random")
    if not isinstance(base, (list, tuple)) or len(base) == 0:
        raise ConfigurationError("params.base_spectrum: expected a non-empty list")
    for i, z in enumerate(base):
        pair_to_complex(z, path=f"params.base_spectrum[{i}]")
    mag = _require(params, "magnitude", "perturbed-random")
    if not isinstance(mag, (int, float)) or isinstance(mag, bool) or mag < 0:
        raise ConfigurationError("params.magnitude: expected a non-negative number")
    seed = _require(params, "seed", "perturbed-random")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError("params.seed: expected a non-negative integer")


_VALIDATORS = {
    "diagonal": _validate_diagonal,
    "dense": _validate_dense,
    "schrodinger1d": _validate_schrodinger,
    "perturbed-random": _validate_perturbed,
}


def _params_to_json(kind: str, params: dict) -> dict:
    out = dict(params)
    if kind == "diagonal":
        out["eigenvalues"] = vector_to_pairs([pair_to_complex(z) for z in params["eigenvalues"]])
    elif kind == "dense":
        out["entries"] = matrix_to_pairs(
            [[pair_to_complex(z) for z in row] for row in params["entries"]]
        )
    elif kind == "perturbed-random":
        out["base_spectrum"] = vector_to_pairs([pair_to_complex(z) for z in params["base_spectrum"]])
    return out


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Dense matrix realization of a recipe, immutable once built."""

    entries: np.ndarray
    spec: OperatorSpec

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.entries, dtype=np.complex128))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConfigurationError("entries: expected a square matrix")
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("entries: matrix contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> dict:
        return {"n": self.n, "entries": matrix_to_pairs(self.entries), "spec": self.spec.to_json()}


def potential_function(pot: dict) -> Callable[[np.ndarray], np.ndarray]:
    form = pot["form"]
    if form == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    depth = float(pot["depth"])
    width = float(pot["width"])
    if form == "gaussian":
        return lambda x: depth * np.exp(-((np.asarray(x, dtype=float) / width) ** 2))
    return lambda x: np.where(np.abs(np.asarray(x, dtype=float)) <= width, depth, 0.0)


def build_operator(spec: OperatorSpec) -> LinearOperator:
    """Materialize a recipe as a dense complex matrix."""
    spec.validate()
    params = spec.params
    if spec.kind == "diagonal":
        eigs = np.array([pair_to_complex(z) for z in params["eigenvalues"]])
        a = np.diag(eigs)
    elif spec.kind == "dense":
        a = np.array([[pair_to_complex(z) for z in row] for row in params["entries"]])
    elif spec.kind == "schrodinger1d":
        a = _build_schrodinger(params)
    else:
        a = _build_perturbed(params)
    return LinearOperator(entries=a, spec=spec)


def _build_schrodinger(params: dict) -> np.ndarray:
    n = params["n"]
    half_width = float(params["half_width"])
    h = 2.0 * half_width / (n + 1)
    x = -half_width + h * np.arange(1, n + 1)
    q = potential_function(params["potential"])(x)
    a = np.zeros((n, n), dtype=np.complex128)
    np.fill_diagonal(a, 2.0 / h**2 + q)
    off = -1.0 / h**2
    for i in range(n - 1):
        a[i, i + 1] = off
        a[i + 1, i] = off
    return a


def _build_perturbed(params: dict) -> np.ndarray:
    base = np.array([pair_to_complex(z) for z in params["base_spectrum"]])
    n = base.size
    rng = np.random.default_rng(params["seed"])
    if np.all(base.imag == 0.0):
        # real spectrum: orthogonal conjugation keeps the matrix real symmetric
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        q = q * np.sign(np.diag(r))  # fix the QR sign ambiguity deterministically
        a = (q * base.real) @ q.T
        a = a.astype(np.complex128)
    else:
        gr = rng.standard_normal((n, n))
        gi = rng.standard_normal((n, n))
        q, r = np.linalg.qr(gr + 1j * gi)
        q = q * (np.diag(r) / np.abs(np.diag(r)))
        a = (q * base) @ q.conj().T
    mag = float(params["magnitude"])
    if mag > 0.0:
        a = a + mag * rng.standard_normal((n, n))
    return a


@dataclass(frozen=True, eq=False)
class SpectralOracle:
    """Direct eigenstructure of an operator: the ground truth for detectors.

    ``eigenvalues[i]`` carries the spectral projection ``projections[i]``
    (rank = algebraic multiplicity; nearby eigenvalues are clustered).  For
    non-diagonalizable input the projections are not trustworthy and
    ``diagonalizable`` is False; operations that need honest projections must
    refuse such oracles.
    """

    operator: LinearOperator
    eigenvalues: np.ndarray
    projections: np.ndarray
    diagonalizable: bool
    jordan_defect: np.ndarray
    eigen_condition: float
    hermitian: bool
    tol_proj: float

    def __post_init__(self):
        for name in ("eigenvalues", "projections", "jordan_defect"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def n(self) -> int:
        return self.operator.n

    def to_json(self) -> dict:
        return {
            "eigenvalues": vector_to_pairs(self.eigenvalues),
            "diagonalizable": self.diagonalizable,
            "jordan_defect": self.jordan_defect.tolist(),
            "eigen_condition": self.eigen_condition if math.isfinite(self.eigen_condition) else None,
            "hermitian": self.hermitian,
        }


def spectral_oracle(op: LinearOperator, tol_proj: float = DEFAULT_TOL_PROJ) -> SpectralOracle:
    """Brute-force eigendecomposition with clustered spectral projections."""
    n = op.n
    if n > ORACLE_SIZE_CAP:
        raise ConfigurationError(f"operator size {n} exceeds the direct-solve cap {ORACLE_SIZE_CAP}")
    a = op.entries
    hermitian = bool(np.allclose(a, a.conj().T, rtol=0.0, atol=1e-13 * max(1.0, np.abs(a).max())))
    try:
        if hermitian:
            vals, vecs = np.linalg.eigh(a)
            vals = vals.astype(np.complex128)
            vinv = vecs.conj().T
        else:
            vals, vecs = np.linalg.eig(a)
            vinv = np.linalg.inv(vecs)
    except np.linalg.LinAlgError as exc:
        raise OracleFailureError(f"eigendecomposition failed: {exc}") from exc

    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    vecs = vecs[:, order]
    vinv = vinv[order, :]

    scale = max(1.0, float(np.max(np.abs(vals))))
    cluster_tol = 1e-8 * scale
    clusters: list[list[int]] = [[0]]
    for i in range(1, vals.size):
        if abs(vals[i] - vals[clusters[-1][-1]]) <= cluster_tol:
            clusters[-1].append(i)
        else:
            clusters.append([i])

    m = len(clusters)
    eigenvalues = np.empty(m, dtype=np.complex128)
    projections = np.empty((m, n, n), dtype=np.complex128)
    defects = np.zeros(m, dtype=np.int64)
    rank_tol = 1e-8 * max(1.0, float(np.abs(a).max()))
    for ci, idx in enumerate(clusters):
        eigenvalues[ci] = np.mean(vals[idx])
        projections[ci] = vecs[:, idx] @ vinv[idx, :]
        alg = len(idx)
        if alg > 1:
            geo = n - np.linalg.matrix_rank(a - eigenvalues[ci] * np.eye(n), tol=rank_tol)
            defects[ci] = max(0, alg - geo)

    eigen_condition = float(np.linalg.cond(vecs)) if not hermitian else 1.0
    diagonalizable = bool(np.all(defects == 0) and eigen_condition <= 1.0 / tol_proj)
    return SpectralOracle(
        operator=op,
        eigenvalues=eigenvalues,
        projections=projections,
        diagonalizable=diagonalizable,
        jordan_defect=defects,
        eigen_condition=eigen_condition,
        hermitian=hermitian,
        tol_proj=tol_proj,
    )


@dataclass(frozen=True)
class SpectrumClassification:
    """Eigenvalues sorted into the buckets the detectors care about.

    ``unstable`` collects spectrum whose free evolution grows: negative real
    eigenvalues and non-real eigenvalues with negative real part.  Non-real
    eigenvalues with non-negative real part break the half-plane pole layout
    the time-domain theory assumes and land in ``assumption_a_violations``.
    """

    unstable: tuple
    positive: tuple
    positive_k: tuple
    zero: tuple
    assumption_a_violations: tuple
    tol_real: float

    @property
    def zero_eigenvalue(self) -> bool:
        return len(self.zero) > 0

    @property
    def assumption_a_ok(self) -> bool:
        return len(self.assumption_a_violations) == 0 and not self.zero_eigenvalue

    def to_json(self) -> dict:
        return {
            "unstable": vector_to_pairs(np.array(self.unstable, dtype=np.complex128))
            if self.unstable
            else [],
            "positive": [z.real for z in self.positive],
            "positive_k": list(self.positive_k),
            "zero_eigenvalue": self.zero_eigenvalue,
            "assumption_a_violations": vector_to_pairs(
                np.array(self.assumption_a_violations, dtype=np.complex128)
            )
            if self.assumption_a_violations
            else [],
            "assumption_a_ok": self.assumption_a_ok,
            "tol_real": self.tol_real,
        }


def classify_spectrum(oracle: SpectralOracle, tol_real: float | None = None) -> SpectrumClassification:
    if tol_real is None:
        tol_real = real_tolerance(oracle.spectral_radius)
    unstable, positive, positive_k, zero, violations = [], [], [], [], []
    for z in oracle.eigenvalues:
        z = complex(z)
        if abs(z.imag) <= tol_real:
            x = z.real
            if abs(x) <= tol_real:
                zero.append(z)
            elif x > 0:
                positive.append(z)
                positive_k.append(float(np.sqrt(x)))
            else:
                unstable.append(z)
        elif z.real < -tol_real:
            unstable.append(z)
        else:
            violations.append(z)
    return SpectrumClassification(
        unstable=tuple(unstable),
        positive=tuple(positive),
        positive_k=tuple(positive_k),
        zero=tuple(zero),
        assumption_a_violations=tuple(violations),
        tol_real=tol_real,
    )


@dataclass(frozen=True)
class GenericityReport:
    """Which eigenmodes a vector actually excites."""

    seen: tuple
    projection_norms: tuple
    generic: bool
    tol_gen: float

    def to_json(self) -> dict:
        return {
            "seen": list(self.seen),
            "projection_norms": list(self.projection_norms),
            "generic": self.generic,
            "tol_gen": self.tol_gen,
        }


def check_generic(oracle: SpectralOracle, f: np.ndarray, tol_gen: float = DEFAULT_TOL_GEN) -> GenericityReport:
    """Per-eigenvalue excitation test: ``norm(P_i f) > tol_gen * norm(f)``."""
    if not oracle.diagonalizable:
        raise UnsupportedOperatorError("genericity test needs honest spectral projections; oracle is defective")
    f = np.asarray(f, dtype=np.complex128).ravel()
    fnorm = float(np.linalg.norm(f))
    norms = tuple(float(np.linalg.norm(p @ f)) for p in oracle.projections)
    seen = tuple(nm > tol_gen * fnorm for nm in norms)
    return GenericityReport(seen=seen, projection_norms=norms, generic=all(seen), tol_gen=tol_gen)


@dataclass(frozen=True, eq=False)
class PPlanePole:
    """One pole of the shifted-solve transform ``p -> (A + p^2 I)^{-1} f``.

    ``klass`` is ``"imag-axis"``, ``"right"`` or ``"left"`` by the real part
    of the pole location.  For axis poles ``k_j`` is the real frequency such
    that the pole sits at ``p0 = -i k_j``.
    """

    p0: complex
    residue: np.ndarray
    klass: str
    k_j: float | None

    def __post_init__(self):
        self.residue.setflags(write=False)


def p_plane_poles(
    oracle: SpectralOracle, f: np.ndarray, tol_real: float | None = None
) -> tuple[PPlanePole, ...]:
    """Pole locations and residues of ``(A + p^2 I)^{-1} f``.

    Each eigenvalue ``z`` contributes simple poles at ``p0 = -i sqrt(z)`` and
    ``p0 = +i sqrt(z)`` (principal branch) with residues ``P f / (2 p0)``.
    Requires a diagonalizable oracle with no eigenvalue at zero; a zero
    eigenvalue collapses the pair into a double pole at the origin.
    """
    if not oracle.diagonalizable:
        raise UnsupportedOperatorError("pole extraction needs a diagonalizable oracle")
    if tol_real is None:
        tol_real = real_tolerance(oracle.spectral_radius)
    if np.any(np.abs(oracle.eigenvalues) <= tol_real):
        raise UnsupportedOperatorError("zero eigenvalue: pole pair degenerates to a double pole at p = 0")
    f = np.asarray(f, dtype=np.complex128).ravel()
    poles: list[PPlanePole] = []
    for z, proj in zip(oracle.eigenvalues, oracle.projections):
        z = complex(z)
        if abs(z.imag) <= tol_real:
            z = complex(z.real, 0.0)
        s = complex(np.sqrt(z))
        mode = proj @ f
        for p0 in (-1j * s, 1j * s):
            residue = mode / (2.0 * p0)
            if abs(p0.real) <= tol_real:
                klass = "imag-axis"
                k_j = -p0.imag
            elif p0.real > 0:
                klass = "right"
                k_j = None
            else:
                klass = "left"
                k_j = None
            poles.append(PPlanePole(p0=p0, residue=residue, klass=klass, k_j=k_j))
    return tuple(poles)
