import numpy as np
import pytest

from spectre.operators import OperatorSpec, build_operator, spectral_oracle


def diag_operator(*eigenvalues):
    eigs = [[complex(z).real, complex(z).imag] for z in eigenvalues]
    return build_operator(OperatorSpec(kind="diagonal", params={"eigenvalues": eigs}))


def random_stable_operator(seed, n=4, lo=0.3, hi=9.0):
    # real symmetric with spectrum drawn inside [lo, hi]
    rng = np.random.default_rng(seed)
    base = np.sort(rng.uniform(lo, hi, n)).tolist()
    spec = OperatorSpec(
        kind="perturbed-random",
        params={"base_spectrum": base, "magnitude": 0.0, "seed": int(seed)},
    )
    return build_operator(spec)


@pytest.fixture
def two_mode_operator():
    return diag_operator(1.0, 4.0)


@pytest.fixture
def two_mode_oracle(two_mode_operator):
    return spectral_oracle(two_mode_operator)


@pytest.fixture
def ones2():
    return np.array([1.0 + 0.0j, 1.0])
