import numpy as np
import pytest

from toruslab import ShearSpec, linear_da_map, make_da_map, make_linear_map

A7 = [[1, -1, 0], [-1, 2, -1], [0, -1, 2]]


@pytest.fixture(scope="session")
def a7():
    return make_linear_map(A7)


@pytest.fixture(scope="session")
def root_oracle():
    """Moduli of the reference matrix from an independent polynomial solver."""
    roots = np.sort(np.roots([1.0, -5.0, 6.0, -1.0]).real)
    return roots


@pytest.fixture(scope="session")
def lin_map(a7):
    return linear_da_map(a7)


@pytest.fixture(scope="session")
def base_shear():
    return ShearSpec(axis=0, wave_vector=(0, 1, 0), amplitude=1.0, phase=0.0)


@pytest.fixture(scope="session")
def post_map(a7, base_shear):
    """Generic perturbation: f = g o A at eps 0.05 (not conjugate to A)."""
    return make_da_map(a7, [base_shear], 0.05, "post_composed")


@pytest.fixture(scope="session")
def post_map_offset(a7):
    """Same family with a phase so the fixed point moves off the origin."""
    return make_da_map(
        a7, [ShearSpec(0, (0, 1, 0), 1.0, 1.1)], 0.05, "post_composed"
    )


@pytest.fixture(scope="session")
def smc_map(a7, base_shear):
    """Ground-truth rigid map: f = phi^-1 o A o phi."""
    return make_da_map(a7, [base_shear], 0.05, "smooth_conjugate")


@pytest.fixture(scope="session")
def smc_map_two(a7):
    """Rigid map with two shears on different axes."""
    shears = [
        ShearSpec(0, (0, 1, 0), 1.0, 0.0),
        ShearSpec(2, (1, 1, 0), 0.7, 0.3),
    ]
    return make_da_map(a7, shears, 0.05, "smooth_conjugate")


def phi_chain(map, points):
    """Evaluate the pre-shear chain phi of a smooth_conjugate map (lifted)."""
    from toruslab.torus_core import _shear_apply

    y = np.array(points, dtype=float, copy=True)
    for s in map.pre_shears:
        y = _shear_apply(y, s)
    return y


def phi_chain_inverse(map, points):
    from toruslab.torus_core import _shear_apply

    y = np.array(points, dtype=float, copy=True)
    for s in map.post_shears:
        y = _shear_apply(y, s)
    return y
